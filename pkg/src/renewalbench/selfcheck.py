"""Fast in-process health checks behind the `selftest` subcommand.

Each check re-derives a handful of known answers or re-runs a streaming
component against its quadratic reference; together they cover every
module's core contract in a few seconds.  They are not a substitute for
the test suite, just a deployable smoke screen.
"""

from __future__ import annotations

import time
import warnings
from typing import Callable

import numpy as np

from .adversary import mean_shift, mu_L_shift, stage0, tv_prefix_exact
from .evaluation import CSV_COLUMNS, firing_density, score_events
from .laws import make_law, perturb, residual_mean, stationary_zero_prob
from .paths import StartMode, sample_path
from .runindex import RunIndex
from .schemes import (
    SCHEME_TAGS,
    SchemeConfig,
    ref_run,
    run_eps,
    run_poly,
    run_scheme,
)

P2_BITS = [0, 1, 1] * 14 + [0]


def _check_law_closed_forms() -> None:
    law = make_law({"type": "explicit", "p": [0.0, 0.0, 1.0]})
    assert law.mean == 2.0
    assert stationary_zero_prob(law) == 1.0 / 3.0
    assert residual_mean(law, 1) == 1.0
    halving = stage0().law
    assert abs(halving.mean - 1.0) < 1e-9
    assert abs(stationary_zero_prob(halving) - 0.5) < 1e-9


def _check_scheme_traces() -> None:
    poly_times = [e.time for e in run_poly(P2_BITS, SchemeConfig(gamma=0.5))]
    assert poly_times == [9] + list(range(12, len(P2_BITS))), poly_times
    eps_events = run_eps(P2_BITS[:12], SchemeConfig(epsilon=0.5))
    assert [e.time for e in eps_events] == [3, 4, 6, 7, 8, 9, 10, 11]
    assert eps_events[0].estimate == 2.0
    scored = score_events(make_law({"type": "explicit", "p": [0, 0, 1]}), eps_events)
    assert all(r.abs_err == 0.0 and r.tv == 0.0 for r in scored)
    assert len(CSV_COLUMNS) == 9
    assert firing_density((), 10) == 0.0


def _check_streaming_matches_reference() -> None:
    specs = [
        {"type": "geometric", "q": 0.5, "truncate": 60},
        {"type": "explicit", "p": [0.2, 0.5, 0.0, 0.3]},
        {"type": "zipf", "s": 3.0, "truncate": 50},
    ]
    configs = [SchemeConfig(gamma=0.3, epsilon=0.4), SchemeConfig(gamma=0.45, epsilon=0.15)]
    with warnings.catch_warnings():
        # gamma=0.45 sits outside the log scheme's guarantee zone on
        # purpose; the equality check is the point here
        warnings.simplefilter("ignore")
        for i, spec in enumerate(specs):
            law = make_law(spec)
            bits = sample_path(law, 300, StartMode.STATIONARY, seed=17 + i).bits
            for config in configs:
                for tag in SCHEME_TAGS:
                    fast = run_scheme(tag, bits, config)
                    slow = ref_run(tag, bits, config)
                    assert fast == slow, f"{tag} diverged from reference on {spec}"


def _check_run_index_bookkeeping() -> None:
    law = make_law({"type": "geometric", "q": 0.4, "truncate": 40})
    bits = sample_path(law, 1500, StartMode.AT_RENEWAL, seed=23).bits
    index = RunIndex()
    for bit in bits:
        index.feed(int(bit))
    zeros = np.flatnonzero(np.asarray(bits) == 0)
    completed = int(zeros.size - 1)
    assert index.total_occurrences() == int(zeros[-1]) - int(zeros[0])
    # each completed run of length s contributes s+1 occurrences
    runs = np.diff(zeros) - 1
    assert index.total_occurrences() == int((runs + 1).sum())
    assert completed >= 1


def _check_sharp_mean_bound() -> None:
    law = make_law({"type": "geometric", "q": 0.5, "truncate": 60})
    bits = sample_path(law, 4000, StartMode.STATIONARY, seed=31).bits
    config = SchemeConfig(gamma=0.3, epsilon=0.2)
    for tag in ("poly", "log", "eps"):
        for event in run_scheme(tag, bits, config):
            bound = (event.time - event.sample_count) / event.sample_count
            assert event.estimate <= bound + 1e-12, (tag, event.time)


def _check_adversary_closed_forms() -> None:
    halving = stage0().law
    assert abs(mean_shift(0.05, 41) - 2.05) < 1e-12
    assert abs(mu_L_shift(halving, 0, 0.05, 41) - 2.05) < 1e-12
    moved = perturb(halving, 41, 0.001)
    assert abs(tv_prefix_exact(halving, moved, 1) - 0.002) < 1e-12
    two = make_law({"type": "explicit", "p": [0, 0, 1]})
    one = make_law({"type": "explicit", "p": [0, 1]})
    assert abs(tv_prefix_exact(two, one, 2) - 2.0) < 1e-12


CHECKS: tuple[tuple[str, Callable[[], None]], ...] = (
    ("law closed forms", _check_law_closed_forms),
    ("scheme hand traces", _check_scheme_traces),
    ("streaming vs reference", _check_streaming_matches_reference),
    ("run index bookkeeping", _check_run_index_bookkeeping),
    ("sharp mean bound", _check_sharp_mean_bound),
    ("adversary closed forms", _check_adversary_closed_forms),
)


def run_selftest(write: Callable[[str], None] = print) -> int:
    """Runs every check; returns the number of failures."""
    failures = 0
    for name, check in CHECKS:
        started = time.perf_counter()
        try:
            check()
        except Exception as exc:  # report and keep going
            failures += 1
            write(f"FAIL {name}: {exc!r}")
        else:
            write(f"ok   {name} ({time.perf_counter() - started:.2f}s)")
    write(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed")
    return failures
