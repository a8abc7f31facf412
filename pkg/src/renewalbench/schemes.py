"""Streaming estimators of the residual run length in a binary path.

All four schemes make a single left-to-right pass.  At selected
positions (data-driven stopping times) they emit the empirical
distribution of past residuals observed at the same run age as the
current position, together with its mean.  They differ only in when
they stop and which past occurrences they average:

  poly     fires when the age class holds at least t^(1-gamma)
           completed occurrences; averages the last ceil(t^(1-gamma)).
  log      fires when the age recurs below log2(t) and the fixed window
           (log2(t), 2^log2(t)) holds enough occurrences; averages the
           first ceil(2^(floor(log2 t)(1-gamma))) of them, never
           refreshed for a given (age, scale).
  offline  no stopping rule; reports at every position the average over
           all prior occurrences, or an undefined placeholder.
  eps      fires when ages below the current one account for at most
           t(1 - epsilon/2) positions; averages all prior occurrences.

Estimates are exact rationals (integer sums over integer counts)
converted to float by a single division, so the emitted mean equals the
mean of the emitted distribution bit for bit.
"""

from __future__ import annotations

import math
import warnings
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .laws import LawError, gamma_limit
from .runindex import RunIndex

__all__ = [
    "SCHEME_TAGS",
    "SchemeConfig",
    "EstimateEvent",
    "OfflineEstimate",
    "iter_poly",
    "iter_log",
    "iter_eps",
    "iter_offline",
    "run_poly",
    "run_log",
    "run_offline",
    "run_eps",
    "run_scheme",
    "ref_run",
]

SCHEME_TAGS = ("poly", "log", "offline", "eps")


@dataclass(frozen=True)
class SchemeConfig:
    """Per-run knobs. gamma drives poly/log, epsilon drives eps.

    declared_alpha is advisory: when the caller knows a power-moment
    exponent for the source, gamma outside the admissible range only
    warns, it never blocks the run.
    """

    gamma: float | None = None
    epsilon: float | None = None
    declared_alpha: float | None = None

    def __post_init__(self):
        if self.gamma is not None and not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.epsilon is not None and not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")


@dataclass(frozen=True, slots=True)
class EstimateEvent:
    """One firing: where it stopped, what it averaged, what it got.

    residual_counts is the exact histogram, ((value, count), ...)
    ascending by value, with counts summing to sample_count.  estimate
    is their mean.  window_start/window_end are the first and last
    positions the scheme read for this estimate, except for poly where
    window_end is the firing position itself (the window is anchored
    backward from it).
    """

    ordinal: int
    time: int
    run_age: int
    estimate: float
    residual_counts: tuple[tuple[int, int], ...]
    sample_count: int
    window_start: int
    window_end: int

    def distribution(self) -> dict[int, float]:
        m = self.sample_count
        return {value: count / m for value, count in self.residual_counts}


@dataclass(frozen=True, slots=True)
class OfflineEstimate:
    """Per-position report of the windowless scheme.

    sample_count == 0 means undefined (the age has not recurred);
    estimate is then None and residual_counts empty.
    """

    position: int
    run_age: int
    sample_count: int
    estimate: float | None
    residual_counts: tuple[tuple[int, int], ...]

    @property
    def defined(self) -> bool:
        return self.sample_count > 0

    def distribution(self) -> dict[int, float]:
        m = self.sample_count
        return {value: count / m for value, count in self.residual_counts}


def _as_positions(bits) -> Sequence[int]:
    # ndarray iteration yields numpy scalars; tolist() is cheaper and
    # gives plain ints downstream
    if isinstance(bits, np.ndarray):
        return bits.tolist()
    if isinstance(bits, (list, tuple)):
        return bits
    return list(bits)


class _Window:
    """Histogram of log.residuals[lo:hi] maintained under sliding ends."""

    __slots__ = ("lo", "hi", "counts", "rsum", "_snap", "_snap_key")

    def __init__(self):
        self.lo = 0
        self.hi = 0
        self.counts: dict[int, int] = {}
        self.rsum = 0
        self._snap: tuple[tuple[int, int], ...] = ()
        self._snap_key = (0, 0)

    def align(self, log, lo: int, hi: int):
        counts = self.counts
        residuals = log.residuals
        while self.hi < hi:
            value = residuals[self.hi]
            counts[value] = counts.get(value, 0) + 1
            self.rsum += value
            self.hi += 1
        while self.hi > hi:
            self.hi -= 1
            value = residuals[self.hi]
            left = counts[value] - 1
            if left:
                counts[value] = left
            else:
                del counts[value]
            self.rsum -= value
        # lo can move either way: the prescribed width may grow faster
        # than the class gains occurrences
        while self.lo > lo:
            self.lo -= 1
            value = residuals[self.lo]
            counts[value] = counts.get(value, 0) + 1
            self.rsum += value
        while self.lo < lo:
            value = residuals[self.lo]
            left = counts[value] - 1
            if left:
                counts[value] = left
            else:
                del counts[value]
            self.rsum -= value
            self.lo += 1

    def snapshot(self) -> tuple[tuple[int, int], ...]:
        key = (self.lo, self.hi)
        if key != self._snap_key:
            self._snap = tuple(sorted(self.counts.items()))
            self._snap_key = key
        return self._snap


def _need(config: SchemeConfig, attr: str) -> float:
    value = getattr(config, attr)
    if value is None:
        raise ValueError(f"this scheme needs SchemeConfig.{attr}")
    return value


def _warn_gamma_poly(config: SchemeConfig):
    alpha = config.declared_alpha
    if alpha is None:
        return
    try:
        limit = gamma_limit(alpha)
    except LawError:
        warnings.warn(
            f"declared_alpha={alpha} admits no gamma (needs alpha > 2)",
            UserWarning,
            stacklevel=3,
        )
        return
    if config.gamma >= limit:
        warnings.warn(
            f"gamma={config.gamma} is not below min(1-2/alpha, 1/3)="
            f"{limit:.6g} for declared_alpha={alpha}",
            UserWarning,
            stacklevel=3,
        )


def iter_poly(bits, config: SchemeConfig) -> Iterator[EstimateEvent]:
    gamma = _need(config, "gamma")
    _warn_gamma_poly(config)
    return _iter_poly(_as_positions(bits), gamma)


def _iter_poly(bits, gamma: float) -> Iterator[EstimateEvent]:
    index = RunIndex(track_ages=False)
    feed = index.feed
    classes = index.classes
    windows: dict[int, _Window] = {}
    exponent = 1.0 - gamma
    ordinal = 0
    for t, bit in enumerate(bits):
        feed(bit)
        psi = index.psi
        if psi is None or t <= psi:
            continue
        tau = index.current_tau
        log = classes.get(tau)
        if log is None:
            continue
        count = len(log.positions)
        threshold = t**exponent
        if count < threshold:
            continue
        m = math.ceil(threshold)  # <= count: count is an int >= threshold
        window = windows.get(tau)
        if window is None:
            window = windows[tau] = _Window()
        window.align(log, count - m, count)
        ordinal += 1
        yield EstimateEvent(
            ordinal=ordinal,
            time=t,
            run_age=tau,
            estimate=window.rsum / m,
            residual_counts=window.snapshot(),
            sample_count=m,
            window_start=log.positions[count - m],
            window_end=t,
        )


def iter_log(bits, config: SchemeConfig) -> Iterator[EstimateEvent]:
    gamma = _need(config, "gamma")
    if gamma >= 1.0 / 3.0:
        warnings.warn(
            f"gamma={gamma} is not below 1/3; the log scheme's guarantees "
            "assume gamma < 1/3",
            UserWarning,
            stacklevel=2,
        )
    return _iter_log(_as_positions(bits), gamma)


def _iter_log(bits, gamma: float) -> Iterator[EstimateEvent]:
    index = RunIndex(track_ages=False)
    feed = index.feed
    classes = index.classes
    first_seen = index.first_seen
    exponent = 1.0 - gamma
    # (age, scale) -> finished event payload; the first c occurrences in
    # a scale window never change once present, so one computation serves
    # every later firing at that key
    cache: dict[tuple[int, int], tuple] = {}
    ordinal = 0
    for t, bit in enumerate(bits):
        feed(bit)
        psi = index.psi
        if psi is None or t <= psi:
            continue
        tau = index.current_tau
        first = first_seen.get(tau)
        # recurrence strictly below log2(t); for integer positions that
        # is exactly 2^first < t, guarded to keep the shift small
        if first is None or first >= t.bit_length() or (1 << first) >= t:
            continue
        scale = t.bit_length() - 1
        key = (tau, scale)
        payload = cache.get(key)
        if payload is None:
            log = classes.get(tau)
            if log is None:
                continue
            positions = log.positions
            start = bisect_right(positions, scale)
            stop = bisect_left(positions, 1 << scale, start)
            needed = math.ceil(2.0 ** (scale * exponent))
            if stop - start < needed:
                continue
            used_stop = start + needed
            counts: dict[int, int] = {}
            for value in log.residuals[start:used_stop]:
                counts[value] = counts.get(value, 0) + 1
            payload = (
                log.range_sum(start, used_stop) / needed,
                tuple(sorted(counts.items())),
                needed,
                positions[start],
                positions[used_stop - 1],
            )
            cache[key] = payload
        ordinal += 1
        yield EstimateEvent(
            ordinal=ordinal,
            time=t,
            run_age=tau,
            estimate=payload[0],
            residual_counts=payload[1],
            sample_count=payload[2],
            window_start=payload[3],
            window_end=payload[4],
        )


def iter_eps(bits, config: SchemeConfig) -> Iterator[EstimateEvent]:
    epsilon = _need(config, "epsilon")
    return _iter_eps(_as_positions(bits), epsilon)


def _iter_eps(bits, epsilon: float) -> Iterator[EstimateEvent]:
    index = RunIndex()
    feed = index.feed
    classes = index.classes
    count_tau_less = index.count_tau_less
    factor = 1.0 - 0.5 * epsilon
    windows: dict[int, _Window] = {}
    ordinal = 0
    for t, bit in enumerate(bits):
        feed(bit)
        psi = index.psi
        if psi is None or t <= psi:
            continue
        tau = index.current_tau
        if count_tau_less(tau) > t * factor:
            continue
        log = classes.get(tau)
        if log is None:
            continue
        count = len(log.positions)
        if count == 0:
            continue  # fired, but there is nothing to average yet
        window = windows.get(tau)
        if window is None:
            window = windows[tau] = _Window()
        window.align(log, 0, count)
        ordinal += 1
        yield EstimateEvent(
            ordinal=ordinal,
            time=t,
            run_age=tau,
            estimate=window.rsum / count,
            residual_counts=window.snapshot(),
            sample_count=count,
            window_start=psi,
            window_end=t,
        )


def run_poly(bits, config: SchemeConfig) -> list[EstimateEvent]:
    return list(iter_poly(bits, config))


def run_log(bits, config: SchemeConfig) -> list[EstimateEvent]:
    return list(iter_log(bits, config))


def run_eps(bits, config: SchemeConfig) -> list[EstimateEvent]:
    return list(iter_eps(bits, config))


def iter_offline(bits) -> Iterator[OfflineEstimate]:
    """Windowless per-position estimates, one for every position >= psi."""
    index = RunIndex(track_ages=False)
    feed = index.feed
    classes = index.classes
    windows: dict[int, _Window] = {}
    for n, bit in enumerate(_as_positions(bits)):
        feed(bit)
        if index.psi is None:
            continue
        tau = index.current_tau
        log = classes.get(tau)
        count = len(log.positions) if log is not None else 0
        if count == 0:
            yield OfflineEstimate(n, tau, 0, None, ())
            continue
        window = windows.get(tau)
        if window is None:
            window = windows[tau] = _Window()
        window.align(log, 0, count)
        yield OfflineEstimate(
            position=n,
            run_age=tau,
            sample_count=count,
            estimate=window.rsum / count,
            residual_counts=window.snapshot(),
        )


def run_offline(bits) -> list[OfflineEstimate]:
    return list(iter_offline(bits))


def run_scheme(tag: str, bits, config: SchemeConfig):
    """Dispatch by tag; offline returns OfflineEstimates, the rest events."""
    if tag == "poly":
        return run_poly(bits, config)
    if tag == "log":
        return run_log(bits, config)
    if tag == "offline":
        return run_offline(bits)
    if tag == "eps":
        return run_eps(bits, config)
    raise ValueError(f"unknown scheme tag {tag!r}; expected one of {SCHEME_TAGS}")


# --- quadratic reference ---------------------------------------------------
#
# ref_run re-derives every firing from the prefix bits[0..t] alone with
# numpy primitives: no state survives from one position to the next, so
# agreement with the streaming pass cross-validates both.  Division is
# the same exact int/int everywhere, which is what makes "byte
# identical" a meaningful claim for the floats.


def _ref_histogram(residuals: np.ndarray) -> tuple[tuple[int, int], ...]:
    values, counts = np.unique(residuals, return_counts=True)
    return tuple(zip(values.tolist(), counts.tolist()))


def _ref_matches(zeros_t, psi: int, last: int, tau: int):
    """Positions in [psi, last) at age tau, with their residuals."""
    completed = np.arange(psi, last)
    ages = completed - zeros_t[np.searchsorted(zeros_t, completed, "right") - 1]
    at_age = completed[ages == tau]
    residuals = zeros_t[np.searchsorted(zeros_t, at_age, "right")] - at_age - 1
    return at_age, residuals


def ref_run(scheme: str, bits, config: SchemeConfig):
    """Slow full-prefix-rescan twin of run_scheme, same output exactly."""
    if scheme not in SCHEME_TAGS:
        raise ValueError(f"unknown scheme tag {scheme!r}; expected one of {SCHEME_TAGS}")
    arr = np.asarray(_as_positions(bits), dtype=np.int64)
    zeros = np.flatnonzero(arr == 0)
    out: list = []
    if zeros.size == 0:
        return out
    psi = int(zeros[0])
    if scheme == "poly":
        gamma = _need(config, "gamma")
        _warn_gamma_poly(config)
        exponent = 1.0 - gamma
    elif scheme == "log":
        gamma = _need(config, "gamma")
        exponent = 1.0 - gamma
    elif scheme == "eps":
        factor = 1.0 - 0.5 * _need(config, "epsilon")
    ordinal = 0
    for t in range(psi if scheme == "offline" else psi + 1, arr.size):
        zcount = int(np.searchsorted(zeros, t, "right"))
        zeros_t = zeros[:zcount]
        last = int(zeros_t[-1])
        tau = t - last

        if scheme == "offline":
            at_age, residuals = _ref_matches(zeros_t, psi, last, tau)
            if at_age.size == 0:
                out.append(OfflineEstimate(t, tau, 0, None, ()))
            else:
                out.append(
                    OfflineEstimate(
                        position=t,
                        run_age=tau,
                        sample_count=int(at_age.size),
                        estimate=int(residuals.sum()) / int(at_age.size),
                        residual_counts=_ref_histogram(residuals),
                    )
                )
            continue

        if scheme == "poly":
            at_age, residuals = _ref_matches(zeros_t, psi, last, tau)
            count = int(at_age.size)
            threshold = t**exponent
            if count < threshold:
                continue
            m = math.ceil(threshold)
            used = residuals[count - m :]
            ordinal += 1
            out.append(
                EstimateEvent(
                    ordinal=ordinal,
                    time=t,
                    run_age=tau,
                    estimate=int(used.sum()) / m,
                    residual_counts=_ref_histogram(used),
                    sample_count=m,
                    window_start=int(at_age[count - m]),
                    window_end=t,
                )
            )
        elif scheme == "log":
            # recurrence of the age strictly below log2(t)
            low_stop = (t - 1).bit_length() - 1  # largest i with 2^i < t
            if low_stop < psi + 1:
                continue
            low = np.arange(psi + 1, low_stop + 1)
            low_ages = low - zeros_t[np.searchsorted(zeros_t, low, "right") - 1]
            if not bool(np.any(low_ages == tau)):
                continue
            scale = t.bit_length() - 1
            at_age, residuals = _ref_matches(zeros_t, psi, last, tau)
            inside = (at_age > scale) & (at_age < (1 << scale))
            wpos = at_age[inside]
            needed = math.ceil(2.0 ** (scale * exponent))
            if int(wpos.size) < needed:
                continue
            used = residuals[inside][:needed]
            ordinal += 1
            out.append(
                EstimateEvent(
                    ordinal=ordinal,
                    time=t,
                    run_age=tau,
                    estimate=int(used.sum()) / needed,
                    residual_counts=_ref_histogram(used),
                    sample_count=needed,
                    window_start=int(wpos[0]),
                    window_end=int(wpos[needed - 1]),
                )
            )
        else:  # eps
            everyone = np.arange(psi, t + 1)
            ages = everyone - zeros_t[np.searchsorted(zeros_t, everyone, "right") - 1]
            if int((ages < tau).sum()) > t * factor:
                continue
            at_age, residuals = _ref_matches(zeros_t, psi, last, tau)
            count = int(at_age.size)
            if count == 0:
                continue
            ordinal += 1
            out.append(
                EstimateEvent(
                    ordinal=ordinal,
                    time=t,
                    run_age=tau,
                    estimate=int(residuals.sum()) / count,
                    residual_counts=_ref_histogram(residuals),
                    sample_count=count,
                    window_start=psi,
                    window_end=t,
                )
            )
    return out
