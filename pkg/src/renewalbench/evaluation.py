"""Scoring and Monte Carlo aggregation for the estimation schemes.

Schemes are judged against the generating law: the mean error
|h - theta| compares the emitted estimate with the exact conditional
mean at the fired age, and the distribution error is the L1 distance
between the emitted histogram and the exact conditional law.  Reports
pool the final decile of firings per replicate, since the guarantees
being probed are asymptotic and early transients carry no evidence.
"""

from __future__ import annotations

import csv
import io
import json
import math
from array import array
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .laws import RenewalLaw, make_law, residual_law, residual_mean
from .paths import StartMode, parse_start_mode, sample_path
from .schemes import (
    SCHEME_TAGS,
    EstimateEvent,
    OfflineEstimate,
    SchemeConfig,
    iter_eps,
    iter_log,
    iter_offline,
    iter_poly,
)

__all__ = [
    "ExperimentConfig",
    "ScoredRecord",
    "AggregateStats",
    "ReplicateSummary",
    "EvalReport",
    "theta_oracle",
    "score_events",
    "firing_density",
    "good_index_density",
    "run_experiment",
    "emit_report",
    "report_from_json",
]

CSV_COLUMNS = (
    "replicate",
    "scheme",
    "n",
    "lambda",
    "tau",
    "h",
    "theta",
    "abs_err",
    "tv",
)


def theta_oracle(law: RenewalLaw, age: int) -> float:
    """Exact conditional mean residual at the given run age."""
    return residual_mean(law, age)


class _Scorer:
    """Caches the per-age ground truth so scoring is O(histogram size)."""

    def __init__(self, law: RenewalLaw):
        self.law = law
        self._theta: dict[int, float] = {}
        self._residual: dict[int, tuple[tuple[float, ...], float]] = {}

    def theta(self, age: int) -> float:
        value = self._theta.get(age)
        if value is None:
            value = self._theta[age] = residual_mean(self.law, age)
        return value

    def tv(self, counts: tuple[tuple[int, int], ...], m: int, age: int) -> float:
        cached = self._residual.get(age)
        if cached is None:
            probs = residual_law(self.law, age).probs
            cached = self._residual[age] = (probs, math.fsum(probs))
        probs, total = cached
        size = len(probs)
        acc = 0.0
        seen = 0.0
        for value, count in counts:
            q = probs[value] if value < size else 0.0
            acc += abs(count / m - q)
            seen += q
        # mass of the true law at values the histogram never hit
        return acc + max(0.0, total - seen)


@dataclass(frozen=True, slots=True)
class ScoredRecord:
    replicate: int
    scheme: str
    ordinal: int
    time: int
    run_age: int
    estimate: float
    theta: float
    abs_err: float
    tv: float

    def row(self) -> tuple:
        return (
            self.replicate,
            self.scheme,
            self.ordinal,
            self.time,
            self.run_age,
            self.estimate,
            self.theta,
            self.abs_err,
            self.tv,
        )


def score_events(
    law: RenewalLaw,
    events: Iterable[EstimateEvent | OfflineEstimate],
    scheme: str = "",
    replicate: int = 0,
) -> list[ScoredRecord]:
    """Per-event errors against the law; order-independent, pure.

    Offline rows are accepted too; undefined ones are skipped (they
    carry no estimate to score).
    """
    scorer = _Scorer(law)
    out = []
    for event in events:
        if isinstance(event, OfflineEstimate):
            if not event.defined:
                continue
            ordinal, time = event.position, event.position
        else:
            ordinal, time = event.ordinal, event.time
        age = event.run_age
        theta = scorer.theta(age)
        estimate = event.estimate
        out.append(
            ScoredRecord(
                replicate=replicate,
                scheme=scheme,
                ordinal=ordinal,
                time=time,
                run_age=age,
                estimate=estimate,
                theta=theta,
                abs_err=abs(estimate - theta),
                tv=scorer.tv(event.residual_counts, event.sample_count, age),
            )
        )
    return out


def firing_density(events, N: int) -> float:
    """Stopping times up to N per unit of path, the Theorem 1 Eq. (1) probe."""
    if N <= 0:
        raise ValueError(f"N must be positive, got {N}")
    if hasattr(events, "__len__") and not events:
        return 0.0
    return sum(1 for e in events if e.time <= N) / N


def good_index_density(
    estimates: Iterable[OfflineEstimate],
    law: RenewalLaw,
    tolerance: float,
    N: int,
) -> float:
    """Fraction of positions 0..N whose offline estimate exists and is
    within tolerance in both mean and L1 distance.  Positions with no
    row at all (before the first zero, or beyond the path) count as bad.
    """
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    scorer = _Scorer(law)
    good = 0
    for row in estimates:
        if row.position > N:
            break
        if not row.defined:
            continue
        theta = scorer.theta(row.run_age)
        if abs(row.estimate - theta) > tolerance:
            continue
        if scorer.tv(row.residual_counts, row.sample_count, row.run_age) > tolerance:
            continue
        good += 1
    return good / (N + 1)


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte Carlo experiment: R paths of `length` bits from `law`,
    all fed to one scheme.  Replicate r uses generator stream r of
    base_seed, so any subset of replicates can be reproduced alone.
    """

    law: dict
    scheme: str
    scheme_config: SchemeConfig
    length: int
    start_mode: StartMode = StartMode.STATIONARY
    replicates: int = 1
    base_seed: int = 0
    tolerances: tuple[float, ...] = (0.1,)
    keep_records: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEME_TAGS:
            raise ValueError(
                f"unknown scheme {self.scheme!r}; expected one of {SCHEME_TAGS}"
            )
        if self.length < 1:
            raise ValueError(f"length must be >= 1, got {self.length}")
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if isinstance(self.start_mode, str):
            object.__setattr__(self, "start_mode", parse_start_mode(self.start_mode))
        if any(t <= 0 for t in self.tolerances):
            raise ValueError("tolerances must be positive")
        make_law(self.law)  # validate eagerly so bad configs fail here

    def to_json_dict(self) -> dict:
        return {
            "law": self.law,
            "scheme": self.scheme,
            "scheme_config": {
                "gamma": self.scheme_config.gamma,
                "epsilon": self.scheme_config.epsilon,
                "declared_alpha": self.scheme_config.declared_alpha,
            },
            "length": self.length,
            "start_mode": self.start_mode.value,
            "replicates": self.replicates,
            "base_seed": self.base_seed,
            "tolerances": list(self.tolerances),
            "keep_records": self.keep_records,
        }

    @staticmethod
    def from_json_dict(data: dict) -> "ExperimentConfig":
        sc = data.get("scheme_config", {})
        return ExperimentConfig(
            law=data["law"],
            scheme=data["scheme"],
            scheme_config=SchemeConfig(
                gamma=sc.get("gamma"),
                epsilon=sc.get("epsilon"),
                declared_alpha=sc.get("declared_alpha"),
            ),
            length=data["length"],
            start_mode=parse_start_mode(data.get("start_mode", "stationary")),
            replicates=data.get("replicates", 1),
            base_seed=data.get("base_seed", 0),
            tolerances=tuple(data.get("tolerances", (0.1,))),
            keep_records=data.get("keep_records", False),
        )


@dataclass(frozen=True)
class AggregateStats:
    """Quantiles of the final-decile errors, the report's headline."""

    median_abs_err: float
    p90_abs_err: float
    median_tv: float
    p90_tv: float
    sample_count: int

    @staticmethod
    def from_arrays(errs, tvs) -> "AggregateStats":
        if len(errs) == 0:
            return AggregateStats(math.nan, math.nan, math.nan, math.nan, 0)
        err_arr = np.asarray(errs, dtype=np.float64)
        tv_arr = np.asarray(tvs, dtype=np.float64)
        return AggregateStats(
            median_abs_err=float(np.quantile(err_arr, 0.5)),
            p90_abs_err=float(np.quantile(err_arr, 0.9)),
            median_tv=float(np.quantile(tv_arr, 0.5)),
            p90_tv=float(np.quantile(tv_arr, 0.9)),
            sample_count=int(err_arr.size),
        )

    def to_json_dict(self) -> dict:
        return {
            "median_abs_err": self.median_abs_err,
            "p90_abs_err": self.p90_abs_err,
            "median_tv": self.median_tv,
            "p90_tv": self.p90_tv,
            "sample_count": self.sample_count,
        }

    @staticmethod
    def from_json_dict(data: dict) -> "AggregateStats":
        return AggregateStats(
            median_abs_err=data["median_abs_err"],
            p90_abs_err=data["p90_abs_err"],
            median_tv=data["median_tv"],
            p90_tv=data["p90_tv"],
            sample_count=data["sample_count"],
        )


@dataclass(frozen=True)
class ReplicateSummary:
    replicate: int
    stream: int
    event_count: int
    firing_density: float
    final_decile: AggregateStats
    # [tolerance, density] pairs; offline scheme only, empty otherwise
    good_index_density: tuple[tuple[float, float], ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "replicate": self.replicate,
            "stream": self.stream,
            "event_count": self.event_count,
            "firing_density": self.firing_density,
            "final_decile": self.final_decile.to_json_dict(),
            "good_index_density": [list(pair) for pair in self.good_index_density],
        }

    @staticmethod
    def from_json_dict(data: dict) -> "ReplicateSummary":
        return ReplicateSummary(
            replicate=data["replicate"],
            stream=data["stream"],
            event_count=data["event_count"],
            firing_density=data["firing_density"],
            final_decile=AggregateStats.from_json_dict(data["final_decile"]),
            good_index_density=tuple(
                (pair[0], pair[1]) for pair in data["good_index_density"]
            ),
        )


@dataclass(frozen=True)
class EvalReport:
    config: ExperimentConfig
    replicate_summaries: tuple[ReplicateSummary, ...]
    pooled: AggregateStats
    records: tuple[ScoredRecord, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "config": self.config.to_json_dict(),
            "replicate_summaries": [
                s.to_json_dict() for s in self.replicate_summaries
            ],
            "pooled": self.pooled.to_json_dict(),
            "records": [list(r.row()) for r in self.records],
        }

    @staticmethod
    def from_json_dict(data: dict) -> "EvalReport":
        return EvalReport(
            config=ExperimentConfig.from_json_dict(data["config"]),
            replicate_summaries=tuple(
                ReplicateSummary.from_json_dict(s)
                for s in data["replicate_summaries"]
            ),
            pooled=AggregateStats.from_json_dict(data["pooled"]),
            records=tuple(ScoredRecord(*row) for row in data["records"]),
        )


_SCHEME_ITERATORS = {
    "poly": iter_poly,
    "log": iter_log,
    "eps": iter_eps,
}


def _final_decile(values: array) -> array:
    count = len(values)
    if count == 0:
        return values
    return values[count - math.ceil(count / 10) :]


def run_experiment(config: ExperimentConfig) -> EvalReport:
    law = make_law(config.law)
    scorer = _Scorer(law)
    horizon = config.length - 1
    offline = config.scheme == "offline"
    pooled_err: list[float] = []
    pooled_tv: list[float] = []
    summaries = []
    records: list[ScoredRecord] = []
    for replicate in range(config.replicates):
        bits = sample_path(
            law,
            horizon,
            config.start_mode,
            seed=config.base_seed,
            stream=replicate,
        ).bits
        errs = array("d")
        tvs = array("d")
        event_count = 0
        good = [0] * len(config.tolerances) if offline else None
        if offline:
            rows = iter_offline(bits)
        else:
            rows = _SCHEME_ITERATORS[config.scheme](bits, config.scheme_config)
        for event in rows:
            if offline and not event.defined:
                continue
            event_count += 1
            age = event.run_age
            theta = scorer.theta(age)
            err = abs(event.estimate - theta)
            tv = scorer.tv(event.residual_counts, event.sample_count, age)
            errs.append(err)
            tvs.append(tv)
            if offline:
                for slot, tolerance in enumerate(config.tolerances):
                    if err <= tolerance and tv <= tolerance:
                        good[slot] += 1
            if config.keep_records:
                records.append(
                    ScoredRecord(
                        replicate=replicate,
                        scheme=config.scheme,
                        ordinal=event.position if offline else event.ordinal,
                        time=event.position if offline else event.time,
                        run_age=age,
                        estimate=event.estimate,
                        theta=theta,
                        abs_err=err,
                        tv=tv,
                    )
                )
        tail_err = _final_decile(errs)
        tail_tv = _final_decile(tvs)
        pooled_err.extend(tail_err)
        pooled_tv.extend(tail_tv)
        densities = ()
        if offline:
            # positions 0..length-1 all exist on the sampled path
            densities = tuple(
                (tolerance, good[slot] / config.length)
                for slot, tolerance in enumerate(config.tolerances)
            )
        summaries.append(
            ReplicateSummary(
                replicate=replicate,
                stream=replicate,
                event_count=event_count,
                firing_density=event_count / config.length,
                final_decile=AggregateStats.from_arrays(tail_err, tail_tv),
                good_index_density=densities,
            )
        )
    return EvalReport(
        config=config,
        replicate_summaries=tuple(summaries),
        pooled=AggregateStats.from_arrays(pooled_err, pooled_tv),
        records=tuple(records),
    )


def emit_report(report: EvalReport, format: str = "json") -> bytes:
    if format == "json":
        return json.dumps(report.to_json_dict(), indent=2, sort_keys=True).encode()
    if format == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for record in report.records:
            row = record.row()
            writer.writerow(
                [repr(v) if isinstance(v, float) else v for v in row]
            )
        return buffer.getvalue().encode()
    raise ValueError(f"unknown format {format!r}; expected 'csv' or 'json'")


def report_from_json(payload: bytes | str) -> EvalReport:
    return EvalReport.from_json_dict(json.loads(payload))
