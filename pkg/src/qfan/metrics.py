"""Quantile and interval evaluation: QS, PICP, ACE, interval score, crossovers.

A ``QuantileFan`` is the (N, M) matrix of quantile estimates for N forecast
times at M ordered levels. Column monotonicity is deliberately NOT an
invariant: crossed quantiles are data, counted by ``crossover_count``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .loss import QuantileLevels, pinball


@dataclass(frozen=True)
class QuantileFan:
    values: np.ndarray        # (N, M)
    levels: QuantileLevels

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"QuantileFan: values must be 2-D, got shape {v.shape}")
        if v.shape[1] != len(self.levels):
            raise ValueError(
                f"QuantileFan: {v.shape[1]} columns but {len(self.levels)} levels")
        if not np.all(np.isfinite(v)):
            raise ValueError("QuantileFan: values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class IntervalSet:
    """Nested prediction intervals paired off a symmetric fan.

    ``betas`` are the strictly decreasing nominal miss rates; interval i has
    nominal coverage PINC = 100*(1 - betas[i]) percent, with bounds taken from
    the fan columns at levels beta/2 and 1 - beta/2.
    """

    lower: np.ndarray         # (N, K)
    upper: np.ndarray         # (N, K)
    betas: np.ndarray         # (K,)

    def __post_init__(self):
        lower = np.ascontiguousarray(self.lower, dtype=np.float64)
        upper = np.ascontiguousarray(self.upper, dtype=np.float64)
        betas = np.ascontiguousarray(self.betas, dtype=np.float64)
        if lower.shape != upper.shape or lower.ndim != 2:
            raise ValueError(
                f"IntervalSet: lower/upper shapes differ: {lower.shape} vs {upper.shape}")
        if betas.shape != (lower.shape[1],):
            raise ValueError(
                f"IntervalSet: {len(betas)} betas for {lower.shape[1]} interval columns")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ValueError("IntervalSet: betas must lie in (0, 1)")
        if np.any(np.diff(betas) >= 0.0):
            raise ValueError("IntervalSet: betas must be strictly decreasing")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "betas", betas)


def intervals_from_fan(fan: QuantileFan) -> IntervalSet:
    """Pair symmetric fan columns into M/2 nested intervals.

    Requires an even number of levels placed symmetrically about 0.5; level
    tau pairs with 1 - tau, giving beta = 2*tau for the lower member. Pairs
    are ordered innermost first so betas decrease.
    """
    m = len(fan.levels)
    if m < 2 or m % 2 != 0:
        raise ValueError(f"intervals_from_fan: need an even number of levels, got {m}")
    if not fan.levels.is_symmetric(atol=1e-9):
        raise ValueError("intervals_from_fan: levels must be symmetric about 0.5")
    taus = fan.levels.as_array()
    k = m // 2
    lower_cols = np.arange(k - 1, -1, -1)          # 0.45, 0.40, ..., 0.05
    upper_cols = np.arange(k, m)                   # 0.55, 0.60, ..., 0.95
    betas = 2.0 * taus[lower_cols]
    return IntervalSet(lower=fan.values[:, lower_cols],
                       upper=fan.values[:, upper_cols],
                       betas=betas)


def quantile_score(y, fan: QuantileFan, average: bool = True) -> float:
    """Pinball loss summed over all (t, m) pairs, divided by N*M by default.

    The per-(t, m) average is what comparative score tables report; pass
    ``average=False`` for the raw double sum.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (fan.values.shape[0],):
        raise ValueError(
            f"quantile_score: y has shape {y.shape}, fan has {fan.values.shape[0]} rows")
    taus = fan.levels.as_array()
    u = y[:, None] - fan.values
    total = float(np.sum(np.where(u >= 0.0, taus * u, (taus - 1.0) * u)))
    if average:
        return total / u.size
    return total


def picp(y, intervals: IntervalSet) -> np.ndarray:
    """Empirical coverage per interval: fraction of y inside [lower, upper].

    Membership is inclusive at both bounds.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (intervals.lower.shape[0],):
        raise ValueError(
            f"picp: y has shape {y.shape}, intervals have {intervals.lower.shape[0]} rows")
    inside = (intervals.lower <= y[:, None]) & (y[:, None] <= intervals.upper)
    return inside.mean(axis=0)


def ace(picp_values, betas) -> float:
    """Coverage error summed over levels, in percentage points.

    ACE = sum_i |100*PICP_i - 100*(1 - beta_i)|; zero only when every
    empirical coverage hits its nominal level exactly.
    """
    p = np.asarray(picp_values, dtype=np.float64)
    b = np.asarray(betas, dtype=np.float64)
    if p.shape != b.shape:
        raise ValueError(f"ace: picp shape {p.shape} != betas shape {b.shape}")
    return float(np.sum(np.abs(100.0 * p - 100.0 * (1.0 - b))))


def interval_score(y, intervals: IntervalSet, negate_for_report: bool = False) -> float:
    """Width-plus-miss-penalty score for nested intervals, lower is better.

    Per observation and level: (u - l) + (2/beta)*(l - y) if y < l, plus
    (2/beta)*(y - u) if y > u; totals are scaled by 2/(N*M) where M counts
    fan columns (twice the number of intervals). ``negate_for_report``
    flips the sign for tables that report the negated score.
    """
    y = np.asarray(y, dtype=np.float64)
    n, k = intervals.lower.shape
    if y.shape != (n,):
        raise ValueError(f"interval_score: y has shape {y.shape}, expected ({n},)")
    yy = y[:, None]
    width = intervals.upper - intervals.lower
    below = np.maximum(intervals.lower - yy, 0.0)
    above = np.maximum(yy - intervals.upper, 0.0)
    per = width + (2.0 / intervals.betas) * (below + above)
    score = float(np.sum(per)) / (n * k)        # == 2/(N*M) * double sum, M = 2K
    return -score if negate_for_report else score


def crossover_count(fan: QuantileFan) -> int:
    """Number of adjacent-column inversions q[t, m] > q[t, m+1], all rows."""
    if len(fan.levels) < 2:
        raise ValueError("crossover_count: need at least two levels")
    return int(np.sum(fan.values[:, :-1] > fan.values[:, 1:]))


@dataclass(frozen=True)
class EvaluationReport:
    """All scores for one evaluation cell (one model on one slice of data)."""

    qs: float
    picp: np.ndarray          # per interval, innermost (lowest PINC) first
    ace: float
    interval_score: float
    crossovers: int
    n_obs: int
    betas: np.ndarray = field(default=None)

    def __post_init__(self):
        p = np.ascontiguousarray(self.picp, dtype=np.float64)
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("EvaluationReport: picp entries must lie in [0, 1]")
        object.__setattr__(self, "picp", p)
        if self.betas is not None:
            object.__setattr__(
                self, "betas", np.ascontiguousarray(self.betas, dtype=np.float64))


def evaluate(y, fan: QuantileFan) -> EvaluationReport:
    """Compute the full report for observations against a symmetric fan."""
    intervals = intervals_from_fan(fan)
    coverage = picp(y, intervals)
    return EvaluationReport(
        qs=quantile_score(y, fan),
        picp=coverage,
        ace=ace(coverage, intervals.betas),
        interval_score=interval_score(y, intervals),
        crossovers=crossover_count(fan),
        n_obs=int(np.asarray(y).shape[0]),
        betas=intervals.betas,
    )


def report_csv_header(betas) -> str:
    """Header for report rows: model,zone,month,scores,picp per PINC level."""
    pincs = [f"picp_{round(100.0 * (1.0 - float(b)))}" for b in betas]
    return ",".join(["model", "zone", "month", "qs", "ace", "interval_score",
                     "crossovers"] + pincs)


def report_csv_row(report: EvaluationReport, model: str, zone: str, month: str) -> str:
    """One CSV row per (model, zone, month) cell, full float precision."""
    cells = [model, zone, month, repr(report.qs), repr(report.ace),
             repr(report.interval_score), str(report.crossovers)]
    cells += [repr(float(p)) for p in report.picp]
    return ",".join(cells)
