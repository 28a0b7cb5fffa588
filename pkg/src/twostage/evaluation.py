"""Posterior summaries, intervals, coverage, RMSE, and Wasserstein distances."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError

WASSERSTEIN_MAX_GRID = 1000


@dataclass(frozen=True)
class ParameterSummary:
    """Posterior mean, sd, and equal-tailed 95% interval for one parameter."""

    mean: float
    sd: float
    lower: float
    upper: float
    contains_truth: bool | None = None

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass
class MethodSummary:
    """Per-parameter summaries for one (method, replication) fit."""

    method: str
    parameters: dict[str, ParameterSummary] = field(default_factory=dict)


@dataclass
class StudySummary:
    """Per-method aggregates over the replications of one study."""

    method: str
    coverage_theta: float | None = None
    mean_width_theta: float | None = None
    mean_theta: float | None = None
    mean_sigma_eps_sq: float | None = None
    w2_theta_mean: float | None = None
    w2_theta_median: float | None = None
    w2_sigma_mean: float | None = None
    w2_sigma_median: float | None = None
    rmse_in_mean: float | None = None
    rmse_out_mean: float | None = None
    pred_coverage_mean: float | None = None
    pred_width_mean: float | None = None


def wasserstein2(sample_a: np.ndarray, sample_b: np.ndarray) -> float:
    """One-dimensional 2-Wasserstein distance between two draw vectors.

    Both empirical quantile functions are evaluated on the midpoint grid
    (k - 0.5) / K for K = min(len(a), len(b), 1000); the distance is the
    root mean square of the quantile differences. This is the optimal
    coupling of the two empirical distributions on that grid.
    """
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("wasserstein2 requires nonempty samples")
    k = min(a.size, b.size, WASSERSTEIN_MAX_GRID)
    grid = (np.arange(1, k + 1) - 0.5) / k
    qa = np.quantile(a, grid)
    qb = np.quantile(b, grid)
    return float(np.sqrt(np.mean((qa - qb) ** 2)))


def equal_tailed_interval(draws: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    """Equal-tailed credible interval from empirical quantiles."""
    draws = np.asarray(draws, dtype=float).ravel()
    if draws.size < 100:
        raise ValueError(f"need at least 100 draws for an interval, got {draws.size}")
    if not (0.0 < level < 1.0):
        raise ValueError("level must be in (0, 1)")
    alpha = (1.0 - level) / 2.0
    lower, upper = np.quantile(draws, [alpha, 1.0 - alpha])
    return float(lower), float(upper)


def summarize_parameter(draws: np.ndarray, truth: float | None = None,
                        level: float = 0.95) -> ParameterSummary:
    """Mean, sd, interval, and truth containment of one draw vector."""
    draws = np.asarray(draws, dtype=float).ravel()
    lower, upper = equal_tailed_interval(draws, level)
    contains = None if truth is None else bool(lower <= truth <= upper)
    return ParameterSummary(mean=float(draws.mean()), sd=float(draws.std(ddof=1)),
                            lower=lower, upper=upper, contains_truth=contains)


def coverage_and_width(intervals: list[tuple[float, float]],
                       truth: float) -> tuple[float, float]:
    """Fraction of intervals containing the truth, and their mean width."""
    if not intervals:
        raise ValueError("no intervals given")
    if truth is None or not np.isfinite(truth):
        raise ValueError("coverage requires a finite truth value")
    hits = sum(1 for lo, hi in intervals if lo <= truth <= hi)
    widths = [hi - lo for lo, hi in intervals]
    return hits / len(intervals), float(np.mean(widths))


def rmse(predicted: np.ndarray, observed: np.ndarray) -> float:
    """Root mean squared difference between aligned vectors."""
    predicted = np.asarray(predicted, dtype=float).ravel()
    observed = np.asarray(observed, dtype=float).ravel()
    if predicted.size != observed.size:
        raise DimensionMismatchError(
            f"length mismatch: {predicted.size} vs {observed.size}")
    return float(np.sqrt(np.mean((predicted - observed) ** 2)))
