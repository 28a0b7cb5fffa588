"""Seedable random streams and the numerical primitives used by every sampler.

All randomness in the package flows through SeededStream so that a run is
fully determined by (base_seed, stream_id). Stream splitting relies on
numpy's SeedSequence spawn keys, which are documented to produce
statistically independent child states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, NotPositiveDefiniteError

# Escalating relative jitter applied to a covariance diagonal until the
# Cholesky factorization succeeds.
JITTER_LADDER = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)

_MAX_SEED = 2**64


@dataclass
class SeededStream:
    """One reproducible random stream, keyed by (base_seed, stream_id).

    Identical keys give bit-identical draw sequences; distinct stream_ids
    give independent streams (one per replication or chain).
    """

    base_seed: int
    stream_id: int = 0
    _rng: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0 <= int(self.base_seed) < _MAX_SEED):
            raise ValueError(f"base_seed out of range: {self.base_seed}")
        if not (0 <= int(self.stream_id) < _MAX_SEED):
            raise ValueError(f"stream_id out of range: {self.stream_id}")
        seq = np.random.SeedSequence(entropy=int(self.base_seed),
                                     spawn_key=(int(self.stream_id),))
        self._rng = np.random.default_rng(seq)

    @property
    def rng(self) -> np.random.Generator:
        return self._rng


@dataclass
class CholeskyFactor:
    """Lower-triangular factor L with LL^T equal to the factored matrix.

    log_det is the log-determinant of the factored matrix, and jitter_delta
    records the relative jitter that had to be added (0.0 when none).
    """

    lower: np.ndarray
    log_det: float
    jitter_delta: float = 0.0

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        if self.lower.ndim != 2 or self.lower.shape[0] != self.lower.shape[1]:
            raise DimensionMismatchError(
                f"Cholesky factor must be square, got {self.lower.shape}")
        if not np.all(np.diag(self.lower) > 0):
            raise ValueError("Cholesky factor has a non-positive diagonal entry")

    @property
    def n(self) -> int:
        return self.lower.shape[0]


def cholesky(cov: np.ndarray, jitter: bool = True) -> CholeskyFactor:
    """Factor a symmetric positive-definite matrix as L L^T.

    When `jitter` is enabled and the plain factorization fails, delta times
    the mean diagonal is added to the diagonal for each delta on
    JITTER_LADDER until the factorization succeeds; the delta used is
    recorded on the returned factor.

    Raises NotPositiveDefiniteError if every rung fails.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionMismatchError(f"covariance must be square, got {cov.shape}")
    scale = max(1.0, float(np.abs(cov).max()))
    if np.abs(cov - cov.T).max() > 1e-10 * scale:
        raise ValueError("covariance is not symmetric within tolerance 1e-10")

    try:
        lower = np.linalg.cholesky(cov)
        return CholeskyFactor(lower, 2.0 * float(np.sum(np.log(np.diag(lower)))))
    except np.linalg.LinAlgError:
        if not jitter:
            raise NotPositiveDefiniteError(
                "matrix is not positive definite and jitter is disabled") from None

    mean_diag = float(np.mean(np.diag(cov)))
    if mean_diag <= 0:
        mean_diag = 1.0
    eye = np.eye(cov.shape[0])
    for delta in JITTER_LADDER:
        try:
            lower = np.linalg.cholesky(cov + delta * mean_diag * eye)
        except np.linalg.LinAlgError:
            continue
        return CholeskyFactor(
            lower, 2.0 * float(np.sum(np.log(np.diag(lower)))), jitter_delta=delta)
    raise NotPositiveDefiniteError(
        f"matrix is not positive definite after jitter up to {JITTER_LADDER[-1]}")


def mvn_sample(mean: np.ndarray, chol: CholeskyFactor, stream: SeededStream,
               size: int | None = None) -> np.ndarray:
    """Draw mean + L eps with eps standard normal.

    With `size` given, returns a (size, n) matrix of independent draws.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    if mean.shape[0] != chol.n:
        raise DimensionMismatchError(
            f"mean has length {mean.shape[0]} but factor is {chol.n}x{chol.n}")
    if size is None:
        eps = stream.rng.standard_normal(chol.n)
        return mean + chol.lower @ eps
    eps = stream.rng.standard_normal((size, chol.n))
    return mean[None, :] + eps @ chol.lower.T


def inverse_gamma_sample(shape: float, rate: float, stream: SeededStream,
                         size: int | None = None):
    """Inverse-gamma draw(s) with the given shape and rate (mean rate/(shape-1)).

    Sampled as 1 / Gamma(shape, scale=1/rate).
    """
    if shape <= 0 or rate <= 0:
        raise ValueError(f"inverse-gamma parameters must be positive, "
                         f"got shape={shape}, rate={rate}")
    draw = stream.rng.gamma(shape, scale=1.0 / rate, size=size)
    return 1.0 / draw


def log_sum_exp(values: np.ndarray) -> float:
    """Stable log(sum(exp(values))); requires at least one finite entry."""
    values = np.asarray(values, dtype=float)
    top = np.max(values)
    if not np.isfinite(top):
        if top == -np.inf:
            raise ValueError("log_sum_exp of all -inf entries")
        raise ValueError("log_sum_exp received a non-finite (nan/+inf) entry")
    return float(top + np.log(np.sum(np.exp(values - top))))


def normalize_log_weights(values: np.ndarray) -> np.ndarray:
    """Map log weights to a probability vector, invariant to additive shifts."""
    values = np.asarray(values, dtype=float)
    total = log_sum_exp(values)
    out = np.exp(values - total)
    return out / out.sum()


def categorical_resample(weights: np.ndarray, count: int,
                         stream: SeededStream) -> np.ndarray:
    """Draw `count` indices from a probability vector by inverse-CDF lookup."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError("categorical weights must be nonnegative")
    total = weights.sum()
    if not np.isfinite(total) or total <= 0:
        raise ValueError("categorical weights must sum to a positive finite value")
    cdf = np.cumsum(weights / total)
    u = stream.rng.random(count)
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, weights.size - 1)
