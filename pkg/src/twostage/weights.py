"""Importance-weight computations and degeneracy diagnostics.

All weights are computed and stored in log space; joint Gaussian
likelihoods over hundreds of units underflow in linear space, so
normalization goes through log_sum_exp only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError
from .model import PartialPosteriorDraws, RegressionState, TwoStageDataset
from .rng import cholesky

# Convex shrinkage weights toward the covariance diagonal, tried in order
# until the regularized matrix factors with an acceptable condition number.
SHRINKAGE_LADDER = (0.0, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0)
MAX_CONDITION = 1e12

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class MomentEstimate:
    """Gaussian moment summary of the partial posterior draws.

    cov is the raw sample covariance and diag its diagonal; precision_full
    inverts the regularized covariance (1 - gamma) cov + gamma diag(cov).
    log_det_ratio = 0.5 * (log det diag - log det of the regularized
    covariance) is the constant part of the joint-to-product-of-marginals
    density ratio. With shrink_gamma = 1 the ratio is identically one.
    """

    mean: np.ndarray
    cov: np.ndarray
    diag: np.ndarray
    precision_full: np.ndarray
    log_det_ratio: float
    shrink_gamma: float
    _quad_matrix: np.ndarray = field(init=False, repr=False, compare=False)
    _equi: tuple[float, float] | None = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        # One-time cost: the quadratic-form matrix shared by every sweep.
        m = self.precision_full - np.diag(1.0 / self.diag)
        self._quad_matrix = m
        self._equi = None
        n = m.shape[0]
        if n > 1:
            # Equicorrelated covariances make m equal to alpha I + beta 11^T,
            # which turns each quadratic form into O(n) work.
            total = m.sum()
            trace = float(np.trace(m))
            beta = (total - trace) / (n * (n - 1))
            alpha = trace / n - beta
            tol = 1e-9 * max(1.0, float(np.abs(m).max()))
            if np.abs(m - (beta + alpha * np.eye(n))).max() <= tol:
                self._equi = (float(alpha), float(beta))

    @property
    def n_units(self) -> int:
        return self.mean.size

    @property
    def quad_matrix(self) -> np.ndarray:
        return self._quad_matrix

    def quad_forms(self, diffs: np.ndarray) -> np.ndarray:
        """Row-wise quadratic forms d^T (precision - diag^{-1}) d."""
        if self._equi is not None:
            alpha, beta = self._equi
            row_sq = np.einsum("ri,ri->r", diffs, diffs)
            row_sum = diffs.sum(axis=1)
            return alpha * row_sq + beta * row_sum * row_sum
        return np.einsum("ri,ri->r", diffs @ self._quad_matrix, diffs)


@dataclass
class WeightReport:
    """Degeneracy summary of one normalized weight vector."""

    ess: float
    max_weight: float
    entropy: float


def _regularized_moments(mean: np.ndarray, cov: np.ndarray,
                         shrink_gamma: float | str) -> MomentEstimate:
    diag = np.diag(cov).copy()
    if np.any(diag <= 0.0):
        raise ValueError("a coordinate has zero variance")

    if shrink_gamma == "auto":
        candidates = SHRINKAGE_LADDER
    else:
        gamma = float(shrink_gamma)
        if not (0.0 <= gamma <= 1.0):
            raise ValueError(f"shrink_gamma must be in [0, 1], got {gamma}")
        candidates = (gamma,)

    last_error = None
    for gamma in candidates:
        reg = (1.0 - gamma) * cov + gamma * np.diag(diag)
        try:
            factor = cholesky(reg, jitter=False)
        except Exception as exc:
            last_error = exc
            continue
        eigvals = np.linalg.eigvalsh(reg)
        if eigvals[0] <= 0.0 or eigvals[-1] / eigvals[0] > MAX_CONDITION:
            last_error = ValueError(
                f"condition number {eigvals[-1] / max(eigvals[0], 1e-300):.2e} "
                f"above {MAX_CONDITION:.0e} at gamma={gamma}")
            continue
        identity = np.eye(mean.size)
        half = np.linalg.solve(factor.lower, identity)
        precision = half.T @ half
        precision = 0.5 * (precision + precision.T)
        log_det_ratio = 0.5 * (float(np.sum(np.log(diag))) - factor.log_det)
        return MomentEstimate(mean=mean, cov=cov, diag=diag,
                              precision_full=precision,
                              log_det_ratio=log_det_ratio,
                              shrink_gamma=gamma)
    raise ValueError(f"no usable shrinkage level found: {last_error}")


def estimate_moments(draws: PartialPosteriorDraws,
                     shrink_gamma: float | str = "auto") -> MomentEstimate:
    """Sample mean/covariance of the draws with shrinkage toward the diagonal.

    The sample covariance is singular whenever the number of draws does not
    exceed the number of units, so the regularized covariance
    (1 - gamma) cov + gamma diag(cov) is used. With shrink_gamma="auto" the
    smallest ladder value whose regularized matrix factors with condition
    number below 1e12 is chosen.
    """
    mat = draws.draws
    mean = mat.mean(axis=0)
    cov = np.atleast_2d(np.cov(mat, rowvar=False, ddof=1))
    try:
        return _regularized_moments(mean, cov, shrink_gamma)
    except ValueError as exc:
        raise ValueError(f"moment estimation failed: {exc}") from None


def moments_from_gaussian(mean: np.ndarray, cov: np.ndarray,
                          shrink_gamma: float | str = "auto") -> MomentEstimate:
    """MomentEstimate built from known (analytic) partial-posterior moments.

    Used when the stage-one model is fully specified, as in the tractable
    simulation benchmark where the covariances are treated as known; the
    draw-based estimate_moments is the route for stage-one models known
    only through their draws.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (mean.size, mean.size):
        raise DimensionMismatchError("cov shape must match mean")
    return _regularized_moments(mean, cov, shrink_gamma)


def _unit_log_likelihoods(draws_mat: np.ndarray, dataset: TwoStageDataset,
                          state: RegressionState) -> np.ndarray:
    """(S, n) matrix of log N(y_i | beta0 + theta_zeta zeta_i^s + x_i beta, sigma_eps_sq)."""
    outcome = dataset.outcome()
    if draws_mat.shape[1] != outcome.size:
        raise DimensionMismatchError(
            f"draws have {draws_mat.shape[1]} units but data has {outcome.size}")
    mu = state.beta0 + state.theta_zeta * draws_mat
    if dataset.p:
        mu = mu + (dataset.X @ state.beta)[None, :]
    resid = outcome[None, :] - mu
    if not np.all(np.isfinite(resid)):
        raise FloatingPointError("non-finite values in likelihood evaluation")
    s2 = state.sigma_eps_sq
    return -0.5 * (_LOG_2PI + np.log(s2)) - 0.5 * resid * resid / s2


def is_log_weights(draws: PartialPosteriorDraws | np.ndarray, dataset: TwoStageDataset,
                   state: RegressionState) -> np.ndarray:
    """Joint importance-sampling log weight of each draw: the stage-two
    log likelihood of the full outcome vector under that draw."""
    mat = draws.draws if isinstance(draws, PartialPosteriorDraws) else np.asarray(draws)
    outcome = dataset.outcome()
    if mat.shape[1] != outcome.size:
        raise DimensionMismatchError(
            f"draws have {mat.shape[1]} units but data has {outcome.size}")
    mu = state.beta0 + state.theta_zeta * mat
    if dataset.p:
        mu = mu + (dataset.X @ state.beta)[None, :]
    resid = outcome[None, :] - mu
    if not np.all(np.isfinite(resid)):
        raise FloatingPointError("non-finite values in likelihood evaluation")
    s2 = state.sigma_eps_sq
    n = outcome.size
    return -0.5 * n * (_LOG_2PI + np.log(s2)) - 0.5 * np.sum(resid * resid, axis=1) / s2


def iis_log_weights(draws: PartialPosteriorDraws | np.ndarray, dataset: TwoStageDataset,
                    state: RegressionState) -> np.ndarray:
    """(S, n) per-unit log weights; each column is one independent
    one-dimensional proposal, normalized separately by the caller."""
    mat = draws.draws if isinstance(draws, PartialPosteriorDraws) else np.asarray(draws)
    return _unit_log_likelihoods(mat, dataset, state)


def ais_log_weights(proposal_draws: np.ndarray,
                    moments: MomentEstimate) -> np.ndarray:
    """Log density ratio of the estimated joint Gaussian to the product of
    its marginals, evaluated at each composed proposal row.

    Corrects the independence approximation of the per-unit proposals; does
    not depend on the regression state.
    """
    proposals = np.atleast_2d(np.asarray(proposal_draws, dtype=float))
    if proposals.shape[1] != moments.n_units:
        raise DimensionMismatchError(
            f"proposals have {proposals.shape[1]} units, moments have {moments.n_units}")
    diffs = proposals - moments.mean[None, :]
    return moments.log_det_ratio - 0.5 * moments.quad_forms(diffs)


def weight_report(normalized_weights: np.ndarray) -> WeightReport:
    """ESS, max weight, and entropy of a probability vector."""
    w = np.asarray(normalized_weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-8:
        raise ValueError("weight_report expects a normalized probability vector")
    positive = w[w > 0]
    return WeightReport(
        ess=float(1.0 / np.sum(w * w)),
        max_weight=float(w.max()),
        entropy=float(-np.sum(positive * np.log(positive))),
    )
