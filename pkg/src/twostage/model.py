"""Two-stage model core.

Stage one is a Gaussian measurement-error model z = zeta + u with a known
prior on zeta, which admits a closed-form partial posterior for zeta given
z. Stage two is a (log-)linear Gaussian regression of the outcome on zeta
and known covariates. This module holds the domain types, the tractable
stage-one simulator and its analytic partial posterior, one exact Gibbs
sweep for the stage-two parameters, and the closed-form estimands that
describe what plug-in and partial-posterior strategies actually target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .rng import SeededStream, cholesky, inverse_gamma_sample, mvn_sample

SIGMA_THETA_BOUND = 1000.0


@dataclass
class PartialPosteriorDraws:
    """S draws of the n-vector zeta from the stage-one partial posterior.

    Row s is one joint draw over all n units. This matrix is the only
    stage-one interface the samplers rely on.
    """

    draws: np.ndarray

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim != 2:
            raise DimensionMismatchError(
                f"draws must be an S x n matrix, got shape {self.draws.shape}")
        if self.draws.shape[0] < 2:
            raise ValueError("at least 2 draws are required for moment estimation")
        if not np.all(np.isfinite(self.draws)):
            raise ValueError("draws contain non-finite entries")

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    @property
    def n_units(self) -> int:
        return self.draws.shape[1]


@dataclass
class StageOneSimulation:
    """Configuration (and optionally the realized truth) of the stage-one model.

    Both covariances are equicorrelation matrices,
    sigma^2 [(1 - rho) I + rho 11^T], positive definite for rho in [0, 1).
    """

    sigma_u_sq: float
    sigma_zeta_sq: float
    rho_u: float = 0.0
    rho_zeta: float = 0.0
    n: int = 0
    zeta: np.ndarray | None = None
    u: np.ndarray | None = None
    z: np.ndarray | None = None

    def __post_init__(self):
        if self.sigma_u_sq < 0 or self.sigma_zeta_sq <= 0:
            raise ValueError("variances must be positive (sigma_u_sq may be 0)")
        for rho in (self.rho_u, self.rho_zeta):
            if not (0.0 <= rho < 1.0):
                raise ValueError(f"correlation must be in [0, 1), got {rho}")
        if self.n <= 0:
            raise ValueError("unit count n must be positive")

    def cov_u(self) -> np.ndarray:
        return equicorrelation(self.n, self.sigma_u_sq, self.rho_u)

    def cov_zeta(self) -> np.ndarray:
        return equicorrelation(self.n, self.sigma_zeta_sq, self.rho_zeta)


@dataclass
class TwoStageDataset:
    """Observed outcomes with known covariates for the stage-two regression.

    X may be empty (p = 0). When log_outcome is set the regression models
    log(y), so all outcomes must be positive. The optional truth dict can
    hold simulated ground truth (beta0, theta_zeta, beta, sigma_eps_sq, zeta).
    """

    y: np.ndarray
    X: np.ndarray | None = None
    log_outcome: bool = False
    truth: dict | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 1 or self.y.size == 0:
            raise DimensionMismatchError("y must be a nonempty vector")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("y contains non-finite entries")
        if self.X is None:
            self.X = np.empty((self.y.size, 0))
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise DimensionMismatchError(
                f"X must be n x p with n={self.y.size}, got {self.X.shape}")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("X contains non-finite entries")
        if self.log_outcome and np.any(self.y <= 0):
            raise ValueError("log-outcome model requires all y > 0")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def outcome(self) -> np.ndarray:
        """The outcome on the scale the regression is fit on."""
        return np.log(self.y) if self.log_outcome else self.y


@dataclass
class RegressionState:
    """One draw of the stage-two parameters plus the current zeta vector."""

    beta0: float
    theta_zeta: float
    beta: np.ndarray
    sigma_eps_sq: float
    zeta: np.ndarray
    sigma_theta: float | None = None

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        self.zeta = np.asarray(self.zeta, dtype=float)
        if self.sigma_eps_sq <= 0:
            raise ValueError("sigma_eps_sq must be positive")
        if self.sigma_theta is not None and not (0 < self.sigma_theta <= SIGMA_THETA_BOUND):
            raise ValueError(
                f"learned sigma_theta must lie in (0, {SIGMA_THETA_BOUND}]")

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        mu = self.beta0 + self.theta_zeta * self.zeta
        if X.shape[1]:
            mu = mu + X @ self.beta
        return mu


@dataclass
class PriorConfig:
    """Priors for the stage-two sweep.

    sigma_eps_sq ~ InverseGamma(ig_shape, ig_rate). The coefficient block
    (beta0, theta_zeta, beta) has prior N(0, coef_sd^2 I); with
    learn_coef_sd the scale gets a Uniform(0, coef_sd_bound] prior and is
    updated by slice sampling each sweep.
    """

    ig_shape: float = 3.0
    ig_rate: float = 6.0
    coef_sd: float = 1000.0
    learn_coef_sd: bool = False
    coef_sd_bound: float = SIGMA_THETA_BOUND

    def __post_init__(self):
        if self.ig_shape <= 0 or self.ig_rate <= 0:
            raise ValueError("inverse-gamma prior parameters must be positive")
        if self.coef_sd <= 0 or self.coef_sd_bound <= 0:
            raise ValueError("coefficient prior scale must be positive")


def equicorrelation(n: int, variance: float, rho: float) -> np.ndarray:
    """Covariance sigma^2 [(1 - rho) I + rho 11^T]."""
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"correlation must be in [0, 1), got {rho}")
    cov = np.full((n, n), variance * rho)
    np.fill_diagonal(cov, variance)
    return cov


def simulate_stage_one(config: StageOneSimulation,
                       stream: SeededStream) -> StageOneSimulation:
    """Draw zeta ~ MVN(0, cov_zeta), u ~ MVN(0, cov_u), and z = zeta + u.

    Returns a new StageOneSimulation with the truth fields filled. A zero
    measurement-error variance gives z = zeta exactly.
    """
    n = config.n
    zero = np.zeros(n)
    zeta = mvn_sample(zero, cholesky(config.cov_zeta()), stream)
    if config.sigma_u_sq == 0.0:
        u = np.zeros(n)
    else:
        u = mvn_sample(zero, cholesky(config.cov_u()), stream)
    return StageOneSimulation(
        sigma_u_sq=config.sigma_u_sq, sigma_zeta_sq=config.sigma_zeta_sq,
        rho_u=config.rho_u, rho_zeta=config.rho_zeta, n=n,
        zeta=zeta, u=u, z=zeta + u)


def analytic_partial_posterior(z: np.ndarray, cov_u: np.ndarray,
                               cov_zeta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of zeta given z under the Gaussian stage-one model.

    Computed in the product form cov_zeta (cov_zeta + cov_u)^{-1} cov_u,
    which equals (cov_u^{-1} + cov_zeta^{-1})^{-1} for positive definite
    inputs but also tolerates a zero measurement-error covariance. In the
    isotropic case this reduces to (lambda z, lambda sigma_u^2 I) with
    lambda = sigma_zeta^2 / (sigma_zeta^2 + sigma_u^2).
    """
    z = np.asarray(z, dtype=float)
    cov_u = np.asarray(cov_u, dtype=float)
    cov_zeta = np.asarray(cov_zeta, dtype=float)
    n = z.size
    if cov_u.shape != (n, n) or cov_zeta.shape != (n, n):
        raise DimensionMismatchError("covariance shapes must match z")
    total = cov_zeta + cov_u
    try:
        solved = np.linalg.solve(total, np.column_stack([z, cov_u]))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"singular stage-one covariance sum: {exc}")
    mean = cov_zeta @ solved[:, 0]
    cov = cov_zeta @ solved[:, 1:]
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def sample_partial_posterior_draws(mean: np.ndarray, cov: np.ndarray, n_draws: int,
                                   stream: SeededStream) -> PartialPosteriorDraws:
    """Draw n_draws independent joint samples from MVN(mean, cov)."""
    mean = np.asarray(mean, dtype=float)
    if n_draws < 2:
        raise ValueError("at least 2 draws are required")
    if np.all(cov == 0.0):
        return PartialPosteriorDraws(np.tile(mean, (n_draws, 1)))
    factor = cholesky(cov)
    return PartialPosteriorDraws(mvn_sample(mean, factor, stream, size=n_draws))


def coefficient_conditional(outcome: np.ndarray, design: np.ndarray,
                            sigma_eps_sq: float,
                            coef_sd: float) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and precision Cholesky of the ridge coefficient block.

    The conditional is MVN with precision W^T W / sigma_eps_sq + I / coef_sd^2
    and mean equal to the ridge solution (W^T W + (sigma_eps_sq/coef_sd^2) I)^{-1} W^T v.
    """
    k = design.shape[1]
    precision = design.T @ design / sigma_eps_sq
    precision[np.diag_indices(k)] += 1.0 / coef_sd**2
    chol = np.linalg.cholesky(precision)
    b = design.T @ outcome / sigma_eps_sq
    mean = np.linalg.solve(chol.T, np.linalg.solve(chol, b))
    return mean, chol


def _log_density_sigma_theta(s: float, k: int, sum_sq: float, bound: float) -> float:
    if s <= 0.0 or s > bound:
        return -np.inf
    return -k * math.log(s) - 0.5 * sum_sq / (s * s)


def _slice_sample_sigma_theta(current: float, coefs: np.ndarray, bound: float,
                              stream: SeededStream, max_doublings: int = 20) -> float:
    """Slice-sample the coefficient prior scale under its Uniform(0, bound] prior.

    The full conditional is proportional to s^{-k} exp(-sum(coefs^2)/(2 s^2))
    on (0, bound], which is unimodal in s, so interval doubling followed by
    shrinkage is exact.
    """
    k = coefs.size
    sum_sq = float(coefs @ coefs)
    rng = stream.rng
    log_level = _log_density_sigma_theta(current, k, sum_sq, bound) + math.log(rng.random())

    width = current
    left = current - width * rng.random()
    right = left + width
    for _ in range(max_doublings):
        grow_left = _log_density_sigma_theta(left, k, sum_sq, bound) > log_level
        grow_right = _log_density_sigma_theta(right, k, sum_sq, bound) > log_level
        if not (grow_left or grow_right):
            break
        if rng.random() < 0.5:
            left -= (right - left)
        else:
            right += (right - left)
    left = max(left, 1e-12)
    right = min(right, bound)

    while True:
        proposal = left + (right - left) * rng.random()
        if _log_density_sigma_theta(proposal, k, sum_sq, bound) > log_level:
            return proposal
        if proposal < current:
            left = proposal
        else:
            right = proposal


def regression_conditional_sweep(dataset: TwoStageDataset, zeta: np.ndarray,
                                 prior: PriorConfig, state: RegressionState,
                                 stream: SeededStream) -> RegressionState:
    """One exact Gibbs sweep for the stage-two parameters given zeta.

    Draws the coefficient block (beta0, theta_zeta, beta) jointly from its
    MVN full conditional, then sigma_eps_sq from its inverse-gamma full
    conditional given the new coefficients, then (when learned) the
    coefficient prior scale by slice sampling.
    """
    outcome = dataset.outcome()
    design = np.column_stack([np.ones(dataset.n), zeta, dataset.X])
    k = design.shape[1]

    if prior.learn_coef_sd and state.sigma_theta is None:
        raise ValueError("state.sigma_theta must be set when the prior scale is learned")
    coef_sd = state.sigma_theta if prior.learn_coef_sd else prior.coef_sd
    mean, chol = coefficient_conditional(outcome, design, state.sigma_eps_sq, coef_sd)
    eps = stream.rng.standard_normal(k)
    coefs = mean + np.linalg.solve(chol.T, eps)

    resid = outcome - design @ coefs
    if not np.all(np.isfinite(resid)):
        raise FloatingPointError("non-finite residuals in regression sweep")
    sigma_eps_sq = float(inverse_gamma_sample(
        prior.ig_shape + dataset.n / 2.0,
        prior.ig_rate + 0.5 * float(resid @ resid), stream))

    sigma_theta = state.sigma_theta
    if prior.learn_coef_sd:
        sigma_theta = _slice_sample_sigma_theta(
            sigma_theta, coefs, prior.coef_sd_bound, stream)

    return RegressionState(
        beta0=float(coefs[0]), theta_zeta=float(coefs[1]), beta=coefs[2:],
        sigma_eps_sq=sigma_eps_sq, zeta=np.asarray(zeta, dtype=float),
        sigma_theta=sigma_theta)


@dataclass(frozen=True)
class TheoreticalEstimands:
    """Closed-form targets of each zeta substitution in the isotropic model.

    attenuation is lambda = sigma_zeta^2 / (sigma_zeta^2 + sigma_u^2). The
    plug-in-z and partial-posterior slopes shrink to lambda * theta_zeta,
    while the plug-in posterior mean recovers theta_zeta. The implied error
    variances are inflated by theta_zeta^2 lambda sigma_u^2 for both plug-in
    variants and by theta_zeta^2 (1 + lambda) lambda sigma_u^2 for the
    partial-posterior substitution.
    """

    attenuation: float
    theta_plugin_z: float
    theta_plugin_mean: float
    theta_partial_posterior: float
    var_plugin_z: float
    var_plugin_mean: float
    var_partial_posterior: float


def theoretical_estimands(theta_zeta: float, sigma_zeta_sq: float,
                          sigma_u_sq: float, sigma_eps_sq: float) -> TheoreticalEstimands:
    """Evaluate the closed-form slope and variance estimands."""
    if sigma_zeta_sq <= 0 or sigma_u_sq < 0 or sigma_eps_sq <= 0:
        raise ValueError("variances must be positive (sigma_u_sq may be 0)")
    lam = sigma_zeta_sq / (sigma_zeta_sq + sigma_u_sq)
    inflation = theta_zeta**2 * lam * sigma_u_sq
    return TheoreticalEstimands(
        attenuation=lam,
        theta_plugin_z=lam * theta_zeta,
        theta_plugin_mean=theta_zeta,
        theta_partial_posterior=lam * theta_zeta,
        var_plugin_z=sigma_eps_sq + inflation,
        var_plugin_mean=sigma_eps_sq + inflation,
        var_partial_posterior=sigma_eps_sq + (1.0 + lam) * inflation,
    )
