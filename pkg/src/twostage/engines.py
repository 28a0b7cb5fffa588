"""Gibbs drivers for the zeta-update strategies and the posterior predictive.

Every strategy shares the exact stage-two conditional sweep; they differ
only in how the latent exposure vector zeta is refreshed each sweep:

  plugin-z           zeta fixed at the raw stage-one observations z
  plugin-zeta-hat    zeta fixed at the partial-posterior mean (column means)
  partial-posterior  one uniformly chosen stage-one draw per sweep
  vanilla-is         joint sampling-importance-resampling over a draw pool
  iis                per-unit one-dimensional importance resampling
  ais                iis-composed proposals reweighted by the estimated
                     joint-to-product-of-marginals Gaussian density ratio
  oracle-gibbs       exact conditional draw of zeta given outcomes and the
                     analytic stage-one moments (gold standard; needs the
                     full stage-one model)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._fast import HAS_NUMBA, alias_compose
from .errors import (DimensionMismatchError, MethodInputError,
                     NotPositiveDefiniteError)
from .model import (PartialPosteriorDraws, PriorConfig, RegressionState,
                    TwoStageDataset, regression_conditional_sweep)
from .weights import (MomentEstimate, ais_log_weights, estimate_moments,
                      is_log_weights, iis_log_weights)

METHOD_KINDS = ("oracle-gibbs", "plugin-z", "plugin-zeta-hat",
                "partial-posterior", "vanilla-is", "iis", "ais")

# Initial sigma_theta when the coefficient prior scale is learned.
_SIGMA_THETA_INIT = 10.0


@dataclass(frozen=True)
class MethodSpec:
    """Which zeta-update strategy a chain uses, plus its settings.

    ais_R is the number of composed proposals per sweep; is_pool the joint
    pool size for vanilla importance sampling (filled by resampling the
    available draws with replacement when it exceeds them); shrink_gamma
    the moment regularization passed to estimate_moments for ais.
    """

    kind: str
    ais_R: int = 500
    is_pool: int = 1000
    shrink_gamma: float | str = "auto"

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"unknown method kind {self.kind!r}; "
                             f"expected one of {METHOD_KINDS}")
        if self.ais_R < 1:
            raise ValueError("ais_R must be at least 1")
        if self.is_pool < 1:
            raise ValueError("is_pool must be at least 1")

    @property
    def requires_raw_z(self) -> bool:
        return self.kind in ("plugin-z", "oracle-gibbs")


@dataclass(frozen=True)
class ChainConfig:
    """Sweep counts for one Gibbs chain; retained draws = (total - burn) / thin."""

    total_sweeps: int = 2500
    burn_in: int = 500
    thin: int = 1
    store_zeta: bool = False

    def __post_init__(self):
        if self.burn_in < 0 or self.burn_in >= self.total_sweeps:
            raise ValueError("burn_in must satisfy 0 <= burn_in < total_sweeps")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if (self.total_sweeps - self.burn_in) % self.thin:
            raise ValueError("total_sweeps - burn_in must be divisible by thin")
        if self.n_retained < 100:
            raise ValueError("chain must retain at least 100 draws")

    @property
    def n_retained(self) -> int:
        return (self.total_sweeps - self.burn_in) // self.thin


@dataclass(frozen=True)
class StageOneInfo:
    """Analytic partial-posterior mean and covariance (oracle-gibbs input)."""

    zeta_hat: np.ndarray
    cov: np.ndarray


@dataclass
class PosteriorSample:
    """Retained draws of the stage-two parameters from one chain.

    weight_trace has one (ess, max_weight, entropy) row per sweep for the
    weight-based methods (for iis these aggregate over units: mean ess,
    worst max weight, mean entropy). degenerate_sweeps lists sweeps where
    every weight underflowed and the sampler fell back to uniform
    resampling.
    """

    beta0: np.ndarray
    theta_zeta: np.ndarray
    beta: np.ndarray
    sigma_eps_sq: np.ndarray
    sigma_theta: np.ndarray | None
    zeta: np.ndarray | None
    fitted_mean: np.ndarray
    method: MethodSpec
    chain: ChainConfig
    base_seed: int
    stream_id: int
    log_outcome: bool
    weight_trace: np.ndarray | None = None
    degenerate_sweeps: list[int] = field(default_factory=list)
    shrink_gamma: float | None = None

    @property
    def n_retained(self) -> int:
        return self.theta_zeta.size

    def parameters(self) -> dict[str, np.ndarray]:
        """Named draw vectors for every scalar parameter."""
        out = {"beta0": self.beta0, "theta_zeta": self.theta_zeta,
               "sigma_eps_sq": self.sigma_eps_sq}
        for j in range(self.beta.shape[1]):
            out[f"beta_{j + 1}"] = self.beta[:, j]
        if self.sigma_theta is not None:
            out["sigma_theta"] = self.sigma_theta
        return out

    def degenerate_after_burn_in(self) -> int:
        return sum(1 for s in self.degenerate_sweeps if s >= self.chain.burn_in)


def oracle_zeta_conditional(outcome: np.ndarray, X: np.ndarray,
                            state: RegressionState, zeta_hat: np.ndarray,
                            cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and precision of the exact conditional [zeta | y, z, theta].

    The stage-one partial posterior MVN(zeta_hat, cov) is the prior; the
    stage-two likelihood contributes precision (theta_zeta^2 / sigma_eps_sq) I
    and pulls the mean toward the residual direction.
    """
    zeta_hat = np.asarray(zeta_hat, dtype=float)
    n = zeta_hat.size
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (n, n):
        raise DimensionMismatchError("cov shape must match zeta_hat")
    prior_precision = np.linalg.inv(cov)
    c = state.theta_zeta**2 / state.sigma_eps_sq
    precision = prior_precision + c * np.eye(n)
    resid = outcome - state.beta0
    if X.shape[1]:
        resid = resid - X @ state.beta
    b = prior_precision @ zeta_hat + (state.theta_zeta / state.sigma_eps_sq) * resid
    mean = np.linalg.solve(precision, b)
    return mean, precision


class _OracleSampler:
    """Per-chain cache for exact conditional draws of zeta.

    Diagonalizing the partial-posterior covariance once turns each sweep
    into O(n^2) work: the conditional precision is Q (1/lam + c) Q^T for
    every value of c = theta_zeta^2 / sigma_eps_sq.
    """

    def __init__(self, info: StageOneInfo):
        lam, q = np.linalg.eigh(np.asarray(info.cov, dtype=float))
        if lam[0] <= 0.0:
            raise NotPositiveDefiniteError(
                "stage-one covariance for oracle-gibbs is singular")
        self.lam = lam
        self.q = q
        self.zeta_hat = np.asarray(info.zeta_hat, dtype=float)
        # Precision-weighted prior mean, expressed in the eigenbasis.
        self.prior_term = q.T @ self.zeta_hat / lam

    def draw(self, outcome, X, state, rng):
        c = state.theta_zeta**2 / state.sigma_eps_sq
        resid = outcome - state.beta0
        if X.shape[1]:
            resid = resid - X @ state.beta
        b = self.prior_term + self.q.T @ ((state.theta_zeta / state.sigma_eps_sq) * resid)
        d = 1.0 / self.lam + c
        mean_eig = b / d
        eps = rng.standard_normal(self.lam.size)
        return self.q @ (mean_eig + eps / np.sqrt(d))


class _ColumnWeights:
    """Per-unit weights for one sweep: normalization, CDFs, and diagnostics.

    Columns whose weights all underflow fall back to uniform and flag the
    sweep as degenerate. Entropy is computed from the shifted log weights
    so the (S, n) matrix never needs a second elementwise log.
    """

    def __init__(self, log_matrix: np.ndarray):
        col_max = log_matrix.max(axis=0)
        bad = ~np.isfinite(col_max)
        self.degenerate = bool(bad.any())
        shifted = log_matrix - np.where(bad, 0.0, col_max)[None, :]
        expw = np.exp(shifted)
        if self.degenerate:
            expw[:, bad] = 1.0
            shifted[:, bad] = 0.0
        sums = expw.sum(axis=0)
        self.weights = expw / sums
        self._shifted = shifted
        self._log_sums = np.log(sums)

    def cdf(self) -> np.ndarray:
        out = np.cumsum(self.weights, axis=0)
        out[-1, :] = 1.0
        return out

    def trace_row(self) -> tuple[float, float, float]:
        w = self.weights
        col_ess = 1.0 / np.einsum("sn,sn->n", w, w)
        col_entropy = self._log_sums - np.einsum("sn,sn->n", w, self._shifted)
        return float(col_ess.mean()), float(w.max()), float(col_entropy.mean())


def _normalize_or_uniform(log_weights: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Normalized weights, their logs, and a degenerate-fallback flag."""
    top = log_weights.max()
    m = log_weights.size
    if not np.isfinite(top):
        return np.full(m, 1.0 / m), np.full(m, -np.log(m)), True
    shifted = log_weights - top
    w = np.exp(shifted)
    total = w.sum()
    return w / total, shifted - np.log(total), False


def _pick_index(weights: np.ndarray, rng) -> int:
    cdf = np.cumsum(weights)
    return int(min(np.searchsorted(cdf, rng.random(), side="right"),
                   weights.size - 1))


def _scalar_trace(weights: np.ndarray, log_weights: np.ndarray
                  ) -> tuple[float, float, float]:
    return (float(1.0 / (weights @ weights)),
            float(weights.max()),
            float(-(weights @ log_weights)))


def _make_zeta_step(spec: MethodSpec, dataset: TwoStageDataset,
                    draws: PartialPosteriorDraws,
                    stage_one: StageOneInfo | None, z: np.ndarray | None,
                    moments: MomentEstimate | None, stream):
    """Build the per-sweep zeta update for one method.

    The returned callable maps the current state to
    (zeta, trace_row | None, degenerate_flag).
    """
    mat = draws.draws
    n_draws, n = mat.shape
    rng = stream.rng
    outcome = dataset.outcome()
    unit_index = np.arange(n)

    if spec.kind == "plugin-z":
        fixed = np.asarray(z, dtype=float)

        def step(state):
            return fixed, None, False

    elif spec.kind == "plugin-zeta-hat":
        fixed = mat.mean(axis=0)

        def step(state):
            return fixed, None, False

    elif spec.kind == "partial-posterior":

        def step(state):
            return mat[int(rng.integers(n_draws))], None, False

    elif spec.kind == "vanilla-is":

        def step(state):
            # Rows drawn repeatedly share one likelihood evaluation: weights
            # over the unique draws are gathered onto the pool indices.
            logw_unique = is_log_weights(mat, dataset, state)
            if spec.is_pool == n_draws:
                pool_idx = np.arange(n_draws)
            elif spec.is_pool < n_draws:
                pool_idx = rng.choice(n_draws, size=spec.is_pool, replace=False)
            else:
                pool_idx = rng.integers(0, n_draws, size=spec.is_pool)
            weights, logw_norm, degenerate = _normalize_or_uniform(logw_unique[pool_idx])
            pick = _pick_index(weights, rng)
            return mat[pool_idx[pick]], _scalar_trace(weights, logw_norm), degenerate

    elif spec.kind == "iis":

        def step(state):
            cols = _ColumnWeights(iis_log_weights(mat, dataset, state))
            u = rng.random(n)
            idx = (cols.cdf() > u[None, :]).argmax(axis=0)
            return mat[idx, unit_index], cols.trace_row(), cols.degenerate

    elif spec.kind == "ais":
        mom = moments
        mat_rows = np.ascontiguousarray(mat.T)
        offsets = np.arange(n, dtype=float)

        def compose(cols):
            """R proposals, each pairing one independent per-unit draw."""
            if HAS_NUMBA:
                weights_rows = np.ascontiguousarray(cols.weights.T)
                u_bucket = rng.random((n, spec.ais_R))
                u_accept = rng.random((n, spec.ais_R))
                return alias_compose(weights_rows, mat_rows, u_bucket, u_accept)
            cdf = cols.cdf()
            u = rng.random((spec.ais_R, n))
            # One flattened inverse-CDF lookup over all units: column i of
            # the cdf lives in (i, i + 1], so offset queries stay in-block.
            flat_cdf = (cdf + offsets[None, :]).T.ravel()
            flat_u = (u + offsets[None, :]).T.ravel()
            flat_idx = np.searchsorted(flat_cdf, flat_u, side="right")
            idx = (flat_idx.reshape(n, spec.ais_R)
                   - np.arange(n)[:, None] * n_draws).T
            return mat[idx, unit_index[None, :]]

        def step(state):
            cols = _ColumnWeights(iis_log_weights(mat, dataset, state))
            proposals = compose(cols)
            log_ratio = ais_log_weights(proposals, mom)
            weights, logw_norm, degenerate_ais = _normalize_or_uniform(log_ratio)
            pick = _pick_index(weights, rng)
            return (proposals[pick], _scalar_trace(weights, logw_norm),
                    cols.degenerate or degenerate_ais)

    elif spec.kind == "oracle-gibbs":
        sampler = _OracleSampler(stage_one)

        def step(state):
            return sampler.draw(outcome, dataset.X, state, rng), None, False

    else:  # pragma: no cover - guarded by MethodSpec validation
        raise ValueError(f"unknown method kind {spec.kind!r}")

    return step


def _initial_state(dataset: TwoStageDataset, draws: PartialPosteriorDraws,
                   spec: MethodSpec, prior: PriorConfig,
                   z: np.ndarray | None) -> RegressionState:
    if spec.kind == "plugin-z":
        zeta0 = np.asarray(z, dtype=float)
    else:
        zeta0 = draws.draws.mean(axis=0)
    return RegressionState(
        beta0=0.0, theta_zeta=0.0, beta=np.zeros(dataset.p),
        sigma_eps_sq=1.0, zeta=zeta0,
        sigma_theta=_SIGMA_THETA_INIT if prior.learn_coef_sd else None)


def run_chain(dataset: TwoStageDataset, draws: PartialPosteriorDraws,
              spec: MethodSpec, prior: PriorConfig, chain: ChainConfig,
              stream, *, stage_one: StageOneInfo | None = None,
              z: np.ndarray | None = None,
              moments: MomentEstimate | None = None) -> PosteriorSample:
    """Run one Gibbs chain alternating the method's zeta step with the
    shared stage-two conditional sweep.

    stage_one is required for oracle-gibbs, z for plugin-z; ais accepts a
    precomputed MomentEstimate so the one-time moment cost can be shared
    across chains on the same draws.
    """
    if draws.n_units != dataset.n:
        raise DimensionMismatchError(
            f"draws cover {draws.n_units} units but dataset has {dataset.n}")
    if spec.kind == "plugin-z":
        if z is None:
            raise MethodInputError("plugin-z requires the raw stage-one data z")
        z = np.asarray(z, dtype=float)
        if z.size != dataset.n:
            raise DimensionMismatchError("z length must match dataset")
    if spec.kind == "oracle-gibbs" and stage_one is None:
        raise MethodInputError(
            "oracle-gibbs requires the analytic stage-one mean and covariance")
    if spec.kind == "ais" and moments is None:
        moments = estimate_moments(draws, spec.shrink_gamma)

    step = _make_zeta_step(spec, dataset, draws, stage_one, z, moments, stream)
    state = _initial_state(dataset, draws, spec, prior, z)
    return _drive(step, dataset, draws, spec, prior, chain, stream, state,
                  shrink_gamma=moments.shrink_gamma if moments is not None else None)


def _drive(step, dataset: TwoStageDataset, draws: PartialPosteriorDraws,
           spec: MethodSpec, prior: PriorConfig, chain: ChainConfig,
           stream, state: RegressionState,
           shrink_gamma: float | None = None) -> PosteriorSample:
    """Shared Gibbs loop; only the injected zeta step distinguishes methods."""
    n, p = dataset.n, dataset.p
    t_ret = chain.n_retained
    beta0 = np.empty(t_ret)
    theta = np.empty(t_ret)
    beta = np.empty((t_ret, p))
    sig2 = np.empty(t_ret)
    sig_theta = np.empty(t_ret) if prior.learn_coef_sd else None
    zeta_store = np.empty((t_ret, n)) if chain.store_zeta else None
    traced = spec.kind in ("vanilla-is", "iis", "ais")
    trace = np.empty((chain.total_sweeps, 3)) if traced else None
    degenerate: list[int] = []
    fitted = np.zeros(n)

    keep = 0
    for sweep in range(chain.total_sweeps):
        zeta, trace_row, was_degenerate = step(state)
        if was_degenerate:
            degenerate.append(sweep)
        if traced:
            trace[sweep] = trace_row
        state = regression_conditional_sweep(dataset, zeta, prior, state, stream)
        if sweep >= chain.burn_in and (sweep - chain.burn_in) % chain.thin == 0:
            beta0[keep] = state.beta0
            theta[keep] = state.theta_zeta
            beta[keep] = state.beta
            sig2[keep] = state.sigma_eps_sq
            if sig_theta is not None:
                sig_theta[keep] = state.sigma_theta
            if zeta_store is not None:
                zeta_store[keep] = zeta
            fitted += state.linear_predictor(dataset.X)
            keep += 1

    return PosteriorSample(
        beta0=beta0, theta_zeta=theta, beta=beta, sigma_eps_sq=sig2,
        sigma_theta=sig_theta, zeta=zeta_store, fitted_mean=fitted / t_ret,
        method=spec, chain=chain, base_seed=stream.base_seed,
        stream_id=stream.stream_id, log_outcome=dataset.log_outcome,
        weight_trace=trace, degenerate_sweeps=degenerate,
        shrink_gamma=shrink_gamma)


def posterior_predictive(sample: PosteriorSample, test_draws: PartialPosteriorDraws,
                         X_test: np.ndarray | None, stream, *,
                         test_z: np.ndarray | None = None) -> np.ndarray:
    """Draw from the posterior predictive at new units, one row per retained
    parameter draw.

    Plug-in variants fix the new zeta at their point value (raw test_z for
    plugin-z, the test-draw column means for plugin-zeta-hat); every other
    method draws a joint row of the test-point partial posterior per sweep,
    which receives no stage-two feedback. Outcomes are returned on the raw
    scale (exponentiated for log-outcome models).
    """
    t_ret = sample.n_retained
    n_test = test_draws.n_units
    p = sample.beta.shape[1]
    if X_test is None:
        X_test = np.empty((n_test, 0))
    X_test = np.asarray(X_test, dtype=float)
    if X_test.shape != (n_test, p):
        raise DimensionMismatchError(
            f"X_test must be {(n_test, p)}, got {X_test.shape}")

    kind = sample.method.kind
    rng = stream.rng
    if kind == "plugin-z":
        if test_z is None:
            raise MethodInputError("plugin-z prediction requires raw test z values")
        test_z = np.asarray(test_z, dtype=float)
        if test_z.size != n_test:
            raise DimensionMismatchError("test_z length must match test draws")
        zeta_mat = np.broadcast_to(test_z, (t_ret, n_test))
    elif kind == "plugin-zeta-hat":
        zeta_mat = np.broadcast_to(test_draws.draws.mean(axis=0), (t_ret, n_test))
    else:
        idx = rng.integers(0, test_draws.n_draws, size=t_ret)
        zeta_mat = test_draws.draws[idx]

    mu = sample.beta0[:, None] + sample.theta_zeta[:, None] * zeta_mat
    if p:
        mu = mu + sample.beta @ X_test.T
    out = mu + np.sqrt(sample.sigma_eps_sq)[:, None] * rng.standard_normal((t_ret, n_test))
    if sample.log_outcome:
        out = np.exp(out)
    return out
