"""Declarative simulation designs and end-to-end study orchestration.

A study simulates the tractable two-stage model, hands every method the
same data and stage-one draws within a replication, and scores each
posterior against ground truth and against the oracle-gibbs chain.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ._version import __version__
from .engines import (ChainConfig, MethodSpec, PosteriorSample, StageOneInfo,
                      posterior_predictive, run_chain)
from .evaluation import (ParameterSummary, StudySummary, coverage_and_width,
                         rmse, summarize_parameter, wasserstein2)
from .model import (PartialPosteriorDraws, PriorConfig, StageOneSimulation,
                    TwoStageDataset, analytic_partial_posterior,
                    sample_partial_posterior_draws, simulate_stage_one)
from .rng import SeededStream, cholesky
from .weights import moments_from_gaussian

ALL_METHODS = ("oracle-gibbs", "plugin-z", "plugin-zeta-hat",
               "partial-posterior", "vanilla-is", "iis", "ais")


@dataclass(frozen=True)
class SimulationDesign:
    """Everything needed to reproduce one simulation study."""

    name: str
    n: int = 200
    n_test: int = 0
    reps: int = 100
    beta0: float = 0.0
    theta_zeta: float = 4.0
    sigma_eps_sq: float = 2.0
    sigma_u_sq: float = 1.0
    sigma_zeta_sq: float = 1.0
    rho: float = 0.0
    n_draws: int = 500
    is_pool: int = 1000
    ais_R: int = 500
    methods: tuple[str, ...] = ALL_METHODS
    total_sweeps: int = 2500
    burn_in: int = 500
    thin: int = 1
    ig_shape: float = 3.0
    ig_rate: float = 6.0
    coef_sd: float = 1000.0
    base_seed: int = 20260801

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.n_test < 0:
            raise ValueError("n_test must be nonnegative")
        for kind in self.methods:
            MethodSpec(kind)  # validates the name

    def chain_config(self, store_zeta: bool = False) -> ChainConfig:
        return ChainConfig(total_sweeps=self.total_sweeps, burn_in=self.burn_in,
                           thin=self.thin, store_zeta=store_zeta)

    def prior_config(self) -> PriorConfig:
        return PriorConfig(ig_shape=self.ig_shape, ig_rate=self.ig_rate,
                           coef_sd=self.coef_sd)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["methods"] = list(self.methods)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationDesign":
        data = dict(data)
        if "methods" in data:
            data["methods"] = tuple(data["methods"])
        return cls(**data)


def design_hash(design: SimulationDesign) -> str:
    """Content hash of a design, stable under field reordering."""
    canon = json.dumps(design.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def builtin_designs() -> dict[str, SimulationDesign]:
    """Named catalog of the shipped simulation designs."""
    designs = [
        SimulationDesign(name="example1", rho=0.0, n_test=1000, base_seed=20260801),
        SimulationDesign(name="example2", rho=0.3, n_test=1000, base_seed=20260802),
        SimulationDesign(name="rho05", rho=0.5, n_test=1000, base_seed=20260803),
        SimulationDesign(name="theta1-rho0", theta_zeta=1.0, rho=0.0,
                         n_test=1000, base_seed=20260804),
        SimulationDesign(name="theta1-rho03", theta_zeta=1.0, rho=0.3,
                         n_test=1000, base_seed=20260805),
        SimulationDesign(name="theta15-rho0", theta_zeta=15.0, rho=0.0,
                         n_test=1000, base_seed=20260806),
        SimulationDesign(name="theta15-rho03", theta_zeta=15.0, rho=0.3,
                         n_test=1000, base_seed=20260807),
        SimulationDesign(name="sigmazeta4-rho0", sigma_zeta_sq=4.0, rho=0.0,
                         n_test=1000, base_seed=20260808),
        SimulationDesign(name="sigmazeta4-rho03", sigma_zeta_sq=4.0, rho=0.3,
                         n_test=1000, base_seed=20260809),
    ]
    return {d.name: d for d in designs}


@dataclass
class ReplicationData:
    """One replication's simulated inputs, shared by every method."""

    dataset: TwoStageDataset
    z: np.ndarray
    draws: PartialPosteriorDraws
    stage_one: StageOneInfo
    jitter_delta: float
    test_dataset: TwoStageDataset | None = None
    test_z: np.ndarray | None = None
    test_draws: PartialPosteriorDraws | None = None


@dataclass
class ReplicationRecord:
    """Scores for one (replication, method) fit."""

    rep: int
    method: str
    summaries: dict[str, ParameterSummary]
    w2_theta: float | None = None
    w2_sigma: float | None = None
    rmse_in: float | None = None
    rmse_out: float | None = None
    pred_coverage: float | None = None
    pred_width: float | None = None
    shrink_gamma: float | None = None
    jitter_delta: float = 0.0
    degenerate_post_burn: int = 0
    weight_trace: np.ndarray | None = None


@dataclass
class StudyResult:
    """All replication records plus per-method aggregates for one design."""

    design: SimulationDesign
    design_hash: str
    records: list[ReplicationRecord]
    aggregates: dict[str, StudySummary]
    failures: list[tuple[int, str]]
    version: str = __version__


def simulate_replication_data(design: SimulationDesign,
                              stream: SeededStream) -> ReplicationData:
    """Simulate stage one and stage two for one replication (plus test units)."""
    # All training-data randomness is consumed before any test-unit
    # randomness, so the training replication is unchanged by n_test.
    config = StageOneSimulation(
        sigma_u_sq=design.sigma_u_sq, sigma_zeta_sq=design.sigma_zeta_sq,
        rho_u=design.rho, rho_zeta=design.rho, n=design.n)
    sim = simulate_stage_one(config, stream)
    eps = stream.rng.normal(0.0, np.sqrt(design.sigma_eps_sq), design.n)
    y = design.beta0 + design.theta_zeta * sim.zeta + eps
    dataset = TwoStageDataset(y, truth={
        "beta0": design.beta0, "theta_zeta": design.theta_zeta,
        "sigma_eps_sq": design.sigma_eps_sq, "zeta": sim.zeta})
    mean, cov = analytic_partial_posterior(sim.z, config.cov_u(), config.cov_zeta())
    jitter = 0.0 if np.all(cov == 0.0) else cholesky(cov).jitter_delta
    draws = sample_partial_posterior_draws(mean, cov, design.n_draws, stream)

    test_dataset = test_z = test_draws = None
    if design.n_test:
        test_config = StageOneSimulation(
            sigma_u_sq=design.sigma_u_sq, sigma_zeta_sq=design.sigma_zeta_sq,
            rho_u=design.rho, rho_zeta=design.rho, n=design.n_test)
        test_sim = simulate_stage_one(test_config, stream)
        test_eps = stream.rng.normal(0.0, np.sqrt(design.sigma_eps_sq), design.n_test)
        test_y = design.beta0 + design.theta_zeta * test_sim.zeta + test_eps
        test_dataset = TwoStageDataset(test_y, truth={"zeta": test_sim.zeta})
        test_z = test_sim.z
        test_mean, test_cov = analytic_partial_posterior(
            test_z, test_config.cov_u(), test_config.cov_zeta())
        test_draws = sample_partial_posterior_draws(
            test_mean, test_cov, design.n_draws, stream)

    return ReplicationData(dataset=dataset, z=sim.z, draws=draws,
                           stage_one=StageOneInfo(zeta_hat=mean, cov=cov),
                           jitter_delta=jitter, test_dataset=test_dataset,
                           test_z=test_z, test_draws=test_draws)


def _prediction_scores(pred: np.ndarray, observed: np.ndarray,
                       level: float = 0.95):
    alpha = (1.0 - level) / 2.0
    lower, upper = np.quantile(pred, [alpha, 1.0 - alpha], axis=0)
    coverage = float(np.mean((observed >= lower) & (observed <= upper)))
    width = float(np.mean(upper - lower))
    out_rmse = rmse(pred.mean(axis=0), observed)
    return coverage, width, out_rmse


def run_replication(design: SimulationDesign, rep: int,
                    keep_weight_trace: bool = True) -> list[ReplicationRecord]:
    """Simulate one replication and fit every method on the shared data."""
    stream = SeededStream(design.base_seed, rep)
    data = simulate_replication_data(design, stream)
    chain = design.chain_config()
    prior = design.prior_config()
    # The benchmark model's stage-one covariances are known, so ais gets the
    # analytic partial-posterior moments rather than draw-based estimates.
    moments = (moments_from_gaussian(data.stage_one.zeta_hat, data.stage_one.cov)
               if "ais" in design.methods else None)

    samples: dict[str, PosteriorSample] = {}
    predictions: dict[str, tuple[float, float, float]] = {}
    for kind in design.methods:
        spec = MethodSpec(kind, ais_R=design.ais_R, is_pool=design.is_pool)
        sample = run_chain(data.dataset, data.draws, spec, prior, chain, stream,
                           stage_one=data.stage_one, z=data.z,
                           moments=moments if kind == "ais" else None)
        samples[kind] = sample
        if design.n_test:
            pred = posterior_predictive(sample, data.test_draws, None, stream,
                                        test_z=data.test_z)
            predictions[kind] = _prediction_scores(pred, data.test_dataset.y)

    oracle = samples.get("oracle-gibbs")
    records = []
    for kind in design.methods:
        sample = samples[kind]
        truth = data.dataset.truth
        summaries = {
            "beta0": summarize_parameter(sample.beta0, truth["beta0"]),
            "theta_zeta": summarize_parameter(sample.theta_zeta, truth["theta_zeta"]),
            "sigma_eps_sq": summarize_parameter(sample.sigma_eps_sq,
                                                truth["sigma_eps_sq"]),
        }
        record = ReplicationRecord(
            rep=rep, method=kind, summaries=summaries,
            rmse_in=rmse(sample.fitted_mean, data.dataset.outcome()),
            shrink_gamma=sample.shrink_gamma,
            jitter_delta=data.jitter_delta,
            degenerate_post_burn=sample.degenerate_after_burn_in(),
            weight_trace=sample.weight_trace if keep_weight_trace else None)
        if oracle is not None and kind != "oracle-gibbs":
            record.w2_theta = wasserstein2(sample.theta_zeta, oracle.theta_zeta)
            record.w2_sigma = wasserstein2(sample.sigma_eps_sq, oracle.sigma_eps_sq)
        if kind in predictions:
            record.pred_coverage, record.pred_width, record.rmse_out = predictions[kind]
        records.append(record)
    return records


def _replication_task(args) -> tuple[int, list[ReplicationRecord] | None, str | None]:
    design, rep, keep_trace = args
    try:
        return rep, run_replication(design, rep, keep_trace), None
    except Exception as exc:  # recorded, study continues
        return rep, None, f"{type(exc).__name__}: {exc}"


def aggregate_records(design: SimulationDesign,
                      records: list[ReplicationRecord]) -> dict[str, StudySummary]:
    """Per-method study aggregates over replication records."""
    out: dict[str, StudySummary] = {}
    for kind in design.methods:
        rows = [r for r in records if r.method == kind]
        if not rows:
            continue
        summary = StudySummary(method=kind)
        intervals = [(r.summaries["theta_zeta"].lower, r.summaries["theta_zeta"].upper)
                     for r in rows]
        summary.coverage_theta, summary.mean_width_theta = coverage_and_width(
            intervals, design.theta_zeta)
        summary.mean_theta = float(np.mean(
            [r.summaries["theta_zeta"].mean for r in rows]))
        summary.mean_sigma_eps_sq = float(np.mean(
            [r.summaries["sigma_eps_sq"].mean for r in rows]))
        w2t = [r.w2_theta for r in rows if r.w2_theta is not None]
        w2s = [r.w2_sigma for r in rows if r.w2_sigma is not None]
        if w2t:
            summary.w2_theta_mean = float(np.mean(w2t))
            summary.w2_theta_median = float(np.median(w2t))
        if w2s:
            summary.w2_sigma_mean = float(np.mean(w2s))
            summary.w2_sigma_median = float(np.median(w2s))
        summary.rmse_in_mean = float(np.mean([r.rmse_in for r in rows]))
        outs = [r.rmse_out for r in rows if r.rmse_out is not None]
        if outs:
            summary.rmse_out_mean = float(np.mean(outs))
            summary.pred_coverage_mean = float(np.mean(
                [r.pred_coverage for r in rows]))
            summary.pred_width_mean = float(np.mean([r.pred_width for r in rows]))
        out[kind] = summary
    return out


def run_study(design: SimulationDesign, parallel: int | None = None,
              keep_weight_trace: bool = True) -> StudyResult:
    """Run every replication of a design and aggregate the scores.

    Replications own independent seeded streams, so results do not depend
    on the worker count. Failed replications are recorded and skipped.
    """
    tasks = [(design, rep, keep_weight_trace) for rep in range(design.reps)]
    if parallel and parallel > 1 and design.reps > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_replication_task, tasks, chunksize=1))
    else:
        results = [_replication_task(t) for t in tasks]

    results.sort(key=lambda item: item[0])
    records: list[ReplicationRecord] = []
    failures: list[tuple[int, str]] = []
    for rep, recs, error in results:
        if error is not None:
            failures.append((rep, error))
        else:
            records.extend(recs)
    return StudyResult(design=design, design_hash=design_hash(design),
                       records=records, aggregates=aggregate_records(design, records),
                       failures=failures)


@dataclass
class HybridDesign:
    """Recipe for hybrid outcome data built from a fitted chain's draws.

    The source sample must store its zeta draws; each selected sweep t
    yields one synthetic dataset whose outcome shifts the observed one by
    (theta_star - theta_zeta^t) zeta^t on the model scale, preserving the
    draw-by-draw residuals exactly while installing a chosen signal
    strength.
    """

    source: PosteriorSample
    dataset: TwoStageDataset
    theta_star: float
    num_datasets: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.source.zeta is None:
            raise ValueError("hybrid generation needs a source fit with store_zeta")
        if not np.isfinite(self.theta_star):
            raise ValueError("theta_star must be finite")
        if self.num_datasets < 1:
            raise ValueError("num_datasets must be positive")


def _hybrid_outcome(design: HybridDesign, t: int) -> np.ndarray:
    base = design.dataset.outcome()
    gap = design.theta_star - design.source.theta_zeta[t]
    return base + gap * design.source.zeta[t]


def hybrid_generate(design: HybridDesign) -> list[TwoStageDataset]:
    """Build num_datasets hybrid datasets from uniformly chosen sweeps."""
    t_ret = design.source.n_retained
    if design.num_datasets > t_ret:
        raise ValueError(
            f"requested {design.num_datasets} datasets but only "
            f"{t_ret} retained sweeps are available")
    stream = SeededStream(design.seed)
    chosen = np.sort(stream.rng.choice(t_ret, size=design.num_datasets,
                                       replace=False))
    out = []
    for t in chosen:
        shifted = _hybrid_outcome(design, int(t))
        y = np.exp(shifted) if design.dataset.log_outcome else shifted
        out.append(TwoStageDataset(
            y, X=design.dataset.X.copy(), log_outcome=design.dataset.log_outcome,
            truth={"theta_zeta": design.theta_star, "source_sweep": int(t)}))
    return out


def hybrid_mean_variant(design: HybridDesign) -> TwoStageDataset:
    """Single dataset averaging the hybrid outcomes over all retained sweeps."""
    t_ret = design.source.n_retained
    base = design.dataset.outcome()
    gaps = design.theta_star - design.source.theta_zeta
    shifted = base + (gaps[:, None] * design.source.zeta).mean(axis=0)
    y = np.exp(shifted) if design.dataset.log_outcome else shifted
    return TwoStageDataset(
        y, X=design.dataset.X.copy(), log_outcome=design.dataset.log_outcome,
        truth={"theta_zeta": design.theta_star, "variant": "mean",
               "num_sweeps": t_ret})


def mortality_standin(seed: int = 20260404
                      ) -> tuple[TwoStageDataset, PartialPosteriorDraws, dict]:
    """Synthetic stand-in with the shape of the county mortality analysis.

    452 units, 100 stage-one draws, 7 covariates (income, metro indicator,
    two population proportions, three state dummies), log-scale outcome,
    and a deliberately small exposure effect. Returned entirely from the
    seed so files regenerate byte-identically.
    """
    n, n_draws = 452, 100
    stream = SeededStream(seed)
    rng = stream.rng

    exposure_cov = cholesky(np.full((n, n), 0.3 * 1.44) + np.diag(np.full(n, 0.7 * 1.44)))
    exposure = 9.0 + exposure_cov.lower @ rng.standard_normal(n)

    income = rng.normal(0.0, 1.0, n)
    metro = (rng.random(n) < 0.35).astype(float)
    black_prop = np.clip(rng.beta(2.0, 8.0, n), 0.0, 1.0)
    no_hs_prop = np.clip(rng.beta(3.0, 12.0, n), 0.0, 1.0)
    state = rng.integers(0, 4, n)
    dummies = np.column_stack([(state == k).astype(float) for k in (1, 2, 3)])
    X = np.column_stack([income, metro, black_prop, no_hs_prop, dummies])

    beta = np.array([-0.06, 0.01, 0.25, 0.15, 0.01, 0.05, -0.02])
    truth = {"beta0": 6.45, "theta_zeta": 0.01, "beta": beta.tolist(),
             "sigma_eps_sq": 0.0144}
    eps = rng.normal(0.0, np.sqrt(truth["sigma_eps_sq"]), n)
    log_y = truth["beta0"] + truth["theta_zeta"] * exposure + X @ beta + eps
    dataset = TwoStageDataset(np.exp(log_y), X=X, log_outcome=True,
                              truth={**truth, "zeta": exposure})

    # Stage-one posterior centered near (not at) the true exposure, with
    # cross-county correlation, so the draws look like real model output.
    center = exposure + rng.normal(0.0, 0.3, n)
    draw_cov = cholesky(np.full((n, n), 0.3 * 0.25) + np.diag(np.full(n, 0.7 * 0.25)))
    noise = rng.standard_normal((n_draws, n)) @ draw_cov.lower.T
    draws = PartialPosteriorDraws(center[None, :] + noise)

    meta = {"seed": seed, "n": n, "n_draws": n_draws, "p": X.shape[1]}
    return dataset, draws, meta
