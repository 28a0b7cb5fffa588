import numpy as np
import pytest
from scipy import stats

from twostage.engines import (ChainConfig, MethodSpec, PosteriorSample,
                              StageOneInfo, _drive, _initial_state,
                              _normalize_or_uniform, _ColumnWeights,
                              _OracleSampler, oracle_zeta_conditional,
                              posterior_predictive, run_chain)
from twostage.errors import MethodInputError
from twostage.model import (PartialPosteriorDraws, PriorConfig,
                            RegressionState, TwoStageDataset)
from twostage.rng import SeededStream
from twostage.weights import moments_from_gaussian


def _small_problem(seed=0, n=30, n_draws=80, rho=0.0, sigma_u_sq=1.0):
    """A small simulated two-stage problem with its analytic stage one."""
    rng = np.random.default_rng(seed)
    lam = 1.0 / (1.0 + sigma_u_sq) if sigma_u_sq else 1.0
    zeta = rng.standard_normal(n)
    z = zeta + rng.normal(0, np.sqrt(sigma_u_sq), n) if sigma_u_sq else zeta.copy()
    y = 1.0 + 2.0 * zeta + rng.normal(0, 1.0, n)
    dataset = TwoStageDataset(y)
    mean = lam * z
    cov = lam * sigma_u_sq * np.eye(n) if sigma_u_sq else 1e-8 * np.eye(n)
    draws = PartialPosteriorDraws(
        mean[None, :] + np.sqrt(np.diag(cov).clip(min=0))[None, :]
        * rng.standard_normal((n_draws, n)))
    return dataset, z, draws, StageOneInfo(zeta_hat=mean, cov=cov)


CHAIN = ChainConfig(total_sweeps=400, burn_in=100)


class TestSpecsAndConfigs:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown method"):
            MethodSpec("magic")

    def test_raw_z_flags(self):
        assert MethodSpec("plugin-z").requires_raw_z
        assert MethodSpec("oracle-gibbs").requires_raw_z
        for kind in ("plugin-zeta-hat", "partial-posterior", "vanilla-is",
                     "iis", "ais"):
            assert not MethodSpec(kind).requires_raw_z

    def test_chain_invariants(self):
        with pytest.raises(ValueError):
            ChainConfig(total_sweeps=100, burn_in=100)
        with pytest.raises(ValueError):
            ChainConfig(total_sweeps=150, burn_in=100)  # retains < 100
        with pytest.raises(ValueError):
            ChainConfig(total_sweeps=401, burn_in=100, thin=2)  # not divisible
        assert ChainConfig(total_sweeps=700, burn_in=100, thin=3).n_retained == 200

    def test_missing_method_inputs(self):
        dataset, z, draws, info = _small_problem()
        with pytest.raises(MethodInputError, match="plugin-z"):
            run_chain(dataset, draws, MethodSpec("plugin-z"), PriorConfig(),
                      CHAIN, SeededStream(0))
        with pytest.raises(MethodInputError, match="oracle"):
            run_chain(dataset, draws, MethodSpec("oracle-gibbs"), PriorConfig(),
                      CHAIN, SeededStream(0))


class TestOracleConditional:
    def test_zero_slope_returns_partial_posterior(self):
        dataset, z, draws, info = _small_problem()
        state = RegressionState(0.3, 0.0, np.zeros(0), 1.0, np.zeros(30))
        mean, precision = oracle_zeta_conditional(
            dataset.y, dataset.X, state, info.zeta_hat, info.cov)
        assert np.allclose(mean, info.zeta_hat, atol=1e-10)
        assert np.allclose(precision, np.linalg.inv(info.cov), atol=1e-8)

    def test_scalar_worked_example(self):
        # One unit: prior var 0.5 at mean 1, slope 2, noise var 2, y=3.
        state = RegressionState(0.0, 2.0, np.zeros(0), 2.0, np.zeros(1))
        mean, precision = oracle_zeta_conditional(
            np.array([3.0]), np.empty((1, 0)), state,
            np.array([1.0]), np.array([[0.5]]))
        assert np.isclose(precision[0, 0], 4.0)
        assert np.isclose(mean[0], 1.25)

    def test_matches_two_dimensional_quadrature(self):
        # Brute force: normalize likelihood x partial posterior on a grid
        # and compare in total variation.
        state = RegressionState(0.4, 1.6, np.zeros(0), 1.3, np.zeros(2))
        zeta_hat = np.array([0.5, -0.2])
        cov = np.array([[0.5, 0.2], [0.2, 0.8]])
        y = np.array([1.5, -0.5])
        X = np.empty((2, 0))
        mean, precision = oracle_zeta_conditional(y, X, state, zeta_hat, cov)

        grid = np.linspace(-5.0, 5.0, 201)
        g1, g2 = np.meshgrid(grid, grid, indexing="ij")
        pts = np.column_stack([g1.ravel(), g2.ravel()])
        log_prior = stats.multivariate_normal(zeta_hat, cov).logpdf(pts)
        mu = state.beta0 + state.theta_zeta * pts
        log_lik = stats.norm(mu, np.sqrt(state.sigma_eps_sq)).logpdf(y[None, :]).sum(axis=1)
        brute = np.exp(log_prior + log_lik - (log_prior + log_lik).max())
        brute /= brute.sum()
        analytic = stats.multivariate_normal(mean, np.linalg.inv(precision)).pdf(pts)
        analytic /= analytic.sum()
        tv = 0.5 * np.abs(brute - analytic).sum()
        assert tv < 1e-4

    def test_sampler_cache_matches_direct_formula(self):
        dataset, z, draws, info = _small_problem(seed=3)
        sampler = _OracleSampler(info)
        state = RegressionState(0.7, 1.9, np.zeros(0), 1.4, np.zeros(30))
        mean, precision = oracle_zeta_conditional(
            dataset.y, dataset.X, state, info.zeta_hat, info.cov)
        c = state.theta_zeta**2 / state.sigma_eps_sq
        resid = dataset.y - state.beta0
        b = sampler.prior_term + sampler.q.T @ (state.theta_zeta / state.sigma_eps_sq * resid)
        cached_mean = sampler.q @ (b / (1.0 / sampler.lam + c))
        assert np.allclose(cached_mean, mean, atol=1e-9)
        cached_cov = (sampler.q / (1.0 / sampler.lam + c)) @ sampler.q.T
        assert np.allclose(cached_cov, np.linalg.inv(precision), atol=1e-9)


class TestZetaSteps:
    def _chain(self, kind, seed=1, store=True, **kwargs):
        dataset, z, draws, info = _small_problem(seed=seed)
        spec = MethodSpec(kind, ais_R=60, is_pool=120, **kwargs)
        config = ChainConfig(total_sweeps=300, burn_in=100, store_zeta=store)
        sample = run_chain(dataset, draws, spec, PriorConfig(), config,
                           SeededStream(9, 3), stage_one=info, z=z)
        return dataset, z, draws, sample

    def test_plugin_z_keeps_zeta_fixed(self):
        dataset, z, draws, sample = self._chain("plugin-z")
        assert np.allclose(sample.zeta, z[None, :])

    def test_plugin_mean_keeps_column_means(self):
        dataset, z, draws, sample = self._chain("plugin-zeta-hat")
        assert np.allclose(sample.zeta, draws.draws.mean(axis=0)[None, :])

    def test_partial_posterior_rows_come_from_draws(self):
        dataset, z, draws, sample = self._chain("partial-posterior")
        pool = {row.tobytes() for row in draws.draws}
        assert all(row.tobytes() in pool for row in sample.zeta)

    def test_vanilla_is_rows_come_from_draws(self):
        dataset, z, draws, sample = self._chain("vanilla-is")
        pool = {row.tobytes() for row in draws.draws}
        assert all(row.tobytes() in pool for row in sample.zeta)

    def test_per_unit_methods_compose_from_columns(self):
        for kind in ("iis", "ais"):
            dataset, z, draws, sample = self._chain(kind)
            for j in range(draws.n_units):
                column = set(draws.draws[:, j])
                assert set(sample.zeta[:, j]) <= column

    def test_weight_traces_only_for_weight_methods(self):
        for kind, expect in (("plugin-z", False), ("oracle-gibbs", False),
                             ("partial-posterior", False), ("vanilla-is", True),
                             ("iis", True), ("ais", True)):
            _, _, _, sample = self._chain(kind, store=False)
            assert (sample.weight_trace is not None) == expect

    def test_strategy_purity_shared_driver(self):
        # With the same injected zeta step, the driver output cannot depend
        # on the claimed method kind.
        dataset, z, draws, info = _small_problem(seed=5)
        fixed = draws.draws.mean(axis=0)

        def step(state):
            return fixed, None, False

        outs = []
        for kind in ("plugin-z", "plugin-zeta-hat", "partial-posterior"):
            state = _initial_state(dataset, draws, MethodSpec(kind),
                                   PriorConfig(), z)
            outs.append(_drive(step, dataset, draws, MethodSpec(kind),
                               PriorConfig(), CHAIN, SeededStream(4, 4), state))
        for sample in outs[1:]:
            assert np.array_equal(sample.theta_zeta, outs[0].theta_zeta)
            assert np.array_equal(sample.sigma_eps_sq, outs[0].sigma_eps_sq)

    def test_degenerate_weights_fall_back_to_uniform(self):
        weights, logw, degenerate = _normalize_or_uniform(np.full(4, -np.inf))
        assert degenerate
        assert np.allclose(weights, 0.25)
        cols = _ColumnWeights(np.array([[0.0, -np.inf], [-1.0, -np.inf]]))
        assert cols.degenerate
        assert np.allclose(cols.weights[:, 1], 0.5)

    def test_ais_full_shrinkage_equals_uniform_selection(self):
        dataset, z, draws, info = _small_problem(seed=6)
        moments = moments_from_gaussian(info.zeta_hat, info.cov, shrink_gamma=1.0)
        sample = run_chain(dataset, draws, MethodSpec("ais", ais_R=40),
                           PriorConfig(), CHAIN, SeededStream(2, 1),
                           stage_one=info, z=z, moments=moments)
        trace = sample.weight_trace
        assert np.allclose(trace[:, 0], 40.0, atol=1e-6)   # ess == R
        assert np.allclose(trace[:, 1], 1.0 / 40.0, atol=1e-9)

    def test_methods_agree_without_measurement_error(self):
        # Tiny stage-one noise collapses every strategy onto the same
        # regression posterior.
        dataset, z, draws, info = _small_problem(seed=7, n=100, n_draws=200,
                                                 sigma_u_sq=0.0)
        config = ChainConfig(total_sweeps=700, burn_in=200)
        means = {}
        for kind in ("oracle-gibbs", "plugin-z", "plugin-zeta-hat",
                     "partial-posterior", "vanilla-is", "iis", "ais"):
            sample = run_chain(dataset, draws, MethodSpec(kind, ais_R=50),
                               PriorConfig(), config, SeededStream(8, 2),
                               stage_one=info, z=z)
            se = sample.theta_zeta.std() / np.sqrt(sample.n_retained / 5.0)
            means[kind] = (sample.theta_zeta.mean(), se)
        base, base_se = means["oracle-gibbs"]
        for kind, (mean, se) in means.items():
            assert abs(mean - base) < 3.0 * (se + base_se), kind


class TestPosteriorPredictive:
    def _sample(self, kind="ais", t=150, p=0, log_outcome=False):
        rng = np.random.default_rng(11)
        return PosteriorSample(
            beta0=np.full(t, 1.0), theta_zeta=np.full(t, 2.0),
            beta=rng.standard_normal((t, p)) * 0.0,
            sigma_eps_sq=np.full(t, 1e-12),
            sigma_theta=None, zeta=None, fitted_mean=np.zeros(3),
            method=MethodSpec(kind), chain=ChainConfig(400, 100),
            base_seed=0, stream_id=0, log_outcome=log_outcome)

    def test_tiny_noise_collapses_to_regression_line(self):
        sample = self._sample("plugin-zeta-hat")
        test_draws = PartialPosteriorDraws(np.tile([0.5, -1.0, 2.0], (10, 1)))
        pred = posterior_predictive(sample, test_draws, None, SeededStream(1))
        assert np.allclose(pred, 1.0 + 2.0 * np.array([0.5, -1.0, 2.0])[None, :],
                           atol=1e-5)

    def test_plugin_z_requires_test_z(self):
        sample = self._sample("plugin-z")
        test_draws = PartialPosteriorDraws(np.zeros((5, 3)) + [1.0, 2.0, 3.0])
        with pytest.raises(MethodInputError):
            posterior_predictive(sample, test_draws, None, SeededStream(1))
        pred = posterior_predictive(sample, test_draws, None, SeededStream(1),
                                    test_z=np.array([1.0, 2.0, 3.0]))
        assert np.allclose(pred, 1.0 + 2.0 * np.array([1.0, 2.0, 3.0])[None, :],
                           atol=1e-5)

    def test_sampling_methods_use_test_draw_rows(self):
        sample = self._sample("partial-posterior")
        rows = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [2.0, 2.0, 2.0]])
        pred = posterior_predictive(sample, PartialPosteriorDraws(rows), None,
                                    SeededStream(2))
        implied = (pred - 1.0) / 2.0
        dists = np.abs(implied[:, None, :] - rows[None, :, :]).max(axis=2)
        assert np.all(dists.min(axis=1) < 1e-4)      # every row is a draw row
        assert len(set(np.round(implied[:, 0], 4))) > 1  # and rows vary

    def test_log_outcome_exponentiates(self):
        sample = self._sample("plugin-zeta-hat", log_outcome=True)
        test_draws = PartialPosteriorDraws(np.tile([0.1, 0.2, 0.3], (4, 1)))
        pred = posterior_predictive(sample, test_draws, None, SeededStream(3))
        assert np.all(pred > 0)
        assert np.allclose(np.log(pred),
                           1.0 + 2.0 * np.array([0.1, 0.2, 0.3])[None, :],
                           atol=1e-5)

    def test_covariate_shape_checked(self):
        sample = self._sample()
        test_draws = PartialPosteriorDraws(np.zeros((4, 3)))
        with pytest.raises(Exception, match="X_test"):
            posterior_predictive(sample, test_draws, np.ones((3, 2)),
                                 SeededStream(0))
