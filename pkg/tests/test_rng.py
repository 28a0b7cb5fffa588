import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twostage.errors import NotPositiveDefiniteError
from twostage.rng import (CholeskyFactor, SeededStream, categorical_resample,
                          cholesky, inverse_gamma_sample, log_sum_exp,
                          mvn_sample, normalize_log_weights)


def test_stream_is_reproducible():
    a = SeededStream(123, 5).rng.standard_normal(64)
    b = SeededStream(123, 5).rng.standard_normal(64)
    assert np.array_equal(a, b)


def test_distinct_stream_ids_differ():
    a = SeededStream(123, 0).rng.standard_normal(64)
    b = SeededStream(123, 1).rng.standard_normal(64)
    assert not np.array_equal(a, b)


def test_stream_rejects_out_of_range_seed():
    with pytest.raises(ValueError):
        SeededStream(-1)
    with pytest.raises(ValueError):
        SeededStream(0, 2**64)


class TestCholesky:
    def test_identity(self):
        factor = cholesky(np.eye(2))
        assert np.array_equal(factor.lower, np.eye(2))
        assert factor.log_det == 0.0
        assert factor.jitter_delta == 0.0

    def test_diagonal(self):
        factor = cholesky(np.diag([4.0, 9.0]))
        assert np.allclose(factor.lower, np.diag([2.0, 3.0]))
        assert np.isclose(factor.log_det, np.log(36.0))

    def test_rank_deficient_takes_jitter_path(self):
        factor = cholesky(np.ones((2, 2)))
        assert factor.jitter_delta > 0.0
        rebuilt = factor.lower @ factor.lower.T
        assert np.allclose(rebuilt, np.ones((2, 2)), atol=1e-3)

    def test_indefinite_fails_even_with_jitter(self):
        with pytest.raises(NotPositiveDefiniteError):
            cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_jitter_disabled_fails_fast(self):
        with pytest.raises(NotPositiveDefiniteError):
            cholesky(np.ones((2, 2)), jitter=False)

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            cholesky(np.array([[1.0, 0.5], [0.1, 1.0]]))

    def test_round_trip_random_spd(self):
        # 1000 random SPD matrices up to 20x20 reconstruct to 1e-8.
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(1, 21))
            a = rng.standard_normal((n, n))
            spd = a @ a.T + n * np.eye(n)
            factor = cholesky(spd)
            err = np.abs(factor.lower @ factor.lower.T - spd).max()
            worst = max(worst, err / np.abs(spd).max())
        assert worst < 1e-8

    def test_factor_rejects_nonpositive_diagonal(self):
        with pytest.raises(ValueError):
            CholeskyFactor(np.zeros((2, 2)), log_det=0.0)


class TestMvnSample:
    def test_identity_factor_returns_mean_plus_noise(self):
        factor = cholesky(np.eye(2))
        eps = SeededStream(7).rng.standard_normal(2)
        draw = mvn_sample(np.zeros(2), factor, SeededStream(7))
        assert np.array_equal(draw, eps)

    def test_dimension_mismatch(self):
        with pytest.raises(Exception, match="mean"):
            mvn_sample(np.zeros(3), cholesky(np.eye(2)), SeededStream(0))

    def test_sample_covariance_matches_target(self):
        cov = np.array([[1.0, 0.3], [0.3, 1.0]])
        draws = mvn_sample(np.zeros(2), cholesky(cov), SeededStream(11),
                           size=100_000)
        assert np.abs(np.cov(draws, rowvar=False) - cov).max() < 0.02


class TestInverseGamma:
    def test_mean_matches_closed_form(self):
        # InverseGamma(3, 6) has mean 6 / (3 - 1) = 3.
        draws = inverse_gamma_sample(3.0, 6.0, SeededStream(3), size=100_000)
        assert abs(draws.mean() - 3.0) < 0.1

    def test_support_positive(self):
        draws = inverse_gamma_sample(3.0, 6.0, SeededStream(4), size=1000)
        assert np.all(draws > 0)

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            inverse_gamma_sample(0.0, 1.0, SeededStream(0))
        with pytest.raises(ValueError):
            inverse_gamma_sample(1.0, -2.0, SeededStream(0))


class TestLogWeights:
    def test_symmetric_pair(self):
        assert np.allclose(normalize_log_weights(np.zeros(2)), [0.5, 0.5])

    def test_minus_infinity_entry(self):
        w = normalize_log_weights(np.array([0.0, -np.inf]))
        assert np.allclose(w, [1.0, 0.0])

    def test_shift_invariance_large_values(self):
        a = normalize_log_weights(np.array([1000.0, 999.0]))
        b = normalize_log_weights(np.array([1.0, 0.0]))
        assert np.allclose(a, b, atol=1e-12)

    def test_all_minus_infinity_raises(self):
        with pytest.raises(ValueError):
            log_sum_exp(np.array([-np.inf, -np.inf]))

    @given(st.lists(st.floats(min_value=-500, max_value=500), min_size=1,
                    max_size=50))
    def test_output_is_probability_vector(self, values):
        w = normalize_log_weights(np.array(values))
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) < 1e-12

    @given(st.lists(st.floats(min_value=-100, max_value=100), min_size=2,
                    max_size=30),
           st.floats(min_value=-200, max_value=200))
    @settings(max_examples=50)
    def test_additive_shift_invariance(self, values, shift):
        base = np.array(values)
        assert np.allclose(normalize_log_weights(base),
                           normalize_log_weights(base + shift), atol=1e-10)


class TestCategoricalResample:
    def test_point_mass(self):
        idx = categorical_resample(np.array([1.0, 0.0, 0.0]), 5, SeededStream(0))
        assert np.all(idx == 0)

    def test_zero_weight_never_drawn(self):
        idx = categorical_resample(np.array([0.0, 0.5, 0.5]), 2000, SeededStream(1))
        assert not np.any(idx == 0)

    def test_law_of_large_numbers(self):
        idx = categorical_resample(np.array([0.5, 0.5]), 100_000, SeededStream(2))
        assert abs(np.mean(idx == 0) - 0.5) < 0.01

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            categorical_resample(np.array([0.7, -0.2, 0.5]), 3, SeededStream(0))
