import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twostage.evaluation import (coverage_and_width, equal_tailed_interval,
                                 rmse, summarize_parameter, wasserstein2)

draw_lists = st.lists(st.floats(min_value=-50, max_value=50), min_size=5,
                      max_size=60)


class TestWasserstein:
    def test_identical_samples(self):
        x = np.random.default_rng(0).standard_normal(500)
        assert wasserstein2(x, x.copy()) == 0.0

    def test_pure_shift(self):
        x = np.random.default_rng(1).standard_normal(2000)
        assert np.isclose(wasserstein2(x, x + 2.5), 2.5, atol=1e-9)
        assert np.isclose(wasserstein2(x, x - 1.25), 1.25, atol=1e-9)

    def test_gaussian_closed_form(self):
        # W2(N(0,1), N(1,4)) = sqrt(1^2 + (2-1)^2) = sqrt(2).
        rng = np.random.default_rng(2)
        a = rng.standard_normal(100_000)
        b = 1.0 + 2.0 * rng.standard_normal(100_000)
        assert abs(wasserstein2(a, b) - np.sqrt(2.0)) < 0.05

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError):
            wasserstein2(np.array([]), np.array([1.0]))

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a, b = rng.standard_normal(300), rng.standard_normal(400) + 1
        assert wasserstein2(a, b) == wasserstein2(b, a)

    @given(draw_lists, draw_lists, draw_lists)
    @settings(max_examples=60)
    def test_triangle_inequality_on_equal_sizes(self, xs, ys, zs):
        m = min(len(xs), len(ys), len(zs))
        a, b, c = (np.array(v[:m]) for v in (xs, ys, zs))
        assert wasserstein2(a, c) <= wasserstein2(a, b) + wasserstein2(b, c) + 1e-9


class TestIntervals:
    def test_uniform_grid(self):
        draws = np.arange(1, 1001) / 1000.0
        lower, upper = equal_tailed_interval(draws)
        assert abs(lower - 0.025) <= 0.001
        assert abs(upper - 0.975) <= 0.001

    def test_constant_draws_zero_width(self):
        lower, upper = equal_tailed_interval(np.full(200, 3.7))
        assert lower == upper == 3.7

    def test_normal_quantiles(self):
        draws = np.random.default_rng(4).standard_normal(100_000)
        lower, upper = equal_tailed_interval(draws)
        assert abs(lower + 1.96) < 0.02
        assert abs(upper - 1.96) < 0.02

    def test_too_few_draws(self):
        with pytest.raises(ValueError):
            equal_tailed_interval(np.arange(99))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        draws = rng.standard_normal(500)
        shuffled = rng.permutation(draws)
        assert equal_tailed_interval(draws) == equal_tailed_interval(shuffled)

    def test_summary_contains_truth_flag(self):
        draws = np.random.default_rng(6).standard_normal(1000)
        assert summarize_parameter(draws, truth=0.0).contains_truth
        assert not summarize_parameter(draws, truth=10.0).contains_truth
        assert summarize_parameter(draws).contains_truth is None


class TestCoverage:
    def test_all_cover(self):
        coverage, width = coverage_and_width([(0.0, 2.0), (-1.0, 3.0)], 1.0)
        assert coverage == 1.0
        assert width == 3.0

    def test_disjoint_intervals_never_cover(self):
        # Intervals centered at 2 with width below 2 cannot contain 4.
        intervals = [(1.5, 2.5), (1.2, 2.9), (1.8, 2.4)]
        coverage, _ = coverage_and_width(intervals, 4.0)
        assert coverage == 0.0

    def test_requires_truth(self):
        with pytest.raises(ValueError):
            coverage_and_width([(0.0, 1.0)], np.nan)

    def test_requires_intervals(self):
        with pytest.raises(ValueError):
            coverage_and_width([], 0.0)


class TestRmse:
    def test_identical(self):
        x = np.arange(10.0)
        assert rmse(x, x) == 0.0

    def test_constant_offset(self):
        x = np.arange(10.0)
        assert np.isclose(rmse(x + 3.0, x), 3.0)

    def test_length_mismatch(self):
        with pytest.raises(Exception, match="mismatch"):
            rmse(np.arange(3.0), np.arange(4.0))
