import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fspovi import metrics


class TestRmse:
    def test_perfect(self):
        assert metrics.rmse(np.array([[1.0, 2.0]]), [1.0, 2.0]) == 0.0

    def test_single_particle(self):
        assert metrics.rmse(np.array([[3.0, 4.0]]), [0.0, 0.0]) == pytest.approx(np.sqrt(12.5))

    def test_two_loop_recomputation(self):
        rng = np.random.default_rng(0)
        M, y = rng.normal(size=(4, 6)), rng.normal(size=6)
        total = 0.0
        for t in range(6):
            m = sum(M[i, t] for i in range(4)) / 4
            total += (m - y[t]) ** 2
        assert metrics.rmse(M, y) == pytest.approx(np.sqrt(total / 6), rel=1e-14)


class TestMixtureNll:
    def test_single_component(self):
        r, s2 = 0.7, 0.3
        want = 0.5 * np.log(2 * np.pi * s2) + r ** 2 / (2 * s2)
        assert metrics.mixture_nll(np.array([[0.0]]), s2, [r]) == pytest.approx(want, rel=1e-14)

    def test_identical_particles(self):
        y = np.array([0.1, -0.4])
        one = metrics.mixture_nll(np.array([[0.2, 0.3]]), 0.5, y)
        many = metrics.mixture_nll(np.tile([0.2, 0.3], (5, 1)), 0.5, y)
        assert many == pytest.approx(one, rel=1e-14)

    def test_two_components_direct_sum(self):
        M = np.array([[0.0], [1.0]])
        s2 = np.array([0.5, 2.0])
        y = 0.3
        dens = sum(np.exp(-(y - M[i, 0]) ** 2 / (2 * s2[i])) / np.sqrt(2 * np.pi * s2[i]) for i in range(2)) / 2
        assert metrics.mixture_nll(M, s2, [y]) == pytest.approx(-np.log(dens), rel=1e-14)

    def test_y_scale_shift(self):
        M = np.zeros((2, 3))
        assert metrics.mixture_nll(M, 1.0, np.ones(3), y_scale=4.0) == pytest.approx(
            metrics.mixture_nll(M, 1.0, np.ones(3)) + np.log(4.0))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_permutation_and_lower_bound(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 6))
        M, y = rng.normal(size=(n, 1)), rng.normal(size=1)
        s2 = rng.uniform(0.1, 2.0, size=n)
        nll = metrics.mixture_nll(M, s2, y)
        perm = rng.permutation(n)
        assert metrics.mixture_nll(M[perm], s2[perm], y) == pytest.approx(nll, rel=1e-12)
        # -log mean(p_i) <= -log max(p_i) + log n
        best = min(metrics.mixture_nll(M[i:i + 1], s2[i], y) for i in range(n))
        assert nll <= best + np.log(n) + 1e-12
        assert nll >= best - 1e-12


class TestCredibleBand:
    def test_zero_level_is_median(self):
        M = np.random.default_rng(1).normal(size=(9, 4))
        lo, hi = metrics.credible_band(M, level=0.0)
        np.testing.assert_allclose(lo, np.median(M, axis=0))
        np.testing.assert_allclose(hi, np.median(M, axis=0))

    def test_identical_particles_zero_width(self):
        lo, hi = metrics.credible_band(np.ones((6, 3)))
        np.testing.assert_array_equal(hi - lo, 0.0)

    def test_two_particles_linear_quantile(self):
        lo, hi = metrics.credible_band(np.array([[-1.0], [1.0]]), level=0.95)
        # linear interpolation: q = -1 + 2 * p at p = 0.025, 0.975
        np.testing.assert_allclose(lo, [-0.95])
        np.testing.assert_allclose(hi, [0.95])

    def test_monotone_in_level(self):
        M = np.random.default_rng(2).normal(size=(30, 5))
        w = [np.subtract(*metrics.credible_band(M, level=g)[::-1]) for g in (0.5, 0.8, 0.95)]
        assert np.all(w[0] <= w[1]) and np.all(w[1] <= w[2])

    def test_predictive_wider_than_mean(self):
        M = np.random.default_rng(3).normal(size=(20, 4))
        lo_m, hi_m = metrics.credible_band(M)
        lo_p, hi_p = metrics.credible_band(M, 0.25, mode="predictive", rng=0)
        assert np.all(hi_p - lo_p > hi_m - lo_m)

    def test_predictive_needs_noise(self):
        with pytest.raises(ValueError):
            metrics.credible_band(np.zeros((2, 2)), mode="predictive")


class TestGapRatio:
    def test_identical(self):
        assert metrics.gap_ratio([1.0, 2.0], [1.0, 2.0]) == 1.0

    def test_twice(self):
        assert metrics.gap_ratio([2.0, 4.0, 6.0], [1.0, 2.0, 3.0]) == pytest.approx(2.0)

    def test_mask_recomputation(self):
        rng = np.random.default_rng(4)
        a, b = rng.random(10), rng.random(10)
        mask = rng.random(10) < 0.5
        mask[0] = True
        assert metrics.gap_ratio(a, b, mask) == pytest.approx(a[mask].mean() / b[mask].mean())


class TestSummary:
    def test_ordering_and_finite_nll(self):
        rng = np.random.default_rng(5)
        M = rng.normal(size=(10, 7))
        s = metrics.summarize(M, 0.2, y=rng.normal(size=7))
        assert np.all(s.lower <= s.mean) and np.all(s.mean <= s.upper)
        assert np.all(np.isfinite(s.nll))
        np.testing.assert_allclose(s.epistemic_std, M.std(axis=0))
