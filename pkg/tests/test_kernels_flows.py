import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fspovi import flows, kernels, nn
from fspovi.flows import FlowKind
from fspovi.kernels import rbf_gram
from fspovi.nn import NetworkSpec


def brute_gram(P, h):
    n = len(P)
    K = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            K[i, j] = np.exp(-np.sum((P[i] - P[j]) ** 2) / h)
    return K


def brute_dk(P, h, i, j):
    """d k(p_i, p_j) / d p_j by the chain rule on one pair."""
    return (2.0 / h) * (P[i] - P[j]) * np.exp(-np.sum((P[i] - P[j]) ** 2) / h)


def brute_svgd(P, g, h):
    n = len(P)
    out = np.zeros_like(P)
    for i in range(n):
        for j in range(n):
            out[i] += np.exp(-np.sum((P[i] - P[j]) ** 2) / h) * g[j] + brute_dk(P, h, i, j)
    return out / n


def brute_wsgld(P, g, h):
    n = len(P)
    K = brute_gram(P, h)
    S = K.sum(axis=1)
    out = g.astype(float).copy()
    for i in range(n):
        for j in range(n):
            out[i] += brute_dk(P, h, i, j) / S[j] + brute_dk(P, h, i, j) / S[i]
    return out


class TestMedianBandwidth:
    def test_two_points(self):
        assert kernels.median_bandwidth([[0.0], [2.0]]) == pytest.approx(4 / np.log(3))

    def test_three_scalars(self):
        assert kernels.median_bandwidth([[0.0], [1.0], [3.0]]) == pytest.approx(4 / np.log(4))

    def test_plain_median_rule(self):
        assert kernels.median_bandwidth([[0.0], [1.0], [3.0]], rule="median") == pytest.approx(4.0)

    def test_identical_points_floor(self):
        assert kernels.median_bandwidth(np.ones((5, 3))) == kernels.BANDWIDTH_FLOOR == 1e-8

    def test_unknown_rule(self):
        with pytest.raises(ValueError):
            kernels.median_bandwidth([[0.0], [1.0]], rule="mean")


class TestRbfGram:
    def test_matches_brute_force(self):
        P = np.random.default_rng(0).normal(size=(6, 3))
        pack = rbf_gram(P, h=1.7)
        np.testing.assert_allclose(pack.K, brute_gram(P, 1.7), rtol=1e-13)
        np.testing.assert_array_equal(np.diag(pack.K), 1.0)

    def test_self_gradient_zero(self):
        pack = rbf_gram(np.random.default_rng(1).normal(size=(4, 2)))
        for i in range(4):
            np.testing.assert_array_equal(pack.grad(i, i), 0.0)

    def test_two_scalars(self):
        pack = rbf_gram([[0.0], [1.0]], h=1.0)
        assert pack.K[0, 1] == pytest.approx(np.exp(-1))
        # d/dp exp(-(0 - p)^2) at p = 1 is -2 e^{-1}
        np.testing.assert_allclose(pack.grad(0, 1), [-2 * np.exp(-1)])
        eps = 1e-6
        fd = (np.exp(-(1 + eps) ** 2) - np.exp(-(1 - eps) ** 2)) / (2 * eps)
        np.testing.assert_allclose(pack.grad(0, 1), [fd], rtol=1e-8)

    def test_pair_gradient_finite_differences(self):
        rng = np.random.default_rng(2)
        P = rng.normal(size=(4, 3))
        h = 2.3
        pack = rbf_gram(P, h=h)
        eps = 1e-6
        for i, j in [(0, 1), (2, 3), (3, 0)]:
            fd = np.zeros(3)
            for d in range(3):
                Pp, Pm = P.copy(), P.copy()
                Pp[j, d] += eps
                Pm[j, d] -= eps
                fd[d] = (brute_gram(Pp, h)[i, j] - brute_gram(Pm, h)[i, j]) / (2 * eps)
            np.testing.assert_allclose(pack.grad(i, j), fd, rtol=1e-5)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(2, 8), st.integers(1, 4)),
                  elements=st.floats(-5, 5)))
    def test_psd_and_symmetric(self, P):
        K = rbf_gram(P).K
        np.testing.assert_array_equal(K, K.T)
        assert np.linalg.eigvalsh(K).min() >= -1e-8
        assert np.all((K > 0) | np.isclose(K, 0)) and np.all(K <= 1.0)

    def test_repulsion_matches_pairs(self):
        rng = np.random.default_rng(3)
        P = rng.normal(size=(5, 2))
        pack = rbf_gram(P)
        W = rng.random((5, 5))
        R = pack.repulsion(W)
        for i in range(5):
            np.testing.assert_allclose(R[i], sum(W[i, j] * pack.grad(i, j) for j in range(5)), atol=1e-13)


class TestFeatureGrams:
    spec = NetworkSpec((1, 3, 1))

    def test_identical_predictions(self):
        theta = np.random.default_rng(0).normal(size=self.spec.n_params)
        x = np.linspace(-1, 1, 4)[:, None]
        np.testing.assert_array_equal(kernels.function_value_gram(np.stack([theta, theta]), self.spec, x, h=1.0).K, 1.0)
        np.testing.assert_array_equal(kernels.activation_gram(np.stack([theta, theta]), self.spec, x).K, 1.0)

    def test_single_particle(self):
        theta = np.random.default_rng(0).normal(size=self.spec.n_params)
        x = np.zeros((2, 1))
        assert kernels.function_value_gram(theta, self.spec, x).K.tolist() == [[1.0]]
        assert kernels.activation_gram(theta, self.spec, x).K.tolist() == [[1.0]]

    def test_unit_norm_difference(self):
        spec = NetworkSpec((1, 1))
        # f = w x + b at x = 0 is the bias, so the outputs differ by exactly 1
        P = np.array([[0.0, 0.0], [0.0, 1.0]])
        pack = kernels.function_value_gram(P, spec, np.zeros((1, 1)), h=1.0)
        assert pack.K[0, 1] == pytest.approx(np.exp(-1))

    def test_activation_gram_recomputed(self):
        rng = np.random.default_rng(4)
        P = rng.normal(size=(2, self.spec.n_params))
        x = rng.normal(size=(3, 1))
        feats = []
        for p in P:
            (W1, b1), (W2, b2) = nn.unflatten(p, self.spec)
            h1 = np.maximum(x @ W1 + b1, 0)
            feats.append(np.concatenate([h1.ravel(), (h1 @ W2 + b2).ravel()]))
        feats = np.array(feats)
        h = kernels.median_bandwidth(feats)
        got = kernels.activation_gram(P, self.spec, x).K[0, 1]
        assert got == pytest.approx(np.exp(-np.sum((feats[0] - feats[1]) ** 2) / h))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        spec = NetworkSpec((2, 4, 1))
        P = rng.normal(size=(3, spec.n_params))
        (W1, b1), (W2, b2) = nn.unflatten(P[0], spec)
        perm = [2, 0, 3, 1]
        permuted = nn.flatten([(W1[:, perm], b1[perm]), (W2[perm], b2)], spec)
        x = rng.normal(size=(5, 2))
        K1 = kernels.function_value_gram(P, spec, x, h=1.0).K
        K2 = kernels.function_value_gram(np.vstack([permuted, P[1:]]), spec, x, h=1.0).K
        np.testing.assert_allclose(K1, K2, atol=1e-14)

    def test_function_value_pullback(self):
        rng = np.random.default_rng(6)
        P = rng.normal(size=(3, self.spec.n_params))
        x = rng.normal(size=(4, 1))
        h = 0.9
        pack = kernels.function_value_gram(P, self.spec, x, h=h)
        R = pack.repulsion(1.0)

        # R_i = sum_j J_j^T (2/h)(F_i - F_j) K_ij
        F = nn.forward(P, self.spec, x)
        for i in range(3):
            want = sum(nn.backprop_top_signal(P[j], self.spec, x, (2 / h) * (F[i] - F[j]) * pack.K[i, j])
                       for j in range(3))
            np.testing.assert_allclose(R[i], want, atol=1e-12)


class TestFlows:
    @pytest.mark.parametrize("kind", list(FlowKind))
    def test_single_particle_is_gradient_ascent(self, kind):
        g = np.array([[0.3, -1.2]])
        d = flows.direction(kind, rbf_gram(np.array([[1.0, 2.0]])), g)
        factor = 2.0 if kind is FlowKind.PI_SGLD else 1.0
        np.testing.assert_allclose(d, factor * g)

    def test_svgd_pure_repulsion_sign(self):
        P = np.array([[0.0], [1.0]])
        d = flows.svgd_direction(rbf_gram(P, h=1.0), np.zeros((2, 1)))
        assert d[0, 0] < 0 < d[1, 0]

    def test_svgd_two_scalars_hand_expanded(self):
        P = np.array([[0.0], [1.0]])
        g = np.array([[1.0], [-1.0]])
        e = np.exp(-1)
        # particle 0: (1/2)[1*1 + e*(-1) + 0 + 2(0-1)e]; particle 1: (1/2)[e*1 + 1*(-1) + 2(1-0)e + 0]
        want = np.array([[0.5 * (1 - e - 2 * e)], [0.5 * (e - 1 + 2 * e)]])
        np.testing.assert_allclose(flows.svgd_direction(rbf_gram(P, h=1.0), g), want, rtol=1e-14)

    def test_svgd_brute_force(self):
        rng = np.random.default_rng(7)
        P, g = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
        np.testing.assert_allclose(flows.svgd_direction(rbf_gram(P, h=1.3), g), brute_svgd(P, g, 1.3), atol=1e-13)

    def test_wsgld_brute_force(self):
        rng = np.random.default_rng(8)
        P, g = rng.normal(size=(3, 1)), rng.normal(size=(3, 1))
        np.testing.assert_allclose(flows.wsgld_b_direction(rbf_gram(P, h=0.7), g), brute_wsgld(P, g, 0.7), atol=1e-13)

    def test_wsgld_symmetric_pair(self):
        d = flows.wsgld_b_direction(rbf_gram(np.array([[-0.5], [0.5]])), np.zeros((2, 1)))
        np.testing.assert_allclose(d[0], -d[1])
        assert d[1, 0] > 0

    def test_wsgld_floor_flag(self):
        W, floored = flows.wsgld_b_weights(np.zeros((2, 2)))
        assert floored and np.all(np.isfinite(W))

    def test_pi_sgld_is_sum(self):
        rng = np.random.default_rng(9)
        P, g = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        pack = rbf_gram(P)
        np.testing.assert_allclose(flows.pi_sgld_direction(pack, g),
                                   brute_svgd(P, g, pack.h) + brute_wsgld(P, g, pack.h), atol=1e-13)

    def test_gfsf_two_scalars_explicit_inverse(self):
        P = np.array([[0.0], [0.8]])
        g = np.array([[0.2], [0.5]])
        h, ridge = 1.0, 1e-3
        k = np.exp(-0.64)
        A = np.array([[1 + ridge, k], [k, 1 + ridge]])
        Ainv = np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]]) / (A[0, 0] * A[1, 1] - k * k)
        r = np.array([brute_dk(P, h, 0, 1), brute_dk(P, h, 1, 0)])
        want = g + Ainv @ r
        np.testing.assert_allclose(flows.gfsf_direction(rbf_gram(P, h=h), g, ridge=ridge), want, rtol=1e-12)

    def test_gfsf_near_duplicates_finite(self):
        P = np.array([[0.0, 0.0], [1e-9, 0.0], [1.0, 1.0]])
        d = flows.gfsf_direction(rbf_gram(P, h=1.0), np.zeros((3, 2)))
        assert np.all(np.isfinite(d))

    @pytest.mark.parametrize("kind", list(FlowKind))
    def test_permutation_equivariance(self, kind):
        rng = np.random.default_rng(10)
        P, g = rng.normal(size=(6, 2)), rng.normal(size=(6, 2))
        perm = rng.permutation(6)
        d = flows.direction(kind, rbf_gram(P), g)
        dp = flows.direction(kind, rbf_gram(P[perm]), g[perm])
        np.testing.assert_allclose(dp, d[perm], atol=1e-12)

    def test_repulsion_spreads_particles(self):
        from scipy.spatial.distance import pdist
        rng = np.random.default_rng(11)
        P = rng.normal(size=(8, 2))
        d = flows.svgd_direction(rbf_gram(P), np.zeros_like(P))
        assert pdist(P + 1e-3 * d).min() > pdist(P).min()

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            flows.svgd_direction(rbf_gram(np.zeros((3, 1)) + np.arange(3)[:, None]), np.zeros((2, 1)))
