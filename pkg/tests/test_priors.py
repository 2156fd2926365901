import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from fspovi import priors
from fspovi.nn import NetworkSpec
from fspovi.priors import (Categorical, FixedGaussian, GaussianWeightPrior, InferredGaussian,
                           gaussian_loglik, noise_grad, weight_prior_logp_grad)


def central_diff(fun, x, eps=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[i] = eps
        g[i] = (fun(x + e) - fun(x - e)) / (2 * eps)
    return g


class TestWeightPrior:
    def test_zero_params_zero_gradient(self):
        _, g = weight_prior_logp_grad(np.zeros(5), 1.0)
        np.testing.assert_array_equal(g, 0.0)

    def test_scalar_example(self):
        _, g = weight_prior_logp_grad(np.array([3.0]), 1.0)
        np.testing.assert_array_equal(g, [-3.0])

    def test_finite_differences(self):
        rng = np.random.default_rng(0)
        var = rng.uniform(0.2, 3.0, size=7)
        theta = rng.normal(size=7)
        _, g = weight_prior_logp_grad(theta, var)
        num = central_diff(lambda t: weight_prior_logp_grad(t, var)[0], theta)
        assert np.linalg.norm(g - num) / np.linalg.norm(num) <= 1e-5

    def test_logp_matches_scipy_up_to_constant(self):
        rng = np.random.default_rng(1)
        var = rng.uniform(0.5, 2.0, size=4)
        a, b = rng.normal(size=4), rng.normal(size=4)
        ours = weight_prior_logp_grad(a, var)[0] - weight_prior_logp_grad(b, var)[0]
        ref = stats.norm.logpdf(a, scale=np.sqrt(var)).sum() - stats.norm.logpdf(b, scale=np.sqrt(var)).sum()
        assert ours == pytest.approx(ref, rel=1e-12)

    def test_rejects_nonpositive_variance(self):
        with pytest.raises(ValueError):
            weight_prior_logp_grad(np.zeros(2), 0.0)

    def test_fan_in_variances(self):
        spec = NetworkSpec((4, 2, 1))
        v = GaussianWeightPrior(sigma_w=2.0, sigma_b=0.5).variances(spec)
        np.testing.assert_allclose(v[:8], 1.0)
        np.testing.assert_allclose(v[8:10], 0.25)
        np.testing.assert_allclose(v[10:12], 2.0)
        np.testing.assert_allclose(v[12], 0.25)

    def test_sample_moments(self):
        spec = NetworkSpec((3, 5, 1))
        prior = GaussianWeightPrior(sigma_w=1.0, sigma_b=1.0, fan_in_scaling=False)
        P = prior.sample(spec, 4000, np.random.default_rng(2))
        np.testing.assert_allclose(P.var(axis=0), 1.0, atol=0.1)


class TestGaussianLoglik:
    def test_normaliser_cancels(self):
        assert gaussian_loglik([0.3], [0.3], 1 / (2 * np.pi)) == pytest.approx(0.0, abs=1e-15)

    def test_unit_residual(self):
        assert gaussian_loglik([0.0], [1.0], 1.0) == pytest.approx(-0.5 * np.log(2 * np.pi) - 0.5)

    def test_sum_of_scalars(self):
        rng = np.random.default_rng(3)
        f, y = rng.normal(size=3), rng.normal(size=3)
        want = sum(stats.norm.logpdf(y[i], loc=f[i], scale=0.7) for i in range(3))
        assert gaussian_loglik(f, y, 0.49) == pytest.approx(want, rel=1e-13)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_maximised_at_mean_squared_residual(self, seed):
        rng = np.random.default_rng(seed)
        r = rng.normal(size=12) * rng.uniform(0.1, 3)
        mse = np.mean(r ** 2)
        best = gaussian_loglik(r, 0.0, mse)
        for s in (0.8, 0.95, 1.05, 1.25):
            assert gaussian_loglik(r, 0.0, mse * s) <= best


class TestLikelihoodGrad:
    def test_fixed_gaussian_finite_differences(self):
        rng = np.random.default_rng(4)
        f, y = rng.normal(size=(5, 1)), rng.normal(size=(5, 1))
        sig = priors.likelihood_grad(f, y, FixedGaussian(0.3), n_total=20, batch_size=5)
        num = central_diff(lambda v: 4 * gaussian_loglik(v, y, 0.3), f)
        np.testing.assert_allclose(sig, num, rtol=1e-5)

    def test_inferred_per_particle(self):
        rng = np.random.default_rng(5)
        f, y = rng.normal(size=(3, 4, 1)), rng.normal(size=(4, 1))
        s = np.log([0.1, 0.5, 2.0])
        sig = priors.likelihood_grad(f, y, InferredGaussian(), 4, 4, log_var=s)
        for i in range(3):
            np.testing.assert_allclose(sig[i], (y - f[i]) / np.exp(s[i]), rtol=1e-13)

    def test_inferred_needs_log_var(self):
        with pytest.raises(ValueError):
            priors.likelihood_grad(np.zeros((2, 1)), np.zeros((2, 1)), InferredGaussian(), 2, 2)

    def test_mask(self):
        sig = priors.likelihood_grad(np.zeros((2, 2)), np.ones((2, 2)), FixedGaussian(1.0), 2, 2,
                                     mask=np.array([[1, 0], [0, 1]]))
        np.testing.assert_array_equal(sig, [[1, 0], [0, 1]])

    def test_categorical_finite_differences(self):
        rng = np.random.default_rng(6)
        logits = rng.normal(size=(4, 3))
        labels = np.array([0, 2, 1, 2])
        sig = priors.likelihood_grad(logits, labels, Categorical(), 4, 4)
        num = central_diff(lambda z: priors.categorical_loglik(z, labels), logits)
        np.testing.assert_allclose(sig, num, rtol=1e-6, atol=1e-9)


class TestNoiseGrad:
    def test_stationary_at_matching_residuals(self):
        s = np.log(0.4)
        r = np.full(6, np.sqrt(0.4))
        vague = InferredGaussian(alpha=1e-12, beta=1e-12)
        assert noise_grad(r, vague, s, 6, 6) == pytest.approx(0.0, abs=1e-9)

    def test_vague_prior_limit(self):
        rng = np.random.default_rng(7)
        r, s = rng.normal(size=5), 0.3
        pure = (10 / 5) * np.sum(-0.5 + r ** 2 / (2 * np.exp(s)))
        g = noise_grad(r, InferredGaussian(alpha=1e-9, beta=1e-9), s, 10, 5)
        assert g == pytest.approx(pure, abs=1e-7)

    def test_finite_differences_of_log_posterior(self):
        rng = np.random.default_rng(8)
        r = rng.normal(size=(3, 4))
        s = rng.normal(size=3)
        noise = InferredGaussian(alpha=2.0, beta=0.3)

        def logpost(sv):
            # log N(r; 0, e^s) scaled by N/B' plus the log-parameterised inverse-Gamma prior
            lik = sum(stats.norm.logpdf(r[i], scale=np.exp(0.5 * sv[i])).sum() for i in range(3))
            prior = sum(stats.invgamma.logpdf(np.exp(sv[i]), noise.alpha, scale=noise.beta) + sv[i]
                        for i in range(3))
            return 3.0 * lik + prior

        np.testing.assert_allclose(noise_grad(r, noise, s, 12, 4), central_diff(logpost, s), rtol=1e-6)

    def test_log_var_density_normalises(self):
        from scipy.integrate import quad
        from scipy.special import gammaln
        a, b = 2.0, 0.5
        logz = a * np.log(b) - gammaln(a)
        total, _ = quad(lambda s: np.exp(priors.inverse_gamma_log_var_logp(s, a, b) + logz), -15, 15)
        assert total == pytest.approx(1.0, rel=1e-8)

    def test_rejects_bad_hyperparameters(self):
        with pytest.raises(ValueError):
            InferredGaussian(alpha=0.0)
        with pytest.raises(ValueError):
            FixedGaussian(-1.0)
