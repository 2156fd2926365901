"""Weight priors and observation models."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from .nn import NetworkSpec, init_params

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GaussianWeightPrior:
    """Zero-mean Gaussian prior on network parameters.

    With ``fan_in_scaling`` the weights of a layer with fan-in ``a`` have
    variance ``sigma_w**2 / a``; biases always have variance ``sigma_b**2``.
    """

    sigma_w: float = 1.0
    sigma_b: float = 1.0
    fan_in_scaling: bool = True

    def variances(self, spec: NetworkSpec) -> np.ndarray:
        w_var = self.sigma_w ** 2 / (spec.fan_in() if self.fan_in_scaling else 1.0)
        return np.where(spec.bias_mask(), self.sigma_b ** 2, w_var)

    def sample(self, spec: NetworkSpec, n: int | None = None, rng=None) -> np.ndarray:
        if not self.fan_in_scaling:
            rng = np.random.default_rng(rng)
            shape = (spec.n_params,) if n is None else (n, spec.n_params)
            return rng.standard_normal(shape) * np.sqrt(self.variances(spec))
        return init_params(spec, n, rng, sigma_w=self.sigma_w, sigma_b=self.sigma_b)

    def logp_grad(self, params, spec: NetworkSpec):
        return weight_prior_logp_grad(params, self.variances(spec))


def weight_prior_logp_grad(params, variance):
    """Log density of N(0, diag(variance)) up to a constant, and its gradient.

    ``params`` may be stacked ``(n, D)``; ``variance`` is a scalar or ``(D,)``.
    """
    params = np.asarray(params, dtype=np.float64)
    variance = np.asarray(variance, dtype=np.float64)
    if np.any(variance <= 0):
        raise ValueError("prior variance must be positive")
    grad = -params / variance
    logp = 0.5 * np.sum(params * grad, axis=-1)
    return logp, grad


def gaussian_loglik(f, y, var) -> float:
    """Sum over points of ``log N(y; f, var)``."""
    if np.any(np.asarray(var) <= 0):
        raise ValueError("noise variance must be positive")
    r = np.asarray(y, dtype=np.float64) - np.asarray(f, dtype=np.float64)
    return float(np.sum(-0.5 * np.log(2.0 * np.pi * var) - r ** 2 / (2.0 * var)))


class NoiseModel:
    """Observation model for the network output."""

    kind = "abstract"
    inferred = False


@dataclass(frozen=True)
class FixedGaussian(NoiseModel):
    variance: float = 1.0
    kind = "fixed_gaussian"

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("noise variance must be positive")


@dataclass(frozen=True)
class InferredGaussian(NoiseModel):
    """Gaussian noise with a per-particle log-variance and an inverse-Gamma prior."""

    alpha: float = 1.0
    beta: float = 0.1
    init_log_var: float = np.log(0.1)
    kind = "inferred_gaussian"
    inferred = True

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("inverse-Gamma parameters must be positive")


@dataclass(frozen=True)
class Categorical(NoiseModel):
    kind = "categorical"


def likelihood_grad(f_vals, y, noise: NoiseModel, n_total: int, batch_size: int,
                    log_var=None, mask=None) -> np.ndarray:
    """Mini-batch log-likelihood gradient w.r.t. the function values.

    ``f_vals`` is ``([n,] B', F)``.  For Gaussian models ``y`` matches it and
    ``mask`` (same shape, optional) zeroes unobserved outputs; ``log_var``
    gives one log-variance per particle for inferred noise.  For the
    categorical model ``y`` holds integer labels of length ``B'``.
    """
    f_vals = np.asarray(f_vals, dtype=np.float64)
    scale = n_total / batch_size
    if isinstance(noise, Categorical):
        labels = np.asarray(y, dtype=int).reshape(-1)
        onehot = np.eye(f_vals.shape[-1])[labels]
        sig = scale * (onehot - softmax(f_vals, axis=-1))
    else:
        if isinstance(noise, FixedGaussian):
            var = noise.variance
        else:
            if log_var is None:
                raise ValueError("inferred noise needs per-particle log variances")
            var = np.exp(np.asarray(log_var, dtype=np.float64))
            if f_vals.ndim == 3:
                var = var.reshape(-1, 1, 1)
        y = np.asarray(y, dtype=np.float64).reshape(f_vals.shape[-2:])
        sig = scale * (y - f_vals) / var
    if mask is not None:
        sig = sig * mask
    if not np.all(np.isfinite(sig)):
        raise FloatingPointError("non-finite likelihood signal")
    return sig


def categorical_loglik(logits, labels) -> float:
    labels = np.asarray(labels, dtype=int).reshape(-1)
    lp = log_softmax(np.asarray(logits, dtype=np.float64), axis=-1)
    return float(lp[np.arange(len(labels)), labels].sum())


def inverse_gamma_log_var_logp(log_var, alpha: float, beta: float):
    """Log density of ``s = log sigma^2`` when ``sigma^2 ~ InvGamma(alpha, beta)``.

    Includes the ``ds`` Jacobian; the normaliser is dropped.
    """
    s = np.asarray(log_var, dtype=np.float64)
    return -alpha * s - beta * np.exp(-s)


def noise_grad(residuals, noise: InferredGaussian, log_var, n_total: int,
               batch_size: int, mask=None) -> np.ndarray:
    """d(log posterior)/d(log sigma^2) per particle.

    ``residuals`` is ``([n,] B')`` or ``([n,] B', F)``; entries where ``mask``
    is zero do not count.  ``log_var`` is a scalar or ``(n,)``.
    """
    r = np.asarray(residuals, dtype=np.float64)
    s = np.asarray(log_var, dtype=np.float64)
    var = np.exp(s).reshape(s.shape + (1,) * (r.ndim - s.ndim))
    terms = -0.5 + r ** 2 / (2.0 * var)
    if mask is not None:
        terms = terms * mask
    axes = tuple(range(s.ndim, r.ndim))
    lik = (n_total / batch_size) * terms.sum(axis=axes)
    prior = -noise.alpha + noise.beta * np.exp(-s)
    return lik + prior
