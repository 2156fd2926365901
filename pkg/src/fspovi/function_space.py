"""Function-space particle optimization for Bayesian neural networks.

Particles are weight vectors, but each update is computed in the space of
function values on a batch of inputs and pulled back through the network
Jacobian, i.e. ordinary backpropagation with a modified top-layer error
signal.  Weight-space POVI and independent ensemble training are provided
as baselines with the same step interface.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import flows, nn
from .data import Dataset, KdeSampler, kde_sample
from .flows import FlowKind
from .kernels import BANDWIDTH_RULES, activation_gram, function_value_gram, rbf_gram
from .oracles import GaussianApprox, NumericalError, prior_grad, robust_cholesky
from .priors import (Categorical, FixedGaussian, GaussianWeightPrior, InferredGaussian,
                     NoiseModel, likelihood_grad, noise_grad)

__all__ = [
    "ParticleEnsemble", "ComposedBatch", "GaussianApprox", "Sgd", "Adam",
    "compose_batch", "gp_prior_moments", "prior_grad", "likelihood_grad",
    "function_space_direction", "fpovi_step", "ensemble_step",
    "weight_space_povi_step", "KernelChoice",
]


class ConfigurationError(ValueError):
    pass


class KernelChoice(str, enum.Enum):
    RBF_ON_WEIGHTS = "rbf_on_weights"
    FUNCTION_VALUE = "function_value"
    ACTIVATION = "activation"


@dataclass
class ParticleEnsemble:
    """``n`` weight vectors sharing one network spec.

    ``log_noise`` holds one observation log-variance per particle when the
    noise level is inferred.
    """

    params: np.ndarray
    spec: nn.NetworkSpec
    log_noise: Optional[np.ndarray] = None
    iteration: int = 0

    def __post_init__(self):
        self.params = np.atleast_2d(np.asarray(self.params, dtype=np.float64))
        if self.params.shape[1] != self.spec.n_params:
            raise nn.DimensionError(
                f"particles have {self.params.shape[1]} parameters, spec needs {self.spec.n_params}")
        if self.log_noise is not None:
            self.log_noise = np.asarray(self.log_noise, dtype=np.float64).reshape(-1)
            if self.log_noise.shape != (self.n,):
                raise nn.DimensionError("need one log noise value per particle")

    @property
    def n(self) -> int:
        return self.params.shape[0]

    @classmethod
    def from_prior(cls, spec, n, prior: GaussianWeightPrior, rng,
                   noise: NoiseModel | None = None) -> "ParticleEnsemble":
        params = prior.sample(spec, n, rng)
        log_noise = np.full(n, noise.init_log_var) if isinstance(noise, InferredGaussian) else None
        return cls(params, spec, log_noise)

    def predict(self, X) -> np.ndarray:
        return nn.forward(self.params, self.spec, X)

    def noise_var(self, noise: NoiseModel):
        if isinstance(noise, InferredGaussian):
            return np.exp(self.log_noise)
        if isinstance(noise, FixedGaussian):
            return noise.variance
        return None


@dataclass
class ComposedBatch:
    """Inputs for one function-space update.

    ``x_b``/``y_b`` come from the training set and carry the likelihood;
    ``x_tilde`` are extra inputs (e.g. KDE draws).  ``prior_on`` selects the
    positions that receive the prior gradient: ``"tilde"`` (the default,
    separate prior batch) or ``"all"``.  ``mask`` optionally hides outputs of
    ``y_b`` that were not observed.
    """

    x_b: np.ndarray
    y_b: np.ndarray
    x_tilde: np.ndarray
    prior_on: str = "tilde"
    mask: Optional[np.ndarray] = None
    n_total: Optional[int] = None

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.x_b, self.x_tilde], axis=0)

    @property
    def n_b(self) -> int:
        return len(self.x_b)

    @property
    def prior_idx(self) -> np.ndarray:
        if self.prior_on == "all":
            return np.arange(len(self.x_b) + len(self.x_tilde))
        if self.prior_on == "tilde":
            return np.arange(len(self.x_b), len(self.x_b) + len(self.x_tilde))
        raise ConfigurationError(f"unknown prior placement {self.prior_on!r}")

    @property
    def x_prior(self) -> np.ndarray:
        return self.x[self.prior_idx]


def compose_batch(train: Dataset, nu: KdeSampler, B: int, B_prime: int, rng,
                  mask=None) -> ComposedBatch:
    """``B'`` training points without replacement plus ``B - B'`` draws from ``nu``."""
    if not 1 <= B_prime < B:
        raise ConfigurationError(f"need 1 <= B' < B, got B'={B_prime}, B={B}")
    if B_prime > len(train):
        raise ConfigurationError(f"B'={B_prime} exceeds the training set size {len(train)}")
    idx = rng.choice(len(train), size=B_prime, replace=False)
    x_tilde = kde_sample(nu, B - B_prime, rng)
    return ComposedBatch(train.X[idx], train.Y[idx], x_tilde,
                         mask=None if mask is None else mask[idx], n_total=len(train))


# --- GP approximation of the function-space prior --------------------------------

def gp_prior_moments(spec: nn.NetworkSpec, weight_prior: GaussianWeightPrior, x, k_draws: int,
                     rng, rel_jitter: float = 1e-6, center: bool = False) -> GaussianApprox:
    """Moment-matched MVN of ``f(x; theta)`` over ``k_draws`` prior networks.

    The flattened ``(m * F)`` output vector is matched.  Jitter is
    ``rel_jitter * trace / dim`` (at least 1e-8) and is escalated tenfold up
    to three times if the Cholesky factorization fails.
    """
    if k_draws < 2:
        raise ConfigurationError("need at least two prior draws")
    thetas = weight_prior.sample(spec, k_draws, rng)
    f = nn.forward(thetas, spec, x)
    if center:
        f = f - f.mean(axis=-1, keepdims=True)
    f = f.reshape(k_draws, -1)
    mean = f.mean(axis=0)
    cov = np.atleast_2d(np.cov(f, rowvar=False))
    jitter = max(rel_jitter * np.trace(cov) / cov.shape[0], 1e-8)
    _, jitter = robust_cholesky(cov, jitter)
    return GaussianApprox(mean, cov, jitter)


# --- optimizers ------------------------------------------------------------------

class Sgd:
    """Plain Euler steps ``theta += lr * direction``."""

    def __init__(self, lr: float):
        self.lr = lr

    def step(self, name: str, value, direction):
        return value + self.lr * direction


class Adam:
    """Adaptive-moment steps that treat the flow direction as an ascent gradient.

    State is kept per named parameter block.
    """

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self._state = {}

    def step(self, name: str, value, direction):
        m, v, t = self._state.get(name, (0.0, 0.0, 0))
        t += 1
        m = self.beta1 * m + (1 - self.beta1) * direction
        v = self.beta2 * v + (1 - self.beta2) * direction ** 2
        self._state[name] = (m, v, t)
        m_hat = m / (1 - self.beta1 ** t)
        v_hat = v / (1 - self.beta2 ** t)
        return value + self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def as_optimizer(step):
    return Sgd(step) if np.isscalar(step) else step


# --- shared pieces ----------------------------------------------------------------

def _likelihood_signal(ens, f_b, batch: ComposedBatch, noise: NoiseModel):
    n_total = batch.n_total if batch.n_total is not None else batch.n_b
    return likelihood_grad(f_b, batch.y_b, noise, n_total, batch.n_b,
                           log_var=ens.log_noise, mask=batch.mask)


def _noise_update(ens, f_b, batch, noise, opt):
    if not isinstance(noise, InferredGaussian):
        return ens.log_noise
    n_total = batch.n_total if batch.n_total is not None else batch.n_b
    r = np.asarray(batch.y_b, dtype=np.float64).reshape(f_b.shape[1:]) - f_b
    g = noise_grad(r, noise, ens.log_noise, n_total, batch.n_b, mask=batch.mask)
    return opt.step("log_noise", ens.log_noise, g)


def _finish(ens, new_params, new_log_noise):
    bad = ~np.all(np.isfinite(new_params), axis=1)
    if new_log_noise is not None:
        bad |= ~np.isfinite(new_log_noise)
    if bad.any():
        raise NumericalError(f"non-finite update for particle(s) {np.flatnonzero(bad).tolist()}; "
                             "step rejected")
    return replace(ens, params=new_params, log_noise=new_log_noise, iteration=ens.iteration + 1)


def _output_signal(spec_noise: NoiseModel, V):
    """Pull a signal on centred logits back to raw network outputs."""
    if isinstance(spec_noise, Categorical):
        return V - V.mean(axis=-1, keepdims=True)
    return V


def network_function(ens: ParticleEnsemble, X, noise: NoiseModel | None = None):
    """Function values the posterior is placed on: raw outputs for regression,
    centred logits for classification."""
    f = ens.predict(X)
    bad = ~np.all(np.isfinite(f.reshape(ens.n, -1)), axis=1)
    if bad.any():
        raise NumericalError(f"non-finite network output for particle(s) {np.flatnonzero(bad).tolist()}")
    if isinstance(noise, Categorical):
        f = f - f.mean(axis=-1, keepdims=True)
    return f


# --- function-space update ---------------------------------------------------------

def function_space_direction(f, batch: ComposedBatch, flow, prior: GaussianApprox,
                             lik_signal, bandwidth: str = "median_log") -> np.ndarray:
    """Ascent direction ``-v[f_i(x)]`` for every particle, shape ``(n, B, F)``.

    ``f`` holds the particles' values on ``batch.x``; the log-posterior
    gradient is the prior gradient on the prior positions plus the
    likelihood signal on the training positions.
    """
    n, B, F = f.shape
    grads = np.zeros_like(f)
    pidx = batch.prior_idx
    grads[:, pidx] = prior_grad(prior, f[:, pidx].reshape(n, -1)).reshape(n, len(pidx), F)
    grads[:, :batch.n_b] += lik_signal
    flat = f.reshape(n, -1)
    d = flows.direction(flow, rbf_gram(flat, rule=bandwidth), grads.reshape(n, -1))
    return d.reshape(n, B, F)


def fpovi_step(ens: ParticleEnsemble, batch: ComposedBatch, flow, prior: GaussianApprox,
               noise: NoiseModel, step, bandwidth: str = "median_log") -> ParticleEnsemble:
    """One mini-batch function-space POVI update of every particle."""
    opt = as_optimizer(step)
    x = batch.x
    f = network_function(ens, x, noise)
    lik = _likelihood_signal(ens, f[:, :batch.n_b], batch, noise)
    d = function_space_direction(f, batch, flow, prior, lik, bandwidth)
    if not np.all(np.isfinite(d)):
        bad = np.flatnonzero(~np.all(np.isfinite(d.reshape(ens.n, -1)), axis=1))
        raise NumericalError(f"non-finite direction for particle(s) {bad.tolist()}; step rejected")
    g_theta = nn.backprop_top_signal(ens.params, ens.spec, x, _output_signal(noise, d))
    new_params = opt.step("params", ens.params, g_theta)
    return _finish(ens, new_params, _noise_update(ens, f[:, :batch.n_b], batch, noise, opt))


# --- weight-space baselines ---------------------------------------------------------

def weight_log_posterior_grad(ens, batch: ComposedBatch, weight_prior: GaussianWeightPrior,
                              noise: NoiseModel):
    """``(N/B') grad log p(y_b | x_b, theta) + grad log p(theta)`` per particle."""
    f_b = network_function(ens, batch.x_b, noise)
    lik = _likelihood_signal(ens, f_b, batch, noise)
    g = nn.backprop_top_signal(ens.params, ens.spec, batch.x_b, _output_signal(noise, lik))
    _, gp = weight_prior.logp_grad(ens.params, ens.spec)
    return g + gp, f_b


def ensemble_step(ens: ParticleEnsemble, batch: ComposedBatch, weight_prior: GaussianWeightPrior,
                  noise: NoiseModel, step) -> ParticleEnsemble:
    """Independent MAP ascent for each particle."""
    opt = as_optimizer(step)
    g, f_b = weight_log_posterior_grad(ens, batch, weight_prior, noise)
    new_params = opt.step("params", ens.params, g)
    return _finish(ens, new_params, _noise_update(ens, f_b, batch, noise, opt))


def weight_gram(ens: ParticleEnsemble, x, kernel_choice, bandwidth: str = "median_log"):
    kernel_choice = KernelChoice(kernel_choice)
    if kernel_choice is KernelChoice.RBF_ON_WEIGHTS:
        return rbf_gram(ens.params, rule=bandwidth)
    if kernel_choice is KernelChoice.FUNCTION_VALUE:
        return function_value_gram(ens.params, ens.spec, x, rule=bandwidth)
    return activation_gram(ens.params, ens.spec, x, rule=bandwidth)


def weight_space_povi_step(ens: ParticleEnsemble, batch: ComposedBatch, flow, kernel_choice,
                           weight_prior: GaussianWeightPrior, noise: NoiseModel,
                           step, bandwidth: str = "median_log") -> ParticleEnsemble:
    """Weight-space particle update with a kernel on weights, outputs or activations."""
    opt = as_optimizer(step)
    g, f_b = weight_log_posterior_grad(ens, batch, weight_prior, noise)
    gram = weight_gram(ens, batch.x, kernel_choice, bandwidth)
    d = flows.direction(flow, gram, g)
    new_params = opt.step("params", ens.params, d)
    return _finish(ens, new_params, _noise_update(ens, f_b, batch, noise, opt))


# --- method dispatch ------------------------------------------------------------------

METHODS = {
    "fsvgd": ("function", FlowKind.SVGD),
    "fwsgld": ("function", FlowKind.WSGLD_B),
    "fpisgld": ("function", FlowKind.PI_SGLD),
    "fgfsf": ("function", FlowKind.GFSF),
    "wsvgd": ("weight", FlowKind.SVGD),
    "wwsgld": ("weight", FlowKind.WSGLD_B),
    "wpisgld": ("weight", FlowKind.PI_SGLD),
    "wgfsf": ("weight", FlowKind.GFSF),
    "ensemble": ("ensemble", None),
}


@dataclass
class TrainSettings:
    """Per-step hyperparameters shared by all methods.

    ``batch_size`` is B' (capped at the training-set size); ``prior_batch``
    inputs are drawn from the KDE each step and, for function-space
    methods, carry the moment-matched prior built from ``k_draws`` fresh
    prior networks.
    """

    method: str = "fsvgd"
    batch_size: int = 100
    prior_batch: int = 4
    k_draws: int = 40
    kernel_choice: str = "rbf_on_weights"
    bandwidth: str = "median_log"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}")
        KernelChoice(self.kernel_choice)
        if self.bandwidth not in BANDWIDTH_RULES:
            raise ConfigurationError(f"unknown bandwidth rule {self.bandwidth!r}")
        if self.batch_size < 1 or self.prior_batch < 1 or self.k_draws < 2:
            raise ConfigurationError("batch sizes must be positive and k_draws at least 2")

    @property
    def family(self) -> str:
        return METHODS[self.method][0]

    @property
    def flow(self):
        return METHODS[self.method][1]


def train_step(ens: ParticleEnsemble, train: Dataset, nu: KdeSampler, settings: TrainSettings,
               weight_prior: GaussianWeightPrior, noise: NoiseModel, opt, rng,
               mask=None) -> ParticleEnsemble:
    """One mini-batch update of ``ens`` by the configured method."""
    b_prime = min(settings.batch_size, len(train))
    batch = compose_batch(train, nu, b_prime + settings.prior_batch, b_prime, rng, mask=mask)
    if settings.family == "function":
        prior = gp_prior_moments(ens.spec, weight_prior, batch.x_prior, settings.k_draws, rng,
                                 center=isinstance(noise, Categorical))
        return fpovi_step(ens, batch, settings.flow, prior, noise, opt, settings.bandwidth)
    if settings.family == "weight":
        return weight_space_povi_step(ens, batch, settings.flow, settings.kernel_choice,
                                      weight_prior, noise, opt, settings.bandwidth)
    return ensemble_step(ens, batch, weight_prior, noise, opt)
