"""Reference computations: closed-form GP posteriors, function-space particle
flows on a finite index set, HMC, and Gaussian KL tools."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import flows
from .kernels import rbf_gram


class NumericalError(ArithmeticError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass
class GaussianApprox:
    """Multivariate normal with an explicit diagonal jitter.

    The distribution is ``N(mean, cov + jitter * I)``.
    """

    mean: np.ndarray
    cov: np.ndarray
    jitter: float = 0.0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        m = self.mean.size
        if self.cov.shape != (m, m):
            raise ValueError(f"covariance must be {m}x{m}, got {self.cov.shape}")
        self._chol = None

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def full_cov(self) -> np.ndarray:
        return self.cov + self.jitter * np.eye(self.dim)

    @property
    def chol(self) -> np.ndarray:
        if self._chol is None:
            try:
                self._chol = linalg.cholesky(self.full_cov, lower=True)
            except linalg.LinAlgError as err:
                raise NumericalError(f"covariance is not positive definite: {err}") from None
        return self._chol

    def solve(self, b) -> np.ndarray:
        return linalg.cho_solve((self.chol, True), b)

    def logpdf(self, x) -> np.ndarray:
        d = np.atleast_2d(x) - self.mean
        z = linalg.solve_triangular(self.chol, d.T, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(self.chol)))
        out = -0.5 * (np.sum(z ** 2, axis=0) + logdet + self.dim * np.log(2 * np.pi))
        return out if np.ndim(x) > 1 else out[0]


def prior_grad(approx: GaussianApprox, F) -> np.ndarray:
    """``-(cov + jitter I)^-1 (F - mean)`` for one vector or a stack ``(n, m)``."""
    F = np.asarray(F, dtype=np.float64)
    d = np.atleast_2d(F) - approx.mean
    g = -approx.solve(d.T).T
    return g.reshape(F.shape)


def robust_cholesky(A, jitter: float, retries: int = 3):
    """Cholesky of ``A + jitter I``, escalating jitter tenfold on failure."""
    A = np.asarray(A, dtype=np.float64)
    I = np.eye(A.shape[0])
    for _ in range(retries + 1):
        try:
            return linalg.cholesky(A + jitter * I, lower=True), jitter
        except linalg.LinAlgError:
            jitter = jitter * 10.0 if jitter > 0 else 1e-10 * max(np.trace(A) / len(A), 1e-300)
    raise NumericalError(
        f"Cholesky failed after {retries} jitter escalations (last jitter {jitter / 10:g}, "
        f"condition estimate {np.linalg.cond(A):.3g})")


def mvn_fit(samples, jitter: float = 0.0) -> GaussianApprox:
    """Moment-matched MVN (unbiased covariance) of ``samples`` ``(n, m)``."""
    S = np.asarray(samples, dtype=np.float64)
    if S.ndim == 1:
        S = S[:, None]
    n, m = S.shape
    if n <= m:
        raise ValueError(f"need more samples than dimensions ({n} <= {m})")
    if not np.all(np.isfinite(S)):
        raise NumericalError("non-finite samples in moment fit")
    cov = np.atleast_2d(np.cov(S, rowvar=False))
    return GaussianApprox(S.mean(axis=0), cov, jitter)


def mvn_kl(a: GaussianApprox, b: GaussianApprox) -> float:
    """KL(a || b) between two multivariate normals."""
    La, _ = robust_cholesky(a.full_cov, 0.0)
    Lb, _ = robust_cholesky(b.full_cov, 0.0)
    m = a.dim
    M = linalg.solve_triangular(Lb, La, lower=True)
    tr = np.sum(M ** 2)
    diff = linalg.solve_triangular(Lb, b.mean - a.mean, lower=True)
    logdet = 2.0 * (np.sum(np.log(np.diag(Lb))) - np.sum(np.log(np.diag(La))))
    return float(0.5 * (tr + diff @ diff - m + logdet))


# --- Gaussian processes -------------------------------------------------------

def rbf_kernel(lengthscale: float = 1.0, variance: float = 1.0):
    """``k(x, x') = variance * exp(-|x - x'|^2 / (2 lengthscale^2))``."""

    def k(A, B):
        A = np.atleast_2d(np.asarray(A, dtype=np.float64).reshape(len(A), -1))
        B = np.atleast_2d(np.asarray(B, dtype=np.float64).reshape(len(B), -1))
        sq = np.sum(A ** 2, 1)[:, None] + np.sum(B ** 2, 1)[None, :] - 2 * A @ B.T
        return variance * np.exp(-np.maximum(sq, 0.0) / (2 * lengthscale ** 2))

    return k


@dataclass
class GpPosterior:
    mean: np.ndarray
    cov: np.ndarray

    def as_gaussian(self, jitter: float = 0.0) -> GaussianApprox:
        return GaussianApprox(self.mean, self.cov, jitter)


def gp_posterior(k, X_train, Y_train, X_test, noise_var: float) -> GpPosterior:
    """Posterior of ``f(X_test)`` given noisy observations of ``f(X_train)``."""
    if noise_var < 0:
        raise ValueError("noise variance must be non-negative")
    y = np.asarray(Y_train, dtype=np.float64).reshape(-1)
    Krr = k(X_train, X_train) + noise_var * np.eye(len(y))
    Ktr = k(X_test, X_train)
    Ktt = k(X_test, X_test)
    try:
        L = linalg.cholesky(Krr, lower=True)
    except linalg.LinAlgError:
        raise NumericalError(
            f"training gram not positive definite (condition {np.linalg.cond(Krr):.3g})") from None
    mu = Ktr @ linalg.cho_solve((L, True), y)
    V = linalg.solve_triangular(L, Ktr.T, lower=True)
    cov = Ktt - V.T @ V
    return GpPosterior(mu, 0.5 * (cov + cov.T))


# --- finite-index-set function-space particles ----------------------------------

def exact_log_posterior_grad(F, prior: GaussianApprox, train_idx, y, noise_var: float):
    """Gradient of ``log N(f; prior) + sum_train log N(y; f, noise_var)`` for each particle."""
    F = np.atleast_2d(F)
    g = prior_grad(prior, F)
    g[:, train_idx] += (np.asarray(y).reshape(-1) - F[:, train_idx]) / noise_var
    return g


def exact_fpovi_step(particles, flow, prior: GaussianApprox, train_idx, y,
                     noise_var: float, step, bandwidth: str = "median_log") -> np.ndarray:
    """One step of a particle flow directly on the function values ``(n, |X|)``.

    A float ``step`` is an Euler step; an optimizer object (anything with
    ``step(name, value, direction)``) is used as is.
    """
    F = np.atleast_2d(np.asarray(particles, dtype=np.float64))
    if np.isscalar(step) and step == 0.0:
        return F.copy()
    grads = exact_log_posterior_grad(F, prior, train_idx, y, noise_var)
    d = flows.direction(flow, rbf_gram(F, rule=bandwidth), grads)
    if not np.all(np.isfinite(d)):
        raise NumericalError("non-finite flow direction; step rejected")
    if np.isscalar(step):
        return F + step * d
    return step.step("exact", F, d)


# --- Hamiltonian Monte Carlo -----------------------------------------------------

@dataclass
class HmcResult:
    samples: np.ndarray
    acceptance_rate: float | np.ndarray


def leapfrog(x, p, grad_fn, step: float, n_steps: int):
    """Leapfrog integration for ``H = -log pi(x) + |p|^2 / 2``."""
    x = np.array(x, dtype=np.float64)
    p = np.array(p, dtype=np.float64)
    p += 0.5 * step * grad_fn(x)
    for i in range(n_steps):
        x += step * p
        if i < n_steps - 1:
            p += step * grad_fn(x)
    p += 0.5 * step * grad_fn(x)
    return x, p


def hmc_sample(log_density, grad_fn, x0, step: float = 1e-3, n_leapfrog: int = 20,
               n_samples: int = 1000, burn_in: int = 100, rng=None, thin: int = 1) -> HmcResult:
    """HMC with an identity mass matrix.

    ``x0`` is ``(dim,)`` for one chain or ``(c, dim)`` for ``c`` independent
    chains advanced together; ``log_density`` and ``grad_fn`` must accept the
    same shape (returning ``(c,)`` and ``(c, dim)`` for chains).  Returns
    samples of shape ``(n_samples, [c,] dim)``.
    """
    if step <= 0 or n_leapfrog < 1:
        raise ConfigurationError("HMC needs a positive step and at least one leapfrog step")
    rng = np.random.default_rng(rng)
    x = np.array(x0, dtype=np.float64)
    lp = log_density(x)
    out = np.empty((n_samples,) + x.shape)
    acc_burn = np.zeros(np.shape(lp))
    acc = np.zeros(np.shape(lp))
    total = burn_in + n_samples * thin
    k = 0
    for t in range(total):
        p = rng.standard_normal(x.shape)
        x_new, p_new = leapfrog(x, p, grad_fn, step, n_leapfrog)
        lp_new = log_density(x_new)
        log_ratio = (lp_new - 0.5 * np.sum(p_new ** 2, axis=-1)) - (lp - 0.5 * np.sum(p ** 2, axis=-1))
        log_ratio = np.where(np.isfinite(log_ratio), log_ratio, -np.inf)
        accept = np.log(rng.uniform(size=np.shape(lp))) < log_ratio
        x = np.where(np.reshape(accept, np.shape(accept) + (1,)), x_new, x) if x.ndim > 1 \
            else (x_new if accept else x)
        lp = np.where(accept, lp_new, lp)
        if t < burn_in:
            acc_burn += accept
            if t == burn_in - 1 and np.all(acc_burn == 0):
                raise ConfigurationError("no proposal accepted during burn-in; reduce the step size")
        else:
            acc += accept
            if (t - burn_in) % thin == thin - 1:
                out[k] = x
                k += 1
    rate = acc / max(n_samples * thin, 1)
    return HmcResult(out, float(rate) if np.ndim(rate) == 0 else rate)


# --- the finite GP regression problem ------------------------------------------

@dataclass
class FiniteGpProblem:
    """1-D GP regression on a finite index set ``X = X_train + X_test``."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    noise_var: float
    kernel: object
    nugget: float

    @property
    def x_all(self) -> np.ndarray:
        return np.concatenate([self.x_train, self.x_test])

    @property
    def train_idx(self) -> np.ndarray:
        return np.arange(len(self.x_train))

    @property
    def test_idx(self) -> np.ndarray:
        return np.arange(len(self.x_train), len(self.x_train) + len(self.x_test))

    def k(self, A, B):
        """Prior covariance including the white-noise nugget on coincident inputs."""
        A = np.asarray(A, dtype=np.float64).reshape(-1)
        B = np.asarray(B, dtype=np.float64).reshape(-1)
        return self.kernel(A[:, None], B[:, None]) + self.nugget * (np.abs(A[:, None] - B[None, :]) < 1e-12)

    def prior(self, idx=None) -> GaussianApprox:
        x = self.x_all if idx is None else self.x_all[idx]
        return GaussianApprox(np.zeros(len(x)), self.k(x, x))

    def posterior_test(self) -> GpPosterior:
        return gp_posterior(self.k, self.x_train, self.y_train, self.x_test, self.noise_var)

    def baseline_test(self) -> GpPosterior:
        """GP posterior conditioned on the down-sampled grid {-2, -1.6, ..., 2}."""
        keep = np.isclose((self.x_train + 2.0) / 0.4, np.round((self.x_train + 2.0) / 0.4))
        return gp_posterior(self.k, self.x_train[keep], self.y_train[keep], self.x_test,
                            self.noise_var)


def finite_gp_problem(rng=None, lengthscale: float = 0.5, noise_std: float = 0.1,
                      nugget: float = 1e-3) -> FiniteGpProblem:
    rng = np.random.default_rng(rng)
    x_train = np.round(np.linspace(-2.0, 2.0, 21), 10)
    x_test = np.array([1.7, 1.9, 2.1])
    y = np.sin(x_train) + noise_std * rng.standard_normal(x_train.shape)
    return FiniteGpProblem(x_train, y, x_test, noise_std ** 2, rbf_kernel(lengthscale), nugget)
