"""Predictive metrics for particle ensembles.

Quantiles use linear interpolation between order statistics (numpy's
default ``"linear"`` method).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm


def rmse(particle_means, y) -> float:
    """RMSE of the particle-averaged prediction; ``particle_means`` is ``(n, T)``."""
    pred = np.mean(np.atleast_2d(particle_means), axis=0)
    return float(np.sqrt(np.mean((pred - np.ravel(y)) ** 2)))


def mixture_log_density(particle_means, noise_var, y) -> np.ndarray:
    """Per-point log of the equal-weight Gaussian mixture ``(1/n) sum_i N(y; f_i, s_i^2)``."""
    M = np.atleast_2d(np.asarray(particle_means, dtype=np.float64))
    n = M.shape[0]
    var = np.broadcast_to(np.asarray(noise_var, dtype=np.float64).reshape(-1, 1)
                          if np.ndim(noise_var) else noise_var, M.shape)
    y = np.ravel(y)
    comp = -0.5 * np.log(2 * np.pi * var) - (y - M) ** 2 / (2 * var)
    return logsumexp(comp, axis=0) - np.log(n)


def mixture_nll(particle_means, noise_var, y, y_scale: float = 1.0) -> float:
    """Mean negative log predictive density.

    ``noise_var`` is a scalar or one variance per particle.  When the data
    were standardized, pass the target std as ``y_scale``; the density is
    then reported in raw target units.
    """
    return float(-np.mean(mixture_log_density(particle_means, noise_var, y)) + np.log(y_scale))


def credible_band(particle_means, noise_var=None, level: float = 0.95, mode: str = "mean",
                  rng=None, draws_per_particle: int = 100):
    """Per-point central interval of probability ``level``.

    ``mode="mean"`` uses the particle means only.  ``mode="predictive"``
    adds Gaussian observation noise by drawing ``draws_per_particle`` samples
    per particle.
    """
    M = np.atleast_2d(np.asarray(particle_means, dtype=np.float64))
    lo_q, hi_q = 0.5 - level / 2.0, 0.5 + level / 2.0
    if mode == "mean":
        samples = M
    elif mode == "predictive":
        if noise_var is None:
            raise ValueError("predictive band needs the noise variance")
        rng = np.random.default_rng(rng)
        sd = np.sqrt(np.asarray(noise_var, dtype=np.float64))
        sd = sd.reshape(-1, 1, 1) if sd.ndim else sd
        eps = rng.standard_normal((M.shape[0], draws_per_particle, M.shape[1]))
        samples = (M[:, None, :] + sd * eps).reshape(-1, M.shape[1])
    else:
        raise ValueError(f"unknown band mode {mode!r}")
    lo, hi = np.quantile(samples, [lo_q, hi_q], axis=0)
    return lo, hi


def gap_ratio(widths_a, widths_b, mask=None) -> float:
    a = np.asarray(widths_a, dtype=np.float64)
    b = np.asarray(widths_b, dtype=np.float64)
    if mask is not None:
        a, b = a[mask], b[mask]
    return float(a.mean() / b.mean())


@dataclass
class PredictiveSummary:
    mean: np.ndarray
    epistemic_std: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    nll: np.ndarray | None = None


def summarize(particle_means, noise_var, level: float = 0.95, y=None) -> PredictiveSummary:
    """Mean, epistemic std and a Gaussian-moment predictive interval per point."""
    M = np.atleast_2d(np.asarray(particle_means, dtype=np.float64))
    mean = M.mean(axis=0)
    std = M.std(axis=0)
    var = np.asarray(noise_var, dtype=np.float64)
    noise = var.mean() if var.ndim else var
    z = norm.ppf(0.5 + level / 2.0)
    total = np.sqrt(std ** 2 + noise)
    nll = None if y is None else -mixture_log_density(M, noise_var, y)
    return PredictiveSummary(mean, std, mean - z * total, mean + z * total, nll)
