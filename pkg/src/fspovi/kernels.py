"""RBF kernels on particles and the gram matrices the flows consume.

Bandwidths are in squared-distance units: ``k(p, q) = exp(-|p - q|^2 / h)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial.distance import pdist, squareform

from . import nn

BANDWIDTH_FLOOR = 1e-8


BANDWIDTH_RULES = ("median_log", "median")


def median_bandwidth(points, rule: str = "median_log") -> float:
    """Median heuristic over distinct pairs.

    ``"median_log"``: ``h = med^2 / log(n + 1)``; ``"median"``: ``h = med^2``.
    """
    if rule not in BANDWIDTH_RULES:
        raise ValueError(f"unknown bandwidth rule {rule!r}")
    P = np.asarray(points, dtype=np.float64)
    P = P.reshape(P.shape[0], -1)
    n = P.shape[0]
    if n < 2:
        raise ValueError("median heuristic needs at least two points")
    med = np.median(pdist(P))
    h = med ** 2 / np.log(n + 1) if rule == "median_log" else med ** 2
    return max(h, BANDWIDTH_FLOOR)


@dataclass
class GramPack:
    """Gram matrix of an RBF kernel plus access to its pair gradients.

    ``points`` are the vectors the kernel was evaluated on.  When the kernel
    is a function of weights through some feature map (function values or
    activations), ``pullback`` maps per-pair feature-space gradients
    ``c[i, j]`` (shape ``(n, n) + point_shape``) to ``sum_j J_j^T c[i, j]``
    in weight space.  Without it, the particles are the points themselves.
    """

    K: np.ndarray
    h: float
    points: np.ndarray
    pullback: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def grad(self, i: int, j: int) -> np.ndarray:
        """``d K_ij / d p_j = (2/h) (p_i - p_j) K_ij`` in feature space."""
        return (2.0 / self.h) * (self.points[i] - self.points[j]) * self.K[i, j]

    def repulsion(self, weights) -> np.ndarray:
        """``R_i = sum_j weights[i, j] * d K_ij / d p_j`` for every i.

        ``weights`` is an ``(n, n)`` array or a scalar.  The result lives in
        particle space (after ``pullback`` when one is attached).
        """
        A = np.broadcast_to(np.asarray(weights, dtype=np.float64), self.K.shape) * self.K
        P = self.points
        if self.pullback is None:
            flat = P.reshape(self.n, -1)
            R = (2.0 / self.h) * (A.sum(axis=1)[:, None] * flat - A @ flat)
            return R.reshape(P.shape)
        diff = P[:, None] - P[None, :]
        coef = (2.0 / self.h) * A
        c = coef.reshape(coef.shape + (1,) * (P.ndim - 1)) * diff
        return self.pullback(c)


def _pairwise_sq(P):
    return squareform(pdist(P, "sqeuclidean"))


def rbf_gram(points, h: float | None = None, rule: str = "median_log") -> GramPack:
    """RBF gram on ``points`` (``(n, ...)``); median bandwidth when ``h`` is None."""
    P = np.asarray(points, dtype=np.float64)
    n = P.shape[0]
    flat = P.reshape(n, -1)
    if h is None:
        h = median_bandwidth(flat, rule) if n > 1 else 1.0
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    K = np.exp(-_pairwise_sq(flat) / h) if n > 1 else np.ones((1, 1))
    return GramPack(K=K, h=float(h), points=P)


def function_value_gram(params, spec: nn.NetworkSpec, x, h: float | None = None,
                        rule: str = "median_log") -> GramPack:
    """Weight-space kernel ``k_f`` on network outputs over the batch ``x``."""
    params = np.atleast_2d(params)
    F = nn.forward(params, spec, x)  # (n, B, F)
    pack = rbf_gram(F.reshape(F.shape[0], -1), h, rule)

    def pullback(c):
        n = params.shape[0]
        c = c.reshape(n, n, *F.shape[1:])
        # c[i, j] is pulled through particle j; put j on the particle axis.
        signals = [None] * (spec.n_layers - 1) + [c]
        return nn.backprop_signals(params, spec, x, signals, sum_particles=True)

    pack.pullback = pullback
    return pack


def activation_gram(params, spec: nn.NetworkSpec, x, h: float | None = None,
                    rule: str = "median_log") -> GramPack:
    """Weight-space kernel ``k_a`` on the concatenated activations of all layers."""
    params = np.atleast_2d(params)
    acts = nn.activations(params, spec, x)  # list of (n, B, w_l)
    n = params.shape[0]
    sizes = [a[0].size for a in acts]
    H = np.concatenate([a.reshape(n, -1) for a in acts], axis=1)
    pack = rbf_gram(H, h, rule)

    def pullback(c):
        c = c.reshape(n, n, -1)
        signals = []
        pos = 0
        for a, size in zip(acts, sizes):
            signals.append(c[..., pos:pos + size].reshape((n, n) + a.shape[1:]))
            pos += size
        return nn.backprop_signals(params, spec, x, signals, sum_particles=True)

    pack.pullback = pullback
    return pack
