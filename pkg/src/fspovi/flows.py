"""Particle flow directions.

Each rule returns the ascent direction ``-v(p_i)`` for every particle, given
a :class:`~fspovi.kernels.GramPack` on the particles and their log-density
gradients.  The same code serves weight vectors, function-value vectors and
weight-space kernels defined through a feature map.
"""
from __future__ import annotations

import enum

import numpy as np

from .kernels import GramPack

ROW_SUM_FLOOR = 1e-12


class FlowKind(str, enum.Enum):
    SVGD = "svgd"
    WSGLD_B = "wsgld_b"
    PI_SGLD = "pi_sgld"
    GFSF = "gfsf"


def _check(gram: GramPack, grads):
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape[0] != gram.n:
        raise ValueError(f"{grads.shape[0]} gradients for a gram of {gram.n} particles")
    return grads


def svgd_direction(gram: GramPack, grads) -> np.ndarray:
    """``(1/n) sum_j [K_ij g_j + dK_ij/dp_j]``."""
    grads = _check(gram, grads)
    n = gram.n
    drive = (gram.K @ grads.reshape(n, -1)).reshape(grads.shape) / n
    return drive + gram.repulsion(1.0 / n)


def wsgld_b_weights(K) -> tuple[np.ndarray, bool]:
    """Pair weights ``1/S_j + 1/S_i`` with ``S`` the row sums of K.

    Also reports whether any row sum hit the floor.
    """
    S = K.sum(axis=1)
    floored = bool(np.any(S < ROW_SUM_FLOOR))
    S = np.maximum(S, ROW_SUM_FLOOR)
    return 1.0 / S[None, :] + 1.0 / S[:, None], floored


def wsgld_b_direction(gram: GramPack, grads) -> np.ndarray:
    """``g_i + sum_j dK_ji/dp_j / S_j + sum_j dK_ji/dp_j / S_i``."""
    grads = _check(gram, grads)
    W, _ = wsgld_b_weights(gram.K)
    return grads + gram.repulsion(W)


def pi_sgld_direction(gram: GramPack, grads) -> np.ndarray:
    return svgd_direction(gram, grads) + wsgld_b_direction(gram, grads)


def default_ridge(K) -> float:
    return 1e-5 * np.trace(K) / K.shape[0]


def gfsf_direction(gram: GramPack, grads, ridge: float | None = None) -> np.ndarray:
    """``g_i + sum_j ((K + ridge I)^-1)_ij r_j`` with ``r_j = sum_k dK_jk/dp_k``.

    Raises ``numpy.linalg.LinAlgError`` if the regularised gram is singular.
    """
    grads = _check(gram, grads)
    if ridge is None:
        ridge = default_ridge(gram.K)
    n = gram.n
    r = gram.repulsion(1.0)
    A = gram.K + ridge * np.eye(n)
    sol = np.linalg.solve(A, r.reshape(n, -1)).reshape(r.shape)
    if not np.all(np.isfinite(sol)):
        raise np.linalg.LinAlgError("GFSF solve produced non-finite values")
    return grads + sol


def direction(kind, gram: GramPack, grads) -> np.ndarray:
    kind = FlowKind(kind)
    if kind is FlowKind.SVGD:
        return svgd_direction(gram, grads)
    if kind is FlowKind.WSGLD_B:
        return wsgld_b_direction(gram, grads)
    if kind is FlowKind.PI_SGLD:
        return pi_sgld_direction(gram, grads)
    return gfsf_direction(gram, grads)
