"""Feed-forward ReLU networks on flat parameter vectors.

Parameters of one network are a single float64 vector laid out layer by
layer; each layer stores its weight matrix of shape ``(w_in, w_out)`` in
row-major order followed by its bias of length ``w_out``.  A hidden layer
computes ``relu(h @ W + b)``; the output layer is linear.

Every function accepts either one parameter vector ``(D,)`` or a stack of
particles ``(n, D)``.  With a stack, inputs ``X`` of shape ``(B, d)`` are
shared by all particles and outputs gain a leading particle axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Array shapes do not agree with a network spec."""


@dataclass(frozen=True)
class NetworkSpec:
    layer_widths: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("a network needs at least an input and an output layer")
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        w = self.layer_widths
        return [(w[i], w[i + 1]) for i in range(len(w) - 1)]

    @property
    def n_params(self) -> int:
        return sum((a + 1) * b for a, b in self.layer_shapes)

    def fan_in(self) -> np.ndarray:
        """Fan-in of the layer owning each flat parameter (biases included)."""
        out = np.empty(self.n_params)
        pos = 0
        for a, b in self.layer_shapes:
            out[pos:pos + (a + 1) * b] = a
            pos += (a + 1) * b
        return out

    def bias_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_params, dtype=bool)
        pos = 0
        for a, b in self.layer_shapes:
            pos += a * b
            mask[pos:pos + b] = True
            pos += b
        return mask


def unflatten(params, spec: NetworkSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split flat parameters into per-layer ``(W, b)`` views.

    Leading batch axes of ``params`` are kept, so ``(n, D)`` yields weights
    of shape ``(n, w_in, w_out)``.
    """
    params = np.asarray(params, dtype=np.float64)
    if params.shape[-1] != spec.n_params:
        raise DimensionError(
            f"expected {spec.n_params} parameters for {spec.layer_widths}, "
            f"got {params.shape[-1]}")
    lead = params.shape[:-1]
    layers = []
    pos = 0
    for a, b in spec.layer_shapes:
        W = params[..., pos:pos + a * b].reshape(lead + (a, b))
        pos += a * b
        bias = params[..., pos:pos + b]
        pos += b
        layers.append((W, bias))
    return layers


def flatten(layers, spec: NetworkSpec | None = None) -> np.ndarray:
    """Inverse of :func:`unflatten`."""
    parts = []
    for W, b in layers:
        W = np.asarray(W, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        lead = W.shape[:-2]
        parts.append(W.reshape(lead + (-1,)))
        parts.append(b.reshape(lead + (-1,)))
    flat = np.concatenate(parts, axis=-1)
    if spec is not None and flat.shape[-1] != spec.n_params:
        raise DimensionError(
            f"layers hold {flat.shape[-1]} values, spec needs {spec.n_params}")
    return flat


def init_params(spec: NetworkSpec, n: int | None = None, rng=None,
                sigma_w: float = 1.0, sigma_b: float = 0.0) -> np.ndarray:
    """Draw weights from N(0, sigma_w**2 / fan_in) and biases from N(0, sigma_b**2)."""
    rng = np.random.default_rng(rng)
    shape = (spec.n_params,) if n is None else (n, spec.n_params)
    z = rng.standard_normal(shape)
    scale = np.where(spec.bias_mask(), sigma_b, sigma_w / np.sqrt(spec.fan_in()))
    return z * scale


def _check_inputs(params, spec, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise DimensionError(
            f"inputs must have shape (B, {spec.input_dim}), got {X.shape}")
    params = np.asarray(params, dtype=np.float64)
    if params.ndim not in (1, 2) or params.shape[-1] != spec.n_params:
        raise DimensionError(
            f"params must have shape (D,) or (n, D) with D={spec.n_params}, "
            f"got {params.shape}")
    return params, X


def _forward_trace(params, spec, X):
    """Forward pass keeping each layer's input and output.

    Returns the list of layer outputs ``outs`` (``outs[0]`` is the input) and
    the per-layer weights.
    """
    layers = unflatten(params, spec)
    h = X if params.ndim == 1 else np.broadcast_to(X, (params.shape[0],) + X.shape)
    outs = [h]
    for li, (W, b) in enumerate(layers):
        z = h @ W + b[..., None, :]
        h = np.maximum(z, 0.0) if li < len(layers) - 1 else z
        outs.append(h)
    return outs, layers


def forward(params, spec: NetworkSpec, X) -> np.ndarray:
    """Network outputs, ``(B, F)`` or ``(n, B, F)`` for stacked particles."""
    params, X = _check_inputs(params, spec, X)
    outs, _ = _forward_trace(params, spec, X)
    return outs[-1]


def activations(params, spec: NetworkSpec, X) -> list[np.ndarray]:
    """Post-activation values of every layer (hidden layers and the output)."""
    params, X = _check_inputs(params, spec, X)
    outs, _ = _forward_trace(params, spec, X)
    return outs[1:]


def backprop_signals(params, spec: NetworkSpec, X, signals, sum_particles: bool = False) -> np.ndarray:
    """Pull error signals injected at layer outputs back to the parameters.

    ``signals[l]`` is either None or an array shaped like the output of layer
    ``l`` (``activations(...)[l]``), optionally with extra leading axes in
    front of the particle axis.  The result is the gradient w.r.t. the
    parameters of ``sum_l <activations_l, signals_l>``, with the same extra
    leading axes.  For stacked particles, ``sum_particles`` sums the result
    over the particle axis inside the contraction, which avoids the
    per-particle intermediate.
    """
    params, X = _check_inputs(params, spec, X)
    if len(signals) != spec.n_layers:
        raise DimensionError(f"need {spec.n_layers} signal slots, got {len(signals)}")
    outs, layers = _forward_trace(params, spec, X)
    lead = None
    for l, s in enumerate(signals):
        if s is None:
            continue
        s = np.asarray(s, dtype=np.float64)
        ref = outs[l + 1].shape
        if s.shape[s.ndim - len(ref):] != ref:
            raise DimensionError(
                f"signal for layer {l} must end with shape {ref}, got {s.shape}")
        this_lead = s.shape[:s.ndim - len(ref)]
        if lead is None:
            lead = this_lead
        elif lead != this_lead:
            raise DimensionError("signals disagree on leading axes")
    if lead is None:
        lead = ()

    grads = []
    delta = None
    for l in range(spec.n_layers - 1, -1, -1):
        W, _ = layers[l]
        s = signals[l]
        if s is not None:
            s = np.broadcast_to(np.asarray(s, dtype=np.float64),
                                lead + outs[l + 1].shape)
            delta = s if delta is None else delta + s
        if delta is None:
            grads.append((np.zeros(lead + W.shape),
                          np.zeros(lead + W.shape[:-2] + W.shape[-1:])))
            continue
        if l < spec.n_layers - 1:
            delta = delta * (outs[l + 1] > 0.0)
        h_in = outs[l]
        if sum_particles and params.ndim == 2:
            # sum over particles and batch rows in one matmul
            h2 = h_in.reshape(-1, h_in.shape[-1])
            d2 = delta.reshape(lead + (-1, delta.shape[-1]))
            gW = h2.T @ d2
            gb = d2.sum(axis=-2)
        else:
            gW = np.swapaxes(h_in, -1, -2) @ delta
            gb = delta.sum(axis=-2)
        grads.append((gW, gb))
        if l > 0:
            delta = delta @ np.swapaxes(W, -1, -2)
    grads.reverse()
    return flatten(grads)


def backprop_top_signal(params, spec: NetworkSpec, X, V) -> np.ndarray:
    """Gradient of ``sum_{b,k} f(x_b; theta)_k * V[b, k]`` w.r.t. theta.

    ``V`` matches the output of :func:`forward`, optionally with extra
    leading axes.
    """
    signals = [None] * spec.n_layers
    signals[-1] = V
    return backprop_signals(params, spec, X, signals)


def jacobian(params, spec: NetworkSpec, X) -> np.ndarray:
    """Full Jacobian of outputs w.r.t. parameters, shape ``([n,] B, F, D)``."""
    params, X = _check_inputs(params, spec, X)
    B, F = X.shape[0], spec.output_dim
    eye = np.eye(B * F).reshape(B * F, B, F)
    if params.ndim == 2:
        eye = np.broadcast_to(eye[:, None], (B * F, params.shape[0], B, F))
    J = backprop_top_signal(params, spec, X, eye)  # (BF, [n,] D)
    J = np.moveaxis(J, 0, -2)
    return J.reshape(J.shape[:-2] + (B, F, spec.n_params))
