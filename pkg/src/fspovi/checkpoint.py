"""Checkpoint files: one JSON manifest line, then a raw float64 payload.

Layout::

    <manifest JSON, UTF-8, no newlines inside>\\n
    <rows * cols little-endian IEEE-754 float64 values, row-major>

One row per particle.  The first ``n_params`` columns are the flat weight
vector (per layer: ``W`` row-major with shape ``(fan_in, fan_out)``, then
``b``).  When the noise variance is inferred a final column holds the
particle's log-variance.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .function_space import ParticleEnsemble
from .nn import NetworkSpec

FORMAT = "fspovi-checkpoint"
VERSION = 1
DTYPE = "<f8"


class CheckpointFormatError(ValueError):
    pass


@dataclass
class Checkpoint:
    ensemble: ParticleEnsemble
    noise: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def manifest(self) -> dict:
        ens = self.ensemble
        cols = ens.spec.n_params + (ens.log_noise is not None)
        return {
            "format": FORMAT,
            "version": VERSION,
            "dtype": DTYPE,
            "rows": ens.n,
            "cols": int(cols),
            "layer_widths": list(ens.spec.layer_widths),
            "activation": ens.spec.activation,
            "n_params": ens.spec.n_params,
            "has_log_noise": ens.log_noise is not None,
            "iteration": ens.iteration,
            "noise": self.noise,
            "seed": self.seed,
            "config": self.config,
            "extra": self.extra,
        }


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    ens = ckpt.ensemble
    payload = ens.params
    if ens.log_noise is not None:
        payload = np.column_stack([payload, ens.log_noise])
    head = json.dumps(ckpt.manifest(), sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(head.encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(payload, dtype=DTYPE).tobytes())
    return path


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CheckpointFormatError(f"{path}: missing manifest line")
    try:
        man = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"{path}: bad manifest ({e})") from None
    if man.get("format") != FORMAT or man.get("version") != VERSION:
        raise CheckpointFormatError(f"{path}: not a version {VERSION} checkpoint")
    spec = NetworkSpec(tuple(man["layer_widths"]), man.get("activation", "relu"))
    rows, cols = man["rows"], man["cols"]
    if spec.n_params != man["n_params"] or cols != spec.n_params + bool(man["has_log_noise"]):
        raise CheckpointFormatError(f"{path}: parameter layout does not match the network spec")
    body = raw[nl + 1:]
    if len(body) != rows * cols * 8:
        raise CheckpointFormatError(
            f"{path}: payload has {len(body)} bytes, expected {rows * cols * 8}")
    data = np.frombuffer(body, dtype=DTYPE).reshape(rows, cols).astype(np.float64)
    log_noise = data[:, -1].copy() if man["has_log_noise"] else None
    ens = ParticleEnsemble(data[:, :spec.n_params].copy(), spec, log_noise, man.get("iteration", 0))
    return Checkpoint(ens, man.get("noise", {}), man.get("config", {}), man.get("seed"),
                      man.get("extra", {}))
