"""Datasets: the 1-D synthetic problem, KDE input sampling, CSV regression data."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np


class DataFormatError(ValueError):
    pass


@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    names: list[str] = field(default_factory=list)
    x_mean: Optional[np.ndarray] = None
    x_std: Optional[np.ndarray] = None
    y_mean: Optional[np.ndarray] = None
    y_std: Optional[np.ndarray] = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.Y = np.asarray(self.Y)
        if self.Y.ndim == 1 and self.Y.dtype.kind == "f":
            self.Y = self.Y[:, None]
        if len(self.X) < 1 or len(self.X) != len(self.Y):
            raise DataFormatError("dataset needs matching, non-empty X and Y")
        if np.isnan(self.X).any() or (self.Y.dtype.kind == "f" and np.isnan(self.Y).any()):
            raise DataFormatError("dataset contains NaN")

    def __len__(self):
        return len(self.X)

    @property
    def standardized(self) -> bool:
        return self.x_mean is not None

    def subset(self, idx) -> "Dataset":
        return replace(self, X=self.X[idx], Y=self.Y[idx])

    def destandardize_y(self, y):
        if self.y_mean is None:
            return np.asarray(y)
        return np.asarray(y) * self.y_std + self.y_mean


def synthetic_targets(x, eps=0.0):
    u = np.asarray(x) + eps
    return u + np.sin(4 * u) + np.sin(13 * u)


def gen_synthetic_1d(rng=None, noise_var: float = 0.0009) -> Dataset:
    """12 inputs from U(0, 0.6) and 8 from U(0.8, 1), noise applied inside the map."""
    rng = np.random.default_rng(rng)
    x = np.concatenate([rng.uniform(0.0, 0.6, 12), rng.uniform(0.8, 1.0, 8)])
    eps = rng.normal(0.0, np.sqrt(noise_var), size=x.shape) if noise_var > 0 else 0.0
    return Dataset(X=x[:, None], Y=synthetic_targets(x, eps)[:, None], names=["x", "y"])


@dataclass
class KdeSampler:
    anchors: np.ndarray
    bandwidth: np.ndarray

    def __post_init__(self):
        self.anchors = np.atleast_2d(np.asarray(self.anchors, dtype=np.float64))
        self.bandwidth = np.broadcast_to(
            np.asarray(self.bandwidth, dtype=np.float64), self.anchors.shape[1:]).copy()
        if len(self.anchors) == 0:
            raise ValueError("KDE needs at least one anchor")
        if np.any(self.bandwidth < 0):
            raise ValueError("bandwidths must be non-negative")

    @classmethod
    def silverman(cls, X) -> "KdeSampler":
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        n = len(X)
        sd = X.std(axis=0, ddof=1) if n > 1 else np.ones(X.shape[1])
        bw = 1.06 * sd * n ** (-0.2)
        return cls(X, np.where(bw > 0, bw, 1e-3))


def kde_sample(sampler: KdeSampler, n: int, rng) -> np.ndarray:
    idx = rng.integers(0, len(sampler.anchors), size=n)
    return sampler.anchors[idx] + rng.standard_normal((n, sampler.anchors.shape[1])) * sampler.bandwidth


def _parse_float(cell, row, col):
    try:
        return float(cell)
    except ValueError:
        raise DataFormatError(f"non-numeric value {cell!r} at row {row}, column {col}") from None


def read_numeric_csv(path) -> tuple[list[str], np.ndarray]:
    """Read a comma-separated numeric table; a non-numeric first row is a header."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    width = len(rows[0])
    start = 2 if header else 1
    values = np.empty((len(rows), width))
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataFormatError(f"row {i + start} has {len(r)} cells, expected {width}")
        values[i] = [_parse_float(c, i + start, j + 1) for j, c in enumerate(r)]
    names = header or [f"c{j}" for j in range(width)]
    return names, values


def load_csv(path, target_column: int | str = -1) -> Dataset:
    names, values = read_numeric_csv(path)
    if isinstance(target_column, str):
        if target_column not in names:
            raise DataFormatError(f"no column named {target_column!r}")
        target_column = names.index(target_column)
    t = target_column % values.shape[1]
    keep = [j for j in range(values.shape[1]) if j != t]
    return Dataset(X=values[:, keep], Y=values[:, [t]], names=[names[j] for j in keep] + [names[t]])


def standardize(ds: Dataset) -> Dataset:
    """Zero-mean, unit-variance inputs and targets; statistics are composed
    with any earlier standardization so de-standardizing reaches raw units."""
    xm, xs = ds.X.mean(axis=0), ds.X.std(axis=0)
    ym, ys = ds.Y.mean(axis=0), ds.Y.std(axis=0)
    xs = np.where(xs > 0, xs, 1.0)
    ys = np.where(ys > 0, ys, 1.0)
    X = (ds.X - xm) / xs
    Y = (ds.Y - ym) / ys
    if ds.standardized:
        xm, xs = ds.x_mean + ds.x_std * xm, ds.x_std * xs
        ym, ys = ds.y_mean + ds.y_std * ym, ds.y_std * ys
    return replace(ds, X=X, Y=Y, x_mean=xm, x_std=xs, y_mean=ym, y_std=ys)


def apply_standardization(ds: Dataset, ref: Dataset) -> Dataset:
    """Standardize ``ds`` with statistics taken from ``ref``."""
    return replace(ds, X=(ds.X - ref.x_mean) / ref.x_std, Y=(ds.Y - ref.y_mean) / ref.y_std,
                   x_mean=ref.x_mean, x_std=ref.x_std, y_mean=ref.y_mean, y_std=ref.y_std)


def split(ds: Dataset, test_fraction: float, seed) -> tuple[Dataset, Dataset]:
    n = len(ds)
    n_test = int(np.floor(n * test_fraction))
    if not 0 < n_test < n:
        raise DataFormatError(f"a {test_fraction:g} split of {n} rows leaves one side empty")
    perm = np.random.default_rng(seed).permutation(n)
    return ds.subset(np.sort(perm[n_test:])), ds.subset(np.sort(perm[:n_test]))


def bundled_path(name: str) -> Path:
    """Path of a dataset shipped inside the package (e.g. ``boston_housing.csv``)."""
    return Path(__file__).resolve().parent / "datasets" / name
