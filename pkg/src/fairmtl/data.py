"""Multi-task tabular datasets: synthetic generation, CSV I/O, splitting and batching."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _rng
from .errors import ConfigError, FormatError, ShapeError, ValidationError


@dataclass
class Dataset:
    U: np.ndarray
    S: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=np.float64)
        self.S = np.asarray(self.S).astype(np.int64)
        self.Y = np.asarray(self.Y).astype(np.int64)
        if self.Y.ndim == 1:
            self.Y = self.Y[:, None]
        if self.U.ndim != 2 or self.S.ndim != 1 or self.Y.ndim != 2:
            raise ShapeError("U must be [n, d], S [n] and Y [n, T]")
        if not (len(self.U) == len(self.S) == len(self.Y)):
            raise ShapeError("U, S and Y disagree on the number of rows")
        if not (np.isin(self.S, (0, 1)).all() and np.isin(self.Y, (0, 1)).all()):
            raise ShapeError("S and Y entries must be 0 or 1")

    @property
    def n(self) -> int:
        return len(self.U)

    @property
    def d(self) -> int:
        return self.U.shape[1]

    @property
    def T(self) -> int:
        return self.Y.shape[1]

    def subset(self, idx) -> Dataset:
        return Dataset(self.U[idx], self.S[idx], self.Y[idx])

    def task(self, t: int) -> Dataset:
        return Dataset(self.U, self.S, self.Y[:, [t]])

    def equals(self, other: Dataset) -> bool:
        return (np.array_equal(self.U, other.U) and np.array_equal(self.S, other.S)
                and np.array_equal(self.Y, other.Y))


class Splits(NamedTuple):
    train: Dataset
    val: Dataset
    test: Dataset


@dataclass
class SynthSpec:
    n: int
    d: int
    T: int
    bias: list
    noise: float = 0.0

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.T < 1:
            raise ConfigError("n, d and T must be positive")
        if np.isscalar(self.bias):
            self.bias = [float(self.bias)] * self.T
        self.bias = [float(b) for b in self.bias]
        if len(self.bias) != self.T:
            raise ConfigError(f"bias needs {self.T} entries, got {len(self.bias)}")
        if any(not 0 <= b <= 1 for b in self.bias):
            raise ConfigError("bias entries must lie in [0, 1]")
        if not 0 <= self.noise <= 0.5:
            raise ConfigError("noise must lie in [0, 0.5]")


def generate_synthetic(spec: SynthSpec, seed: int) -> Dataset:
    """Gaussian features, linear clean labels, and one-sided label bias against group g.

    A clean positive in the protected group is relabelled 0 with probability
    ``bias[t]``; afterwards every label flips with probability ``noise``.
    """
    rng = _rng.stream(seed, "synth")
    U = rng.standard_normal((spec.n, spec.d))
    S = (rng.random(spec.n) < 0.5).astype(np.int64)
    betas = rng.standard_normal((spec.T, spec.d))
    Y = (U @ betas.T > 0).astype(np.int64)
    flip_bias = rng.random((spec.n, spec.T)) < np.asarray(spec.bias)
    flip_noise = rng.random((spec.n, spec.T)) < spec.noise
    Y[flip_bias & (S[:, None] == 1) & (Y == 1)] = 0
    Y = np.where(flip_noise, 1 - Y, Y)
    return Dataset(U, S, Y)


def csv_header(d: int, T: int) -> list[str]:
    return [f"feature_{j}" for j in range(d)] + ["protected"] + [f"task_{t}" for t in range(T)]


def write_csv(dataset: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(csv_header(dataset.d, dataset.T)) + "\n")
        for u, s, y in zip(dataset.U, dataset.S, dataset.Y):
            fields = [repr(float(x)) for x in u] + [str(int(s))] + [str(int(v)) for v in y]
            fh.write(",".join(fields) + "\n")


def _binary_cell(value: str, row: int, col: str) -> int:
    if value not in ("0", "1"):
        raise ValidationError(f"row {row}, column {col!r}: expected 0 or 1, got {value!r}", row=row, column=col)
    return int(value)


def load_csv(path, d: int, T: int) -> Dataset:
    header = csv_header(d, T)
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != header:
        raise FormatError(f"{path}: missing or malformed header, expected {','.join(header)}")
    U, S, Y = [], [], []
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise FormatError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
        try:
            U.append([float(x) for x in row[:d]])
        except ValueError as exc:
            raise ValidationError(f"row {i}: non-numeric feature ({exc})", row=i) from None
        S.append(_binary_cell(row[d], i, "protected"))
        Y.append([_binary_cell(row[d + 1 + t], i, f"task_{t}") for t in range(T)])
    if not U:
        return Dataset(np.zeros((0, d)), np.zeros(0, dtype=np.int64), np.zeros((0, T), dtype=np.int64))
    return Dataset(np.array(U), np.array(S), np.array(Y))


def split(dataset: Dataset, fractions=(0.7, 0.15, 0.15), seed: int = 0) -> Splits:
    """Seeded permutation sliced into train/val/test; rounding remainders go to train."""
    fr = [float(f) for f in fractions]
    if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be three positive numbers summing to 1, got {fractions}")
    n = dataset.n
    n_val = math.floor(n * fr[1] + 1e-9)
    n_test = math.floor(n * fr[2] + 1e-9)
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ConfigError(f"split sizes ({n_train}, {n_val}, {n_test}) leave an empty partition")
    perm = _rng.stream(seed, "split").permutation(n)
    return Splits(
        dataset.subset(perm[:n_train]),
        dataset.subset(perm[n_train:n_train + n_val]),
        dataset.subset(perm[n_train + n_val:]),
    )


def batches(data, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Shuffled index batches for one epoch, keyed by ``(seed, epoch)``."""
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    n = data if isinstance(data, (int, np.integer)) else data.n
    perm = _rng.stream(seed, "shuffle", epoch).permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]
