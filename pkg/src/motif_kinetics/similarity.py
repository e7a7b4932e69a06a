"""Gaussian (RBF) affinity between feature vectors."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ar import FeatureMatrix
from .errors import ConfigError, DataError, ParseError, PreconditionError
from .trajectory import format_float

DEFAULT_GAMMA = 0.1


class NormMode(str, enum.Enum):
    SQUARED = "squared"
    PLAIN = "plain"


@dataclass(frozen=True)
class KernelConfig:
    """``gamma`` scales the distance in the exponent.

    ``norm_mode="squared"`` gives the usual Gaussian kernel
    ``exp(-gamma * ||xi - xj||^2)``; ``"plain"`` uses the unsquared distance.
    """

    gamma: float = DEFAULT_GAMMA
    norm_mode: NormMode = NormMode.SQUARED

    def __post_init__(self) -> None:
        try:
            mode = NormMode(self.norm_mode)
        except ValueError:
            raise ConfigError(f"norm_mode must be 'squared' or 'plain', got {self.norm_mode!r}") from None
        object.__setattr__(self, "norm_mode", mode)
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ConfigError(f"gamma must be a positive finite number, got {self.gamma!r}")


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    values: np.ndarray
    object_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64)
        n = len(self.object_ids)
        if v.shape != (n, n):
            raise DataError(f"kernel shape {v.shape} does not match {n} object ids")
        if not np.all(np.isfinite(v)):
            raise DataError("kernel has non-finite entries")
        if not np.array_equal(v, v.T):
            raise DataError("kernel is not symmetric")
        if np.any(np.diag(v) != 1.0):
            raise DataError("kernel diagonal must be exactly 1")
        if np.any(v < 0) or np.any(v > 1):
            raise DataError("kernel entries must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "object_ids", tuple(self.object_ids))

    def __len__(self) -> int:
        return len(self.object_ids)


def _pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    # explicit differences, not the |a|^2 + |b|^2 - 2ab expansion: exact zeros
    # on the diagonal and no cancellation
    n = x.shape[0]
    out = np.zeros((n, n))
    for i in range(n - 1):
        diff = x[i + 1 :] - x[i]
        d = np.einsum("ij,ij->i", diff, diff)
        out[i, i + 1 :] = d
        out[i + 1 :, i] = d
    return out


def rbf_kernel(
    features: FeatureMatrix | np.ndarray,
    config: KernelConfig = KernelConfig(),
    object_ids: Sequence[str] | None = None,
) -> KernelMatrix:
    """Affinity matrix ``exp(-gamma * d(x_i, x_j))`` over feature rows.

    Only the upper triangle is computed; the lower one is its mirror, so the
    result is symmetric bit for bit.
    """
    if isinstance(features, FeatureMatrix):
        x, ids = features.values, features.object_ids
    else:
        x = np.asarray(features, dtype=np.float64)
        ids = tuple(object_ids) if object_ids is not None else tuple(str(i) for i in range(len(x)))
    if x.ndim != 2:
        raise PreconditionError("features must be a 2-D array")
    if x.shape[0] < 2:
        raise PreconditionError("need at least two feature vectors")
    if not np.all(np.isfinite(x)):
        raise DataError("features contain non-finite values")
    d = _pairwise_sq_dists(x)
    if config.norm_mode is NormMode.PLAIN:
        d = np.sqrt(d)
    values = np.exp(-config.gamma * d)
    return KernelMatrix(values, ids)


@dataclass(frozen=True)
class KernelStats:
    min: float
    max: float
    mean_offdiag: float
    effective_rank: int


def effective_rank(matrix: np.ndarray, tol: float = 1e-8) -> int:
    """Number of eigenvalues above ``tol`` times the largest."""
    w = np.linalg.eigvalsh(matrix)
    top = w[-1]
    if top <= 0:
        return 0
    return int(np.count_nonzero(w > tol * top))


def kernel_stats(kernel: KernelMatrix, tol: float = 1e-8) -> KernelStats:
    v = kernel.values
    n = v.shape[0]
    off = v[~np.eye(n, dtype=bool)]
    return KernelStats(
        min=float(v.min()),
        max=float(v.max()),
        mean_offdiag=float(off.mean()) if off.size else float("nan"),
        effective_rank=effective_rank(v, tol),
    )


def write_kernel(kernel: KernelMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["object_id", *kernel.object_ids])
        for oid, row in zip(kernel.object_ids, kernel.values):
            w.writerow([oid] + [format_float(v) for v in row])


def read_kernel(path: str | Path) -> KernelMatrix:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("missing header row", line=1) from None
        if not header or header[0] != "object_id":
            raise ParseError("kernel header must start with object_id", line=1)
        ids = header[1:]
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=reader.line_num)
            if len(rows) >= len(ids) or row[0] != ids[len(rows)]:
                raise ParseError("row ids must match the header order", line=reader.line_num)
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ParseError(str(exc), line=reader.line_num) from None
    if len(rows) != len(ids):
        raise ParseError(f"kernel has {len(rows)} rows for {len(ids)} columns")
    return KernelMatrix(np.array(rows, dtype=np.float64).reshape(len(ids), len(ids)), tuple(ids))
