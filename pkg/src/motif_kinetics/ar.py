"""Vector autoregressive motion model.

Each segment is modelled as

    x_t = A_1 x_{t-1} + ... + A_p x_{t-p} + C

with 2x2 transition matrices ``A_j`` and an intercept ``C``. The transition
matrices describe how the motion evolves independently of where it happens,
so their flattened concatenation (``4p`` numbers, intercept excluded) is the
feature vector of a segment.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, ParseError, PreconditionError
from .trajectory import Trajectory, TrajectoryCorpus, format_float

#: Singular values below this fraction of the largest are treated as zero.
RCOND = 1e-10


@dataclass(frozen=True)
class ArConfig:
    order: int = 5
    fit_intercept: bool = True

    def __post_init__(self) -> None:
        if int(self.order) != self.order or self.order < 1:
            raise ConfigError(f"AR order must be a positive integer, got {self.order!r}")


@dataclass(frozen=True, eq=False)
class ArParameters:
    matrices: np.ndarray  # (p, 2, 2); matrices[j - 1] is A_j
    intercept: np.ndarray  # (2,)
    residual_rms: float

    def __post_init__(self) -> None:
        m = np.array(self.matrices, dtype=np.float64)
        if m.ndim != 3 or m.shape[1:] != (2, 2) or m.shape[0] < 1:
            raise PreconditionError(f"matrices must have shape (p, 2, 2), got {m.shape}")
        c = np.array(self.intercept, dtype=np.float64).reshape(2)
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(c))):
            raise DataError("AR parameters contain non-finite entries")
        m.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "matrices", m)
        object.__setattr__(self, "intercept", c)
        object.__setattr__(self, "residual_rms", float(self.residual_rms))

    @property
    def order(self) -> int:
        return self.matrices.shape[0]


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    object_id: str


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Stacked feature vectors, one row per object."""

    values: np.ndarray  # (n, 4p)
    object_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != len(self.object_ids):
            raise DataError("feature matrix rows do not match object ids")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "object_ids", tuple(self.object_ids))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def _positions(segment: Trajectory | np.ndarray) -> np.ndarray:
    xy = segment.xy if isinstance(segment, Trajectory) else np.asarray(segment, dtype=np.float64)
    if xy.ndim != 2 or xy.shape[1] != 2:
        raise PreconditionError(f"positions must have shape (T, 2), got {xy.shape}")
    if not np.all(np.isfinite(xy)):
        raise DataError("segment has non-finite coordinates")
    return xy


def design_system(xy: np.ndarray, order: int, fit_intercept: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Regression system for fitting ``x_t`` from its ``order`` predecessors.

    Row ``t - order`` of the design matrix is ``(x_{t-1}, ..., x_{t-p}, 1)``
    (the trailing 1 only with an intercept) for ``t = p .. T-1``; the target
    row is ``x_t``.
    """
    T = xy.shape[0]
    n_rows = T - order
    cols = [xy[order - j : T - j] for j in range(1, order + 1)]
    if fit_intercept:
        cols.append(np.ones((n_rows, 1)))
    return np.hstack(cols), xy[order:]


def min_norm_lstsq(design: np.ndarray, target: np.ndarray, rcond: float = RCOND) -> np.ndarray:
    """Minimum-norm least-squares solution via a truncated SVD."""
    u, s, vt = np.linalg.svd(design, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((design.shape[1], target.shape[1]))
    keep = s > rcond * s[0]
    coef = (u[:, keep].T @ target) / s[keep, None]
    return vt[keep].T @ coef


def fit_ar(segment: Trajectory | np.ndarray, config: ArConfig = ArConfig()) -> ArParameters:
    """Least-squares AR(p) fit of a 2-D segment.

    Both coordinates share one design matrix and are solved jointly. When the
    design is rank deficient (immotile or collinear tracks) the minimum-norm
    solution is returned, with singular values below ``RCOND`` times the
    largest discarded.
    """
    xy = _positions(segment)
    p = config.order
    if xy.shape[0] < p + 1:
        raise PreconditionError(f"segment of length {xy.shape[0]} is too short for order {p}")
    design, target = design_system(xy, p, config.fit_intercept)
    beta = min_norm_lstsq(design, target)
    resid = target - design @ beta
    rms = float(np.sqrt(np.mean(np.sum(resid * resid, axis=1))))
    # beta rows 2(j-1):2j hold A_j transposed
    matrices = beta[: 2 * p].reshape(p, 2, 2).transpose(0, 2, 1)
    intercept = beta[2 * p] if config.fit_intercept else np.zeros(2)
    return ArParameters(matrices, intercept, rms)


def predict(params: ArParameters, history: Sequence[Sequence[float]] | np.ndarray) -> np.ndarray:
    """One-step prediction.

    ``history`` holds the last ``p`` positions in chronological order, so
    ``history[-1]`` is multiplied by ``A_1``.
    """
    h = np.asarray(history, dtype=np.float64).reshape(-1, 2)
    if h.shape[0] != params.order:
        raise PreconditionError(f"history has {h.shape[0]} positions, model order is {params.order}")
    out = params.intercept.copy()
    for j in range(1, params.order + 1):
        out = out + params.matrices[j - 1] @ h[-j]
    return out


def featurize(params: ArParameters, object_id: str = "") -> FeatureVector:
    """Flatten ``A_1 .. A_p`` row-major, lag-ascending. The intercept is dropped."""
    values = params.matrices.reshape(-1).copy()
    values.setflags(write=False)
    return FeatureVector(values, object_id)


def featurize_corpus(
    corpus: TrajectoryCorpus, config: ArConfig = ArConfig(), *, workers: int = 1
) -> FeatureMatrix:
    """Fit and featurize every trajectory; row order follows the corpus.

    ``workers > 1`` fits in a thread pool. Each fit is independent, so the
    result is identical to the sequential run.
    """

    def one(t: Trajectory) -> np.ndarray:
        try:
            return featurize(fit_ar(t, config), t.object_id).values
        except (DataError, PreconditionError) as exc:
            raise type(exc)(f"object {t.object_id!r}: {exc}") from exc

    trajs = list(corpus)
    if workers > 1 and len(trajs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, trajs))
    else:
        rows = [one(t) for t in trajs]
    values = np.vstack(rows) if rows else np.zeros((0, 4 * config.order))
    return FeatureMatrix(values, tuple(corpus.object_ids))


def write_features(features: FeatureMatrix, path: str | Path) -> None:
    n_feat = features.values.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["object_id"] + [f"f{i}" for i in range(n_feat)])
        for oid, row in zip(features.object_ids, features.values):
            w.writerow([oid] + [format_float(v) for v in row])


def read_features(path: str | Path) -> FeatureMatrix:
    ids, rows = [], []
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("missing header row", line=1) from None
        if not header or header[0] != "object_id" or header[1:] != [f"f{i}" for i in range(len(header) - 1)]:
            raise ParseError("feature header must be object_id,f0,f1,...", line=1)
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=reader.line_num)
            try:
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ParseError(str(exc), line=reader.line_num) from None
            ids.append(row[0])
            rows.append(vals)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(header) - 1)
    return FeatureMatrix(values, tuple(ids))
