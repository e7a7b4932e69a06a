"""Spectral clustering of an affinity matrix.

The affinity graph is turned into the symmetric normalized Laplacian
``L = I - D^{-1/2} A D^{-1/2}``. The eigenvectors of its ``k`` smallest
eigenvalues embed each object as a point in ``R^k``; the rows are scaled to
unit length and grouped with k-means (k-means++ seeding, Lloyd iterations,
best of several seeded restarts).
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, NumericalError, ParseError, PreconditionError
from .rng import KMEANS_STREAM, check_seed, make_rng
from .similarity import KernelMatrix
from .trajectory import format_float


@dataclass(frozen=True)
class ClusterConfig:
    k: int = 5
    seed: int = 0
    restarts: int = 10
    max_iter: int = 300
    tol: float = 1e-9

    def __post_init__(self) -> None:
        if int(self.k) != self.k or self.k < 2:
            raise ConfigError(f"k must be an integer >= 2, got {self.k!r}")
        check_seed(self.seed)
        if int(self.restarts) != self.restarts or self.restarts < 1:
            raise ConfigError("restarts must be a positive integer")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigError("max_iter must be a positive integer")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")


@dataclass(frozen=True, eq=False)
class SpectralEmbedding:
    """Rows of ``coordinates`` are the unit-normalized embedded objects.

    ``vectors`` keeps the raw orthonormal eigenvectors (columns) belonging to
    ``eigenvalues``, which are ascending.
    """

    coordinates: np.ndarray
    eigenvalues: np.ndarray
    vectors: np.ndarray


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    labels: np.ndarray
    object_ids: tuple[str, ...]
    inertia: float
    centers: np.ndarray | None = None
    n_iter: int = 0
    inertia_history: tuple[float, ...] = ()
    embedding: SpectralEmbedding | None = field(default=None, repr=False)

    @property
    def n_clusters(self) -> int:
        return len(np.unique(self.labels))

    @property
    def clusters(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for oid, lab in zip(self.object_ids, self.labels):
            out.setdefault(int(lab), []).append(oid)
        return dict(sorted(out.items()))


def canonicalize_labels(labels: Sequence[int]) -> np.ndarray:
    """Relabel so the first-occurring label is 0, the next new one 1, ..."""
    mapping: dict[int, int] = {}
    out = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        out[i] = mapping.setdefault(int(lab), len(mapping))
    return out


# --------------------------------------------------------------------------
# Laplacian and embedding


def normalized_laplacian(kernel: KernelMatrix | np.ndarray) -> np.ndarray:
    a = kernel.values if isinstance(kernel, KernelMatrix) else np.asarray(kernel, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise PreconditionError("affinity must be a square matrix")
    deg = a.sum(axis=1)
    if np.any(deg <= 0):
        raise NumericalError("affinity graph has a node with zero degree")
    inv_sqrt = 1.0 / np.sqrt(deg)
    lap = np.eye(a.shape[0]) - a * inv_sqrt[:, None] * inv_sqrt[None, :]
    return 0.5 * (lap + lap.T)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each eigenvector made positive (first on ties)
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eigen_embed(laplacian: np.ndarray, k: int) -> SpectralEmbedding:
    """Embed with the eigenvectors of the ``k`` smallest eigenvalues.

    Uses a full dense symmetric eigendecomposition. Rows of the returned
    coordinates are normalized to unit length; all-zero rows stay zero.
    """
    lap = np.asarray(laplacian, dtype=np.float64)
    n = lap.shape[0]
    if lap.ndim != 2 or lap.shape[1] != n:
        raise PreconditionError("laplacian must be square")
    if not 1 <= k <= n:
        raise PreconditionError(f"k must satisfy 1 <= k <= n = {n}, got {k}")
    scale = max(np.abs(lap).max(), 1.0)
    if np.abs(lap - lap.T).max() > 1e-12 * scale:
        raise PreconditionError("laplacian is not symmetric")
    try:
        w, v = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:
        finite = bool(np.all(np.isfinite(lap)))
        cond = np.linalg.cond(lap) if finite else float("nan")
        raise NumericalError(
            f"eigendecomposition failed ({exc}); n={n}, finite={finite}, "
            f"max|entry|={np.abs(lap).max():.3g}, condition number={cond:.3g}"
        ) from exc
    vals = w[:k].copy()
    vecs = _fix_signs(v[:, :k])
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    coords = np.divide(vecs, norms, out=np.zeros_like(vecs), where=norms > 0)
    return SpectralEmbedding(coords, vals, vecs)


# --------------------------------------------------------------------------
# k-means


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def kmeans_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new center is drawn with probability
    proportional to the squared distance to the nearest chosen center."""
    n = points.shape[0]
    centers = [points[rng.integers(n)]]
    closest = _sq_dists(points, np.asarray(centers))[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers.append(points[idx])
        closest = np.minimum(closest, _sq_dists(points, points[idx : idx + 1])[:, 0])
    return np.array(centers)


def assign(points: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest center per point and its squared distance; ties go to the lowest index."""
    d2 = _sq_dists(points, centers)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(len(points)), labels]


def _lloyd(points: np.ndarray, centers: np.ndarray, max_iter: int, tol: float):
    k = centers.shape[0]
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        labels, closest = assign(points, centers)
        history.append(float(closest.sum()))

        new = centers.copy()
        empty = []
        for c in range(k):
            members = labels == c
            if members.any():
                new[c] = points[members].mean(axis=0)
            else:
                empty.append(c)
        if empty:
            # empty cluster: move its center onto the point farthest from its
            # own center, each such point used at most once
            far = closest.copy()
            for c in empty:
                idx = int(np.argmax(far))
                new[c] = points[idx]
                far[idx] = -1.0
        shift = float(np.sqrt(np.max(np.sum((new - centers) ** 2, axis=1))))
        centers = new
        if shift <= tol:
            break
    labels, closest = assign(points, centers)
    inertia = float(closest.sum())
    history.append(inertia)
    return labels, centers, inertia, n_iter, history


def kmeans(
    points: np.ndarray,
    config: ClusterConfig = ClusterConfig(),
    object_ids: Sequence[str] | None = None,
    *,
    workers: int = 1,
) -> ClusterAssignment:
    """Best-of-``restarts`` Lloyd k-means with k-means++ seeding.

    Restart ``r`` draws from its own stream derived from ``(seed, r)``, so the
    result is the same whether restarts run sequentially or in a pool. The
    lowest-inertia run wins (earliest restart on ties). Labels are returned
    in first-occurrence order.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise PreconditionError("points must be a 2-D array")
    n = x.shape[0]
    if n < config.k:
        raise PreconditionError(f"cannot form k={config.k} clusters from {n} points")
    if not np.all(np.isfinite(x)):
        raise NumericalError("k-means input has non-finite values")
    ids = tuple(object_ids) if object_ids is not None else tuple(str(i) for i in range(n))
    if len(ids) != n:
        raise PreconditionError("object_ids length does not match points")

    def run(r: int):
        rng = make_rng(config.seed, KMEANS_STREAM, r)
        init = kmeans_plusplus(x, config.k, rng)
        return _lloyd(x, init, config.max_iter, config.tol)

    if workers > 1 and config.restarts > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(config.restarts)))
    else:
        results = [run(r) for r in range(config.restarts)]

    best = min(range(len(results)), key=lambda r: (results[r][2], r))
    labels, centers, inertia, n_iter, history = results[best]
    canon = canonicalize_labels(labels)
    # reorder centers to follow the canonical labels
    order = [int(labels[np.flatnonzero(canon == c)[0]]) for c in range(canon.max() + 1)]
    return ClusterAssignment(
        labels=canon,
        object_ids=ids,
        inertia=inertia,
        centers=centers[order],
        n_iter=n_iter,
        inertia_history=tuple(history),
    )


def spectral_cluster(
    kernel: KernelMatrix, config: ClusterConfig = ClusterConfig(), *, workers: int = 1
) -> ClusterAssignment:
    n = len(kernel)
    if config.k > n:
        raise PreconditionError(f"k={config.k} exceeds the number of objects ({n})")
    lap = normalized_laplacian(kernel)
    emb = eigen_embed(lap, config.k)
    result = kmeans(emb.coordinates, config, kernel.object_ids, workers=workers)
    return ClusterAssignment(
        labels=result.labels,
        object_ids=result.object_ids,
        inertia=result.inertia,
        centers=result.centers,
        n_iter=result.n_iter,
        inertia_history=result.inertia_history,
        embedding=emb,
    )


# --------------------------------------------------------------------------
# I/O


def write_assignment(assignment: ClusterAssignment, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["object_id", "label"])
        for oid, lab in zip(assignment.object_ids, assignment.labels):
            w.writerow([oid, int(lab)])


def read_assignment(path: str | Path) -> ClusterAssignment:
    ids, labels = [], []
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["object_id", "label"]:
            raise ParseError("assignment header must be object_id,label", line=1)
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise ParseError("expected 2 fields", line=reader.line_num)
            try:
                labels.append(int(row[1]))
            except ValueError as exc:
                raise ParseError(str(exc), line=reader.line_num) from None
            ids.append(row[0])
    return ClusterAssignment(np.array(labels, dtype=np.int64), tuple(ids), float("nan"))


def write_embedding(embedding: SpectralEmbedding, object_ids: Sequence[str], path: str | Path) -> None:
    k = embedding.coordinates.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["object_id"] + [f"e{i}" for i in range(k)])
        for oid, row in zip(object_ids, embedding.coordinates):
            w.writerow([oid] + [format_float(v) for v in row])


def read_embedding(path: str | Path) -> tuple[tuple[str, ...], np.ndarray]:
    ids, rows = [], []
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "object_id":
            raise ParseError("embedding header must start with object_id", line=1)
        for row in reader:
            if not row:
                continue
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ParseError(str(exc), line=reader.line_num) from None
            ids.append(row[0])
    return tuple(ids), np.array(rows, dtype=np.float64).reshape(len(rows), len(header) - 1)


def write_eigenvalues(eigenvalues: np.ndarray, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for v in eigenvalues:
            fh.write(format_float(v) + "\n")


def read_eigenvalues(path: str | Path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return np.array([float(line) for line in fh if line.strip()])
