"""Dependency-free SVG reports.

Three figure types: per-cluster small multiples (each track shifted to its
own centroid), an aggregate map with tracks at their absolute position, and
a kernel heatmap. Coordinates are image pixels with y pointing down, which is
also SVG's convention, so no axis flip is applied. Numbers are written with
fixed precision so documents are byte-stable.
"""

from __future__ import annotations

import enum
from html import escape
from typing import Iterable

import numpy as np

from .errors import ConfigError, PreconditionError
from .similarity import KernelMatrix
from .spectral import ClusterAssignment
from .trajectory import TrajectoryCorpus

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

PANEL = 180.0
GAP = 20.0
TITLE_H = 22.0
MAX_COLS = 5


class PlotStyle(str, enum.Enum):
    SMALL_MULTIPLES = "small_multiples"
    AGGREGATE = "aggregate"


def color_for(label: int) -> str:
    return PALETTE[label % len(PALETTE)]


def _f(v: float) -> str:
    return f"{v:.2f}"


def _doc(width: float, height: float, body: Iterable[str], title: str = "") -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" height="{_f(height)}" '
        f'viewBox="0 0 {_f(width)} {_f(height)}">\n'
    )
    parts = [head]
    if title:
        parts.append(f"<title>{escape(title)}</title>\n")
    parts.append(f'<rect width="{_f(width)}" height="{_f(height)}" fill="white"/>\n')
    parts.extend(body)
    parts.append("</svg>\n")
    return "".join(parts)


def _polyline(points: np.ndarray, color: str, oid: str, width: float = 1.0) -> str:
    pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in points)
    return (
        f'<polyline data-object-id="{escape(oid)}" points="{pts}" fill="none" '
        f'stroke="{color}" stroke-width="{_f(width)}" stroke-linejoin="round"/>\n'
    )


def _check_cover(corpus: TrajectoryCorpus, labels: ClusterAssignment) -> dict[str, int]:
    mapping = dict(zip(labels.object_ids, (int(v) for v in labels.labels)))
    missing = [oid for oid in corpus.object_ids if oid not in mapping]
    if missing or len(mapping) != len(corpus):
        raise PreconditionError(
            f"labels do not cover the corpus ids (missing: {missing[:5]}, "
            f"{len(mapping)} labels for {len(corpus)} trajectories)"
        )
    return mapping


def plot_clusters(
    corpus: TrajectoryCorpus,
    labels: ClusterAssignment,
    style: PlotStyle | str = PlotStyle.SMALL_MULTIPLES,
    title: str = "",
) -> str:
    try:
        style = PlotStyle(style)
    except ValueError:
        raise ConfigError(f"unknown plot style {style!r}") from None
    mapping = _check_cover(corpus, labels)
    if style is PlotStyle.SMALL_MULTIPLES:
        return _small_multiples(corpus, mapping, title)
    return _aggregate(corpus, mapping, title)


def _small_multiples(corpus: TrajectoryCorpus, mapping: dict[str, int], title: str) -> str:
    clusters: dict[int, list] = {}
    for t in corpus:
        clusters.setdefault(mapping[t.object_id], []).append(t)
    present = sorted(clusters)
    n_cols = max(1, min(MAX_COLS, len(present)))
    n_rows = max(1, -(-len(present) // n_cols))
    width = n_cols * PANEL + (n_cols + 1) * GAP
    height = n_rows * (PANEL + TITLE_H) + (n_rows + 1) * GAP

    half = 1.0
    for t in corpus:
        half = max(half, float(np.abs(t.xy - t.xy.mean(axis=0)).max()))
    scale = (PANEL / 2 - 6) / half

    body = []
    for i, lab in enumerate(present):
        row, col = divmod(i, n_cols)
        x0 = GAP + col * (PANEL + GAP)
        y0 = GAP + row * (PANEL + TITLE_H + GAP)
        members = clusters[lab]
        body.append(f'<g class="panel" data-cluster="{lab}">\n')
        body.append(
            f'<text x="{_f(x0)}" y="{_f(y0 + 15)}" font-family="sans-serif" font-size="13">'
            f"cluster {lab} (n={len(members)})</text>\n"
        )
        top = y0 + TITLE_H
        body.append(
            f'<rect x="{_f(x0)}" y="{_f(top)}" width="{_f(PANEL)}" height="{_f(PANEL)}" '
            'fill="none" stroke="#999999"/>\n'
        )
        cx, cy = x0 + PANEL / 2, top + PANEL / 2
        for t in members:
            pts = (t.xy - t.xy.mean(axis=0)) * scale + np.array([cx, cy])
            body.append(_polyline(pts, color_for(lab), t.object_id, 0.8))
        body.append("</g>\n")
    return _doc(width, height, body, title)


def _aggregate(corpus: TrajectoryCorpus, mapping: dict[str, int], title: str) -> str:
    size = 600.0
    margin = 30.0
    legend_w = 120.0
    if len(corpus):
        allxy = np.concatenate([t.xy for t in corpus])
        lo, hi = allxy.min(axis=0), allxy.max(axis=0)
    else:
        lo, hi = np.zeros(2), np.ones(2)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1.0))
    scale = (size - 2 * margin) / span
    body = []
    for t in corpus:
        pts = (t.xy - lo) * scale + margin
        body.append(_polyline(pts, color_for(mapping[t.object_id]), t.object_id))
    body.append('<g class="legend">\n')
    for i, lab in enumerate(sorted(set(mapping.values()))):
        y = margin + 18 * i
        body.append(
            f'<rect x="{_f(size + 10)}" y="{_f(y)}" width="12" height="12" fill="{color_for(lab)}"/>'
            f'<text x="{_f(size + 28)}" y="{_f(y + 11)}" font-family="sans-serif" '
            f'font-size="12">cluster {lab}</text>\n'
        )
    body.append("</g>\n")
    return _doc(size + legend_w, size, body, title)


_HEAT_STOPS = np.array([[68, 1, 84], [33, 145, 140], [253, 231, 37]], dtype=float)


def _heat_color(v: float) -> str:
    v = min(max(v, 0.0), 1.0) * (len(_HEAT_STOPS) - 1)
    i = min(int(v), len(_HEAT_STOPS) - 2)
    c = _HEAT_STOPS[i] + (v - i) * (_HEAT_STOPS[i + 1] - _HEAT_STOPS[i])
    return "#{:02x}{:02x}{:02x}".format(*(int(round(x)) for x in c))


def plot_kernel(kernel: KernelMatrix, title: str = "", size: float = 560.0) -> str:
    """Heatmap of the affinity matrix; colour spans the matrix's own [min, max]."""
    v = kernel.values
    n = v.shape[0]
    lo, hi = float(v.min()), float(v.max())
    rng = hi - lo if hi > lo else 1.0
    cell = size / max(n, 1)
    margin = 20.0
    body = ['<g class="heatmap" shape-rendering="crispEdges">\n']
    for i in range(n):
        for j in range(n):
            body.append(
                f'<rect x="{_f(margin + j * cell)}" y="{_f(margin + i * cell)}" '
                f'width="{_f(cell)}" height="{_f(cell)}" fill="{_heat_color((v[i, j] - lo) / rng)}"/>'
            )
        body.append("\n")
    body.append("</g>\n")
    body.append(
        f'<text x="{_f(margin)}" y="{_f(size + margin + 16)}" font-family="sans-serif" '
        f'font-size="12">min {lo:.4g}  max {hi:.4g}</text>\n'
    )
    return _doc(size + 2 * margin, size + 2 * margin + 20, body, title)
