"""Trajectory data model, CSV ingestion and segment preprocessing.

A trajectory is one tracked object's time-ordered 2-D positions. Raw tracks
are normalized in three steps before featurization: short tracks are
discarded, every track is split at the stimulus (event) frame, and each half
is cut to a common number of frames. After normalization the x and y
coordinates of a corpus form two ``(n_objects, segment_length)`` matrices.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DataError, ParseError, PreconditionError, SplitError

logger = logging.getLogger(__name__)

COLUMNS = ("object_id", "frame", "x", "y", "fluorescence")
REQUIRED_COLUMNS = COLUMNS[:4]


def natural_key(text: str) -> tuple:
    """Sort key that orders embedded integers numerically ("c2" < "c10")."""
    return tuple(
        (0, int(tok), "") if tok.isdigit() else (1, 0, tok)
        for tok in re.findall(r"\d+|\D+", text)
    )


def format_float(value: float) -> str:
    # 17 significant digits round-trips every IEEE double exactly
    return format(float(value), ".17g")


@dataclass(frozen=True)
class TrajectoryPoint:
    frame: int
    x: float
    y: float
    fluorescence: float | None = None


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One object's track.

    Positions are stored column-wise: ``frames`` (int64, strictly increasing),
    ``xy`` (float64, shape ``(n, 2)``) and an optional ``fluorescence`` array in
    which NaN marks a missing sample. Fluorescence is carried through I/O and
    never used for features.
    """

    object_id: str
    frames: np.ndarray
    xy: np.ndarray
    fluorescence: np.ndarray | None = None

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.int64).reshape(-1)
        xy = np.asarray(self.xy, dtype=np.float64).reshape(-1, 2)
        if frames.size == 0:
            raise DataError(f"trajectory {self.object_id!r} has no points")
        if frames.shape[0] != xy.shape[0]:
            raise DataError(
                f"trajectory {self.object_id!r}: {frames.shape[0]} frames but "
                f"{xy.shape[0]} positions"
            )
        if np.any(np.diff(frames) <= 0):
            raise DataError(f"trajectory {self.object_id!r}: frames not strictly increasing")
        if np.any(frames < 0):
            raise DataError(f"trajectory {self.object_id!r}: negative frame index")
        if not np.all(np.isfinite(xy)):
            raise DataError(f"trajectory {self.object_id!r}: non-finite coordinate")
        fluo = self.fluorescence
        if fluo is not None:
            fluo = np.asarray(fluo, dtype=np.float64).reshape(-1)
            if fluo.shape[0] != frames.shape[0]:
                raise DataError(f"trajectory {self.object_id!r}: fluorescence length mismatch")
            if np.any(fluo[~np.isnan(fluo)] < 0) or np.any(np.isinf(fluo)):
                raise DataError(f"trajectory {self.object_id!r}: invalid fluorescence value")
            fluo = _readonly(fluo)
        object.__setattr__(self, "object_id", str(self.object_id))
        object.__setattr__(self, "frames", _readonly(frames))
        object.__setattr__(self, "xy", _readonly(xy))
        object.__setattr__(self, "fluorescence", fluo)

    @classmethod
    def from_points(cls, object_id: str, points: Iterable[TrajectoryPoint]) -> "Trajectory":
        points = list(points)
        fluo = None
        if any(p.fluorescence is not None for p in points):
            fluo = [math.nan if p.fluorescence is None else p.fluorescence for p in points]
        return cls(
            object_id,
            [p.frame for p in points],
            [(p.x, p.y) for p in points],
            fluo,
        )

    @property
    def points(self) -> list[TrajectoryPoint]:
        out = []
        for i, frame in enumerate(self.frames):
            f = None
            if self.fluorescence is not None and not np.isnan(self.fluorescence[i]):
                f = float(self.fluorescence[i])
            out.append(TrajectoryPoint(int(frame), float(self.xy[i, 0]), float(self.xy[i, 1]), f))
        return out

    def __len__(self) -> int:
        return int(self.frames.shape[0])

    def take(self, index) -> "Trajectory":
        """Sub-trajectory from a slice, boolean mask or index array."""
        fluo = None if self.fluorescence is None else self.fluorescence[index]
        return Trajectory(self.object_id, self.frames[index], self.xy[index], fluo)

    def translated(self, offset: Sequence[float]) -> "Trajectory":
        return Trajectory(
            self.object_id, self.frames, self.xy + np.asarray(offset, float), self.fluorescence
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        if self.object_id != other.object_id:
            return False
        if not (np.array_equal(self.frames, other.frames) and np.array_equal(self.xy, other.xy)):
            return False
        if (self.fluorescence is None) != (other.fluorescence is None):
            return False
        return self.fluorescence is None or np.array_equal(
            self.fluorescence, other.fluorescence, equal_nan=True
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return (
            f"Trajectory({self.object_id!r}, n={len(self)}, "
            f"frames={int(self.frames[0])}..{int(self.frames[-1])})"
        )


@dataclass(frozen=True)
class TrajectoryCorpus:
    """Trajectories of identical length with unique ids."""

    trajectories: tuple[Trajectory, ...]
    segment_length: int

    def __post_init__(self) -> None:
        trajs = tuple(self.trajectories)
        object.__setattr__(self, "trajectories", trajs)
        if self.segment_length < 1:
            raise PreconditionError("segment_length must be positive")
        ids = [t.object_id for t in trajs]
        if len(set(ids)) != len(ids):
            raise DataError("object ids are not unique within the corpus")
        for t in trajs:
            if len(t) != self.segment_length:
                raise DataError(
                    f"trajectory {t.object_id!r} has {len(t)} frames, "
                    f"expected {self.segment_length}"
                )

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    @property
    def object_ids(self) -> list[str]:
        return [t.object_id for t in self.trajectories]

    @property
    def positions(self) -> np.ndarray:
        """Array of shape ``(n, segment_length, 2)``."""
        if not self.trajectories:
            return np.zeros((0, self.segment_length, 2))
        return np.stack([t.xy for t in self.trajectories])

    @property
    def x_matrix(self) -> np.ndarray:
        return self.positions[:, :, 0]

    @property
    def y_matrix(self) -> np.ndarray:
        return self.positions[:, :, 1]


@dataclass(frozen=True)
class SegmentedCorpus:
    before: TrajectoryCorpus
    after: TrajectoryCorpus

    def __post_init__(self) -> None:
        if self.before.object_ids != self.after.object_ids:
            raise DataError("before/after corpora disagree on object ids")
        if self.before.segment_length != self.after.segment_length:
            raise DataError("before/after corpora have different segment lengths")

    @property
    def object_ids(self) -> list[str]:
        return self.before.object_ids


# --------------------------------------------------------------------------
# CSV I/O


def load_corpus(
    path: str | Path, schema: Mapping[str, str] | None = None
) -> list[Trajectory]:
    """Read a trajectory CSV.

    Parameters
    ----------
    path:
        CSV with a mandatory header row. Comma-delimited, ``.`` decimal point,
        UTF-8, LF or CRLF line endings.
    schema:
        Optional mapping from logical column name (``object_id``, ``frame``,
        ``x``, ``y``, ``fluorescence``) to the header name used in the file.

    Returns
    -------
    list of Trajectory
        One per distinct object id, ordered by :func:`natural_key` of the id,
        points sorted by frame. Row order in the file is irrelevant.
    """
    names = {c: c for c in COLUMNS}
    if schema:
        unknown = set(schema) - set(COLUMNS)
        if unknown:
            raise ParseError(f"unknown schema keys: {sorted(unknown)}")
        names.update(schema)

    rows: dict[str, list[tuple[int, float, float, float]]] = {}
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("missing header row", line=1) from None
        header = [h.strip() for h in header]
        col = {}
        for key in REQUIRED_COLUMNS:
            try:
                col[key] = header.index(names[key])
            except ValueError:
                raise ParseError(f"header lacks column {names[key]!r}", line=1) from None
        fluo_idx = header.index(names["fluorescence"]) if names["fluorescence"] in header else None
        has_fluo = fluo_idx is not None

        for row in reader:
            lineno = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, got {len(row)}", line=lineno
                )
            oid = row[col["object_id"]].strip()
            if not oid:
                raise ParseError("empty object_id", line=lineno)
            try:
                frame = int(row[col["frame"]])
                x = float(row[col["x"]])
                y = float(row[col["y"]])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if frame < 0:
                raise ParseError("negative frame index", line=lineno)
            if not (math.isfinite(x) and math.isfinite(y)):
                raise DataError(f"line {lineno}: non-finite coordinate for object {oid!r}")
            fl = math.nan
            if has_fluo:
                raw = row[fluo_idx].strip()
                if raw:
                    try:
                        fl = float(raw)
                    except ValueError as exc:
                        raise ParseError(str(exc), line=lineno) from None
                    if not math.isfinite(fl) or fl < 0:
                        raise DataError(f"line {lineno}: invalid fluorescence {raw!r}")
            rows.setdefault(oid, []).append((frame, x, y, fl))

    out = []
    for oid in sorted(rows, key=natural_key):
        pts = sorted(rows[oid], key=lambda r: r[0])
        arr = np.array(pts, dtype=np.float64)
        frames = np.array([p[0] for p in pts], dtype=np.int64)
        dup = np.flatnonzero(np.diff(frames) == 0)
        if dup.size:
            raise DataError(f"duplicate (object_id, frame) = ({oid!r}, {frames[dup[0]]})")
        out.append(Trajectory(oid, frames, arr[:, 1:3], arr[:, 3] if has_fluo else None))
    return out


def write_corpus(trajectories: Iterable[Trajectory], path: str | Path) -> None:
    trajectories = list(trajectories)
    has_fluo = any(t.fluorescence is not None for t in trajectories)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS if has_fluo else REQUIRED_COLUMNS)
        for t in trajectories:
            for i in range(len(t)):
                row = [t.object_id, int(t.frames[i]), format_float(t.xy[i, 0]), format_float(t.xy[i, 1])]
                if has_fluo:
                    f = math.nan if t.fluorescence is None else t.fluorescence[i]
                    row.append("" if math.isnan(f) else format_float(f))
                w.writerow(row)


# --------------------------------------------------------------------------
# preprocessing


def filter_min_length(trajectories: Iterable[Trajectory], min_frames: int) -> list[Trajectory]:
    if min_frames < 1:
        raise PreconditionError("min_frames must be >= 1")
    return [t for t in trajectories if len(t) >= min_frames]


def split_at_event(trajectory: Trajectory, event_frame: int) -> tuple[Trajectory, Trajectory]:
    """Split into points with ``frame < event_frame`` and ``frame >= event_frame``."""
    mask = trajectory.frames < event_frame
    n_before = int(mask.sum())
    if n_before == 0 or n_before == len(trajectory):
        side = "before" if n_before == 0 else "after"
        raise SplitError(
            f"trajectory {trajectory.object_id!r} has no points {side} event frame {event_frame}"
        )
    return trajectory.take(slice(0, n_before)), trajectory.take(slice(n_before, None))


def truncate_uniform(
    trajectories: Iterable[Trajectory], length: int, *, from_end: bool = False
) -> TrajectoryCorpus:
    """Cut every trajectory to ``length`` points.

    The first ``length`` points are kept; with ``from_end=True`` the last
    ``length`` are kept instead (used for the pre-event segment so that it
    ends right before the event).
    """
    if length < 1:
        raise PreconditionError("length must be positive")
    kept = []
    for t in trajectories:
        if len(t) < length:
            raise PreconditionError(
                f"trajectory {t.object_id!r} has {len(t)} points, fewer than {length}"
            )
        kept.append(t.take(slice(len(t) - length, None) if from_end else slice(0, length)))
    return TrajectoryCorpus(tuple(kept), length)


def max_step_displacement(trajectory: Trajectory) -> float:
    if len(trajectory) < 2:
        return 0.0
    return float(np.max(np.linalg.norm(np.diff(trajectory.xy, axis=0), axis=1)))


@dataclass
class PreprocessReport:
    n_input: int = 0
    n_short: int = 0
    n_split_failed: int = 0
    n_insufficient_coverage: int = 0
    n_max_step: int = 0
    n_kept: int = 0
    excluded: dict[str, str] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "n_input": self.n_input,
            "n_short": self.n_short,
            "n_split_failed": self.n_split_failed,
            "n_insufficient_coverage": self.n_insufficient_coverage,
            "n_max_step": self.n_max_step,
            "n_kept": self.n_kept,
        }


def segment_corpus(
    trajectories: Sequence[Trajectory],
    event_frame: int,
    segment_length: int,
    *,
    min_frames: int | None = None,
    max_step: float | None = None,
) -> tuple[SegmentedCorpus, PreprocessReport]:
    """Run the full normalization: length filter, event split, truncation.

    The pre-event segment keeps the ``segment_length`` points immediately
    before ``event_frame``; the post-event segment keeps the first
    ``segment_length`` points at or after it. Tracks without enough points on
    either side are dropped, so ``min_frames`` defaults to ``2 * segment_length``.
    ``max_step`` optionally drops tracks whose largest frame-to-frame
    displacement in either segment exceeds the threshold.
    """
    if segment_length < 1:
        raise PreconditionError("segment_length must be positive")
    if min_frames is None:
        min_frames = 2 * segment_length
    report = PreprocessReport(n_input=len(trajectories))

    long_enough = filter_min_length(trajectories, min_frames)
    report.n_short = len(trajectories) - len(long_enough)
    for t in trajectories:
        if len(t) < min_frames:
            report.excluded[t.object_id] = "short"

    befores, afters = [], []
    for t in long_enough:
        try:
            b, a = split_at_event(t, event_frame)
        except SplitError as exc:
            logger.info("discarding: %s", exc)
            report.n_split_failed += 1
            report.excluded[t.object_id] = "split"
            continue
        if len(b) < segment_length or len(a) < segment_length:
            report.n_insufficient_coverage += 1
            report.excluded[t.object_id] = "coverage"
            continue
        befores.append(b)
        afters.append(a)

    before = truncate_uniform(befores, segment_length, from_end=True)
    after = truncate_uniform(afters, segment_length)

    if max_step is not None:
        keep = [
            i
            for i, (b, a) in enumerate(zip(before, after))
            if max(max_step_displacement(b), max_step_displacement(a)) <= max_step
        ]
        for i in sorted(set(range(len(before))) - set(keep)):
            report.excluded[before.trajectories[i].object_id] = "max_step"
        report.n_max_step = len(before) - len(keep)
        before = TrajectoryCorpus(tuple(before.trajectories[i] for i in keep), segment_length)
        after = TrajectoryCorpus(tuple(after.trajectories[i] for i in keep), segment_length)

    report.n_kept = len(before)
    return SegmentedCorpus(before, after), report
