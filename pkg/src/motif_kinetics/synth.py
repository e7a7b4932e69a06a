"""Synthetic trajectory corpora with planted motion motifs.

Five motif families are available. ``noise_sigma`` is a per-frame isotropic
Gaussian perturbation in pixels; where it enters depends on the motif:

``immotile``
    fixed point plus positional jitter.
``random_walk``
    cumulative Gaussian steps of scale ``step_sigma``, plus positional jitter.
``circular``
    rotation by ``angular_step`` about a fixed centre at distance ``radius``;
    the jitter is added inside the recursion
    ``x_t = c + R(w) (x_{t-1} - c) + e_t``.
``twirl``
    a circle of ``radius`` whose centre drifts by ``drift`` per frame
    (a looping, helix-like path). The jitter perturbs the rotating part of
    the velocity: ``u_t = R(w) u_{t-1} + e_t``, ``x_t = x_{t-1} + drift + u_t``.
``linear``
    constant velocity ``drift``; the jitter perturbs the velocity,
    ``v_t = v_{t-1} + e_t``, ``x_t = x_{t-1} + v_t``.

A motif can start late: frames before ``onset`` are immotile jitter of scale
``lead_in_sigma`` around the start point, mimicking objects that only begin
to move after a stimulus.

The kinematic values in the bundled acceptance corpus are chosen for this
package; no measured speeds or radii exist for the biological motifs.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError, ParseError, PreconditionError
from .rng import SYNTH_STREAM, make_rng
from .trajectory import Trajectory, TrajectoryCorpus, natural_key, write_corpus

MOTIFS = ("circular", "twirl", "linear", "immotile", "random_walk")


@dataclass(frozen=True)
class MotifSpec:
    motif: str
    count: int
    length: int
    noise_sigma: float = 0.0
    radius: float = 10.0
    angular_step: float = math.pi / 8
    drift: tuple[float, float] = (1.0, 0.0)
    step_sigma: float = 1.0
    onset: int = 0
    lead_in_sigma: float = 0.0
    field_size: float = 512.0

    def __post_init__(self) -> None:
        if self.motif not in MOTIFS:
            raise ConfigError(f"unknown motif {self.motif!r}; expected one of {MOTIFS}")
        if int(self.count) != self.count or self.count < 1:
            raise ConfigError("count must be a positive integer")
        if int(self.length) != self.length or self.length < 1:
            raise ConfigError("length must be a positive integer")
        if not (0 <= self.onset < self.length):
            raise ConfigError("onset must lie in [0, length)")
        if self.noise_sigma < 0 or self.lead_in_sigma < 0 or self.step_sigma < 0:
            raise ConfigError("noise scales must be non-negative")
        if self.motif in ("circular", "twirl"):
            if not self.radius > 0:
                raise ConfigError(f"{self.motif} motif needs radius > 0")
            if not (-math.pi < self.angular_step <= math.pi):
                raise ConfigError("angular_step must lie in (-pi, pi]")
        drift = tuple(float(v) for v in self.drift)
        if len(drift) != 2:
            raise ConfigError("drift must be a 2-vector")
        object.__setattr__(self, "drift", drift)


@dataclass(frozen=True)
class LabeledCorpus:
    corpus: TrajectoryCorpus
    truth: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if set(self.truth) != set(self.corpus.object_ids):
            raise DataError("truth map must cover every object exactly once")

    def truth_labels(self, object_ids: Sequence[str] | None = None) -> list[str]:
        ids = self.corpus.object_ids if object_ids is None else object_ids
        return [self.truth[i] for i in ids]


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _motion(spec: MotifSpec, start: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` positions of the motif, the first equal to ``start`` (+ jitter)."""
    sigma = spec.noise_sigma
    out = np.empty((n, 2))
    motif = spec.motif
    if motif == "immotile":
        out[:] = start
        out += rng.normal(0.0, sigma, (n, 2)) if sigma > 0 else 0.0
        return out
    if motif == "random_walk":
        steps = rng.normal(0.0, spec.step_sigma, (n, 2)) if spec.step_sigma > 0 else np.zeros((n, 2))
        steps[0] = 0.0
        out[:] = start + np.cumsum(steps, axis=0)
        if sigma > 0:
            out += rng.normal(0.0, sigma, (n, 2))
        return out

    noise = rng.normal(0.0, sigma, (n, 2)) if sigma > 0 else np.zeros((n, 2))
    rot = rotation(spec.angular_step)
    out[0] = start
    if motif == "circular":
        phase = rng.uniform(0.0, 2 * math.pi)
        centre = start - spec.radius * np.array([math.cos(phase), math.sin(phase)])
        for t in range(1, n):
            out[t] = centre + rot @ (out[t - 1] - centre) + noise[t]
    elif motif == "twirl":
        phase = rng.uniform(0.0, 2 * math.pi)
        drift = np.asarray(spec.drift)
        # chord length that traces a circle of `radius` at this angular step
        chord = 2 * spec.radius * abs(math.sin(spec.angular_step / 2))
        u = chord * np.array([math.cos(phase), math.sin(phase)])
        for t in range(1, n):
            u = rot @ u + noise[t]
            out[t] = out[t - 1] + drift + u
    elif motif == "linear":
        v = np.asarray(spec.drift, dtype=float)
        for t in range(1, n):
            v = v + noise[t]
            out[t] = out[t - 1] + v
    return out


def _generate_spec(spec: MotifSpec, index: int, seed: int) -> list[Trajectory]:
    rng = make_rng(seed, SYNTH_STREAM, index)
    margin = 0.1 * spec.field_size
    trajs = []
    for rep in range(spec.count):
        start = rng.uniform(margin, spec.field_size - margin, 2)
        xy = np.empty((spec.length, 2))
        if spec.onset > 0:
            lead = np.repeat(start[None, :], spec.onset, axis=0)
            if spec.lead_in_sigma > 0:
                lead = lead + rng.normal(0.0, spec.lead_in_sigma, lead.shape)
            xy[: spec.onset] = lead
        xy[spec.onset :] = _motion(spec, start, spec.length - spec.onset, rng)
        oid = f"s{index:02d}-{spec.motif}-{rep:03d}"
        trajs.append(Trajectory(oid, np.arange(spec.length), xy))
    return trajs


def generate(specs: Sequence[MotifSpec], seed: int = 0, *, workers: int = 1) -> LabeledCorpus:
    """Deterministic labeled corpus; object ids encode spec and replicate index."""
    specs = list(specs)
    if not specs:
        raise PreconditionError("at least one motif spec is required")
    lengths = {s.length for s in specs}
    if len(lengths) != 1:
        raise ConfigError("all specs must share one length")
    jobs = list(enumerate(specs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda j: _generate_spec(j[1], j[0], seed), jobs))
    else:
        parts = [_generate_spec(s, i, seed) for i, s in jobs]
    trajs = [t for part in parts for t in part]
    truth = {t.object_id: spec.motif for part, spec in zip(parts, specs) for t in part}
    return LabeledCorpus(TrajectoryCorpus(tuple(trajs), lengths.pop()), truth)


# --------------------------------------------------------------------------
# config files


@dataclass(frozen=True)
class SynthConfig:
    specs: tuple[MotifSpec, ...]
    event_frame: int | None = None
    seed: int = 0


def _spec_from_dict(d: Mapping, length: int | None) -> MotifSpec:
    known = {f.name for f in fields(MotifSpec)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown motif spec keys: {sorted(unknown)}")
    d = dict(d)
    if "length" not in d:
        if length is None:
            raise ConfigError("motif spec lacks a length")
        d["length"] = length
    if "drift" in d:
        d["drift"] = tuple(d["drift"])
    return MotifSpec(**d)


def load_synth_config(path: str | Path | None = None) -> SynthConfig:
    """Read a JSON corpus description; ``None`` loads the bundled acceptance corpus."""
    try:
        if path is None:
            text = resources.files("motif_kinetics.data").joinpath("acceptance_corpus.json").read_text()
        else:
            text = Path(path).read_text(encoding="utf-8")
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid synth config: {exc}") from None
    length = raw.get("length")
    specs = tuple(_spec_from_dict(d, length) for d in raw.get("families", []))
    return SynthConfig(specs, raw.get("event_frame"), int(raw.get("seed", 0)))


def write_truth(corpus: LabeledCorpus, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["object_id", "motif"])
        for oid in corpus.corpus.object_ids:
            w.writerow([oid, corpus.truth[oid]])


def read_truth(path: str | Path) -> dict[str, str]:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["object_id", "motif"]:
            raise ParseError("truth header must be object_id,motif", line=1)
        out = {}
        for row in reader:
            if row:
                if len(row) != 2:
                    raise ParseError("expected 2 fields", line=reader.line_num)
                out[row[0]] = row[1]
    return dict(sorted(out.items(), key=lambda kv: natural_key(kv[0])))


def write_labeled_corpus(corpus: LabeledCorpus, out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    traj_path, truth_path = out_dir / "trajectories.csv", out_dir / "truth.csv"
    write_corpus(corpus.corpus, traj_path)
    write_truth(corpus, truth_path)
    return traj_path, truth_path


# --------------------------------------------------------------------------
# evaluation


def _comb2(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(x * (x - 1) / 2))


def adjusted_rand_index(truth: Sequence, predicted: Sequence) -> float:
    """Chance-corrected pair-counting agreement of two partitions.

    Labels may be any hashable values; only the induced partitions matter.
    """
    if len(truth) != len(predicted):
        raise PreconditionError(
            f"label sequences differ in length ({len(truth)} vs {len(predicted)})"
        )
    n = len(truth)
    if n < 2:
        return 1.0
    _, t_idx = np.unique(np.asarray(truth, dtype=object).astype(str), return_inverse=True)
    _, p_idx = np.unique(np.asarray(predicted, dtype=object).astype(str), return_inverse=True)
    table = np.zeros((t_idx.max() + 1, p_idx.max() + 1), dtype=np.int64)
    np.add.at(table, (t_idx, p_idx), 1)
    index = _comb2(table)
    sum_rows = _comb2(table.sum(axis=1))
    sum_cols = _comb2(table.sum(axis=0))
    total = n * (n - 1) / 2
    expected = sum_rows * sum_cols / total
    max_index = (sum_rows + sum_cols) / 2
    if max_index == expected:
        # both partitions trivial in the same way (all singletons / one block)
        return 1.0
    return float((index - expected) / (max_index - expected))
