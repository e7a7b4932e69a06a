"""End-to-end run: ingest, segment, featurize, kernel, cluster, report.

The pre- and post-event segments are analysed independently. Every run
writes into a staging directory that is renamed into place only after all
stages succeed, so a failed run leaves no partial outputs behind.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
import shutil
import tempfile
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from . import __version__
from .ar import ArConfig, featurize_corpus, write_features
from .errors import ConfigError, DataError, MotifKineticsError, StorageError
from .plotting import PlotStyle, plot_clusters, plot_kernel
from .rng import check_seed
from .similarity import KernelConfig, NormMode, rbf_kernel, write_kernel
from .spectral import (
    ClusterConfig,
    spectral_cluster,
    write_assignment,
    write_eigenvalues,
    write_embedding,
)
from .trajectory import TrajectoryCorpus, load_corpus, segment_corpus

logger = logging.getLogger(__name__)

SEED_ENV = "MOTIF_KINETICS_SEED"
SEGMENTS = ("before", "after")


@dataclass(frozen=True)
class PipelineConfig:
    input: str = ""
    out: str = ""
    event_frame: int | None = None
    segment_length: int = 150
    order: int = 5
    gamma: float = 0.1
    norm_mode: str = "squared"
    k: int = 5
    seed: int = 0
    restarts: int = 10
    max_step: float | None = None
    min_frames: int | None = None
    workers: int = 1

    def validate(self) -> "PipelineConfig":
        if not self.input:
            raise ConfigError("an input file is required")
        if not self.out:
            raise ConfigError("an output directory is required")
        if self.event_frame is None:
            raise ConfigError("event_frame is required")
        if self.segment_length < 1:
            raise ConfigError("segment_length must be positive")
        if self.order >= self.segment_length:
            raise ConfigError("AR order must be smaller than segment_length")
        if self.max_step is not None and not self.max_step > 0:
            raise ConfigError("max_step must be positive")
        if self.min_frames is not None and self.min_frames < 1:
            raise ConfigError("min_frames must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        # constructing the stage configs runs their own checks
        self.ar_config, self.kernel_config, self.cluster_config  # noqa: B018
        return self

    @property
    def ar_config(self) -> ArConfig:
        return ArConfig(self.order)

    @property
    def kernel_config(self) -> KernelConfig:
        return KernelConfig(self.gamma, self.norm_mode)

    @property
    def cluster_config(self) -> ClusterConfig:
        return ClusterConfig(k=self.k, seed=self.seed, restarts=self.restarts)

    def snapshot(self) -> dict[str, Any]:
        # workers is excluded: outputs do not depend on it
        d = dataclasses.asdict(self)
        d.pop("workers")
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}
_INT_KEYS = {"event_frame", "segment_length", "order", "k", "seed", "restarts", "min_frames", "workers"}
_FLOAT_KEYS = {"gamma", "max_step"}


def coerce_option(key: str, value: Any) -> Any:
    """Convert a textual config value to the type of ``PipelineConfig.key``."""
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    if value is None:
        return None
    if isinstance(value, str):
        value = value.strip()
        if value.lower() in ("", "none", "null"):
            return None
    try:
        if key in _INT_KEYS:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if key in _FLOAT_KEYS:
            v = float(value)
            if not math.isfinite(v):
                raise ValueError(value)
            return v
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {key}: {value!r}") from None
    if key == "norm_mode":
        try:
            return NormMode(value).value
        except ValueError:
            raise ConfigError(f"invalid norm_mode {value!r}") from None
    return str(value)


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes equal underscores."""
    out: dict[str, Any] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise StorageError(f"cannot read config file {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = coerce_option(key, value)
    return out


def resolve_config(
    cli: Mapping[str, Any] | None = None,
    config_file: str | Path | None = None,
    environ: Mapping[str, str] | None = None,
) -> PipelineConfig:
    """Merge settings: CLI flags > config file > ``$MOTIF_KINETICS_SEED`` (seed only) > defaults."""
    environ = os.environ if environ is None else environ
    merged: dict[str, Any] = {}
    if environ.get(SEED_ENV, "").strip():
        merged["seed"] = coerce_option("seed", environ[SEED_ENV])
    if config_file is not None:
        merged.update(read_config_file(config_file))
    for key, value in (cli or {}).items():
        if value is not None:
            merged[key] = coerce_option(key, value)
    cfg = PipelineConfig(**merged)
    check_seed(cfg.seed)
    return cfg


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    config: dict[str, Any]
    input_digest: str
    counts: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    outputs: dict[str, str] = field(default_factory=dict)
    version: str = __version__
    timings: dict[str, float] = field(default_factory=dict)

    def to_json(self, include_timings: bool = False) -> str:
        doc = {
            "tool": "motif-kinetics",
            "version": self.version,
            "config": self.config,
            "input_sha256": self.input_digest,
            "counts": self.counts,
            "notes": self.notes,
            "outputs": self.outputs,
        }
        if include_timings:
            doc["timings_s"] = self.timings
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_manifest(path: str | Path) -> tuple[PipelineConfig, str]:
    """Config and input digest recorded by an earlier run."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise StorageError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest {path} is not valid JSON: {exc}") from None
    cfg = {k: coerce_option(k, v) for k, v in doc.get("config", {}).items()}
    return PipelineConfig(**cfg), doc.get("input_sha256", "")


class _Stages:
    def __init__(self) -> None:
        self.timings: dict[str, float] = {}

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        except MotifKineticsError as exc:
            if exc.stage is None:
                exc.stage = name
            raise
        except OSError as exc:
            raise StorageError(f"{exc}", stage=name) from exc
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _analyse_segment(
    name: str, corpus: TrajectoryCorpus, config: PipelineConfig, seg_dir: Path, stages: _Stages
) -> dict[str, Any]:
    seg_dir.mkdir()
    with stages.stage(f"fit:{name}"):
        features = featurize_corpus(corpus, config.ar_config, workers=config.workers)
        write_features(features, seg_dir / "features.csv")
    with stages.stage(f"kernel:{name}"):
        kernel = rbf_kernel(features, config.kernel_config)
        write_kernel(kernel, seg_dir / "kernel.csv")
    with stages.stage(f"cluster:{name}"):
        assignment = spectral_cluster(kernel, config.cluster_config, workers=config.workers)
        write_assignment(assignment, seg_dir / "labels.csv")
        write_embedding(assignment.embedding, assignment.object_ids, seg_dir / "embedding.csv")
        write_eigenvalues(assignment.embedding.eigenvalues, seg_dir / "eigenvalues.txt")
    with stages.stage(f"plot:{name}"):
        _write(seg_dir / "kernel_heatmap.svg", plot_kernel(kernel, f"RBF kernel ({name})"))
        _write(
            seg_dir / "clusters.svg",
            plot_clusters(corpus, assignment, PlotStyle.SMALL_MULTIPLES, f"clusters ({name})"),
        )
        _write(
            seg_dir / "aggregate.svg",
            plot_clusters(corpus, assignment, PlotStyle.AGGREGATE, f"all tracks ({name})"),
        )
    present = sorted(assignment.clusters)
    empty = [c for c in range(config.k) if c not in present]
    return {
        "trajectories": len(corpus),
        "features": list(features.shape),
        "kernel": list(kernel.values.shape),
        "clusters": len(present),
        "cluster_sizes": [len(assignment.clusters[c]) for c in present],
        "empty_clusters": empty,
        "inertia": assignment.inertia,
    }


def _prepare_out(out: Path) -> Path:
    if out.exists():
        if not out.is_dir():
            raise ConfigError(f"output path {out} exists and is not a directory")
        if any(out.iterdir()) and not (out / "manifest.json").exists():
            raise ConfigError(f"output directory {out} is not empty and holds no previous run")
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out.name}.staging-", dir=out.parent))
    # mkdtemp creates 0700; give the final directory the usual umask-based mode
    umask = os.umask(0)
    os.umask(umask)
    staging.chmod(0o777 & ~umask)
    return staging


def run_pipeline(config: PipelineConfig, *, record_timings: bool = False) -> RunManifest:
    """Run every stage and write the report directory ``config.out``.

    Layout::

        out/manifest.json
        out/{before,after}/features.csv, kernel.csv, labels.csv,
                           embedding.csv, eigenvalues.txt,
                           kernel_heatmap.svg, clusters.svg, aggregate.svg

    ``record_timings`` adds wall-clock stage timings to ``manifest.json``;
    they are always available on the returned manifest. They are left out of
    the file by default because they would make repeated runs differ.
    """
    config.validate()
    stages = _Stages()
    out = Path(config.out)
    with stages.stage("setup"):
        staging = _prepare_out(out)
    try:
        with stages.stage("ingest"):
            digest = file_digest(config.input)
            trajectories = load_corpus(config.input)
        manifest = RunManifest(config.snapshot(), digest)
        manifest.counts["ingest"] = {"trajectories": len(trajectories)}

        with stages.stage("preprocess"):
            segmented, report = segment_corpus(
                trajectories,
                config.event_frame,
                config.segment_length,
                min_frames=config.min_frames,
                max_step=config.max_step,
            )
            if report.n_kept < max(2, config.k):
                raise DataError(
                    f"{report.n_kept} trajectories survive preprocessing "
                    f"(event_frame={config.event_frame}, segment_length={config.segment_length}); "
                    f"need at least {max(2, config.k)}"
                )
        manifest.counts["preprocess"] = report.as_dict()
        manifest.counts["excluded"] = dict(sorted(report.excluded.items()))
        if config.max_step is not None:
            manifest.notes.append(
                f"max_step={config.max_step} excluded {report.n_max_step} trajectories"
            )

        for name in SEGMENTS:
            corpus = getattr(segmented, name)
            stats = _analyse_segment(name, corpus, config, staging / name, stages)
            manifest.counts[name] = stats
            if stats["empty_clusters"]:
                manifest.notes.append(
                    f"{name}: clusters {stats['empty_clusters']} are empty; their panels are omitted"
                )

        with stages.stage("write"):
            for path in sorted(p for p in staging.rglob("*") if p.is_file()):
                manifest.outputs[path.relative_to(staging).as_posix()] = file_digest(path)
            manifest.timings = dict(stages.timings)
            _write(staging / "manifest.json", manifest.to_json(record_timings))
            if out.exists():
                shutil.rmtree(out)
            os.replace(staging, out)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    manifest.timings = dict(stages.timings)
    for name, secs in manifest.timings.items():
        logger.info("stage %-16s %.3fs", name, secs)
    return manifest
