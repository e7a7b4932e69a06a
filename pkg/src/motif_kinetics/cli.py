"""Command-line interface.

Every stage can run on its own, reading the previous stage's CSV::

    motif-kinetics synth      --out data/
    motif-kinetics preprocess --input data/trajectories.csv --event-frame 150 --out seg/
    motif-kinetics fit        --input seg/after.csv --out after_features.csv
    motif-kinetics kernel     --input after_features.csv --out after_kernel.csv
    motif-kinetics cluster    --input after_kernel.csv --out after_clusters/
    motif-kinetics plot       --input seg/after.csv --labels after_clusters/labels.csv --out after.svg
    motif-kinetics pipeline   --input data/trajectories.csv --event-frame 150 --out run/

Exit codes: 0 success, 2 usage/config, 3 data/parse, 4 numerical, 5 I/O.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .ar import featurize_corpus, read_features, write_features
from .errors import ConfigError, DataError, MotifKineticsError, StorageError
from .pipeline import (
    SEED_ENV,
    PipelineConfig,
    coerce_option,
    file_digest,
    load_manifest,
    read_config_file,
    resolve_config,
    run_pipeline,
)
from .plotting import plot_clusters, plot_kernel
from .similarity import read_kernel, rbf_kernel, write_kernel
from .spectral import (
    spectral_cluster,
    read_assignment,
    write_assignment,
    write_eigenvalues,
    write_embedding,
)
from .synth import generate, load_synth_config, write_labeled_corpus
from .trajectory import TrajectoryCorpus, load_corpus, segment_corpus, write_corpus

# option name -> (flags, argparse kwargs)
_OPTIONS = {
    "input": (("--input", "-i"), {"help": "input file"}),
    "out": (("--out", "-o"), {"help": "output file or directory"}),
    "event_frame": (("--event-frame",), {"type": int, "help": "first frame after the stimulus"}),
    "segment_length": (("--segment-length",), {"type": int, "help": "frames per segment (default 150)"}),
    "min_frames": (("--min-frames",), {"type": int, "help": "discard tracks shorter than this (default 2*segment length)"}),
    "max_step": (("--max-step",), {"type": float, "help": "discard tracks with a larger frame-to-frame jump (off by default)"}),
    "order": (("--order",), {"type": int, "help": "AR order (default 5)"}),
    "gamma": (("--gamma",), {"type": float, "help": "RBF width (default 0.1)"}),
    "norm_mode": (("--norm-mode",), {"choices": ["squared", "plain"], "help": "distance in the kernel exponent (default squared)"}),
    "k": (("--k",), {"type": int, "help": "number of clusters (default 5)"}),
    "seed": (("--seed",), {"type": int, "help": "RNG seed (default 0, or $MOTIF_KINETICS_SEED)"}),
    "restarts": (("--restarts",), {"type": int, "help": "k-means restarts (default 10)"}),
    "workers": (("--workers",), {"type": int, "help": "threads for per-object and per-restart work"}),
}


def _add(parser: argparse.ArgumentParser, *names: str) -> None:
    for name in names:
        flags, kw = _OPTIONS[name]
        parser.add_argument(*flags, dest=name, default=None, **kw)
    parser.add_argument("--config", default=None, help="'key = value' config file")


def _settings(args: argparse.Namespace, *names: str) -> PipelineConfig:
    cli = {n: getattr(args, n) for n in names}
    return resolve_config(cli, args.config)


def _require(cfg: PipelineConfig, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) in (None, "")]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _uniform_corpus(path: str) -> TrajectoryCorpus:
    trajs = load_corpus(path)
    length = len(trajs[0]) if trajs else 1
    return TrajectoryCorpus(tuple(trajs), length)


def cmd_synth(args: argparse.Namespace) -> int:
    if not args.out:
        raise ConfigError("missing required option --out")
    synth_cfg = load_synth_config(args.spec)
    # CLI > config file > $MOTIF_KINETICS_SEED > seed stored in the corpus description
    seed = synth_cfg.seed
    if os.environ.get(SEED_ENV, "").strip():
        seed = coerce_option("seed", os.environ[SEED_ENV])
    if args.config:
        seed = read_config_file(args.config).get("seed", seed)
    if args.seed is not None:
        seed = args.seed
    corpus = generate(synth_cfg.specs, seed, workers=args.workers or 1)
    traj, truth = write_labeled_corpus(corpus, args.out)
    print(f"wrote {len(corpus.corpus)} trajectories to {traj} and {truth}")
    if synth_cfg.event_frame is not None:
        print(f"event frame: {synth_cfg.event_frame}")
    return 0


def cmd_preprocess(args: argparse.Namespace) -> int:
    cfg = _settings(args, "input", "out", "event_frame", "segment_length", "min_frames", "max_step")
    _require(cfg, "input", "out", "event_frame")
    segmented, report = segment_corpus(
        load_corpus(cfg.input),
        cfg.event_frame,
        cfg.segment_length,
        min_frames=cfg.min_frames,
        max_step=cfg.max_step,
    )
    if report.n_kept == 0:
        raise DataError(f"no trajectory covers {cfg.segment_length} frames on both sides of frame {cfg.event_frame}")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(segmented.before, out / "before.csv")
    write_corpus(segmented.after, out / "after.csv")
    print(" ".join(f"{k}={v}" for k, v in report.as_dict().items()))
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    cfg = _settings(args, "input", "out", "order", "workers")
    _require(cfg, "input", "out")
    features = featurize_corpus(_uniform_corpus(cfg.input), cfg.ar_config, workers=cfg.workers)
    write_features(features, cfg.out)
    print(f"features {features.shape[0]}x{features.shape[1]} -> {cfg.out}")
    return 0


def cmd_kernel(args: argparse.Namespace) -> int:
    cfg = _settings(args, "input", "out", "gamma", "norm_mode")
    _require(cfg, "input", "out")
    kernel = rbf_kernel(read_features(cfg.input), cfg.kernel_config)
    write_kernel(kernel, cfg.out)
    print(f"kernel {len(kernel)}x{len(kernel)} -> {cfg.out}")
    return 0


def cmd_cluster(args: argparse.Namespace) -> int:
    cfg = _settings(args, "input", "out", "k", "seed", "restarts", "workers")
    _require(cfg, "input", "out")
    result = spectral_cluster(read_kernel(cfg.input), cfg.cluster_config, workers=cfg.workers)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_assignment(result, out / "labels.csv")
    write_embedding(result.embedding, result.object_ids, out / "embedding.csv")
    write_eigenvalues(result.embedding.eigenvalues, out / "eigenvalues.txt")
    sizes = {c: len(m) for c, m in result.clusters.items()}
    print(f"clusters {sizes} inertia={result.inertia:.6g} -> {out}")
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    if not args.out:
        raise ConfigError("missing required option --out")
    if args.style == "heatmap":
        if not args.kernel:
            raise ConfigError("--style heatmap needs --kernel")
        svg = plot_kernel(read_kernel(args.kernel), args.title or "")
    else:
        if not (args.input and args.labels):
            raise ConfigError(f"--style {args.style} needs --input and --labels")
        svg = plot_clusters(_uniform_corpus(args.input), read_assignment(args.labels), args.style, args.title or "")
    Path(args.out).write_text(svg, encoding="utf-8")
    print(f"wrote {args.out}")
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    names = list(_OPTIONS)
    if args.from_manifest:
        cfg, digest = load_manifest(args.from_manifest)
        overrides = {n: getattr(args, n) for n in names if getattr(args, n) is not None}
        if args.config:
            overrides = {**read_config_file(args.config), **overrides}
        cfg = resolve_config({**cfg.snapshot(), **overrides}, environ={})
        if "input" not in overrides and file_digest(cfg.input) != digest:
            raise ConfigError(f"input {cfg.input} no longer matches the manifest digest")
    else:
        cfg = _settings(args, *names)
    _require(cfg, "input", "out", "event_frame")
    manifest = run_pipeline(cfg, record_timings=args.record_timings)
    for seg in ("before", "after"):
        c = manifest.counts[seg]
        print(f"{seg}: {c['trajectories']} trajectories, {c['clusters']} clusters {c['cluster_sizes']}")
    print(f"outputs in {cfg.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motif-kinetics",
        description="Cluster object trajectories into motility phenotypes before and after a stimulus.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("--spec", default=None, help="JSON corpus description (default: bundled acceptance corpus)")
    _add(p, "out", "seed", "workers")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="filter, split at the event and truncate")
    _add(p, "input", "out", "event_frame", "segment_length", "min_frames", "max_step")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("fit", help="AR features for a segment CSV")
    _add(p, "input", "out", "order", "workers")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("kernel", help="RBF kernel from a feature CSV")
    _add(p, "input", "out", "gamma", "norm_mode")
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("cluster", help="spectral clustering of a kernel CSV")
    _add(p, "input", "out", "k", "seed", "restarts", "workers")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("plot", help="SVG figures")
    p.add_argument("--input", "-i", default=None, help="segment trajectory CSV")
    p.add_argument("--labels", default=None, help="labels CSV")
    p.add_argument("--kernel", default=None, help="kernel CSV (heatmap style)")
    p.add_argument("--style", choices=["small_multiples", "aggregate", "heatmap"], default="small_multiples")
    p.add_argument("--title", default=None)
    p.add_argument("--out", "-o", default=None, help="output SVG")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("pipeline", help="run every stage for both segments")
    _add(p, *_OPTIONS)
    p.add_argument("--from-manifest", default=None, help="rerun with the config recorded in a manifest.json")
    p.add_argument("--record-timings", action="store_true", help="store stage timings in manifest.json")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except MotifKineticsError as exc:
        where = f" in stage {exc.stage}" if exc.stage else ""
        print(f"motif-kinetics: error{where}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"motif-kinetics: I/O error: {exc}", file=sys.stderr)
        return StorageError.exit_code


if __name__ == "__main__":
    sys.exit(main())
