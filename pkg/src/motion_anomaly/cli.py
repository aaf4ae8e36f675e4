"""Command-line entry point: ``detect``, ``synth`` and ``eval``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import synth
from .errors import ConfigError
from .evaluation import write_metrics_csv
from .pipeline import PipelineConfig, evaluate_directory, parse_config, run_sequence


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="motion-anomaly", description="Motion anomaly detection in dash-cam flow sequences.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="score one sequence directory")
    d.add_argument("--input", required=True, type=Path, help="directory of frames and/or .flo files")
    d.add_argument("--output", required=True, type=Path)
    d.add_argument("--config", type=Path, help="key = value configuration file")
    d.add_argument("--flow", choices=["files", "hs"], help="flow source (overrides the config)")
    d.add_argument("--eval", action="store_true", help="require masks/ and report AUCs")

    s = sub.add_parser("synth", help="write synthetic sequences")
    s.add_argument("--suite", action="store_true", required=True, help="the nine-scene standard suite")
    s.add_argument("--output", required=True, type=Path)
    s.add_argument("--frames", type=int, help="truncate every scene to this many frames")
    s.add_argument("--only", nargs="+", metavar="NAME", help="write only these scenes")

    e = sub.add_parser("eval", help="pixel-wise AUC of exported maps against masks")
    e.add_argument("--scores", required=True, type=Path, help="detect output directory or a directory of PGM maps")
    e.add_argument("--masks", required=True, type=Path)
    e.add_argument("--csv", required=True, type=Path)
    return p


def _detect(args) -> int:
    config = parse_config(args.config) if args.config else PipelineConfig()
    if args.flow:
        config = replace(config, flow_source="files" if args.flow == "files" else "horn_schunck")
    if args.eval and not (args.input / "masks").is_dir():
        raise FileNotFoundError(f"--eval needs {args.input / 'masks'}")
    report = run_sequence(args.input, config, args.output)
    print(f"{report.name}: {len(report.scored_frames)} frames scored, {report.seconds_per_frame:.3f} s/frame")
    if args.eval and report.metrics is None:
        raise ValueError(f"{report.name}: masks need both anomalous and normal pixels")
    if report.metrics:
        aucs = " ".join(f"{k}={v:.4f}" for k, v in report.metrics.items() if k.startswith("auc_"))
        print(aucs)
    return 0


def _synth(args) -> int:
    specs = synth.standard_suite()
    if args.only:
        unknown = set(args.only) - {s.name for s in specs}
        if unknown:
            raise ValueError(f"unknown scene(s): {', '.join(sorted(unknown))}")
        specs = [s for s in specs if s.name in args.only]
    for spec in specs:
        if args.frames:
            spec = synth.with_frames(spec, args.frames)
        synth.write_sequence(spec, args.output / spec.name)
        print(f"wrote {args.output / spec.name} ({spec.frames} frames)")
    return 0


def _eval(args) -> int:
    row = evaluate_directory(args.scores, args.masks)
    write_metrics_csv(args.csv, [row])
    print(" ".join(f"{k}={v:.4f}" for k, v in row.items() if k.startswith("auc_")))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handler = {"detect": _detect, "synth": _synth, "eval": _eval}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
