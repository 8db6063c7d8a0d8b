"""Command-line front end: ``voxmotion run|bench|synth|eval``.

Exit codes: 0 success, 1 usage error, 2 data error. Every failure prints a
single diagnostic line to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import io
from .errors import InvalidConfig, InvalidSpec, ParseError, VoxMotionError
from .pipeline import DEFAULT_BOUNDS, PipelineConfig, benchmark, format_table, process_sequence
from .synth import SceneSpec, evaluate, generate_scene, street_scene

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str, count: Optional[int] = None) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if count is not None and len(vals) != count:
        raise argparse.ArgumentTypeError(f"expected {count} values, got {len(vals)}")
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one number")
    return vals


def _modes(text: str) -> list[str]:
    modes = [m.strip().lower() for m in text.split(",") if m.strip()]
    if not modes or any(m not in ("2d", "3d") for m in modes):
        raise argparse.ArgumentTypeError(f"modes must be 2d and/or 3d, got {text!r}")
    return modes


def _load_yaml(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ParseError(p, "file not found")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        line = getattr(getattr(exc, "problem_mark", None), "line", None)
        raise ParseError(p, "invalid YAML", line=None if line is None else line + 1) from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ParseError(p, "top level must be a mapping")
    return data


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="voxmotion", description="Label LiDAR echoes as static or dynamic.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def grid_options(p):
        p.add_argument("--config", help="YAML file with pipeline settings; flags override it")
        p.add_argument("--odometry", help="odometry CSV (default: odometry.csv in the input dir)")
        p.add_argument("--no-ego-comp", action="store_true", help="disable ego compensation")
        p.add_argument("--bounds", type=lambda s: _floats(s, 6),
                       help="XMIN,XMAX,YMIN,YMAX,ZMIN,ZMAX in meters")
        p.add_argument("--eps", type=float, help="2D range tolerance in meters")
        p.add_argument("--storage", choices=("sparse", "dense"), help="3D cell storage")

    run = sub.add_parser("run", help="label a sequence")
    run.add_argument("--input", required=True, help="frame directory or multi-frame file")
    run.add_argument("--output", required=True, help="directory for labeled frames")
    run.add_argument("--mode", choices=("2d", "3d"))
    run.add_argument("--voxel-size", type=float, dest="side_length")
    run.add_argument("--stride", type=int, dest="frame_stride",
                     help="experimental: compare every n-th frame")
    run.add_argument("--format", choices=("csv", "ply"), default="csv")
    run.add_argument("--stats", help="per-frame JSON lines (default OUTPUT/stats.jsonl)")
    grid_options(run)

    bench = sub.add_parser("bench", help="per-frame runtime per side length and backend")
    bench.add_argument("--input", required=True)
    bench.add_argument("--sizes", type=_floats, default=[0.3, 0.15, 0.1])
    bench.add_argument("--modes", type=_modes, default=["3d", "2d"])
    bench.add_argument("--report", help="markdown report, or JSON if the name ends in .json")
    grid_options(bench)

    synth = sub.add_parser("synth", help="render a synthetic scene with ground truth")
    synth.add_argument("--spec", required=True, help="YAML scene description")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--output", required=True)
    synth.add_argument("--format", choices=("csv", "ply"), default="csv")

    ev = sub.add_parser("eval", help="precision/recall/IoU of dynamic labels")
    ev.add_argument("--labels", required=True, help="output directory of 'run'")
    ev.add_argument("--truth", required=True, help="truth directory (or the synth output dir)")
    ev.add_argument("--warmup", type=int, default=2)
    ev.add_argument("--json", action="store_true", help="print metrics as JSON")
    return ap


def _pipeline_config(args) -> PipelineConfig:
    base = _load_yaml(args.config) if args.config else {}
    if "bounds" in base and isinstance(base["bounds"], (list, tuple)):
        base["bounds"] = tuple(base["bounds"])
    over = {k: getattr(args, k, None) for k in
            ("mode", "side_length", "bounds", "eps", "storage", "frame_stride")}
    base.update({k: v for k, v in over.items() if v is not None})
    if args.no_ego_comp:
        base["ego_compensation"] = False
    base.setdefault("bounds", DEFAULT_BOUNDS)
    return PipelineConfig.from_dict(base)


def _odometry(args, cfg: PipelineConfig):
    if not cfg.ego_compensation:
        return None
    if args.odometry:
        return io.read_odometry(args.odometry)
    default = Path(args.input) / io.ODOMETRY
    if Path(args.input).is_dir() and default.is_file():
        return io.read_odometry(default)
    logging.getLogger(__name__).info("no odometry given; ego compensation skipped")
    return None


def cmd_run(args) -> int:
    cfg = _pipeline_config(args)
    frames = io.read_point_cloud_sequence(args.input)
    odo = _odometry(args, cfg)
    labeled = process_sequence(frames, odo, cfg)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    by_id = {f.scan_id: f for f in frames}
    for lf in labeled:
        io.write_labeled_cloud(lf, by_id[lf.scan_id], out / f"labeled_{lf.scan_id:06d}.{args.format}")
    io.write_stats(labeled, args.stats or out / "stats.jsonl")
    ndyn = sum(lf.stats.dynamic_count for lf in labeled)
    print(f"labeled {len(labeled)} frames ({ndyn} dynamic echoes) into {out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _pipeline_config(args)
    frames = io.read_point_cloud_sequence(args.input)
    odo = _odometry(args, cfg)
    matrix = [(s, m) for s in args.sizes for m in args.modes]
    rows = benchmark(frames, matrix, base=cfg, odometry=odo)
    table = format_table(rows)
    print(table, end="")
    if args.report:
        path = Path(args.report)
        if path.suffix.lower() == ".json":
            path.write_text(json.dumps([r.as_dict() for r in rows], indent=2) + "\n")
        else:
            path.write_text(table)
    return EXIT_OK


def _scene_from_yaml(data: dict) -> SceneSpec:
    preset = data.pop("preset", None)
    if preset is None:
        return SceneSpec.from_dict(data)
    if preset != "street":
        raise InvalidSpec(f"unknown preset {preset!r} (only 'street' exists)")
    try:
        return street_scene(**data)
    except TypeError as exc:
        raise InvalidSpec(str(exc)) from None


def cmd_synth(args) -> int:
    spec = _scene_from_yaml(_load_yaml(args.spec))
    frames, truth, odo = generate_scene(spec, args.seed)
    out = Path(args.output)
    io.write_sequence(frames, out, args.format)
    io.write_odometry(odo, out / io.ODOMETRY)
    io.write_truth(truth, out / io.TRUTH_DIR)
    print(f"wrote {len(frames)} frames to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.warmup < 0:
        raise UsageError("--warmup must be >= 0")
    labels = io.read_label_sequence(args.labels)
    truth = io.read_truth(args.truth)
    m = evaluate(labels, truth, args.warmup)
    if args.json:
        print(json.dumps(m.as_dict()))
    else:
        note = "  (no true positives)" if m.zero_tp else ""
        print(f"precision {m.precision:.4f}  recall {m.recall:.4f}  IoU {m.iou:.4f}{note}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "bench": cmd_bench, "synth": cmd_synth, "eval": cmd_eval}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidConfig as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (VoxMotionError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
