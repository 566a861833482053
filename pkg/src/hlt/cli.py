"""Command line: ``hlt gen | fuse-demo | detect | track | eval | bench``.

Settings resolve as command-line flag, then ``--config`` JSON file, then
built-in default. The resolved settings are echoed into every JSON output.
Failures print a single JSON line on stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .datacube import Rect, crop_roi, load_cube, make_grouping
from .detection import extract_candidates
from .evaluation import TrackJob, track_scene
from .features import build_integral_histograms
from .fusion import DEFAULT_K, STRATEGIES, adaptive_fuse, fg_bg_margin
from .likelihood import TargetModel, compute_likelihood_maps, init_target_model
from .pipeline import fuse_maps, run_detection, target_masks
from .scenegen import (GroundTruth, SceneConfig, default_benchmark_config, discriminative_roi,
                       generate_scene, load_scene, write_scene)
from .tracking import TrackLog, TrackParams, dominant_target

# flag name -> built-in default
DEFAULTS = {
    "seed": 1,
    "groups": 12,
    "fusion": "adaptive",
    "k": DEFAULT_K,
    "x0": None,
    "otsu_levels": 2,
    "alpha": 0.5,
    "lambda": 0.1,
    "nscan": 3,
    "threads": 1,
}


class CLIError(Exception):
    def __init__(self, kind: str, message: str, code: int = 1):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError("usage", message, 2)


# ---- settings -----------------------------------------------------------

def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CLIError("config", f"cannot read config {path}: {exc}", 2) from exc
    if not isinstance(obj, dict):
        raise CLIError("config", "config file must hold a JSON object", 2)
    return {k.replace("-", "_"): v for k, v in obj.items()}


def resolve(args) -> dict:
    """Effective settings: CLI > config file > defaults, validated."""
    cfg = dict(DEFAULTS)
    extra = {}
    for key, value in _load_config_file(args.config).items():
        if key in cfg:
            cfg[key] = value
        else:
            extra[key] = value
    for key in DEFAULTS:
        value = getattr(args, key.replace("lambda", "rate"), None)
        if value is not None:
            cfg[key] = value
    validate(cfg)
    cfg["track"] = extra.get("track", {})
    return cfg


def validate(cfg: dict) -> None:
    def bad(msg):
        raise CLIError("config", msg, 2)

    for key in ("seed", "groups", "otsu_levels", "nscan", "threads"):
        if isinstance(cfg[key], bool) or not isinstance(cfg[key], int):
            bad(f"{key} must be an integer")
    for key in ("k", "alpha", "lambda"):
        if isinstance(cfg[key], bool) or not isinstance(cfg[key], (int, float)) \
                or not math.isfinite(cfg[key]):
            bad(f"{key} must be a finite number")
    if cfg["groups"] < 1:
        bad("groups must be at least 1")
    if cfg["fusion"] not in STRATEGIES:
        bad(f"fusion must be one of {list(STRATEGIES)}")
    if cfg["k"] == 0:
        bad("k must be nonzero")
    if cfg["x0"] is not None and (not isinstance(cfg["x0"], (int, float)) or not math.isfinite(cfg["x0"])):
        bad("x0 must be a finite number")
    if cfg["otsu_levels"] not in (1, 2, 3):
        bad("otsu-levels must be 1, 2 or 3")
    if not 0.0 <= cfg["alpha"] <= 1.0:
        bad("alpha must lie in [0, 1]")
    if not 0.0 <= cfg["lambda"] <= 1.0:
        bad("lambda must lie in [0, 1]")
    if cfg["nscan"] < 1:
        bad("nscan must be at least 1")
    if cfg["threads"] < 1:
        bad("threads must be at least 1")


def track_params(cfg: dict) -> TrackParams:
    base = TrackParams(**cfg.get("track", {}))
    return replace(base, groups=cfg["groups"], strategy=cfg["fusion"], k=float(cfg["k"]),
                   x0=None if cfg["x0"] is None else float(cfg["x0"]), levels=cfg["otsu_levels"],
                   alpha=float(cfg["alpha"]), rate=float(cfg["lambda"]), nscan=cfg["nscan"],
                   threads=cfg["threads"])


def parse_rect(text: str) -> Rect:
    try:
        x, y, w, h = (int(v) for v in text.split(","))
    except ValueError as exc:
        raise CLIError("usage", f"expected x,y,w,h, got {text!r}", 2) from exc
    return Rect(x, y, w, h)


# ---- output helpers -----------------------------------------------------

def write_pgm(path, grid) -> None:
    """8-bit binary PGM, value ``round(255 * conf)``."""
    g = np.clip(np.rint(255.0 * np.asarray(grid, dtype=np.float64)), 0, 255).astype(np.uint8)
    h, w = g.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(g.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def emit(obj: dict, out) -> None:
    text = json.dumps(obj, indent=1, sort_keys=False)
    if out is None:
        sys.stdout.write(text + "\n")
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")


def _load_truth(path) -> GroundTruth:
    p = Path(path)
    if p.is_dir():
        p = p / "truth.json"
    try:
        return GroundTruth.from_json(json.loads(p.read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise CLIError("input", f"cannot read ground truth {path}: {exc}") from exc


def _model_for(cfg, cube, args) -> TargetModel:
    if args.model is not None:
        model = TargetModel.from_json(json.loads(Path(args.model).read_text()))
        if model.grouping.bands != cube.bands:
            raise CLIError("input", "model and cube disagree on the band count")
        return model
    if args.bbox is None:
        raise CLIError("usage", "need --model or --bbox", 2)
    return init_target_model(cube, parse_rect(args.bbox), make_grouping(cube.bands, cfg["groups"]),
                             rate=cfg["lambda"])


# ---- subcommands --------------------------------------------------------

def cmd_gen(cfg, args) -> dict:
    if args.scene_config is not None:
        config = SceneConfig.from_json(json.loads(Path(args.scene_config).read_text()))
    else:
        config = default_benchmark_config(cfg["seed"])
    if args.frames is not None:
        config = replace(config, n_frames=args.frames)
    frames, truth = generate_scene(config)
    out = Path(args.out or f"scene_{cfg['seed']}")
    if args.no_cubes:
        out.mkdir(parents=True, exist_ok=True)
        (out / "truth.json").write_text(json.dumps(truth.to_json()))
        (out / "scene.json").write_text(json.dumps(config.to_json()))
    else:
        write_scene(out, frames, truth, config)
    return {"config": cfg, "scene": str(out), "frames": len(truth), "vehicles": truth.ids()}


def _demo_input(cfg, args):
    if args.cube is None:
        roi = discriminative_roi(cfg["seed"], cfg["groups"])
        return roi.cube, roi.target
    cube = load_cube(args.cube)
    if args.bbox is None:
        raise CLIError("usage", "fuse-demo on a cube file needs --bbox", 2)
    return cube, parse_rect(args.bbox)


def cmd_fuse_demo(cfg, args) -> dict:
    cube, target = _demo_input(cfg, args)
    model = _model_for(cfg, cube, argparse.Namespace(model=args.model, bbox=",".join(
        str(v) for v in target.as_list())))
    stack = build_integral_histograms(cube, model.bins, lazy=True)
    maps = compute_likelihood_maps(stack, model, cfg["threads"])
    out = Path(args.out or "fuse_demo")
    out.mkdir(parents=True, exist_ok=True)
    for m in maps:
        write_pgm(out / f"group_{m.group:02d}.pgm", m.grid)
    fg, bg = target_masks(maps[0].shape, target)
    report = {"config": cfg, "target": target.as_list(), "weights": {}, "margins": {}}
    for strategy in STRATEGIES:
        fused, weights = fuse_maps(maps, strategy, cfg["k"], cfg["x0"], cfg["otsu_levels"], target)
        write_pgm(out / f"fused_{strategy}.pgm", fused.grid)
        report["weights"][strategy] = [float(w) for w in weights.w]
        report["margins"][strategy] = fg_bg_margin(fused, fg, bg)
    report["group_margins"] = [fg_bg_margin(m, fg, bg) for m in maps]
    (out / "report.json").write_text(json.dumps(report, indent=1) + "\n")
    return report


def cmd_detect(cfg, args) -> dict:
    cube = load_cube(args.cube)
    model = _model_for(cfg, cube, args)
    if args.model_out is not None:
        Path(args.model_out).write_text(json.dumps(model.to_json()))
    roi = Rect(0, 0, cube.width, cube.height) if args.roi is None else parse_rect(args.roi)
    roi = roi.clamp(cube.width, cube.height)
    sub = crop_roi(cube, roi)
    target = None if args.bbox is None else parse_rect(args.bbox).shifted(-roi.x, -roi.y)
    res = run_detection(sub, model, cfg["fusion"], k=cfg["k"], x0=cfg["x0"], levels=cfg["otsu_levels"],
                        min_area=args.min_area, max_area=args.max_area, target_box=target,
                        threads=cfg["threads"])
    blobs = [b.shifted(roi.x, roi.y).to_json() for b in res.blobs]
    return {"config": cfg, "roi": roi.as_list(), "weights": [float(w) for w in res.weights.w],
            "blobs": blobs}


def cmd_track(cfg, args) -> dict:
    frames, truth = load_scene(args.scene)
    if len(frames) == 0:
        raise CLIError("input", f"no frame cubes in {args.scene}")
    params = track_params(cfg)
    start = args.start
    if not 0 <= start < len(frames):
        raise CLIError("usage", f"start frame {start} outside [0, {len(frames)})", 2)
    if args.init_bbox is not None:
        jobs = [TrackJob(0, None, params, parse_rect(args.init_bbox))]
    elif args.init_from_truth is not None:
        present = [v.id for v in truth.vehicles[start]]
        if args.init_from_truth == "all":
            ids = present
        else:
            try:
                ids = [int(args.init_from_truth)]
            except ValueError as exc:
                raise CLIError("usage", "--init-from-truth takes a vehicle id or 'all'", 2) from exc
            if ids[0] not in present:
                raise CLIError("input", f"vehicle {ids[0]} is not present in frame {start}")
        jobs = [TrackJob(vid, vid, params) for vid in ids]
    else:
        raise CLIError("usage", "need --init-bbox or --init-from-truth", 2)
    stop = None if args.frames is None else start + args.frames
    logs = track_scene(frames, truth, jobs, start, stop)
    tracks = [logs[j.key].to_json() for j in jobs]
    summary = [{"target_id": t["target_id"], "start": t["start"], "end": t["end"],
                "associated": sum(1 for f in t["frames"] if f["box"] is not None),
                "terminated": t["terminated"]} for t in tracks]
    return {"config": cfg, "params": params.to_json(), "scene": str(args.scene),
            "tracks": tracks, "summary": summary}


def cmd_eval(cfg, args) -> dict:
    try:
        obj = json.loads(Path(args.log).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CLIError("input", f"cannot read track log {args.log}: {exc}") from exc
    truth = _load_truth(args.truth if args.truth is not None else obj.get("scene", "."))
    tracks = obj["tracks"] if "tracks" in obj else [obj]
    rows = []
    for i, t in enumerate(tracks):
        log = TrackLog.from_json(t)
        dominant, n = dominant_target(log, truth, args.iou_gate)
        dom_life = 0 if dominant is None else truth.life(dominant)
        trp, tgp = (0.0, 0.0) if dominant is None else (n / log.life, n / dom_life)
        rows.append({"track": i, "target_id": log.target_id, "life": log.life,
                     "dominant_target": dominant, "dominant_life": dom_life,
                     "TrP": round(100.0 * trp, 2), "TgP": round(100.0 * tgp, 2),
                     "_trp": trp, "_tgp": tgp})
    mean_trp = float(np.mean([r.pop("_trp") for r in rows])) if rows else 0.0
    mean_tgp = float(np.mean([r.pop("_tgp") for r in rows])) if rows else 0.0
    return {"config": cfg, "iou_gate": args.iou_gate, "targets": rows,
            "mean": {"TrP": round(100.0 * mean_trp, 2), "TgP": round(100.0 * mean_tgp, 2)}}


def benchmark_roi(seed: int, size: int = 200):
    """A ``size`` x ``size`` ROI of the first benchmark frame centred on vehicle 0, plus its model box."""
    config = replace(default_benchmark_config(seed), n_frames=1)
    frames, truth = generate_scene(config)
    cube = frames[0]
    box = truth.vehicles[0][0].bbox
    cx, cy = box.center
    x = int(min(max(round(cx - size / 2), 0), cube.width - size))
    y = int(min(max(round(cy - size / 2), 0), cube.height - size))
    roi = Rect(x, y, size, size)
    return crop_roi(cube, roi), box.shifted(-x, -y)


def _median_time(fn, n):
    times = []
    for _ in range(n):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench_detection(cube, model, iterations: int = 20, threads: int = 1, cfg=None) -> dict:
    """Median wall-clock of each detection stage and of the whole pass."""
    cfg = cfg or DEFAULTS
    k, x0, levels = cfg["k"], cfg["x0"], cfg["otsu_levels"]

    def integral():
        stack = build_integral_histograms(cube, model.bins, lazy=True)
        # build exactly the tables the maps will read
        for grp, h in zip(model.grouping, model.histograms):
            nz = np.flatnonzero(h.values > 0)
            stack.tables_for(grp[0] + nz // model.bins, nz % model.bins)
        return stack

    stack = integral()
    maps = compute_likelihood_maps(stack, model, threads)
    fused, _ = adaptive_fuse(maps, k, x0, levels)
    run_detection(cube, model, k=k, x0=x0, levels=levels, threads=threads)  # warm-up / JIT
    return {
        "integral_s": _median_time(integral, iterations),
        "likelihood_s": _median_time(lambda: compute_likelihood_maps(stack, model, threads), iterations),
        "fusion_s": _median_time(lambda: adaptive_fuse(maps, k, x0, levels), iterations),
        "extract_s": _median_time(lambda: extract_candidates(fused, cube, model.grouping, levels=levels,
                                                            bins=model.bins,
                                                            bin_index=stack.bin_index), iterations),
        "detect_total_s": _median_time(lambda: run_detection(cube, model, k=k, x0=x0, levels=levels,
                                                             threads=threads), iterations),
    }


def cmd_bench(cfg, args) -> dict:
    if args.iterations < 20:
        raise CLIError("usage", "bench needs at least 20 iterations", 2)
    if args.cube is not None:
        cube = load_cube(args.cube)
        if args.bbox is None:
            raise CLIError("usage", "bench on a cube file needs --bbox", 2)
        box = parse_rect(args.bbox)
    else:
        cube, box = benchmark_roi(cfg["seed"])
    model = init_target_model(cube, box, make_grouping(cube.bands, cfg["groups"]))
    timing = bench_detection(cube, model, args.iterations, cfg["threads"], cfg)
    return {"config": cfg, "roi": [cube.width, cube.height, cube.bands],
            "iterations": args.iterations, **timing}


# ---- parser -------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of settings (flags override it)")
    p.add_argument("--seed", type=int)
    p.add_argument("--groups", type=int, help="number of band groups")
    p.add_argument("--fusion", choices=STRATEGIES)
    p.add_argument("--k", type=float, help="logistic steepness (negative)")
    p.add_argument("--x0", type=float, help="logistic midpoint (default 1/N)")
    p.add_argument("--otsu-levels", type=int, dest="otsu_levels")
    p.add_argument("--alpha", type=float, help="spectral share of the association score")
    p.add_argument("--lambda", type=float, dest="rate", help="target model update rate")
    p.add_argument("--nscan", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hlt", description="Hyperspectral likelihood fusion and tracking.")
    parser.add_argument("--version", action="version", version=f"hlt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="render a synthetic scene directory")
    _common(p)
    p.add_argument("--frames", type=int)
    p.add_argument("--scene-config", help="SceneConfig JSON (default: benchmark config of --seed)")
    p.add_argument("--no-cubes", action="store_true", help="write truth.json and scene.json only")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fuse-demo", help="per-group and fused maps as PGM plus a JSON report")
    _common(p)
    p.add_argument("--cube", help="ROI cube (default: synthetic ROI of --seed)")
    p.add_argument("--bbox", help="target box x,y,w,h inside the cube")
    p.add_argument("--model", help="target model JSON")
    p.set_defaults(func=cmd_fuse_demo)

    p = sub.add_parser("detect", help="candidate blobs in a cube")
    _common(p)
    p.add_argument("--cube", required=True)
    p.add_argument("--model", help="target model JSON")
    p.add_argument("--bbox", help="target box x,y,w,h (builds the model when --model is absent)")
    p.add_argument("--model-out", help="write the model used to this JSON file")
    p.add_argument("--roi", help="x,y,w,h window to search (default: whole cube)")
    p.add_argument("--min-area", type=int, default=20)
    p.add_argument("--max-area", type=int, default=100)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("track", help="track targets through a scene directory")
    _common(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--init-from-truth", help="vehicle id or 'all'")
    p.add_argument("--init-bbox", help="initial box x,y,w,h")
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--frames", type=int, help="number of frames to process")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="track and target purity of a track log")
    _common(p)
    p.add_argument("--log", required=True)
    p.add_argument("--truth", help="truth.json or scene directory (default: the log's scene)")
    p.add_argument("--iou-gate", type=float, default=0.3)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="detection stage timings")
    _common(p)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--cube")
    p.add_argument("--bbox")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve(args)
        cfg["command"] = args.command
        result = args.func(cfg, args)
        if args.command in ("fuse-demo", "gen"):
            emit(result, None)
        else:
            emit(result, args.out)
        return 0
    except CLIError as exc:
        err, code = {"error": exc.kind, "message": str(exc)}, exc.code
    except (ValueError, ArithmeticError, OSError, KeyError, IndexError) as exc:
        err, code = {"error": type(exc).__name__, "message": str(exc)}, 1
    sys.stderr.write(json.dumps(err) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
