"""Batch tracking over generated scenes and purity tables.

Tracks are stepped frame-major: each frame is rendered and quantised once
and then shared by every track that is still alive, which is what makes the
10-seed benchmark affordable.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .features import quantize
from .datacube import Rect
from .scenegen import GroundTruth, default_benchmark_config, generate_scene
from .tracking import TrackParams, Tracker, dominant_target


@dataclass(frozen=True)
class TrackJob:
    key: object
    target_id: int | None
    params: TrackParams
    box: Rect | None = None  # initial box; taken from ground truth when None


@dataclass(frozen=True)
class PurityRow:
    seed: int
    strategy: str
    groups: int
    target_id: int
    trp: float
    tgp: float
    life: int
    truth_life: int
    dominant_life: int  # life of the most-followed target, 0 if none

    def to_json(self) -> dict:
        return dict(self.__dict__)


def track_scene(frames, truth: GroundTruth, jobs, start: int = 0, stop: int | None = None) -> dict:
    """Run one tracker per job over ``frames[start:stop]``.

    A job without an explicit box starts from the ground-truth box of its
    target in frame ``start``.
    """
    stop = len(frames) if stop is None else min(stop, len(frames))
    first = frames[start]
    trackers = {}
    for job in jobs:
        box = job.box if job.box is not None else truth.box(start, job.target_id)
        if box is None:
            raise ValueError(f"target {job.target_id} is not present in frame {start}")
        trackers[job.key] = Tracker(first, box.clamp(first.width, first.height), job.params,
                                    t0=start, gsd=truth.gsd, dt=truth.interval_s,
                                    target_id=job.target_id)
    for t in range(start + 1, stop):
        live = [tr for tr in trackers.values() if tr.active]
        if not live:
            break
        cube = frames[t]
        shared: dict[int, np.ndarray] = {}
        for tr in live:
            bins = tr.params.bins
            if bins not in shared:
                shared[bins] = quantize(cube.planes, bins)
            tr.step(cube, truth.homographies[t], t, bin_index=shared[bins])
    return {key: tr.finish() for key, tr in trackers.items()}


def purity_rows(logs: dict, truth: GroundTruth, seed: int, iou_gate: float = 0.3) -> list[PurityRow]:
    rows = []
    for key, log in logs.items():
        dominant, n = dominant_target(log, truth, iou_gate)
        dom_life = 0 if dominant is None else truth.life(dominant)
        trp, tgp = (0.0, 0.0) if dominant is None else (n / log.life, n / dom_life)
        params = key[1] if isinstance(key, tuple) and len(key) > 1 else None
        strategy, groups = (params if isinstance(params, tuple) else ("adaptive", 12))
        rows.append(PurityRow(seed, strategy, groups, log.target_id, trp, tgp, log.life,
                              truth.life(log.target_id), dom_life))
    return rows


def _seed_job(args) -> list[PurityRow]:
    seed, variants, base, targets, n_frames = args
    config = default_benchmark_config(seed)
    if n_frames is not None:
        config = replace(config, n_frames=n_frames)
    frames, truth = generate_scene(config)
    ids = truth.ids() if targets is None else [i for i in truth.ids() if i in targets]
    jobs = []
    for strategy, groups in variants:
        params = replace(base, strategy=strategy, groups=groups)
        for vid in ids:
            jobs.append(TrackJob((vid, (strategy, groups)), vid, params))
    logs = track_scene(frames, truth, jobs)
    return purity_rows(logs, truth, seed)


def run_benchmark(seeds, variants=(("adaptive", 12),), base: TrackParams = TrackParams(),
                  targets=None, n_frames: int | None = None, workers: int | None = None) -> list[PurityRow]:
    """TrP/TgP of every (seed, variant, target) on ``default_benchmark_config`` scenes.

    ``variants`` are ``(strategy, groups)`` pairs. Seeds are independent and
    run in separate processes when ``workers > 1``; results do not depend on
    the worker count.
    """
    if workers is None:
        workers = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1
    args = [(int(s), tuple(variants), base, targets, n_frames) for s in seeds]
    if workers <= 1 or len(args) == 1:
        chunks = [_seed_job(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(args))) as pool:
            chunks = list(pool.map(_seed_job, args))
    return [row for chunk in chunks for row in chunk]


def summarize(rows) -> dict:
    """Mean TrP/TgP per (strategy, groups), as percentages."""
    out: dict = {}
    for r in rows:
        out.setdefault((r.strategy, r.groups), []).append(r)
    table = {}
    for (strategy, groups), rs in sorted(out.items()):
        table[f"{strategy}/{groups}"] = {
            "strategy": strategy, "groups": groups, "n": len(rs),
            "TrP": 100.0 * float(np.mean([r.trp for r in rs])),
            "TgP": 100.0 * float(np.mean([r.tgp for r in rs])),
        }
    return table
