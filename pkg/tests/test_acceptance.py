"""Acceptance criteria, one printed verdict line each.

Tolerances and budgets are pinned below. The two benchmark criteria run the
full 10-seed scenes and take a long time on a single core; they carry the
``slow`` marker so ``-m "not slow"`` skips them.
"""
from __future__ import annotations

import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.stats import chi2

from hlt.datacube import HyperCube, Rect, make_grouping
from hlt.evaluation import run_benchmark, summarize
from hlt.features import build_integral_histograms
from hlt.fusion import fg_bg_margin, otsu_multilevel, sum_rule_fuse
from hlt.likelihood import compute_likelihood_maps, init_target_model
from hlt.scenegen import discriminative_roi
from hlt.tracking import CT_LEFT, CT_RIGHT, FilterBank, FrameRecord, MotionModel, TrackLog, compute_purity

import fusion_audit
from oracles import brute_counts, otsu_thresholds
from report import record
from test_tracking import cv_bank, nees_runs

# ---- pinned tolerances and budgets ----
C1_PAIRS, C1_BUDGET_S = 1000, 10.0
C2_MAPS, C2_BUDGET_S = 200, 30.0
C3_CALLS, C3_SIMPLEX_TOL = 200, 1e-9
C4_ROIS, C4_MIN_WIN_RATE, C4_BUDGET_S = 50, 0.90, 120.0
BENCH_SEEDS = tuple(range(1, 11))
C5_BUDGET_S = 600.0
C6_GROUPS = (2, 3, 6, 12, 20)
C7_CEILING_S, C7_ITERATIONS = 1.0, 20
C8_RUNS, C8_CT_TOL = 50, 1e-9
C10_FRAMES = 10


def _cpus() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1


# ---- 1: integral histograms vs brute force ----

def test_criterion_1_integral_histograms():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(C1_PAIRS):
        h, w, b = (int(v) for v in rng.integers(1, [65, 65, 11]))
        planes = rng.random((b, h, w))
        if rng.random() < 0.3:
            planes = np.round(planes * 10) / 10  # values on bin edges, including 1.0
        cube = HyperCube(planes, 400.0 + 10.0 * np.arange(b))
        stack = build_integral_histograms(cube, 10, lazy=bool(rng.integers(2)))
        x, y = (int(v) for v in rng.integers(-8, [w + 1, h + 1]))
        rect = Rect(x, y, int(rng.integers(1, 72)), int(rng.integers(1, 72)))
        if min(rect.x1, w) <= max(rect.x, 0) or min(rect.y1, h) <= max(rect.y, 0):
            rect = Rect(0, 0, w, h)
        band = int(rng.integers(b))
        if stack.window_counts(rect, band).tolist() != brute_counts(cube, rect, band, 10):
            mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < C1_BUDGET_S
    record(1, "integral histograms == brute-force binning", ok,
           f"{C1_PAIRS} pairs, {mismatches} mismatches (tolerance 0), {elapsed:.2f} s (< {C1_BUDGET_S:.0f} s)")
    assert mismatches == 0
    assert elapsed < C1_BUDGET_S


# ---- 2: Otsu vs exhaustive between-class variance ----

def test_criterion_2_otsu():
    rng = np.random.default_rng(202)
    maps = []
    for i in range(C2_MAPS):
        h, w = (int(v) for v in rng.integers(8, 65, size=2))
        if i % 3 == 0:
            maps.append(rng.integers(0, int(rng.integers(2, 20)), size=(h, w)) / 19.0)
        else:
            maps.append(rng.beta(rng.uniform(0.3, 3), rng.uniform(0.3, 3), size=(h, w)))
    t0 = time.perf_counter()
    bad = sum(otsu_multilevel(m, levels) != otsu_thresholds(m, levels) for m in maps for levels in (1, 2))
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < C2_BUDGET_S
    record(2, "Otsu == exhaustive search", ok,
           f"{C2_MAPS} maps x levels 1,2, {bad} mismatches (exact), {elapsed:.2f} s incl. oracle "
           f"(< {C2_BUDGET_S:.0f} s)")
    assert bad == 0
    assert elapsed < C2_BUDGET_S


# ---- 3: fusion algebra ----

def test_criterion_3_fusion_algebra():
    """Random adaptive calls here; every other call in the session is audited the same way."""
    rng = np.random.default_rng(303)
    before = fusion_audit.stats["calls"]
    for _ in range(C3_CALLS):
        n = int(rng.integers(1, 21))
        shape = tuple(int(v) for v in rng.integers(4, 40, size=2))
        maps = [rng.beta(rng.uniform(0.3, 3), rng.uniform(0.3, 3), size=shape) for _ in range(n)]
        if n > 2 and rng.random() < 0.3:
            maps[1] = maps[0].copy()  # equal coefficients must give equal weights
        fusion_audit.audited_adaptive_fuse(maps)
    done = fusion_audit.stats["calls"] - before
    record(3, "fusion weights simplex / anti-monotone / permutation-equivariant, fused within bounds",
           done == C3_CALLS,
           f"{done} random calls checked (simplex tol {C3_SIMPLEX_TOL:g}); every adaptive_fuse call in "
           "the session is audited, total in the summary line")
    assert done == C3_CALLS


# ---- 4: margin claim ----

def test_criterion_4_margin():
    t0 = time.perf_counter()
    wins, diffs = 0, []
    for seed in range(C4_ROIS):
        roi = discriminative_roi(seed)
        model = init_target_model(roi.cube, roi.target, make_grouping(roi.cube.bands, 12))
        stack = build_integral_histograms(roi.cube, model.bins, lazy=True)
        maps = compute_likelihood_maps(stack, model)
        adaptive, _ = fusion_audit.audited_adaptive_fuse(maps)
        a = fg_bg_margin(adaptive, roi.fg_mask, roi.bg_mask)
        s = fg_bg_margin(sum_rule_fuse(maps), roi.fg_mask, roi.bg_mask)
        wins += a >= s
        diffs.append(a - s)
    elapsed = time.perf_counter() - t0
    rate = wins / C4_ROIS
    ok = rate >= C4_MIN_WIN_RATE and np.mean(diffs) > 0 and elapsed < C4_BUDGET_S
    record(4, "adaptive margin >= sum-rule margin", ok,
           f"{wins}/{C4_ROIS} ROIs ({100 * rate:.0f}% >= {100 * C4_MIN_WIN_RATE:.0f}%), mean margin gain "
           f"{np.mean(diffs):+.4f} (> 0), {elapsed:.1f} s (< {C4_BUDGET_S:.0f} s)")
    assert rate >= C4_MIN_WIN_RATE
    assert np.mean(diffs) > 0
    assert elapsed < C4_BUDGET_S


# ---- 5, 6: benchmark scenes ----

@pytest.fixture(scope="module")
def strategy_rows():
    t0 = time.perf_counter()
    rows = run_benchmark(BENCH_SEEDS, (("adaptive", 12), ("sum-rule", 12), ("variance-ratio", 12)))
    return rows, time.perf_counter() - t0


@pytest.fixture(scope="module")
def grouping_rows(strategy_rows):
    others = [("adaptive", g) for g in C6_GROUPS if g != 12]
    rows = run_benchmark(BENCH_SEEDS, others)
    return rows + [r for r in strategy_rows[0] if r.strategy == "adaptive"]


def _table(rows) -> str:
    return "; ".join(f"{k} TrP {v['TrP']:.2f} TgP {v['TgP']:.2f} (n={v['n']})" for k, v in summarize(rows).items())


@pytest.mark.slow
def test_criterion_5_strategy_ordering(strategy_rows):
    rows, elapsed = strategy_rows
    table = summarize(rows)
    ad, sr, vr = (table[f"{s}/12"] for s in ("adaptive", "sum-rule", "variance-ratio"))
    order_ok = all(ad[m] >= other[m] for other in (sr, vr) for m in ("TrP", "TgP"))
    in_budget = elapsed < C5_BUDGET_S
    record(5, "adaptive >= sum-rule and >= variance-ratio on TrP and TgP", order_ok and in_budget,
           f"{_table(rows)}; ordering {'holds' if order_ok else 'violated'}; runtime {elapsed:.0f} s "
           f"(< {C5_BUDGET_S:.0f} s) on {_cpus()} CPU(s)")
    assert order_ok
    assert in_budget, f"benchmark took {elapsed:.0f} s on {_cpus()} CPU(s)"


@pytest.mark.slow
def test_criterion_6_grouping_sweep(grouping_rows):
    table = summarize(grouping_rows)
    ok = table["adaptive/12"]["TrP"] >= table["adaptive/2"]["TrP"]
    record(6, "12-group TrP >= 2-group TrP", ok, _table(grouping_rows))
    assert ok


# ---- 7: run-time budget ----

def _bench(threads: int) -> dict:
    out = subprocess.run([sys.executable, "-m", "hlt.cli", "bench", "--iterations", str(C7_ITERATIONS),
                          "--threads", str(threads)], capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def test_criterion_7_runtime_budget():
    single = _bench(1)["detect_total_s"]
    ok_single = single <= C7_CEILING_S
    threads = min(4, _cpus())
    if threads >= 2:
        multi = _bench(threads)["detect_total_s"]
        ok_multi = multi <= single
        detail = f"{threads} threads {multi:.3f} s (<= single)"
    else:
        ok_multi = None
        detail = "multi-threaded comparison not run: 1 CPU available"
    record(7, "detection on a 200x200x60 ROI within budget", ok_single and ok_multi is not False,
           f"single-threaded median {single:.3f} s (<= {C7_CEILING_S:.1f} s); {detail}")
    if ok_multi is None:
        record("7b", "multi-threaded <= single-threaded", None, "needs at least 2 CPUs")
    assert ok_single
    assert ok_multi is not False


# ---- 8: filter consistency ----

def _closed_form_turn(state, omega, dt):
    x, y, vx, vy = state
    s, c = math.sin(omega * dt), math.cos(omega * dt)
    return np.array([x + (vx * s - vy * (1 - c)) / omega, y + (vx * (1 - c) + vy * s) / omega,
                     vx * c - vy * s, vx * s + vy * c])


def test_criterion_8_filter_consistency():
    nees = nees_runs(lambda x0, P0, q: cv_bank(x0, P0, q), runs=C8_RUNS)
    lo, hi = chi2.ppf([0.025, 0.975], 4 * C8_RUNS) / C8_RUNS
    avg = float(nees[:, -1].mean())
    nees_ok = lo <= avg <= hi
    rng = np.random.default_rng(808)
    worst = 0.0
    for _ in range(500):
        state = rng.uniform(-50, 50, 4)
        omega = float(rng.uniform(0.01, 1.5)) * (1 if rng.random() < 0.5 else -1)
        dt = float(rng.uniform(0.1, 3.0))
        model = MotionModel(CT_RIGHT if omega > 0 else CT_LEFT, omega, 0.0)
        got = FilterBank.start((model,), state, np.eye(4)).predict(dt).means[0]
        worst = max(worst, float(np.max(np.abs(got - _closed_form_turn(state, omega, dt)))))
    ct_ok = worst <= C8_CT_TOL
    record(8, "CV NEES in the 95% band; CT prediction == closed form", nees_ok and ct_ok,
           f"NEES over {C8_RUNS} runs {avg:.3f} in [{lo:.3f}, {hi:.3f}]; CT max error {worst:.2e} "
           f"(<= {C8_CT_TOL:g})")
    assert nees_ok
    assert ct_ok


# ---- 9: purity metrics ----

class _Truth:
    def __init__(self, boxes_per_frame):
        from hlt.scenegen import VehicleTruth
        self.vehicles = [[VehicleTruth(i, b.center[0], b.center[1], b.x, b.y, b.w, b.h) for i, b in frame]
                         for frame in boxes_per_frame]

    def life(self, vid):
        return sum(1 for f in self.vehicles if any(v.id == vid for v in f))


def _hand_examples_ok() -> bool:
    target, other = Rect(10, 10, 14, 7), Rect(100, 100, 14, 7)
    truth = _Truth([[(3, target), (5, other)]] * 16)

    def log(boxes):
        return TrackLog([FrameRecord(i, box=b) for i, b in enumerate(boxes)], 3)

    # 8 of 10 frames on the target, which lives 16 frames
    return (compute_purity(log([target] * 8 + [None, other]), truth) == (0.8, 0.5)
            and compute_purity(log([target] * 16), truth) == (1.0, 1.0)
            and compute_purity(log([target] * 4 + [other] * 6), truth) == (0.6, 6 / 16))


@pytest.mark.slow
def test_criterion_9_purity(strategy_rows, grouping_rows):
    hand = _hand_examples_ok()
    rows = strategy_rows[0] + [r for r in grouping_rows if r.groups != 12]
    eligible = [r for r in rows if r.dominant_life and r.life <= r.dominant_life]
    broken = [r for r in eligible if r.trp < r.tgp]
    ok = hand and not broken
    record(9, "purity definitions; TrP >= TgP when life <= truth life", ok,
           f"hand examples {'match' if hand else 'differ'}; {len(eligible)}/{len(rows)} runs eligible, "
           f"{len(broken)} violations")
    assert hand
    assert not broken


# ---- 10: end-to-end determinism ----

def _cli(*argv):
    subprocess.run([sys.executable, "-m", "hlt.cli", *map(str, argv)], check=True, capture_output=True)


def test_criterion_10_determinism(tmp_path):
    outputs = []
    for run, threads in enumerate((1, 1, 3)):
        d = tmp_path / f"run{run}"
        _cli("gen", "--seed", 4, "--frames", C10_FRAMES, "--out", d / "scene")
        _cli("track", "--scene", d / "scene", "--init-from-truth", "all", "--threads", threads,
             "--out", d / "log.json")
        _cli("eval", "--log", d / "log.json", "--out", d / "eval.json")
        log = json.loads((d / "log.json").read_text())
        ev = json.loads((d / "eval.json").read_text())
        scene_bytes = b"".join(p.read_bytes() for p in sorted((d / "scene").iterdir()))
        outputs.append((scene_bytes, json.dumps(log["tracks"]), json.dumps(ev["targets"]),
                        json.dumps(ev["mean"])))
    same_runs = outputs[0] == outputs[1]
    same_threads = outputs[0] == outputs[2]
    record(10, "gen + track + eval bit-reproducible", same_runs and same_threads,
           f"two runs {'identical' if same_runs else 'differ'}; 1 vs 3 threads "
           f"{'identical' if same_threads else 'differ'} ({C10_FRAMES} frames, all targets)")
    assert same_runs
    assert same_threads
