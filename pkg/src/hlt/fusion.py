"""Adaptive fusion of per-group likelihood maps, plus the two baseline strategies.

The adaptive scheme thresholds every map with multilevel Otsu, counts the
foreground candidates each map produces, and turns those counts into weights
through a decreasing logistic: a map that lights up many pixels is mostly
false positives and is down-weighted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import _kernels
from .likelihood import LikelihoodMap

OTSU_BINS = 256
DEFAULT_K = -40.0
DEFAULT_LEVELS = 2
VR_EPS = 1e-6


@dataclass(frozen=True)
class FusionWeights:
    w: np.ndarray
    k: float = DEFAULT_K
    x0: float = float("nan")
    coefficients: np.ndarray | None = None
    thresholds: tuple[float, ...] | None = None

    def __post_init__(self):
        self.w.setflags(write=False)

    def __len__(self):
        return self.w.size


@dataclass(frozen=True)
class BinaryMap:
    grid: np.ndarray
    threshold: float


def _grid(m) -> np.ndarray:
    return m.grid if isinstance(m, (LikelihoodMap, BinaryMap)) else np.asarray(m)


def otsu_histogram(values: np.ndarray) -> np.ndarray:
    idx = (np.asarray(values, dtype=np.float64).ravel() * OTSU_BINS).astype(np.int64)
    np.clip(idx, 0, OTSU_BINS - 1, out=idx)
    return np.bincount(idx, minlength=OTSU_BINS)


def _class_score(n, s):
    # s^2 / n with empty classes contributing nothing
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(n > 0, s * s / np.where(n > 0, n, 1), 0.0)


def otsu_indices(hist: np.ndarray, levels: int) -> tuple[int, ...]:
    """Exhaustive multilevel Otsu on a histogram.

    Returns bin indices ``t_1 < ... < t_levels``; class ``j`` spans bins
    ``t_{j-1}+1 .. t_j``. Between-class variance is maximised via the
    equivalent objective ``sum_j S_j^2 / N_j`` (S = sum of bin indices); ties
    go to the lexicographically smallest tuple.
    """
    if levels not in (1, 2, 3):
        raise ValueError("levels must be 1, 2 or 3")
    hist = np.asarray(hist, dtype=np.float64)
    nbins = hist.size
    cn = np.cumsum(hist)
    cs = np.cumsum(hist * np.arange(nbins))
    nt, st = cn[-1], cs[-1]
    t = np.arange(nbins - 1)
    head_n, head_s = cn[t], cs[t]
    tail = _class_score(nt - head_n, st - head_s)
    head = _class_score(head_n, head_s)
    if levels == 1:
        return (int(np.argmax(head + tail)),)
    if levels == 2:
        a, b = _kernels.otsu_pair(hist)
        return (int(a), int(b))
    # mid[a, b] scores bins a+1..b
    mid_n = head_n[None, :] - head_n[:, None]
    mid_s = head_s[None, :] - head_s[:, None]
    upper = np.triu(np.ones((nbins - 1, nbins - 1), dtype=bool), 1)
    mid = np.where(upper, _class_score(mid_n, mid_s), -np.inf)
    best, best_t = -np.inf, None
    for a in range(nbins - 3):
        total = head[a] + mid[a, :, None] + mid + tail[None, :]
        total[: a + 1, :] = -np.inf
        j = int(np.argmax(total))
        if total.flat[j] > best:
            best = total.flat[j]
            b, c = np.unravel_index(j, total.shape)
            best_t = (a, int(b), int(c))
    return best_t


def otsu_multilevel(m, levels: int = DEFAULT_LEVELS) -> list[float]:
    """Ascending thresholds, each reported as the upper edge of its bin."""
    g = _grid(m)
    lo, hi = float(g.min()), float(g.max())
    if lo == hi:
        return [lo] * levels
    return [(i + 1) / OTSU_BINS for i in otsu_indices(otsu_histogram(g), levels)]


def binarize(m, threshold: float) -> BinaryMap:
    """Foreground candidates are pixels with confidence strictly above ``threshold``."""
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    return BinaryMap(_grid(m) > threshold, float(threshold))


def fusion_coefficients(binaries) -> np.ndarray:
    grids = [_grid(b) for b in binaries]
    if not grids:
        raise ValueError("need at least one binary map")
    if any(g.shape != grids[0].shape for g in grids):
        raise ValueError("binary maps differ in shape")
    counts = np.array([np.count_nonzero(g) for g in grids], dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return np.full(len(grids), 1.0 / len(grids))
    return counts / total


def logistic_weights(c, k: float = DEFAULT_K, x0: float | None = None) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if k == 0:
        raise ValueError("logistic steepness must be non-zero")
    if x0 is None:
        x0 = 1.0 / c.size
    return expit(k * (c - x0))


def normalize_weights(raw, k: float = DEFAULT_K, x0: float = float("nan"), **extra) -> FusionWeights:
    raw = np.asarray(raw, dtype=np.float64)
    # fsum is correctly rounded, so the weights do not depend on map order
    norm = math.fsum(np.abs(raw).tolist())
    w = np.full(raw.size, 1.0 / raw.size) if norm == 0 else raw / norm
    return FusionWeights(w, k, x0, **extra)


def fuse(maps, weights) -> LikelihoodMap:
    w = weights.w if isinstance(weights, FusionWeights) else np.asarray(weights, dtype=np.float64)
    grids = [_grid(m) for m in maps]
    if len(grids) != w.size:
        raise ValueError(f"{len(grids)} maps but {w.size} weights")
    if any(g.shape != grids[0].shape for g in grids):
        raise ValueError("likelihood maps differ in shape")
    out = np.zeros(grids[0].shape)
    for wi, g in zip(w, grids):
        out += wi * g
    return LikelihoodMap(out, -1)


def adaptive_fuse(maps, k: float = DEFAULT_K, x0: float | None = None,
                  levels: int = DEFAULT_LEVELS) -> tuple[LikelihoodMap, FusionWeights]:
    if not maps:
        raise ValueError("need at least one map")
    x0 = 1.0 / len(maps) if x0 is None else x0
    thresholds = tuple(otsu_multilevel(m, levels)[-1] for m in maps)
    binaries = [binarize(m, t) for m, t in zip(maps, thresholds)]
    c = fusion_coefficients(binaries)
    weights = normalize_weights(logistic_weights(c, k, x0), k, x0,
                                coefficients=c, thresholds=thresholds)
    return fuse(maps, weights), weights


def sum_rule_fuse(maps) -> LikelihoodMap:
    if not maps:
        raise ValueError("need at least one map")
    return fuse(maps, np.full(len(maps), 1.0 / len(maps)))


def _mask(mask, shape) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != shape:
        raise ValueError(f"mask shape {mask.shape} does not match map {shape}")
    if not mask.any():
        raise ValueError("mask is empty")
    return mask


def variance_ratio_weights(maps, fg_mask, bg_mask, eps: float = VR_EPS) -> FusionWeights:
    """Weights proportional to var(fg u bg) / (var(fg) + var(bg) + eps) per map."""
    grids = [_grid(m) for m in maps]
    if not grids:
        raise ValueError("need at least one map")
    fg = _mask(fg_mask, grids[0].shape)
    bg = _mask(bg_mask, grids[0].shape)
    if np.any(fg & bg):
        raise ValueError("foreground and background masks overlap")
    both = fg | bg
    scores = np.array([g[both].var() / (g[fg].var() + g[bg].var() + eps) for g in grids])
    return normalize_weights(scores, float("nan"), float("nan"), coefficients=scores)


def fg_bg_margin(m, fg_mask, bg_mask) -> float:
    g = _grid(m)
    fg = _mask(fg_mask, g.shape)
    bg = _mask(bg_mask, g.shape)
    return float(g[fg].mean() - g[bg].mean())


STRATEGIES = ("adaptive", "sum-rule", "variance-ratio")
