"""One detection pass over a ROI cube: histograms, maps, fusion, blobs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datacube import HyperCube, Rect
from .detection import MAX_AREA, MIN_AREA, Blob, extract_candidates
from .features import IntegralHistStack, build_integral_histograms
from .fusion import (DEFAULT_K, DEFAULT_LEVELS, FusionWeights, adaptive_fuse, fuse,
                     normalize_weights, sum_rule_fuse, variance_ratio_weights)
from .likelihood import LikelihoodMap, TargetModel, compute_likelihood_maps, confidence_affine


@dataclass
class DetectionResult:
    stack: IntegralHistStack
    maps: list[LikelihoodMap]
    fused: LikelihoodMap
    weights: FusionWeights
    blobs: list[Blob]


def target_masks(shape, box: Rect, ring: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Foreground = ``box``; background = surrounding ring (default: one box size on each side)."""
    h, w = shape
    fg = np.zeros(shape, dtype=bool)
    bg = np.zeros(shape, dtype=bool)
    rx = box.w if ring is None else ring
    ry = box.h if ring is None else ring
    bg[max(box.y - ry, 0):max(min(box.y1 + ry, h), 0), max(box.x - rx, 0):max(min(box.x1 + rx, w), 0)] = True
    fg[max(box.y, 0):max(min(box.y1, h), 0), max(box.x, 0):max(min(box.x1, w), 0)] = True
    bg &= ~fg
    return fg, bg


def fuse_maps(maps, strategy: str = "adaptive", k: float = DEFAULT_K, x0: float | None = None,
              levels: int = DEFAULT_LEVELS, target_box: Rect | None = None):
    if strategy == "adaptive":
        return adaptive_fuse(maps, k, x0, levels)
    if strategy == "sum-rule":
        n = len(maps)
        return sum_rule_fuse(maps), normalize_weights(np.ones(n))
    if strategy == "variance-ratio":
        if target_box is None:
            raise ValueError("variance-ratio fusion needs a target box")
        fg, bg = target_masks(maps[0].shape, target_box)
        if fg.any() and bg.any():
            weights = variance_ratio_weights(maps, fg, bg)
        else:
            weights = normalize_weights(np.ones(len(maps)))
        return fuse(maps, weights), weights
    raise ValueError(f"unknown fusion strategy {strategy!r}")


def run_detection(cube: HyperCube, model: TargetModel, strategy: str = "adaptive", *,
                  k: float = DEFAULT_K, x0: float | None = None, levels: int = DEFAULT_LEVELS,
                  min_area: int = MIN_AREA, max_area: int = MAX_AREA, target_box: Rect | None = None,
                  threads: int = 1, lazy: bool = True,
                  bin_index: np.ndarray | None = None,
                  confidence=confidence_affine) -> DetectionResult:
    """Histograms, per-group maps, fusion and candidate extraction on one ROI.

    ``bin_index`` may carry the already quantised ROI (for instance a crop of
    a frame quantised once and shared by several tracks).
    """
    if bin_index is None:
        stack = build_integral_histograms(cube, model.bins, lazy=lazy)
    else:
        if bin_index.shape != cube.planes.shape:
            raise ValueError("bin index does not match the cube")
        stack = IntegralHistStack(bin_index, model.bins, lazy=lazy)
    maps = compute_likelihood_maps(stack, model, threads, confidence)
    fused, weights = fuse_maps(maps, strategy, k, x0, levels, target_box)
    blobs = extract_candidates(fused, cube, model.grouping, min_area, max_area, levels,
                               model.bins, bin_index=stack.bin_index)
    return DetectionResult(stack, maps, fused, weights, blobs)
