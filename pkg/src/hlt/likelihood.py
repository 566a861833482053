"""Per-group likelihood maps from sliding-window spectral histograms."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .datacube import BandGrouping, HyperCube, Rect
from .features import (GroupHistogram, IntegralHistStack, build_integral_histograms,
                       patch_histogram, quantize)

# (width, height): horizontal, vertical and diagonal vehicle footprints
WINDOW_SHAPES = ((20, 10), (10, 20), (14, 14))


@dataclass(frozen=True)
class TargetModel:
    histograms: tuple[GroupHistogram, ...]
    grouping: BandGrouping
    bins: int = 10
    window_shapes: tuple[tuple[int, int], ...] = WINDOW_SHAPES
    rate: float = 0.1

    def __post_init__(self):
        if len(self.histograms) != len(self.grouping):
            raise ValueError("one histogram per band group is required")

    def to_json(self) -> dict:
        return {
            "bins": self.bins,
            "groups": [list(g) for g in self.grouping.groups],
            "window_shapes": [list(s) for s in self.window_shapes],
            "rate": self.rate,
            "histograms": [h.values.tolist() for h in self.histograms],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TargetModel":
        groups = tuple(tuple(int(v) for v in g) for g in obj["groups"])
        grouping = BandGrouping(groups, groups[0][1] - groups[0][0])
        bins = int(obj["bins"])
        hists = tuple(GroupHistogram.from_counts(np.asarray(h, float), bins)
                      for h in obj["histograms"])
        return cls(hists, grouping, bins,
                   tuple(tuple(int(v) for v in s) for s in obj.get("window_shapes", WINDOW_SHAPES)),
                   float(obj.get("rate", 0.1)))


@dataclass(frozen=True)
class LikelihoodMap:
    grid: np.ndarray
    group: int = 0

    @property
    def shape(self):
        return self.grid.shape


def init_target_model(cube: HyperCube, bbox: Rect, grouping: BandGrouping, bins: int = 10,
                      rate: float = 0.1) -> TargetModel:
    """Reference histograms from the pixels inside ``bbox``."""
    if bbox.w < 2 or bbox.h < 2:
        raise ValueError(f"degenerate target box {bbox}")
    if bbox.x < 0 or bbox.y < 0 or bbox.x1 > cube.width or bbox.y1 > cube.height:
        raise ValueError(f"target box {bbox} is not inside the {cube.width}x{cube.height} cube")
    if grouping.bands != cube.bands:
        raise ValueError(f"grouping covers {grouping.bands} bands, cube has {cube.bands}")
    idx = quantize(cube.planes[:, bbox.y:bbox.y1, bbox.x:bbox.x1], bins)
    hists = tuple(patch_histogram(idx, bins, g) for g in grouping)
    return TargetModel(hists, grouping, bins, WINDOW_SHAPES, rate)


def update_target_model(model: TargetModel, observed, rate: float | None = None) -> TargetModel:
    """Blend each group histogram towards ``observed``: ``(1 - rate) * old + rate * new``."""
    rate = model.rate if rate is None else rate
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    if len(observed) != len(model.histograms):
        raise ValueError("observed histograms do not match the model's groups")
    if rate == 0.0:
        return model
    new = []
    for old, obs in zip(model.histograms, observed):
        ov = obs.values if isinstance(obs, GroupHistogram) else np.asarray(obs, float)
        if ov.shape != old.values.shape:
            raise ValueError(f"dimension mismatch: {ov.shape} vs {old.values.shape}")
        new.append(GroupHistogram.from_counts((1.0 - rate) * old.values + rate * ov, model.bins))
    return replace(model, histograms=tuple(new))


def confidence_affine(chi2: np.ndarray) -> np.ndarray:
    return np.clip(1.0 - 0.5 * chi2, 0.0, 1.0)


def confidence_exp(chi2: np.ndarray, sigma: float = 0.5) -> np.ndarray:
    return np.clip(np.exp(-chi2 / sigma), 0.0, 1.0)


def min_chi2_map(stack: IntegralHistStack, group: tuple[int, int], reference: GroupHistogram,
                 shapes=WINDOW_SHAPES) -> np.ndarray:
    """Best (smallest) window-vs-reference chi-square distance at every pixel."""
    start, stop = group
    nb = stop - start
    if reference.values.size != nb * stack.bins:
        raise ValueError("reference histogram does not match the group size")
    if not any(w <= stack.width and h <= stack.height for w, h in shapes):
        raise ValueError(f"ROI {stack.width}x{stack.height} is smaller than every window {shapes}")
    nz = np.flatnonzero(reference.values > 0)
    bands = start + nz // stack.bins
    bin_ids = nz % stack.bins
    tables = stack.tables_for(bands, bin_ids)
    out = np.empty((stack.height, stack.width))
    _kernels.min_chi2_map(tables, np.ascontiguousarray(reference.values[nz]), float(nb),
                          np.asarray(shapes, dtype=np.int64), out)
    return out


def compute_likelihood_map(stack: IntegralHistStack, model: TargetModel, group_index: int,
                           confidence=confidence_affine) -> LikelihoodMap:
    """Confidence map for one band group: max over window shapes of ``confidence(chi2)``.

    Any decreasing ``confidence`` mapping commutes with the max, so the kernel
    only tracks the smallest distance per pixel.
    """
    chi2 = min_chi2_map(stack, model.grouping[group_index], model.histograms[group_index],
                        model.window_shapes)
    return LikelihoodMap(confidence(chi2), group_index)


def compute_likelihood_maps(stack: IntegralHistStack, model: TargetModel, threads: int = 1,
                            confidence=confidence_affine) -> list[LikelihoodMap]:
    n = len(model.grouping)
    if threads <= 1 or n == 1:
        return [compute_likelihood_map(stack, model, i, confidence) for i in range(n)]
    if stack.lazy:
        # warm the shared table cache before fanning out
        for i in range(n):
            start = model.grouping[i][0]
            nz = np.flatnonzero(model.histograms[i].values > 0)
            stack.tables_for(start + nz // stack.bins, nz % stack.bins)
    with ThreadPoolExecutor(max_workers=min(threads, n)) as pool:
        return list(pool.map(lambda i: compute_likelihood_map(stack, model, i, confidence), range(n)))


def likelihood_maps_for_cube(cube: HyperCube, model: TargetModel, threads: int = 1,
                             lazy: bool = True) -> tuple[IntegralHistStack, list[LikelihoodMap]]:
    stack = build_integral_histograms(cube, model.bins, lazy=lazy)
    return stack, compute_likelihood_maps(stack, model, threads)
