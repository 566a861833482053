"""Candidate blobs from a fused likelihood map."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .datacube import BandGrouping, HyperCube, Rect
from .features import GroupHistogram, patch_histogram, quantize
from .fusion import DEFAULT_LEVELS, BinaryMap, _grid, binarize, otsu_multilevel

MIN_AREA = 20
MAX_AREA = 100
SQUARE_3x3 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class Blob:
    id: int
    centroid: tuple[float, float]
    bbox: Rect
    area: int
    mean_confidence: float = 0.0
    histograms: tuple[GroupHistogram, ...] = ()

    def shifted(self, dx: int, dy: int) -> "Blob":
        return Blob(self.id, (self.centroid[0] + dx, self.centroid[1] + dy),
                    self.bbox.shifted(dx, dy), self.area, self.mean_confidence, self.histograms)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "centroid": [self.centroid[0], self.centroid[1]],
            "bbox": self.bbox.as_list(),
            "area": self.area,
            "mean_confidence": self.mean_confidence,
        }


def morphological_close(binary, se: np.ndarray = SQUARE_3x3) -> BinaryMap:
    """Dilate then erode. The image is zero-padded first so the closing stays extensive at borders."""
    g = np.asarray(_grid(binary), dtype=bool)
    pad = max(se.shape)
    padded = np.pad(g, pad)
    closed = ndimage.binary_erosion(ndimage.binary_dilation(padded, se), se)
    thr = binary.threshold if isinstance(binary, BinaryMap) else float("nan")
    return BinaryMap(closed[pad:-pad, pad:-pad], thr)


def label_components(binary, connectivity: int = 8) -> tuple[np.ndarray, int]:
    structure = SQUARE_3x3 if connectivity == 8 else ndimage.generate_binary_structure(2, 1)
    labels, n = ndimage.label(np.asarray(_grid(binary), dtype=bool), structure=structure)
    return labels, n


def connected_components(binary, connectivity: int = 8) -> list[Blob]:
    """Maximal connected foreground regions, numbered in raster order of their first pixel."""
    labels, n = label_components(binary, connectivity)
    if n == 0:
        return []
    return _blobs_from_labels(labels, n)


def _blobs_from_labels(labels, n, confidence=None):
    flat = labels.ravel()
    area = np.bincount(flat, minlength=n + 1)
    rows, cols = np.indices(labels.shape)
    sy = np.bincount(flat, rows.ravel(), minlength=n + 1)
    sx = np.bincount(flat, cols.ravel(), minlength=n + 1)
    conf = None if confidence is None else np.bincount(flat, confidence.ravel(), minlength=n + 1)
    blobs = []
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        ys, xs = sl
        bbox = Rect(xs.start, ys.start, xs.stop - xs.start, ys.stop - ys.start)
        a = int(area[i])
        # pixel centres sit at +0.5
        centroid = (sx[i] / a + 0.5, sy[i] / a + 0.5)
        mc = 0.0 if conf is None else float(conf[i] / a)
        blobs.append(Blob(i, centroid, bbox, a, mc))
    return blobs


def extract_candidates(fused, cube: HyperCube, grouping: BandGrouping, min_area: int = MIN_AREA,
                       max_area: int = MAX_AREA, levels: int = DEFAULT_LEVELS, bins: int = 10,
                       bin_index: np.ndarray | None = None, se: np.ndarray = SQUARE_3x3,
                       connectivity: int = 8) -> list[Blob]:
    """Threshold, close, label and size-filter the fused map.

    Each surviving blob carries its mean fused confidence and per-group
    spectral histograms over its bounding box. Sorted by confidence,
    highest first.
    """
    if min_area < 1 or max_area < min_area:
        raise ValueError("need 1 <= min_area <= max_area")
    g = _grid(fused)
    thr = otsu_multilevel(g, levels)[-1]
    closed = morphological_close(binarize(g, thr), se)
    labels, n = label_components(closed, connectivity)
    if n == 0:
        return []
    if bin_index is None:
        bin_index = quantize(cube.planes, bins)
    out = []
    for b in _blobs_from_labels(labels, n, g):
        if not min_area <= b.area <= max_area:
            continue
        r = b.bbox
        block = bin_index[:, r.y:r.y1, r.x:r.x1]
        hists = tuple(patch_histogram(block, bins, grp) for grp in grouping)
        out.append(Blob(b.id, b.centroid, b.bbox, b.area, b.mean_confidence, hists))
    out.sort(key=lambda b: (-b.mean_confidence, b.id))
    return out
