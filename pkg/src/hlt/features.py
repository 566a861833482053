"""Integral-image histograms and chi-square histogram comparison.

Every band is quantised into ``bins`` uniform bins over [0, 1] (the last bin
closed above, so reflectance 1.0 lands in it). One summed-area table per
(band, bin) then gives the histogram of any rectangle in four lookups.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .datacube import HyperCube, Rect


class EmptyHistogramError(ValueError):
    pass


def quantize(planes: np.ndarray, bins: int) -> np.ndarray:
    """Bin index per value: ``min(floor(v * bins), bins - 1)``."""
    planes = np.asarray(planes)
    if planes.ndim != 3:
        return quantize(planes.reshape(1, 1, -1), bins).reshape(planes.shape)
    if not np.issubdtype(planes.dtype, np.floating):
        planes = planes.astype(np.float64)
    out = np.empty(planes.shape, dtype=np.uint8)
    return _kernels.quantize(planes, int(bins), out)


class IntegralHistStack:
    """Per-(band, bin) summed-area tables of size (H+1) x (W+1).

    With ``lazy=True`` tables are only computed for the (band, bin) pairs that
    are actually requested, which is what the tracking loop wants: a target
    model typically occupies one or two bins per band.
    """

    def __init__(self, bin_index: np.ndarray, bins: int, lazy: bool = False):
        self.bin_index = np.ascontiguousarray(bin_index, dtype=np.uint8)
        self.bins = int(bins)
        self.bands, self.height, self.width = self.bin_index.shape
        self._full = None if lazy else _kernels.integral_tables(self.bin_index, self.bins)
        self._cache: dict[tuple[int, int], np.ndarray] = {}

    @property
    def lazy(self) -> bool:
        return self._full is None

    def tables_for(self, bands, bin_ids) -> np.ndarray:
        """Stacked tables for the given (band, bin) pairs, shape (K, H+1, W+1)."""
        bands = np.asarray(bands, dtype=np.int64)
        bin_ids = np.asarray(bin_ids, dtype=np.int64)
        if self._full is not None:
            return self._full[bands, bin_ids]
        keys = list(zip(bands.tolist(), bin_ids.tolist()))
        missing = [k for k in dict.fromkeys(keys) if k not in self._cache]
        if missing:
            mb = np.array([m[0] for m in missing], dtype=np.int64)
            mv = np.array([m[1] for m in missing], dtype=np.int64)
            built = _kernels.integral_tables_for(self.bin_index, mb, mv)
            for key, tab in zip(missing, built):
                self._cache[key] = tab
            if len(missing) == len(keys):
                # every requested table is new and in request order: no copy needed
                return built
        out = np.empty((len(keys), self.height + 1, self.width + 1), np.int32)
        for i, key in enumerate(keys):
            out[i] = self._cache[key]
        return out

    def table(self, band: int, bin_id: int) -> np.ndarray:
        return self.tables_for([band], [bin_id])[0]

    def window_counts(self, rect: Rect, band: int) -> np.ndarray:
        """Integer bin counts of ``band`` inside ``rect`` (clamped to the image)."""
        r = rect.clamp(self.width, self.height)
        t = self.tables_for(np.full(self.bins, band), np.arange(self.bins))
        return (t[:, r.y1, r.x1].astype(np.int64) - t[:, r.y, r.x1]
                - t[:, r.y1, r.x] + t[:, r.y, r.x])


def build_integral_histograms(cube: HyperCube, bins: int = 10, lazy: bool = False) -> IntegralHistStack:
    if bins < 2:
        raise ValueError("need at least 2 bins")
    if bins > 255:
        raise ValueError("at most 255 bins are supported")
    return IntegralHistStack(quantize(cube.planes, bins), bins, lazy=lazy)


@dataclass(frozen=True)
class GroupHistogram:
    """Concatenated per-band histograms of one band group, L1-normalised."""

    values: np.ndarray
    bands: int
    bins: int

    def __post_init__(self):
        self.values.setflags(write=False)

    def __len__(self):
        return self.values.size

    @classmethod
    def from_counts(cls, counts, bins: int) -> "GroupHistogram":
        counts = np.asarray(counts, dtype=np.float64).ravel()
        total = counts.sum()
        if total <= 0:
            raise EmptyHistogramError("histogram has no mass")
        return cls(counts / total, counts.size // bins, bins)


def window_histogram(stack: IntegralHistStack, rect: Rect, group: tuple[int, int]) -> GroupHistogram:
    start, stop = group
    if not (0 <= start < stop <= stack.bands):
        raise ValueError(f"group {group} outside {stack.bands} bands")
    if rect.w < 1 or rect.h < 1:
        raise EmptyHistogramError(f"zero-area window {rect}")
    counts = [stack.window_counts(rect, b) for b in range(start, stop)]
    return GroupHistogram.from_counts(np.concatenate(counts), stack.bins)


def patch_histogram(bin_index: np.ndarray, bins: int, group: tuple[int, int]) -> GroupHistogram:
    """Group histogram straight from a (bands, h, w) block of bin indices."""
    start, stop = group
    block = bin_index[start:stop].reshape(stop - start, -1).astype(np.int64)
    if block.shape[1] == 0:
        raise EmptyHistogramError("empty patch")
    offsets = (np.arange(stop - start) * bins)[:, None]
    counts = np.bincount((block + offsets).ravel(), minlength=(stop - start) * bins)
    return GroupHistogram.from_counts(counts, bins)


def _values(h) -> np.ndarray:
    return h.values if isinstance(h, GroupHistogram) else np.asarray(h, dtype=np.float64)


def chi2_distance(p, q) -> float:
    """sum (p_i - q_i)^2 / (p_i + q_i), skipping 0/0 terms. In [0, 2] for normalised inputs."""
    p, q = _values(p), _values(q)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    s = p + q
    nz = s > 0
    d = p[nz] - q[nz]
    return float(np.sum(d * d / s[nz]))
