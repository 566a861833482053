"""Hyperspectral cube container, band grouping, ROI cropping and BSQ file I/O.

Cubes are stored band-sequential in memory (``planes`` has shape
``(bands, height, width)``) which matches the on-disk layout and is the
access pattern every per-band histogram needs. ``HyperCube.data`` gives the
conventional ``(height, width, bands)`` view.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class CubeError(ValueError):
    """Base class for cube validation and parsing failures."""


class CubeHeaderError(CubeError):
    pass


class CubeSizeError(CubeError):
    pass


class CubeNonFiniteError(CubeError):
    pass


class CubeRangeError(CubeError):
    pass


class InvalidGroupingError(ValueError):
    pass


class EmptyROIError(ValueError):
    pass


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle; ``(x, y)`` is the top-left corner."""

    x: int
    y: int
    w: int
    h: int

    @property
    def x1(self) -> int:
        return self.x + self.w

    @property
    def y1(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return max(self.w, 0) * max(self.h, 0)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def clamp(self, width: int, height: int) -> "Rect":
        """Intersect with the ``width`` x ``height`` image; raises if nothing is left."""
        x0, y0 = max(self.x, 0), max(self.y, 0)
        x1, y1 = min(self.x1, width), min(self.y1, height)
        if x1 <= x0 or y1 <= y0:
            raise EmptyROIError(f"{self} does not intersect a {width}x{height} image")
        return Rect(x0, y0, x1 - x0, y1 - y0)

    def shifted(self, dx: int, dy: int) -> "Rect":
        return Rect(self.x + dx, self.y + dy, self.w, self.h)

    def iou(self, other: "Rect") -> float:
        ix = min(self.x1, other.x1) - max(self.x, other.x)
        iy = min(self.y1, other.y1) - max(self.y, other.y)
        if ix <= 0 or iy <= 0:
            return 0.0
        inter = ix * iy
        return inter / float(self.area + other.area - inter)

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def centered(cls, cx: float, cy: float, w: int, h: int) -> "Rect":
        return cls(int(round(cx - w / 2.0)), int(round(cy - h / 2.0)), int(w), int(h))


class HyperCube:
    """Immutable H x W x B reflectance cube with per-band wavelengths."""

    def __init__(self, planes, wavelengths_nm, *, validate: bool = True):
        planes = np.ascontiguousarray(planes, dtype=np.float32)
        if planes.ndim != 3:
            raise CubeSizeError(f"expected a 3-D (bands, height, width) array, got {planes.shape}")
        wl = np.asarray(wavelengths_nm, dtype=np.float64)
        if wl.ndim != 1 or wl.size != planes.shape[0]:
            raise CubeHeaderError(f"{wl.size} wavelengths for {planes.shape[0]} bands")
        if wl.size > 1 and not np.all(np.diff(wl) > 0):
            raise CubeHeaderError("wavelengths must be strictly increasing")
        if validate:
            _check_values(planes)
        planes.setflags(write=False)
        wl.setflags(write=False)
        self.planes = planes
        self.wavelengths_nm = wl

    @classmethod
    def from_hwb(cls, data, wavelengths_nm) -> "HyperCube":
        return cls(np.moveaxis(np.asarray(data), 2, 0), wavelengths_nm)

    @property
    def data(self) -> np.ndarray:
        """(height, width, bands) view of the reflectance values."""
        return self.planes.transpose(1, 2, 0)

    @property
    def bands(self) -> int:
        return self.planes.shape[0]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.bands)

    def __eq__(self, other):
        if not isinstance(other, HyperCube):
            return NotImplemented
        return (np.array_equal(self.wavelengths_nm, other.wavelengths_nm)
                and self.planes.shape == other.planes.shape
                and np.array_equal(self.planes.view(np.uint32), other.planes.view(np.uint32)))

    __hash__ = None

    def __repr__(self):
        return f"HyperCube({self.width}x{self.height}x{self.bands})"


def _check_values(planes: np.ndarray) -> None:
    if not np.all(np.isfinite(planes)):
        raise CubeNonFiniteError("cube contains NaN or infinite reflectance")
    if planes.size and (planes.min() < 0.0 or planes.max() > 1.0):
        raise CubeRangeError(
            f"reflectance outside [0, 1]: min={planes.min():g}, max={planes.max():g}")


@dataclass(frozen=True)
class BandGrouping:
    groups: tuple[tuple[int, int], ...]
    bands_per_group: int

    def __len__(self):
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    def __getitem__(self, i):
        return self.groups[i]

    @property
    def bands(self) -> int:
        return self.groups[-1][1]


def make_grouping(bands: int, n_groups: int) -> BandGrouping:
    """Split ``bands`` into ``n_groups`` contiguous equal-width ranges ``[start, stop)``."""
    if n_groups < 1 or bands < 1 or bands % n_groups:
        raise InvalidGroupingError(f"cannot split {bands} bands into {n_groups} equal groups")
    size = bands // n_groups
    return BandGrouping(tuple((i * size, (i + 1) * size) for i in range(n_groups)), size)


def crop_roi(cube: HyperCube, roi: Rect) -> HyperCube:
    r = roi.clamp(cube.width, cube.height)
    if r == Rect(0, 0, cube.width, cube.height):
        return cube
    planes = cube.planes[:, r.y:r.y1, r.x:r.x1]
    return HyperCube(planes, cube.wavelengths_nm, validate=False)


def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (".bsq", ".json"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".bsq"), p.with_name(p.name + ".json")


def save_cube(cube: HyperCube, path) -> Path:
    """Write ``<name>.bsq`` (float32 LE, band-major) and its ``<name>.json`` header."""
    bsq, hdr = _paths(path)
    bsq.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "width": cube.width,
        "height": cube.height,
        "bands": cube.bands,
        "wavelengths_nm": [float(v) for v in cube.wavelengths_nm],
    }
    hdr.write_text(json.dumps(header))
    bsq.write_bytes(cube.planes.astype("<f4", copy=False).tobytes(order="C"))
    return bsq


def load_cube(path) -> HyperCube:
    bsq, hdr = _paths(path)
    try:
        header = json.loads(hdr.read_text())
        w, h, b = int(header["width"]), int(header["height"]), int(header["bands"])
        wl = [float(v) for v in header["wavelengths_nm"]]
    except FileNotFoundError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise CubeHeaderError(f"malformed header {hdr}: {exc}") from exc
    if min(w, h, b) < 1:
        raise CubeHeaderError(f"non-positive dimensions in {hdr}")
    if len(wl) != b:
        raise CubeHeaderError(f"header lists {len(wl)} wavelengths for {b} bands")
    raw = bsq.read_bytes()
    expected = w * h * b * 4
    if len(raw) != expected:
        raise CubeSizeError(f"{bsq}: header implies {expected} bytes, payload has {len(raw)}")
    planes = np.frombuffer(raw, dtype="<f4").reshape(b, h, w).astype(np.float32)
    return HyperCube(planes, wl)
