"""Deterministic synthetic hyperspectral traffic scenes with ground truth.

A scene is a static world (ground, roads, vegetation, roofs) seen by a
camera that drifts by whole pixels from frame to frame, with vehicles
driving closed loops on the road grid. Everything is a pure function of the
config and its seed; frame ``t`` can be rendered on its own.

World coordinates are frame-0 pixel coordinates times the ground sampling
distance. The spectral curves below are hand-made stand-ins shaped after
common urban materials (asphalt, grass with a red edge, painted metal); they
are not measured spectra.
"""
from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .datacube import HyperCube, Rect, load_cube, save_cube


class SceneConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralSignature:
    """Reflectance curve: ``offset + sum(amp * exp(-(wl - center)^2 / (2 width^2)))`` clipped to [0, 1]."""

    name: str
    offset: float
    bumps: tuple[tuple[float, float, float], ...] = ()

    def __call__(self, wavelengths_nm) -> np.ndarray:
        wl = np.asarray(wavelengths_nm, dtype=np.float64)
        r = np.full(wl.shape, self.offset)
        for center, width, amp in self.bumps:
            r += amp * np.exp(-0.5 * ((wl - center) / width) ** 2)
        return np.clip(r, 0.0, 1.0)


BACKGROUND = {s.name: s for s in (
    SpectralSignature("asphalt", 0.07, ((1000.0, 300.0, 0.05),)),
    SpectralSignature("concrete", 0.22, ((700.0, 250.0, 0.12),)),
    SpectralSignature("grass", 0.03, ((550.0, 30.0, 0.06), (800.0, 60.0, 0.42),
                                      (900.0, 70.0, 0.38), (1000.0, 80.0, 0.30))),
    SpectralSignature("tree", 0.02, ((550.0, 30.0, 0.04), (800.0, 60.0, 0.30),
                                     (900.0, 70.0, 0.26), (1000.0, 80.0, 0.20))),
    SpectralSignature("roof", 0.10, ((700.0, 120.0, 0.20), (950.0, 100.0, 0.10))),
    SpectralSignature("soil", 0.12, ((900.0, 300.0, 0.18),)),
    SpectralSignature("shadow", 0.03),
)}

PAINTS = {s.name: s for s in (
    SpectralSignature("black", 0.04),
    SpectralSignature("white", 0.72, ((1000.0, 200.0, 0.05),)),
    SpectralSignature("silver", 0.42, ((1000.0, 300.0, 0.05),)),
    SpectralSignature("red", 0.05, ((650.0, 60.0, 0.40), (750.0, 80.0, 0.45), (900.0, 120.0, 0.40))),
    SpectralSignature("blue", 0.06, ((460.0, 35.0, 0.30), (950.0, 100.0, 0.25))),
    SpectralSignature("navy", 0.05, ((450.0, 30.0, 0.12),)),
    SpectralSignature("green", 0.05, ((540.0, 35.0, 0.25), (900.0, 120.0, 0.20))),
    SpectralSignature("yellow", 0.08, ((580.0, 50.0, 0.50), (750.0, 150.0, 0.50))),
    SpectralSignature("maroon", 0.05, ((700.0, 60.0, 0.15), (900.0, 150.0, 0.20))),
    SpectralSignature("orange", 0.06, ((620.0, 50.0, 0.50), (800.0, 150.0, 0.45))),
    SpectralSignature("tan", 0.25, ((650.0, 150.0, 0.15),)),
    SpectralSignature("forest", 0.04, ((550.0, 30.0, 0.08), (850.0, 150.0, 0.10))),
)}

SIGNATURES = {**BACKGROUND, **PAINTS}


def ndvi(signature: SpectralSignature) -> float:
    nir, red = signature([800.0, 670.0])
    return float((nir - red) / (nir + red))


@dataclass(frozen=True)
class VehicleSpec:
    paint: str
    route: tuple[tuple[float, float], ...]  # closed loop of waypoints, meters
    start_m: float = 0.0  # distance along the loop at frame 0
    speed_mean: float = 15.6  # m/s
    speed_std: float = 1.0  # per-frame spread, m/s
    length_px: int = 14
    width_px: int = 7


@dataclass(frozen=True)
class Region:
    signature: str
    polygon: tuple[tuple[float, float], ...]  # meters


@dataclass(frozen=True)
class SceneConfig:
    width: int = 384
    height: int = 384
    n_frames: int = 100
    interval_s: float = 1.0
    gsd: float = 0.3
    bands: tuple[float, float, float] = (400.0, 990.0, 10.0)
    vehicles: tuple[VehicleSpec, ...] = ()
    ground: str = "soil"
    regions: tuple[Region, ...] = ()
    shadows: tuple[Region, ...] = ()
    noise_sigma: float = 0.01
    illumination_sigma: float = 0.0  # random-walk step of the global illumination scalar
    illumination_bounds: tuple[float, float] = (0.8, 1.2)
    drift_step_px: int = 0  # max per-frame camera translation
    max_drift_px: int = 0
    texture: float = 0.0  # relative amplitude of static background texture
    corner_radius_m: float = 0.0  # 0 keeps sharp corners at full speed
    turn_speed: float = 4.0  # m/s on corner arcs
    brake: float = 3.0  # m/s^2 when slowing for or leaving a corner
    layout_seed: int = 0
    seed: int = 0

    @property
    def wavelengths_nm(self) -> np.ndarray:
        start, stop, step = self.bands
        n = (stop - start) / step
        if step <= 0 or abs(n - round(n)) > 1e-9:
            raise SceneConfigError(f"band step {step} does not divide [{start}, {stop}]")
        return start + step * np.arange(int(round(n)) + 1)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "SceneConfig":
        obj = dict(obj)
        obj["vehicles"] = tuple(
            VehicleSpec(**{**v, "route": tuple(tuple(p) for p in v["route"])})
            for v in obj.get("vehicles", ()))
        for key in ("regions", "shadows"):
            obj[key] = tuple(Region(r["signature"], tuple(tuple(p) for p in r["polygon"]))
                             for r in obj.get(key, ()))
        obj["bands"] = tuple(obj.get("bands", (400.0, 990.0, 10.0)))
        obj["illumination_bounds"] = tuple(obj.get("illumination_bounds", (0.8, 1.2)))
        return cls(**obj)


@dataclass(frozen=True)
class VehicleTruth:
    id: int
    cx: float
    cy: float
    x: int
    y: int
    w: int
    h: int

    @property
    def bbox(self) -> Rect:
        return Rect(self.x, self.y, self.w, self.h)


@dataclass
class GroundTruth:
    homographies: list[np.ndarray]  # frame t -> frame t-1
    vehicles: list[list[VehicleTruth]]
    gsd: float
    interval_s: float

    def __len__(self):
        return len(self.vehicles)

    def box(self, t: int, vid: int) -> Rect | None:
        for v in self.vehicles[t]:
            if v.id == vid:
                return v.bbox
        return None

    def life(self, vid: int) -> int:
        return sum(1 for frame in self.vehicles if any(v.id == vid for v in frame))

    def ids(self) -> list[int]:
        return sorted({v.id for frame in self.vehicles for v in frame})

    def to_json(self) -> dict:
        return {
            "frames": [
                {"homography": [float(x) for x in H.ravel()],
                 "vehicles": [asdict(v) for v in vs]}
                for H, vs in zip(self.homographies, self.vehicles)
            ],
            "gsd": self.gsd,
            "interval_s": self.interval_s,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        hs = [np.asarray(f["homography"], dtype=np.float64).reshape(3, 3) for f in obj["frames"]]
        vs = [[VehicleTruth(**v) for v in f["vehicles"]] for f in obj["frames"]]
        return cls(hs, vs, float(obj["gsd"]), float(obj["interval_s"]))


def translation(dx: float, dy: float) -> np.ndarray:
    return np.array([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]])


def _polygon_mask(poly_px: np.ndarray, x0: int, y0: int, w: int, h: int) -> np.ndarray:
    """Even-odd point-in-polygon test at pixel centres of the window [x0, x0+w) x [y0, y0+h)."""
    ys, xs = np.mgrid[y0:y0 + h, x0:x0 + w]
    px, py = xs + 0.5, ys + 0.5
    inside = np.zeros((h, w), dtype=bool)
    n = len(poly_px)
    for i in range(n):
        ax, ay = poly_px[i]
        bx, by = poly_px[(i + 1) % n]
        if ay == by:
            continue
        crosses = (ay > py) != (by > py)
        xint = ax + (py - ay) * (bx - ax) / (by - ay)
        inside ^= crosses & (px < xint)
    return inside


class LoopPath:
    """Closed driving path in pixels: the route polygon with its corners rounded.

    Each corner becomes a circular arc of ``radius_px`` (shrunk when the
    adjacent legs are short). Vehicles are slowed to ``turn_speed`` on the
    arcs and brake or accelerate at ``brake`` m/s^2 around them, so headings
    change smoothly as they do for real cars turning at an intersection.
    """

    def __init__(self, route_px, radius_px: float = 0.0, samples: int = 12):
        route = np.asarray(route_px, dtype=np.float64)
        n = len(route)
        pts, arcs = [], []
        for i in range(n):
            p0, p1, p2 = route[i - 1], route[i], route[(i + 1) % n]
            a, b = p1 - p0, p2 - p1
            la, lb = np.hypot(*a), np.hypot(*b)
            if radius_px <= 0 or la == 0 or lb == 0:
                pts.append(p1)
                continue
            ua, ub = a / la, b / lb
            cross = ua[0] * ub[1] - ua[1] * ub[0]
            theta = float(np.arccos(np.clip(ua @ ub, -1.0, 1.0)))
            if theta < 1e-9 or abs(cross) < 1e-12:
                pts.append(p1)
                continue
            tangent = min(radius_px * np.tan(theta / 2.0), 0.45 * min(la, lb))
            r = tangent / np.tan(theta / 2.0)
            start = p1 - ua * tangent
            side = np.sign(cross)
            centre = start + side * r * np.array([-ua[1], ua[0]])
            phi0 = np.arctan2(start[1] - centre[1], start[0] - centre[0])
            first = len(pts)
            for k in range(samples + 1):
                phi = phi0 + side * theta * k / samples
                pts.append(centre + r * np.array([np.cos(phi), np.sin(phi)]))
            arcs.append((first, len(pts) - 1))
        self.points = np.array(pts)
        seg = np.roll(self.points, -1, axis=0) - self.points
        self.lengths = np.hypot(seg[:, 0], seg[:, 1])
        self.seg = seg
        self.cum = np.concatenate([[0.0], np.cumsum(self.lengths)])
        self.perimeter = float(self.cum[-1])
        self.arcs = [(float(self.cum[i]), float(self.cum[j])) for i, j in arcs]

    def locate(self, dist: float):
        """Position and unit heading at arc length ``dist`` (wrapped)."""
        if self.perimeter == 0:
            return self.points[0], np.array([1.0, 0.0])
        d = dist % self.perimeter
        i = int(np.searchsorted(self.cum, d, side="right") - 1)
        i = min(max(i, 0), len(self.lengths) - 1)
        while self.lengths[i] == 0:
            i = (i + 1) % len(self.lengths)
        frac = (d - self.cum[i]) / self.lengths[i]
        return self.points[i] + frac * self.seg[i], self.seg[i] / self.lengths[i]

    def distance_to_turn(self, dist: float) -> float:
        """Path distance (either direction) to the nearest arc; 0 on an arc."""
        if not self.arcs:
            return float("inf")
        d = dist % self.perimeter
        best = float("inf")
        for a, b in self.arcs:
            if a <= d <= b:
                return 0.0
            best = min(best, (a - d) % self.perimeter, (d - b) % self.perimeter)
        return best


class Scene:
    """Renders frames of a config on demand. Frame rendering is pure in (config, t)."""

    def __init__(self, config: SceneConfig):
        self.config = config
        self.wavelengths_nm = config.wavelengths_nm
        self._validate()
        self._offsets = self._camera_offsets()
        self._illum = self._illumination()
        self._states = self._vehicle_states()
        self._world = None

    # ---- static plan -------------------------------------------------
    def _validate(self):
        c = self.config
        if c.n_frames < 1 or c.width < 1 or c.height < 1:
            raise SceneConfigError("frame size and count must be positive")
        if c.noise_sigma < 0 or c.illumination_sigma < 0:
            raise SceneConfigError("noise levels must be non-negative")
        lo, hi = c.illumination_bounds
        if not 0.8 <= lo <= 1.0 <= hi <= 1.2:
            raise SceneConfigError("illumination bounds must lie within [0.8, 1.2] around 1")
        for name in [c.ground] + [r.signature for r in c.regions + c.shadows]:
            if name not in SIGNATURES:
                raise SceneConfigError(f"unknown signature {name!r}")
        m = c.max_drift_px
        for i, v in enumerate(c.vehicles):
            if v.paint not in SIGNATURES:
                raise SceneConfigError(f"vehicle {i}: unknown paint {v.paint!r}")
            if v.speed_std < 0 or v.speed_mean < 0:
                raise SceneConfigError(f"vehicle {i}: negative speed parameters")
            if len(v.route) < 2:
                raise SceneConfigError(f"vehicle {i}: route needs at least two waypoints")
            half = max(v.length_px, v.width_px) / 2.0 + 1
            pts = np.asarray(v.route) / c.gsd
            if (pts[:, 0].min() - half - m < 0 or pts[:, 1].min() - half - m < 0
                    or pts[:, 0].max() + half + m > c.width or pts[:, 1].max() + half + m > c.height):
                raise SceneConfigError(f"vehicle {i}: route leaves the visible world")

    def _camera_offsets(self) -> np.ndarray:
        c = self.config
        off = np.zeros((c.n_frames, 2), dtype=np.int64)
        if c.drift_step_px > 0:
            rng = np.random.default_rng([c.seed, 3])
            steps = rng.integers(-c.drift_step_px, c.drift_step_px + 1, size=(c.n_frames, 2))
            for t in range(1, c.n_frames):
                off[t] = np.clip(off[t - 1] + steps[t], -c.max_drift_px, c.max_drift_px)
        return off

    def _illumination(self) -> np.ndarray:
        c = self.config
        s = np.ones(c.n_frames)
        if c.illumination_sigma > 0:
            rng = np.random.default_rng([c.seed, 2])
            steps = rng.normal(0.0, c.illumination_sigma, c.n_frames)
            lo, hi = c.illumination_bounds
            for t in range(1, c.n_frames):
                s[t] = min(max(s[t - 1] + steps[t], lo), hi)
        return s

    def _vehicle_states(self):
        """Per frame, per vehicle: (center x, center y, heading unit vector) in world pixels."""
        c = self.config
        states = []
        sub = 10
        for vid, v in enumerate(c.vehicles):
            rng = np.random.default_rng([c.seed, 1, vid])
            speeds = np.maximum(rng.normal(v.speed_mean, v.speed_std, c.n_frames), 0.0)
            path = LoopPath(np.asarray(v.route, dtype=np.float64) / c.gsd, c.corner_radius_m / c.gsd)
            dist = v.start_m / c.gsd
            h = c.interval_s / sub
            track = []
            for t in range(c.n_frames):
                track.append(path.locate(dist))
                for _ in range(sub):
                    # cruise speed, capped so the car can brake down to turn_speed in time
                    gap_m = path.distance_to_turn(dist) * c.gsd
                    vmax = math.sqrt(c.turn_speed ** 2 + 2.0 * c.brake * gap_m) if path.arcs else math.inf
                    dist += min(speeds[t], vmax) * h / c.gsd
            states.append(track)
        return states

    def vehicle_truth(self, t: int) -> list[VehicleTruth]:
        ox, oy = self._offsets[t]
        out = []
        for vid, v in enumerate(self.config.vehicles):
            pos, heading = self._states[vid][t]
            horizontal = abs(heading[0]) >= abs(heading[1])
            w, h = (v.length_px, v.width_px) if horizontal else (v.width_px, v.length_px)
            x = int(math.floor(pos[0] - w / 2.0 + 0.5)) - int(ox)
            y = int(math.floor(pos[1] - h / 2.0 + 0.5)) - int(oy)
            out.append(VehicleTruth(vid, x + w / 2.0, y + h / 2.0, x, y, w, h))
        return out

    def homography(self, t: int) -> np.ndarray:
        if t == 0:
            return np.eye(3)
        d = self._offsets[t] - self._offsets[t - 1]
        return translation(float(d[0]), float(d[1]))

    def ground_truth(self) -> GroundTruth:
        c = self.config
        return GroundTruth([self.homography(t) for t in range(c.n_frames)],
                           [self.vehicle_truth(t) for t in range(c.n_frames)],
                           c.gsd, c.interval_s)

    # ---- rendering ---------------------------------------------------
    def _world_background(self) -> np.ndarray:
        if self._world is not None:
            return self._world
        c = self.config
        m = c.max_drift_px
        W, H = c.width + 2 * m, c.height + 2 * m
        names = [c.ground] + [r.signature for r in c.regions]
        table = np.stack([SIGNATURES[n](self.wavelengths_nm) for n in names], axis=1)
        label = np.zeros((H, W), dtype=np.int64)
        for i, region in enumerate(c.regions, start=1):
            poly = np.asarray(region.polygon) / c.gsd + m
            label[_polygon_mask(poly, 0, 0, W, H)] = i
        planes = table[:, label]
        if c.texture > 0:
            rng = np.random.default_rng([c.layout_seed, 5])
            tex = ndimage.gaussian_filter(rng.standard_normal((H, W)), 3.0, mode="wrap")
            tex /= tex.std()
            planes = planes * (1.0 + c.texture * tex)[None]
        self._world = np.clip(planes, 0.0, 1.0).astype(np.float32)
        return self._world

    def render(self, t: int) -> HyperCube:
        c = self.config
        if not 0 <= t < c.n_frames:
            raise IndexError(t)
        m = c.max_drift_px
        ox, oy = (int(v) for v in self._offsets[t])
        planes = self._world_background()[:, m + oy:m + oy + c.height, m + ox:m + ox + c.width].copy()
        for v, vt in zip(c.vehicles, self.vehicle_truth(t)):
            r = vt.bbox.clamp(c.width, c.height)
            planes[:, r.y:r.y1, r.x:r.x1] = SIGNATURES[v.paint](self.wavelengths_nm)[:, None, None]
        for s in c.shadows:
            poly = np.asarray(s.polygon) / c.gsd - np.array([ox, oy])
            mask = _polygon_mask(poly, 0, 0, c.width, c.height)
            planes[:, mask] = SIGNATURES[s.signature](self.wavelengths_nm)[:, None]
        if self._illum[t] != 1.0:
            planes *= np.float32(self._illum[t])
        if c.noise_sigma > 0:
            rng = np.random.default_rng([c.seed, 4, t])
            planes += np.float32(c.noise_sigma) * rng.standard_normal(planes.shape, dtype=np.float32)
        np.clip(planes, 0.0, 1.0, out=planes)
        return HyperCube(planes, self.wavelengths_nm, validate=False)


class Frames(Sequence):
    """Lazy sequence of rendered cubes; keeps the most recent frame."""

    def __init__(self, scene: Scene):
        self.scene = scene
        self._last = (None, None)

    def __len__(self):
        return self.scene.config.n_frames

    def __getitem__(self, t):
        if isinstance(t, slice):
            return [self[i] for i in range(*t.indices(len(self)))]
        if t < 0:
            t += len(self)
        if self._last[0] != t:
            self._last = (t, self.scene.render(t))
        return self._last[1]


def generate_scene(config: SceneConfig) -> tuple[Frames, GroundTruth]:
    scene = Scene(config)
    return Frames(scene), scene.ground_truth()


# ---- benchmark layout -------------------------------------------------

ROAD_LINES_PX = (48, 192, 336)
ROAD_WIDTH_PX = 24
LANE_OFFSET_PX = 6


def _rect_poly(x0, y0, x1, y1, gsd):
    return tuple((x * gsd, y * gsd) for x, y in ((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


def benchmark_layout(gsd: float = 0.3, size: int = 384) -> tuple[Region, ...]:
    """Road grid with grass, trees, roofs and a concrete lot between the roads."""
    regions = []
    half = ROAD_WIDTH_PX // 2
    a, b, c = ROAD_LINES_PX
    blocks = [
        ("grass", (a + half + 4, a + half + 4, b - half - 4, b - half - 4)),
        ("roof", (b + half + 10, a + half + 10, c - half - 10, b - half - 10)),
        ("concrete", (a + half + 6, b + half + 6, b - half - 6, c - half - 6)),
        ("grass", (b + half + 4, b + half + 4, c - half - 4, c - half - 4)),
        ("grass", (0, 0, size, a - half - 6)),
        ("grass", (0, c + half + 6, size, size)),
    ]
    for name, (x0, y0, x1, y1) in blocks:
        regions.append(Region(name, _rect_poly(x0, y0, x1, y1, gsd)))
    regions.append(Region("tree", _rect_poly(a + half + 20, a + half + 20, a + half + 60,
                                             a + half + 50, gsd)))
    regions.append(Region("tree", tuple((x * gsd, y * gsd) for x, y in
                                        ((b + half + 20, c - half - 10), (c - half - 10, c - half - 10),
                                         (c - half - 10, b + half + 30)))))
    regions.append(Region("roof", _rect_poly(b + half + 30, a + half + 25, b + half + 80,
                                             a + half + 60, gsd)))
    for p in ROAD_LINES_PX:
        regions.append(Region("asphalt", _rect_poly(0, p - half, size, p + half, gsd)))
        regions.append(Region("asphalt", _rect_poly(p - half, 0, p + half, size, gsd)))
    return tuple(regions)


def default_benchmark_config(seed: int) -> SceneConfig:
    """100 one-second frames, ten vehicles on loops of the road grid at about 35 mph."""
    gsd = 0.3
    rng = np.random.default_rng([seed, 0])
    paints = list(PAINTS)
    order = rng.permutation(len(paints))[:10]
    loops = [(x0, x1, y0, y1) for x0, x1 in ((0, 1), (1, 2), (0, 2))
             for y0, y1 in ((0, 1), (1, 2), (0, 2))]
    vehicles = []
    for i in range(10):
        x0, x1, y0, y1 = loops[int(rng.integers(len(loops)))]
        clockwise = bool(rng.integers(2))
        # right-hand traffic: clockwise loops take the outer lane
        d = LANE_OFFSET_PX if clockwise else -LANE_OFFSET_PX
        xa, xb = ROAD_LINES_PX[x0] - d, ROAD_LINES_PX[x1] + d
        ya, yb = ROAD_LINES_PX[y0] - d, ROAD_LINES_PX[y1] + d
        pts = [(xa, ya), (xb, ya), (xb, yb), (xa, yb)]
        if not clockwise:
            pts = pts[::-1]
        route = tuple((x * gsd, y * gsd) for x, y in pts)
        perimeter = 2 * ((xb - xa) + (yb - ya)) * gsd
        speed = float(np.clip(rng.normal(15.6, 4.5), 5.0, 25.0))
        vehicles.append(VehicleSpec(
            paint=paints[int(order[i])], route=route,
            start_m=float(rng.uniform(0, perimeter)), speed_mean=speed, speed_std=1.0,
            length_px=int(rng.integers(12, 15)), width_px=int(rng.integers(6, 8))))
    return SceneConfig(
        width=384, height=384, n_frames=100, interval_s=1.0, gsd=gsd,
        bands=(400.0, 990.0, 10.0), vehicles=tuple(vehicles), ground="soil",
        regions=benchmark_layout(gsd), noise_sigma=0.01, illumination_sigma=0.01,
        illumination_bounds=(0.9, 1.1), drift_step_px=2, max_drift_px=8, texture=0.04,
        corner_radius_m=5.0, turn_speed=4.0, brake=3.0,
        layout_seed=0, seed=seed)


# ---- scene directories ------------------------------------------------

def write_scene(directory, frames, truth: GroundTruth, config: SceneConfig | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for t in range(len(frames)):
        save_cube(frames[t], d / f"frame_{t:04d}")
    (d / "truth.json").write_text(json.dumps(truth.to_json()))
    if config is not None:
        (d / "scene.json").write_text(json.dumps(config.to_json()))
    return d


class CubeDirectory(Sequence):
    def __init__(self, directory):
        self.directory = Path(directory)
        self._n = len(list(self.directory.glob("frame_*.bsq")))

    def __len__(self):
        return self._n

    def __getitem__(self, t):
        if t < 0:
            t += self._n
        if not 0 <= t < self._n:
            raise IndexError(t)
        return load_cube(self.directory / f"frame_{t:04d}")


def load_scene(directory) -> tuple[CubeDirectory, GroundTruth]:
    d = Path(directory)
    truth = GroundTruth.from_json(json.loads((d / "truth.json").read_text()))
    return CubeDirectory(d), truth


# ---- helpers for property tests and demos ----------------------------

def cv_trajectory(rng: np.random.Generator, steps: int, dt: float, q: float,
                  x0=(0.0, 0.0, 15.6, 0.0)) -> np.ndarray:
    """Constant-velocity truth driven by white acceleration noise of spectral density ``q``."""
    F = np.array([[1, 0, dt, 0], [0, 1, 0, dt], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=np.float64)
    Q = q * np.array([[dt ** 3 / 3, 0, dt ** 2 / 2, 0], [0, dt ** 3 / 3, 0, dt ** 2 / 2],
                      [dt ** 2 / 2, 0, dt, 0], [0, dt ** 2 / 2, 0, dt]])
    L = np.linalg.cholesky(Q)
    out = np.empty((steps, 4))
    x = np.asarray(x0, dtype=np.float64)
    for k in range(steps):
        x = F @ x + L @ rng.standard_normal(4)
        out[k] = x
    return out


def _random_signature(rng: np.random.Generator, name: str) -> SpectralSignature:
    bumps = tuple((float(rng.uniform(400, 1000)), float(rng.uniform(40, 150)),
                   float(rng.uniform(-0.15, 0.3))) for _ in range(3))
    return SpectralSignature(name, float(rng.uniform(0.1, 0.5)), bumps)


@dataclass(frozen=True)
class ContrastROI:
    cube: HyperCube
    target: Rect
    fg_mask: np.ndarray
    bg_mask: np.ndarray
    discriminative_group: int


def discriminative_roi(seed: int, n_groups: int = 12, size: int = 96, noise_sigma: float = 0.01,
                       bands: tuple[float, float, float] = (400.0, 990.0, 10.0)) -> ContrastROI:
    """ROI whose target matches the dominant background material in every band group but one.

    The background is a patchwork of three random materials, the first of
    which covers about half of the ROI. The target shares that material's
    spectrum except inside one randomly chosen group, where it is offset by
    0.3 reflectance.
    """
    rng = np.random.default_rng([seed, 7])
    wl = SceneConfig(bands=bands).wavelengths_nm
    nb = wl.size
    per = nb // n_groups
    mats = [_random_signature(rng, f"m{i}")(wl) for i in range(3)]
    g = int(rng.integers(n_groups))
    target = mats[0].copy()
    sl = slice(g * per, (g + 1) * per)
    shift = 0.3 if target[sl].mean() < 0.5 else -0.3
    target[sl] = np.clip(target[sl] + shift, 0.0, 1.0)

    # coarse random patchwork: 12 px cells, half of them the dominant material
    cells = -(-size // 12)
    grid = rng.choice(3, size=(cells, cells), p=(0.5, 0.3, 0.2))
    label = np.kron(grid, np.ones((12, 12), dtype=np.int64))[:size, :size]
    planes = np.stack(mats, axis=1)[:, label]
    tw, th = (16, 8) if rng.integers(2) else (8, 16)
    tx = int(rng.integers(4, size - tw - 4))
    ty = int(rng.integers(4, size - th - 4))
    planes[:, ty:ty + th, tx:tx + tw] = target[:, None, None]
    planes = planes + noise_sigma * rng.standard_normal(planes.shape)
    cube = HyperCube(np.clip(planes, 0.0, 1.0), wl)
    fg = np.zeros((size, size), dtype=bool)
    fg[ty:ty + th, tx:tx + tw] = True
    return ContrastROI(cube, Rect(tx, ty, tw, th), fg, ~fg, g)
