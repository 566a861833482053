"""Single-target tracking on the canonical plane.

A track carries a bank of motion models (one constant velocity, two
coordinated turns) whose estimates form a weighted Gaussian mixture. Each
frame the mixture predicts a ROI, the detector proposes blobs inside it and
an N-scan hypothesis tree decides, with a lag of N-1 frames, which blob (if
any) belongs to the target. Committed blobs feed the online target model.

State vectors are ``[x, y, vx, vy]`` in meters and m/s on the canonical
plane, which is the pixel grid of the track's first frame scaled by the
ground sampling distance. ``chain`` maps pixels of the current frame onto
that plane.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace
from functools import partial

import numpy as np
from scipy.special import logsumexp

from .datacube import HyperCube, Rect, crop_roi, make_grouping
from .detection import Blob
from .features import GroupHistogram, chi2_distance, patch_histogram, quantize
from .fusion import DEFAULT_K, DEFAULT_LEVELS
from .likelihood import (TargetModel, confidence_affine, confidence_exp, init_target_model,
                         update_target_model)
from .pipeline import run_detection

CV = "constant-velocity"
CT_LEFT = "coordinated-turn-left"
CT_RIGHT = "coordinated-turn-right"
# chi-square with 2 dof at 0.999
GATE_999 = 13.8
CONFIDENCE = ("affine", "exp")
HPOS = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])


class FilterError(ArithmeticError):
    """Covariance lost symmetry/positive-definiteness or an innovation became singular."""


class TrackError(ValueError):
    pass


@dataclass(frozen=True)
class MotionModel:
    """One member of the filter bank.

    Turn rates are signed in the canonical plane: positive ``omega`` rotates
    the velocity from +x towards +y. Image rows grow downwards, so on screen
    that is a clockwise (right) turn.
    """

    kind: str
    omega: float = 0.0
    q: float = 1.0

    def __post_init__(self):
        if self.kind == CV:
            if self.omega != 0.0:
                raise ValueError("constant-velocity model must have omega = 0")
        elif self.kind == CT_RIGHT:
            if not self.omega > 0.0:
                raise ValueError("right turn needs omega > 0")
        elif self.kind == CT_LEFT:
            if not self.omega < 0.0:
                raise ValueError("left turn needs omega < 0")
        else:
            raise ValueError(f"unknown motion model {self.kind!r}")
        if self.q < 0:
            raise ValueError("process noise must be non-negative")

    def transition(self, dt: float) -> np.ndarray:
        """State transition matrix. With omega fixed the turn model is linear in the
        state, so this is also the exact Jacobian used for the covariance."""
        w = self.omega
        if w == 0.0:
            return np.array([[1.0, 0.0, dt, 0.0], [0.0, 1.0, 0.0, dt],
                             [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
        s, c = np.sin(w * dt), np.cos(w * dt)
        return np.array([[1.0, 0.0, s / w, -(1.0 - c) / w],
                         [0.0, 1.0, (1.0 - c) / w, s / w],
                         [0.0, 0.0, c, -s],
                         [0.0, 0.0, s, c]])

    def process_noise(self, dt: float) -> np.ndarray:
        """Discrete white-noise acceleration, independent per axis."""
        a, b, c = dt ** 3 / 3.0, dt ** 2 / 2.0, dt
        return self.q * np.array([[a, 0.0, b, 0.0], [0.0, a, 0.0, b],
                                  [b, 0.0, c, 0.0], [0.0, b, 0.0, c]])


def coordinated_turn(state, omega: float, dt: float) -> np.ndarray:
    """Closed-form coordinated-turn propagation (no noise)."""
    x, y, vx, vy = (float(v) for v in state)
    if omega == 0.0:
        return np.array([x + vx * dt, y + vy * dt, vx, vy])
    th = omega * dt
    return np.array([
        x + (vx * np.sin(th) - vy * (1.0 - np.cos(th))) / omega,
        y + (vx * (1.0 - np.cos(th)) + vy * np.sin(th)) / omega,
        vx * np.cos(th) - vy * np.sin(th),
        vx * np.sin(th) + vy * np.cos(th),
    ])


def default_models(q: float = 4.0, turn_rate: float = 0.2) -> tuple[MotionModel, ...]:
    return (MotionModel(CV, 0.0, q), MotionModel(CT_LEFT, -abs(turn_rate), q),
            MotionModel(CT_RIGHT, abs(turn_rate), q))


def _checked(P: np.ndarray) -> np.ndarray:
    P = 0.5 * (P + P.T)
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise FilterError("covariance is not positive definite") from None
    return P


def gaussian_logpdf(nu: np.ndarray, S: np.ndarray) -> float:
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise FilterError("innovation covariance is singular") from None
    z = np.linalg.solve(L, nu)
    return float(-0.5 * z @ z - np.log(np.diag(L)).sum() - 0.5 * nu.size * np.log(2.0 * np.pi))


@dataclass(frozen=True)
class FilterBank:
    """Interaction-free bank: models never exchange states, only their weights move."""

    models: tuple[MotionModel, ...]
    means: np.ndarray     # (M, 4)
    covs: np.ndarray      # (M, 4, 4)
    weights: np.ndarray   # (M,)
    weight_floor: float = 1e-3

    @classmethod
    def start(cls, models, mean, cov, weight_floor: float = 1e-3) -> "FilterBank":
        m = len(models)
        cov = _checked(np.asarray(cov, dtype=np.float64))
        return cls(tuple(models), np.tile(np.asarray(mean, dtype=np.float64), (m, 1)),
                   np.tile(cov, (m, 1, 1)), np.full(m, 1.0 / m), weight_floor)

    def predict(self, dt: float) -> "FilterBank":
        if not dt > 0:
            raise ValueError("dt must be positive")
        means = np.empty_like(self.means)
        covs = np.empty_like(self.covs)
        for i, mm in enumerate(self.models):
            F = mm.transition(dt)
            means[i] = F @ self.means[i]
            covs[i] = _checked(F @ self.covs[i] @ F.T + mm.process_noise(dt))
        return replace(self, means=means, covs=covs)

    def mixture(self) -> tuple[np.ndarray, np.ndarray]:
        """Moment-matched mean and covariance of the weighted mixture."""
        mean = self.weights @ self.means
        d = self.means - mean
        cov = np.einsum("i,ijk->jk", self.weights, self.covs) + np.einsum("i,ij,ik->jk", self.weights, d, d)
        return mean, cov

    def position(self) -> tuple[np.ndarray, np.ndarray]:
        mean, cov = self.mixture()
        return mean[:2], cov[:2, :2]

    def log_likelihood(self, z, R) -> float:
        """Log-density of a position measurement under the (predicted) mixture."""
        z = np.asarray(z, dtype=np.float64)
        terms = [np.log(w) + gaussian_logpdf(z - m[:2], P[:2, :2] + R)
                 for w, m, P in zip(self.weights, self.means, self.covs)]
        return float(logsumexp(terms))

    def mahalanobis2(self, z, R) -> float:
        mean, cov = self.position()
        nu = np.asarray(z, dtype=np.float64) - mean
        S = cov + R
        return float(nu @ np.linalg.solve(S, nu))

    def update(self, z, R) -> "FilterBank":
        """Kalman update of every model with a position measurement; weights follow the
        innovation likelihoods."""
        z = np.asarray(z, dtype=np.float64)
        R = np.asarray(R, dtype=np.float64)
        means = np.empty_like(self.means)
        covs = np.empty_like(self.covs)
        logl = np.empty(len(self.models))
        eye = np.eye(4)
        for i in range(len(self.models)):
            x, P = self.means[i], self.covs[i]
            S = P[:2, :2] + R
            nu = z - x[:2]
            logl[i] = gaussian_logpdf(nu, S)
            K = np.linalg.solve(S, P[:2, :]).T
            A = eye - K @ HPOS
            means[i] = x + K @ nu
            covs[i] = _checked(A @ P @ A.T + K @ R @ K.T)
        lw = np.log(self.weights) + logl
        w = np.exp(lw - logsumexp(lw))
        w = np.maximum(w, self.weight_floor)
        return replace(self, means=means, covs=covs, weights=w / w.sum())


# ---- association ---------------------------------------------------------

@dataclass(frozen=True)
class AssociationParams:
    alpha: float = 0.5
    sigma_s: float = 0.5
    miss_penalty: float = -4.0
    gate: float = GATE_999
    nscan: int = 3
    max_hypotheses: int = 10

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.sigma_s <= 0 or self.gate <= 0:
            raise ValueError("sigma_s and gate must be positive")
        if self.nscan < 1 or self.max_hypotheses < 1:
            raise ValueError("nscan and max_hypotheses must be at least 1")


@dataclass(frozen=True)
class Observation:
    """A blob expressed on the canonical plane, ready for association."""

    blob: Blob                # frame pixel coordinates
    z: np.ndarray             # canonical position, meters
    R: np.ndarray             # 2x2 measurement covariance, meters^2
    # target-sized box at the blob centre; preferred over the blob's own
    # (smeared, background-heavy) bbox histograms when present
    histograms: tuple[GroupHistogram, ...] = ()


@dataclass(frozen=True)
class BlobScore:
    index: int
    d2: float
    spectral: float
    motion: float
    combined: float
    gated: bool


def spectral_loglik(hists, model: TargetModel, sigma_s: float) -> float:
    """``-mean_g chi2(h_g, model_g) / sigma_s``."""
    d = [chi2_distance(h.values, m.values) for h, m in zip(hists, model.histograms)]
    return -float(np.mean(d)) / sigma_s


def score_blobs(predicted: FilterBank, observations, model: TargetModel,
                params: AssociationParams) -> list[BlobScore]:
    """Gate and score every observation against a predicted bank.

    Gated-out observations are reported with ``gated=False`` and are never
    candidates.
    """
    out = []
    for i, ob in enumerate(observations):
        d2 = predicted.mahalanobis2(ob.z, ob.R)
        if d2 > params.gate:
            out.append(BlobScore(i, d2, float("nan"), float("nan"), float("-inf"), False))
            continue
        s = spectral_loglik(ob.histograms or ob.blob.histograms, model, params.sigma_s)
        m = predicted.log_likelihood(ob.z, ob.R)
        out.append(BlobScore(i, d2, s, m, params.alpha * s + (1.0 - params.alpha) * m, True))
    return out


@dataclass(frozen=True)
class Choice:
    t: int
    observation: Observation | None   # None = miss
    score: float

    @property
    def key(self):
        return (self.t, -1 if self.observation is None else self.observation.blob.id)


@dataclass(frozen=True)
class Hypothesis:
    choices: tuple[Choice, ...]
    loglik: float
    bank: FilterBank
    misses: int = 0

    @property
    def key(self):
        return tuple(c.key for c in self.choices)


class NScanAssociator:
    """Deferred-decision association over a window of ``nscan`` frames.

    Every live hypothesis is extended with each gated observation and with a
    miss; the best ``max_hypotheses`` survive. Once branches are ``nscan``
    choices deep, the root choice of the best branch is committed and
    branches that disagree with it are dropped.
    """

    def __init__(self, bank: FilterBank, params: AssociationParams):
        self.params = params
        self.hypotheses = [Hypothesis((), 0.0, bank, 0)]

    @property
    def best(self) -> Hypothesis:
        return self.hypotheses[0]

    def predicted(self, dt: float) -> list[FilterBank]:
        return [h.bank.predict(dt) for h in self.hypotheses]

    def step(self, t: int, observations, model: TargetModel, dt: float,
             predicted: list[FilterBank] | None = None) -> list[Choice]:
        """Extend the tree with frame ``t``; returns the choices committed by this step."""
        p = self.params
        if predicted is None:
            predicted = self.predicted(dt)
        children = []
        for h, bank in zip(self.hypotheses, predicted):
            children.append(Hypothesis(h.choices + (Choice(t, None, p.miss_penalty),),
                                       h.loglik + p.miss_penalty, bank, h.misses + 1))
            for s in score_blobs(bank, observations, model, p):
                if not s.gated:
                    continue
                ob = observations[s.index]
                children.append(Hypothesis(h.choices + (Choice(t, ob, s.combined),),
                                           h.loglik + s.combined, bank.update(ob.z, ob.R), 0))
        children.sort(key=lambda h: (-h.loglik, h.key))
        self.hypotheses = children[:p.max_hypotheses]
        if len(self.best.choices) >= p.nscan:
            return self._commit_root()
        return []

    def _commit_root(self) -> list[Choice]:
        root = self.best.choices[0]
        keep = [h for h in self.hypotheses if h.choices[0].key == root.key]
        self.hypotheses = [replace(h, choices=h.choices[1:]) for h in keep]
        return [root]

    def flush(self) -> list[Choice]:
        """Commit everything still pending on the best branch."""
        out = list(self.best.choices)
        self.hypotheses = [replace(self.best, choices=())]
        return out


# ---- the track -----------------------------------------------------------

@dataclass(frozen=True)
class TrackParams:
    groups: int = 12
    bins: int = 10
    strategy: str = "adaptive"
    k: float = DEFAULT_K
    x0: float | None = None
    levels: int = DEFAULT_LEVELS
    alpha: float = 0.5
    sigma_s: float = 0.5
    miss_penalty: float = -4.0
    gate: float = GATE_999
    nscan: int = 3
    max_hypotheses: int = 10
    rate: float = 0.1
    confidence_floor: float = -3.0
    max_misses: int = 5
    roi_size: int = 200
    q: float = 9.0
    turn_rate: float = 0.2
    weight_floor: float = 1e-3
    init_speed_std: float = 8.0
    min_area: int = 20
    max_area: int = 800
    confidence: str = "affine"
    confidence_sigma: float = 0.5
    threads: int = 1

    def __post_init__(self):
        if self.groups < 1 or self.roi_size < 20 or self.max_misses < 1:
            raise ValueError("groups, roi_size and max_misses out of range")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("rate must lie in [0, 1]")
        if self.confidence not in CONFIDENCE:
            raise ValueError(f"confidence must be one of {sorted(CONFIDENCE)}")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if not 1 <= self.min_area <= self.max_area:
            raise ValueError("need 1 <= min_area <= max_area")
        AssociationParams(self.alpha, self.sigma_s, self.miss_penalty, self.gate,
                          self.nscan, self.max_hypotheses)

    @property
    def confidence_fn(self):
        if self.confidence == "exp":
            return partial(confidence_exp, sigma=self.confidence_sigma)
        return confidence_affine

    @property
    def association(self) -> AssociationParams:
        return AssociationParams(self.alpha, self.sigma_s, self.miss_penalty, self.gate,
                                 self.nscan, self.max_hypotheses)

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class FrameRecord:
    t: int
    roi: Rect | None = None
    position: tuple[float, float] = (0.0, 0.0)       # canonical meters, best branch
    position_px: tuple[float, float] = (0.0, 0.0)    # current frame pixels
    weights: tuple[float, ...] = ()
    n_blobs: int = 0
    # filled in when the decision for this frame is committed
    decision: int | None = None                      # blob id, None = miss
    centroid_px: tuple[float, float] | None = None
    box: Rect | None = None
    score: float | None = None

    @property
    def associated(self) -> bool:
        return self.box is not None

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "roi": None if self.roi is None else self.roi.as_list(),
            "position_m": list(self.position),
            "position_px": list(self.position_px),
            "weights": list(self.weights),
            "n_blobs": self.n_blobs,
            "decision": "miss" if self.box is None else ("init" if self.decision is None
                                                         else self.decision),
            "centroid_px": None if self.centroid_px is None else list(self.centroid_px),
            "box": None if self.box is None else self.box.as_list(),
            "score": self.score,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FrameRecord":
        box = obj.get("box")
        roi = obj.get("roi")
        dec = obj.get("decision")
        return cls(int(obj["t"]), None if roi is None else Rect(*roi),
                   tuple(obj.get("position_m", (0.0, 0.0))), tuple(obj.get("position_px", (0.0, 0.0))),
                   tuple(obj.get("weights", ())), int(obj.get("n_blobs", 0)),
                   dec if isinstance(dec, int) else None,
                   None if obj.get("centroid_px") is None else tuple(obj["centroid_px"]),
                   None if box is None else Rect(*box), obj.get("score"))


@dataclass
class TrackLog:
    """Per-frame history of one track, from its first frame to its last."""

    records: list[FrameRecord]
    target_id: int | None = None
    terminated: bool = False

    @property
    def start(self) -> int:
        return self.records[0].t

    @property
    def end(self) -> int:
        return self.records[-1].t

    @property
    def life(self) -> int:
        return self.end - self.start + 1

    def to_json(self) -> dict:
        return {"target_id": self.target_id, "terminated": self.terminated,
                "start": self.start, "end": self.end,
                "frames": [r.to_json() for r in self.records]}

    @classmethod
    def from_json(cls, obj: dict) -> "TrackLog":
        return cls([FrameRecord.from_json(f) for f in obj["frames"]], obj.get("target_id"),
                   bool(obj.get("terminated", False)))


def apply_point(H: np.ndarray, x: float, y: float) -> tuple[float, float]:
    v = H @ np.array([x, y, 1.0])
    return float(v[0] / v[2]), float(v[1] / v[2])


class Tracker:
    """One target, followed frame by frame.

    ``step`` consumes frames in order. The frame homography ``H`` maps the
    new frame's pixels onto the previous frame's.
    """

    def __init__(self, cube: HyperCube, bbox: Rect, params: TrackParams = TrackParams(), *,
                 t0: int = 0, gsd: float = 0.3, dt: float = 1.0, target_id: int | None = None):
        self.params = params
        self.gsd = float(gsd)
        self.dt = float(dt)
        self.frame_size = (cube.width, cube.height)
        if bbox.w < 2 or bbox.h < 2:
            raise TrackError(f"degenerate initial box {bbox}")
        grouping = make_grouping(cube.bands, params.groups)
        self.model = init_target_model(cube, bbox, grouping, params.bins, params.rate)
        self.length = max(bbox.w, bbox.h)
        self.breadth = min(bbox.w, bbox.h)
        self.horizontal = bbox.w >= bbox.h
        self.chain = np.eye(3)
        self.chain_inv = np.eye(3)
        cx, cy = bbox.center
        pos_std = np.array([bbox.w, bbox.h]) / 4.0 * self.gsd
        cov = np.diag(np.concatenate([pos_std ** 2, [params.init_speed_std ** 2] * 2]))
        bank = FilterBank.start(default_models(params.q, params.turn_rate),
                                [cx * self.gsd, cy * self.gsd, 0.0, 0.0], cov, params.weight_floor)
        self.associator = NScanAssociator(bank, params.association)
        first = FrameRecord(t0, Rect(0, 0, cube.width, cube.height), (cx * self.gsd, cy * self.gsd),
                            (cx, cy), tuple(bank.weights), 0, None, (cx, cy), bbox, 0.0)
        self.log = TrackLog([first], target_id)
        self._pending: dict[int, FrameRecord] = {}
        self.active = True

    # -- coordinate plumbing --
    def apply_homography(self, H) -> None:
        """Compose the frame-to-previous-frame homography into the canonical chain."""
        H = np.asarray(H, dtype=np.float64)
        if H.shape != (3, 3):
            raise TrackError("homography must be 3x3")
        if abs(np.linalg.det(H)) < 1e-12:
            raise TrackError("homography is not invertible")
        self.chain = self.chain @ H
        self.chain_inv = np.linalg.inv(self.chain)

    def to_canonical_m(self, x: float, y: float) -> np.ndarray:
        cx, cy = apply_point(self.chain, x, y)
        return np.array([cx * self.gsd, cy * self.gsd])

    def to_frame_px(self, xm: float, ym: float) -> tuple[float, float]:
        return apply_point(self.chain_inv, xm / self.gsd, ym / self.gsd)

    def box_at(self, cx: float, cy: float, horizontal: bool | None = None) -> Rect:
        h = self.horizontal if horizontal is None else horizontal
        w, hh = (self.length, self.breadth) if h else (self.breadth, self.length)
        return Rect.centered(cx, cy, w, hh)

    def _orientation(self, bank: FilterBank) -> bool:
        mean, _ = bank.mixture()
        vx, vy = mean[2], mean[3]
        if np.hypot(vx, vy) > 2.0:
            return abs(vx) >= abs(vy)
        return self.horizontal

    # -- per frame --
    def predict_roi(self, predicted, logliks=None) -> tuple[tuple[float, float], Rect | None]:
        """ROI centred on the predicted position, in current-frame pixels.

        ``predicted`` is one bank or the predicted banks of all live
        hypotheses; in the latter case their means are blended with weights
        proportional to ``exp(loglik)`` so the ROI follows the whole tree, not
        just its current leader.
        """
        if isinstance(predicted, FilterBank):
            mean, _ = predicted.position()
        else:
            lw = np.zeros(len(predicted)) if logliks is None else np.asarray(logliks, dtype=np.float64)
            w = np.exp(lw - logsumexp(lw))
            mean = sum(wi * b.position()[0] for wi, b in zip(w, predicted))
        px = self.to_frame_px(*mean)
        s = self.params.roi_size
        w, h = self.frame_size
        try:
            roi = Rect.centered(px[0], px[1], s, s).clamp(w, h)
        except ValueError:
            roi = None
        return px, roi

    def _observation(self, blob: Blob, roi: Rect, bin_index: np.ndarray, horizontal: bool) -> Observation:
        b = blob.shifted(roi.x, roi.y)
        z = self.to_canonical_m(*b.centroid)
        sx = max(b.bbox.w, 1) / 4.0 * self.gsd
        sy = max(b.bbox.h, 1) / 4.0 * self.gsd
        cx, cy = blob.centroid
        try:
            r = self.box_at(cx, cy, horizontal).clamp(roi.w, roi.h)
            block = bin_index[:, r.y:r.y1, r.x:r.x1]
            hists = tuple(patch_histogram(block, self.params.bins, g) for g in self.model.grouping)
        except ValueError:
            hists = ()
        return Observation(b, z, np.diag([sx * sx, sy * sy]), hists)

    def step(self, cube: HyperCube, H, t: int, bin_index: np.ndarray | None = None) -> FrameRecord:
        """Process frame ``t``. ``bin_index`` may hold the whole frame already quantised."""
        if not self.active:
            raise TrackError("track has terminated")
        p = self.params
        self.apply_homography(H)
        predicted = self.associator.predicted(self.dt)
        _, roi = self.predict_roi(predicted, [h.loglik for h in self.associator.hypotheses])
        horizontal = self._orientation(predicted[0])
        observations = []
        if roi is not None:
            sub = crop_roi(cube, roi)
            if bin_index is None:
                roi_index = quantize(sub.planes, p.bins)
            else:
                roi_index = np.ascontiguousarray(bin_index[:, roi.y:roi.y1, roi.x:roi.x1])
            if roi.w >= 10 and roi.h >= 10:
                pb = predicted[0].position()[0]
                fx, fy = self.to_frame_px(*pb)
                tb = self.box_at(fx - roi.x, fy - roi.y, horizontal)
                res = run_detection(sub, self.model, p.strategy, k=p.k, x0=p.x0, levels=p.levels,
                                    min_area=p.min_area, max_area=p.max_area, target_box=tb,
                                    threads=p.threads, bin_index=roi_index,
                                    confidence=p.confidence_fn)
                observations = [self._observation(b, roi, roi_index, horizontal) for b in res.blobs]
        committed = self.associator.step(t, observations, self.model, self.dt, predicted)
        best = self.associator.best
        mean, _ = best.bank.mixture()
        rec = FrameRecord(t, roi, (float(mean[0]), float(mean[1])), self.to_frame_px(mean[0], mean[1]),
                          tuple(float(w) for w in best.bank.weights), len(observations))
        self.log.records.append(rec)
        self._pending[t] = rec
        self._commit(committed)
        if best.misses >= p.max_misses:
            self.terminate()
        return rec

    def _commit(self, choices) -> None:
        for c in choices:
            rec = self._pending.pop(c.t)
            ob = c.observation
            if ob is None:
                continue
            cx, cy = ob.blob.centroid
            rec.decision = ob.blob.id
            rec.centroid_px = (cx, cy)
            bw, bh = ob.blob.bbox.w, ob.blob.bbox.h
            horizontal = self.horizontal if bw == bh else bw > bh
            rec.box = self.box_at(cx, cy, horizontal)
            rec.score = c.score
            if c.score > self.params.confidence_floor and ob.histograms and self.params.rate > 0:
                self.model = update_target_model(self.model, ob.histograms, self.params.rate)

    def terminate(self) -> None:
        if not self.active:
            return
        self._commit(self.associator.flush())
        self.active = False
        self.log.terminated = True

    def finish(self) -> TrackLog:
        """Commit pending decisions (end of sequence) and return the log."""
        if self.active:
            self._commit(self.associator.flush())
        return self.log


# ---- evaluation ----------------------------------------------------------

def dominant_target(log: TrackLog, truth, iou_gate: float = 0.3) -> tuple[int | None, int]:
    """Target the track followed most often, and in how many frames.

    A frame counts for a target when the track's box overlaps that target's
    box with IoU above ``iou_gate`` (the best-overlapping target if several
    do). Ties go to the smallest id.
    """
    if not log.records:
        raise ValueError("empty track history")
    counts: Counter = Counter()
    for rec in log.records:
        if rec.box is None or not 0 <= rec.t < len(truth.vehicles):
            continue
        best, best_iou = None, iou_gate
        for v in truth.vehicles[rec.t]:
            iou = rec.box.iou(v.bbox)
            if iou > best_iou:
                best, best_iou = v.id, iou
        if best is not None:
            counts[best] += 1
    if not counts:
        return None, 0
    dominant = min(counts, key=lambda v: (-counts[v], v))
    return dominant, counts[dominant]


def compute_purity(log: TrackLog, truth, iou_gate: float = 0.3) -> tuple[float, float]:
    """Track purity (share of the track's life on its dominant target) and
    target purity (share of the dominant target's life covered by the track)."""
    dominant, n = dominant_target(log, truth, iou_gate)
    if dominant is None:
        return 0.0, 0.0
    return n / log.life, n / truth.life(dominant)
