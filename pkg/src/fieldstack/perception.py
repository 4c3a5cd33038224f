"""Synthetic onboard perception.

Generates body-frame detections of landmarks, the ball, and other robots
from ground truth, applying a field-of-view test, occlusion by robot
bodies, and distance-banded range noise. Also hosts the single-ball
validation gate, a constant-velocity Kalman tracker for the ball, and
the landmark budget selection used by localization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from enum import IntEnum

import numpy as np

from .field import Pose2D, body_to_world, wrap_angle, wrap_angle_array, world_to_body

BALL_DIAMETER = 0.22  # m
BALL_MAX_HEIGHT = 0.3  # m, detections higher than this are not a ground ball
ROBOT_BODY_RADIUS = 0.18  # m, occlusion and collision disc
LANDMARK_BUDGET = 6  # detections kept for localization per frame
DETECTION_CAP = 7  # hard cap on landmark detections per frame


class ObjectClass(IntEnum):
    """Detection classes; the first four match LandmarkClass values."""

    L = 0
    T = 1
    X = 2
    G = 3
    BALL = 4
    ROBOT_RED = 5
    ROBOT_BLUE = 6


LANDMARK_CLASSES = (ObjectClass.L, ObjectClass.T, ObjectClass.X, ObjectClass.G)


@dataclass
class CameraModel:
    """Pinhole-ish stereo head model; angles in radians."""

    fov_h: float = math.radians(90.0)
    fov_v: float = math.radians(60.0)
    mount_height: float = 1.25  # m, optical center above ground
    min_depth: float = 0.4  # m, stereo depth unreliable closer than this
    max_range: float = 9.5  # m
    frame_rate_hz: float = 60.0
    focal_px: float = 500.0  # px, used by the pixel-size depth fallback

    def to_dict(self) -> dict:
        return {
            "fov_h": self.fov_h,
            "fov_v": self.fov_v,
            "mount_height": self.mount_height,
            "min_depth": self.min_depth,
            "max_range": self.max_range,
            "frame_rate_hz": self.frame_rate_hz,
            "focal_px": self.focal_px,
        }

    @staticmethod
    def from_dict(d: dict) -> "CameraModel":
        return CameraModel(**{k: float(v) for k, v in d.items()})


# (upper range bound m, symmetric fractional range error)
DEFAULT_RANGE_BANDS: tuple[tuple[float, float], ...] = (
    (2.0, 0.01),
    (4.0, 0.03),
    (6.0, 0.05),
    (8.0, 0.08),
    (math.inf, 0.10),
)


@dataclass
class NoiseModel:
    """Distance-banded range error plus Gaussian bearing error.

    Range error is drawn uniformly inside the band envelope; the bands
    must be in increasing range order with non-decreasing error.
    """

    range_bands: tuple[tuple[float, float], ...] = DEFAULT_RANGE_BANDS
    bearing_sigma: float = math.radians(1.0)
    false_negative: float = 0.0  # per-object drop probability
    false_positive_rate: float = 0.0  # expected clutter detections per frame

    def __post_init__(self):
        prev_r, prev_e = 0.0, -1.0
        for r, e in self.range_bands:
            if r <= prev_r or e < prev_e:
                raise ValueError(f"range bands must be sorted with non-decreasing error: {self.range_bands}")
            prev_r, prev_e = r, e

    @classmethod
    def zero(cls) -> "NoiseModel":
        return cls(bearing_sigma=0.0, range_bands=((math.inf, 0.0),))

    def range_error_pct(self, r: float) -> float:
        """Symmetric fractional range-error envelope at range r."""
        for bound, err in self.range_bands:
            if r < bound:
                return err
        return self.range_bands[-1][1]

    def range_error_pct_array(self, r: np.ndarray) -> np.ndarray:
        bounds = np.array([b for b, _ in self.range_bands])
        errs = np.array([e for _, e in self.range_bands])
        return errs[np.searchsorted(bounds, r, side="right")]

    def to_dict(self) -> dict:
        return {
            "range_bands": [[b if math.isfinite(b) else "inf", e] for b, e in self.range_bands],
            "bearing_sigma": self.bearing_sigma,
            "false_negative": self.false_negative,
            "false_positive_rate": self.false_positive_rate,
        }

    @staticmethod
    def from_dict(d: dict) -> "NoiseModel":
        bands = tuple(
            (math.inf if b == "inf" else float(b), float(e)) for b, e in d["range_bands"]
        )
        return NoiseModel(
            range_bands=bands,
            bearing_sigma=float(d["bearing_sigma"]),
            false_negative=float(d.get("false_negative", 0.0)),
            false_positive_rate=float(d.get("false_positive_rate", 0.0)),
        )


@dataclass
class Detection:
    """One detected object in the observer's body frame."""

    kind: ObjectClass
    position: np.ndarray  # (2,) body frame, m
    confidence: float
    height: float = 0.0  # m, estimated height of the object center above ground
    pixel_diameter: float = 0.0  # px, ball only
    truth_index: int = -1  # index into the generating scene, -1 for clutter

    @property
    def range(self) -> float:
        return float(np.hypot(self.position[0], self.position[1]))

    @property
    def bearing(self) -> float:
        return float(math.atan2(self.position[1], self.position[0]))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.name,
            "position": [float(self.position[0]), float(self.position[1])],
            "confidence": round(self.confidence, 6),
            "height": round(self.height, 6),
            "pixel_diameter": round(self.pixel_diameter, 3),
            "truth_index": self.truth_index,
        }

    @staticmethod
    def from_dict(d: dict) -> "Detection":
        return Detection(
            kind=ObjectClass[d["kind"]],
            position=np.array(d["position"], dtype=float),
            confidence=float(d["confidence"]),
            height=float(d.get("height", 0.0)),
            pixel_diameter=float(d.get("pixel_diameter", 0.0)),
            truth_index=int(d.get("truth_index", -1)),
        )


@dataclass
class SceneRobot:
    """Minimal truth record of another robot for sensing purposes."""

    position: np.ndarray  # (2,) world
    team: int  # 0 red, 1 blue
    radius: float = ROBOT_BODY_RADIUS


@dataclass
class Scene:
    """Ground-truth world snapshot handed to the synthetic sensor."""

    landmark_classes: np.ndarray  # (n,) int
    landmark_positions: np.ndarray  # (n,2) world
    ball: np.ndarray | None = None  # (2,) world; None if off the pitch
    ball_height: float = 0.0
    robots: list[SceneRobot] = dc_field(default_factory=list)


def _occluded(obs_xy: np.ndarray, targets: np.ndarray, blockers: list[tuple[np.ndarray, float]]) -> np.ndarray:
    """True where the observer->target ray passes through a blocker disc."""
    n = targets.shape[0]
    if not blockers or n == 0:
        return np.zeros(n, dtype=bool)
    d = targets - obs_xy[None, :]
    seg_len2 = np.maximum(np.einsum("ij,ij->i", d, d), 1e-12)
    centers = np.array([c for c, _ in blockers]) - obs_xy[None, :]
    radii = np.array([r for _, r in blockers])
    t = np.clip((d @ centers.T) / seg_len2[:, None], 0.0, 1.0)  # (target, blocker)
    gap = t[:, :, None] * d[:, None, :] - centers[None, :, :]
    dist2 = np.einsum("tbj,tbj->tb", gap, gap)
    # only blocks if the blocker sits strictly between observer and target
    between = (t > 1e-6) & (t < 1.0 - 1e-6)
    return ((dist2 < radii[None, :] ** 2) & between).any(axis=1)


def sense(
    scene: Scene,
    observer: Pose2D,
    neck_yaw: float,
    cam: CameraModel,
    noise: NoiseModel,
    rng: np.random.Generator,
    observer_index: int = -1,
) -> list[Detection]:
    """Generate one frame of body-frame detections from ground truth.

    Deterministic for a given scene, observer state, and generator state.
    Objects outside the horizontal field of view, beyond max range, or
    occluded by a robot body are not reported. The ball remains
    detectable inside the stereo minimum depth (its depth then comes
    from the pixel-size fallback); landmarks and robots do not.
    """
    heading = wrap_angle(observer.theta + neck_yaw)
    half_fov = cam.fov_h / 2.0
    obs_xy = observer.xy
    blockers = [
        (r.position, r.radius) for i, r in enumerate(scene.robots) if i != observer_index
    ]
    dets: list[Detection] = []

    def visible(world_xy: np.ndarray, allow_close: bool) -> tuple[bool, float, float]:
        dx, dy = world_xy[0] - obs_xy[0], world_xy[1] - obs_xy[1]
        r = math.hypot(dx, dy)
        if r > cam.max_range or (not allow_close and r < cam.min_depth):
            return False, r, 0.0
        b = wrap_angle(math.atan2(dy, dx) - heading)
        if abs(b) > half_fov:
            return False, r, b
        return True, r, b

    def noisy_body(r: float, bearing_world: float) -> np.ndarray:
        env = noise.range_error_pct(r)
        r_n = r * (1.0 + rng.uniform(-env, env)) if env > 0.0 else r
        b_n = bearing_world + (rng.normal(0.0, noise.bearing_sigma) if noise.bearing_sigma > 0.0 else 0.0)
        rel = wrap_angle(b_n - observer.theta)
        return np.array([r_n * math.cos(rel), r_n * math.sin(rel)])

    # landmarks, in map order
    if scene.landmark_positions.size:
        rel = scene.landmark_positions - obs_xy[None, :]
        r_all = np.hypot(rel[:, 0], rel[:, 1])
        bw_all = np.arctan2(rel[:, 1], rel[:, 0])
        keep = (r_all <= cam.max_range) & (r_all >= cam.min_depth)
        keep &= np.abs(wrap_angle_array(bw_all - heading)) <= half_fov
        if keep.any():
            keep &= ~_occluded(obs_xy, scene.landmark_positions, blockers)
        idx = np.flatnonzero(keep)
        if idx.size and noise.false_negative > 0.0:
            idx = idx[rng.uniform(size=idx.size) >= noise.false_negative]
        if idx.size:
            r = r_all[idx]
            env = noise.range_error_pct_array(r)
            r_n = r * (1.0 + rng.uniform(-1.0, 1.0, size=idx.size) * env) if env.any() else r
            b_n = bw_all[idx] + (
                rng.normal(0.0, noise.bearing_sigma, size=idx.size)
                if noise.bearing_sigma > 0.0
                else 0.0
            )
            rel_b = wrap_angle_array(b_n - observer.theta)
            xy = np.stack([r_n * np.cos(rel_b), r_n * np.sin(rel_b)], axis=1)
            conf = 1.0 / (1.0 + 0.08 * r)
            for k, i in enumerate(idx):
                dets.append(
                    Detection(
                        kind=ObjectClass(int(scene.landmark_classes[i])),
                        position=xy[k],
                        confidence=float(conf[k]),
                        truth_index=int(i),
                    )
                )

    # ball
    if scene.ball is not None:
        ok, r, _ = visible(scene.ball, allow_close=True)
        if ok and not bool(_occluded(obs_xy, scene.ball[None, :], blockers)[0]):
            if not (noise.false_negative > 0.0 and rng.uniform() < noise.false_negative):
                bw = math.atan2(scene.ball[1] - obs_xy[1], scene.ball[0] - obs_xy[0])
                px = cam.focal_px * BALL_DIAMETER / max(r, 0.05)
                dets.append(
                    Detection(
                        kind=ObjectClass.BALL,
                        position=noisy_body(r, bw),
                        confidence=1.0 / (1.0 + 0.05 * r),
                        height=scene.ball_height,
                        pixel_diameter=px,
                        truth_index=0,
                    )
                )

    # other robots
    others = [i for i in range(len(scene.robots)) if i != observer_index]
    if others:
        pos = np.array([scene.robots[i].position for i in others])
        rad = np.array([scene.robots[i].radius for i in others])
        rel = pos - obs_xy[None, :]
        r_all = np.hypot(rel[:, 0], rel[:, 1])
        bw_all = np.arctan2(rel[:, 1], rel[:, 0])
        keep = (r_all <= cam.max_range) & (r_all >= cam.min_depth)
        keep &= np.abs(wrap_angle_array(bw_all - heading)) <= half_fov
        if keep.any() and len(others) > 1:
            # mutual occlusion: blocker set is this same group minus the target
            seg2 = np.maximum(np.einsum("ij,ij->i", rel, rel), 1e-12)
            t = np.clip((rel @ rel.T) / seg2[:, None], 0.0, 1.0)  # (target, blocker)
            gap = t[:, :, None] * rel[:, None, :] - rel[None, :, :]
            dist2 = np.einsum("tbj,tbj->tb", gap, gap)
            between = (t > 1e-6) & (t < 1.0 - 1e-6)
            hit = (dist2 < rad[None, :] ** 2) & between
            np.fill_diagonal(hit, False)
            keep &= ~hit.any(axis=1)
        idx = np.flatnonzero(keep)
        if idx.size and noise.false_negative > 0.0:
            idx = idx[rng.uniform(size=idx.size) >= noise.false_negative]
        if idx.size:
            r = r_all[idx]
            env = noise.range_error_pct_array(r)
            r_n = r * (1.0 + rng.uniform(-1.0, 1.0, size=idx.size) * env) if env.any() else r
            b_n = bw_all[idx] + (
                rng.normal(0.0, noise.bearing_sigma, size=idx.size)
                if noise.bearing_sigma > 0.0
                else 0.0
            )
            rel_b = wrap_angle_array(b_n - observer.theta)
            xy = np.stack([r_n * np.cos(rel_b), r_n * np.sin(rel_b)], axis=1)
            for k, j in enumerate(idx):
                i = others[int(j)]
                dets.append(
                    Detection(
                        kind=ObjectClass.ROBOT_RED if scene.robots[i].team == 0 else ObjectClass.ROBOT_BLUE,
                        position=xy[k],
                        confidence=1.0 / (1.0 + 0.1 * float(r[k])),
                        truth_index=i,
                    )
                )

    # clutter
    if noise.false_positive_rate > 0.0:
        for _ in range(int(rng.poisson(noise.false_positive_rate))):
            r = rng.uniform(cam.min_depth, cam.max_range)
            b = rng.uniform(-half_fov, half_fov)
            rel = wrap_angle(heading + b - observer.theta)
            kind = ObjectClass(int(rng.integers(0, 5)))
            dets.append(
                Detection(
                    kind=kind,
                    position=np.array([r * math.cos(rel), r * math.sin(rel)]),
                    confidence=float(rng.uniform(0.2, 0.5)),
                    truth_index=-1,
                )
            )
    return dets


def validate_ball(det: Detection, cam: CameraModel, green_flag: bool = True) -> bool:
    """Single-ball sanity gate: size, height, and color agreement.

    The apparent pixel diameter at the measured range must imply a
    physical diameter near the regulation ball, the object center must
    sit below the max ball height, and the color checker must agree.
    """
    if det.kind != ObjectClass.BALL or not green_flag:
        return False
    if det.height > BALL_MAX_HEIGHT:
        return False
    if det.pixel_diameter <= 0.0:
        return False
    implied = det.pixel_diameter * det.range / cam.focal_px
    return 0.5 * BALL_DIAMETER <= implied <= 2.0 * BALL_DIAMETER


def geometric_depth(pixel_diameter: float, focal_px: float, true_diameter: float = BALL_DIAMETER) -> float:
    """Range from apparent size, for objects closer than the stereo minimum."""
    if pixel_diameter <= 0.0:
        raise ValueError("pixel diameter must be positive")
    return focal_px * true_diameter / pixel_diameter


@dataclass
class BallTrack:
    """Constant-velocity Kalman state for the ball: [x y z vx vy vz]."""

    state: np.ndarray = dc_field(default_factory=lambda: np.zeros(6))
    cov: np.ndarray = dc_field(default_factory=lambda: np.eye(6) * 4.0)
    initialized: bool = False
    last_update_age: float = 0.0  # s since last measurement fold-in

    def position(self) -> np.ndarray:
        return self.state[:3].copy()

    def velocity(self) -> np.ndarray:
        return self.state[3:].copy()


def _check_spd(cov: np.ndarray):
    if cov.shape != (6, 6) or not np.all(np.isfinite(cov)):
        raise ValueError("covariance must be a finite 6x6 matrix")
    if not np.allclose(cov, cov.T, atol=1e-6):
        raise ValueError("covariance must be symmetric")
    try:
        np.linalg.cholesky(cov + np.eye(6) * 1e-12)
    except np.linalg.LinAlgError as e:
        raise ValueError("covariance must be positive definite") from e


_KF_CACHE: dict[tuple[float, float], tuple[np.ndarray, np.ndarray]] = {}


def _kf_matrices(dt: float, accel_var: float) -> tuple[np.ndarray, np.ndarray]:
    key = (dt, accel_var)
    hit = _KF_CACHE.get(key)
    if hit is None:
        F = np.eye(6)
        F[0, 3] = F[1, 4] = F[2, 5] = dt
        # white-acceleration process noise per axis
        q11, q12, q22 = dt**4 / 4.0, dt**3 / 2.0, dt * dt
        Q = np.zeros((6, 6))
        for i in range(3):
            Q[i, i] = accel_var * q11
            Q[i, i + 3] = Q[i + 3, i] = accel_var * q12
            Q[i + 3, i + 3] = accel_var * q22
        Q += np.eye(6) * 1e-9
        if len(_KF_CACHE) > 64:
            _KF_CACHE.clear()
        hit = _KF_CACHE[key] = (F, Q)
    return hit


def kalman_step(
    track: BallTrack,
    measurement: np.ndarray | None,
    dt: float,
    accel_var: float = 4.0,
    meas_var: float = 0.0025,
    validate: bool = True,
) -> BallTrack:
    """One predict(+update) cycle of the constant-velocity ball filter.

    measurement is a world-frame position [x y z] or None for a
    prediction-only step. The covariance is kept symmetric positive
    definite (symmetrized, Joseph-form update); a non-SPD input raises
    unless validation is switched off for a trusted inner loop.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if validate:
        _check_spd(track.cov)

    F, Q = _kf_matrices(dt, accel_var)

    x = F @ track.state
    P = F @ track.cov @ F.T + Q
    P = 0.5 * (P + P.T)
    age = track.last_update_age + dt

    if measurement is not None:
        z = np.asarray(measurement, dtype=float)
        if z.shape != (3,) or not np.all(np.isfinite(z)):
            raise ValueError(f"measurement must be a finite 3-vector, got {z!r}")
        if not track.initialized:
            x = np.concatenate([z, np.zeros(3)])
            P = np.diag([meas_var] * 3 + [4.0] * 3)
            return BallTrack(state=x, cov=P, initialized=True, last_update_age=0.0)
        H = np.zeros((3, 6))
        H[0, 0] = H[1, 1] = H[2, 2] = 1.0
        R = np.eye(3) * meas_var
        S = H @ P @ H.T + R
        K = P @ H.T @ np.linalg.inv(S)
        x = x + K @ (z - H @ x)
        IKH = np.eye(6) - K @ H
        P = IKH @ P @ IKH.T + K @ R @ K.T  # Joseph form keeps P SPD
        P = 0.5 * (P + P.T)
        age = 0.0

    return BallTrack(state=x, cov=P, initialized=track.initialized, last_update_age=age)


def select_landmarks(dets: list[Detection], budget: int = LANDMARK_BUDGET) -> list[Detection]:
    """Keep the best landmark detections for localization.

    Score is confidence discounted by range; ties break on class order
    then bearing so the selection is deterministic.
    """
    lms = [d for d in dets if d.kind in LANDMARK_CLASSES]
    lms.sort(key=lambda d: (-d.confidence / (1.0 + d.range), int(d.kind), d.bearing))
    return lms[: min(budget, DETECTION_CAP)]


def project_detection(det: Detection, observer: Pose2D) -> np.ndarray:
    """World-frame position of a detection given the observer's pose estimate."""
    return body_to_world(observer, det.position)


def detections_to_jsonl(dets: list[Detection]) -> dict:
    return {"detections": [d.to_dict() for d in dets]}
