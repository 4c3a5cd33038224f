"""Field geometry: planar poses, frame transforms, landmark map, match rules.

World frame: origin at field center, +x toward the blue-defended goal,
+y toward the left touchline seen from the red goal, angles CCW from +x
and normalized to (-pi, pi].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from enum import IntEnum
from typing import Iterable

import numpy as np

TWO_PI = 2.0 * math.pi

FIELD_LENGTH = 14.0  # m, goal line to goal line
FIELD_WIDTH = 8.0  # m, touchline to touchline
GOAL_HALF_WIDTH = 1.3  # m, post at y = +-1.3
PENALTY_AREA_DEPTH = 2.0  # m
PENALTY_AREA_HALF_WIDTH = 2.5  # m
GOAL_AREA_DEPTH = 1.0  # m
GOAL_AREA_HALF_WIDTH = 1.95  # m
CENTER_CIRCLE_RADIUS = 1.5  # m
PENALTY_MARK_X = 4.9  # m from center
PENALTY_MARK_ARM = 0.1  # m, half length of the painted cross


class LandmarkClass(IntEnum):
    """Visual classes of field-line features; ordering is the tie-break order."""

    L = 0  # two lines meeting at a corner
    T = 1  # line ending on another line
    X = 2  # crossing lines / painted marks
    G = 3  # goal post base


def wrap_angle(angle: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    if not math.isfinite(angle):
        raise ValueError(f"non-finite angle: {angle!r}")
    a = math.fmod(angle, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


def wrap_angle_array(angles: np.ndarray) -> np.ndarray:
    """Vectorized wrap to (-pi, pi]."""
    a = np.asarray(angles, dtype=float)
    out = a - TWO_PI * np.floor((a + math.pi) / TWO_PI)
    # floor maps the boundary -pi to -pi itself; nudge onto the closed top end
    out[out <= -math.pi] += TWO_PI
    return out


def angle_mean(angles: Iterable[float]) -> float:
    """Circular mean, safe across the +-pi seam."""
    arr = np.asarray(list(angles) if not isinstance(angles, np.ndarray) else angles, dtype=float)
    if arr.size == 0:
        raise ValueError("circular mean of empty set")
    return float(math.atan2(np.sin(arr).sum(), np.cos(arr).sum()))


def rot2(theta: float) -> np.ndarray:
    """2x2 rotation matrix."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2D:
    """Planar pose (x, y, theta); theta is stored normalized to (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @staticmethod
    def from_array(arr) -> "Pose2D":
        return Pose2D(float(arr[0]), float(arr[1]), float(arr[2]))

    def distance_to(self, other: "Pose2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def world_to_body(pose: Pose2D, points: np.ndarray) -> np.ndarray:
    """Express world-frame point(s) in the body frame of `pose`."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    dx = pts[:, 0] - pose.x
    dy = pts[:, 1] - pose.y
    out = np.column_stack((c * dx + s * dy, -s * dx + c * dy))
    return out[0] if single else out


def body_to_world(pose: Pose2D, points: np.ndarray) -> np.ndarray:
    """Express body-frame point(s) of `pose` in the world frame."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    out = np.column_stack(
        (pose.x + c * pts[:, 0] - s * pts[:, 1], pose.y + s * pts[:, 0] + c * pts[:, 1])
    )
    return out[0] if single else out


@dataclass
class FieldMap:
    """Rectangular field with classed point landmarks on the painted lines."""

    length: float = FIELD_LENGTH
    width: float = FIELD_WIDTH
    landmarks: list[tuple[LandmarkClass, tuple[float, float]]] = dc_field(default_factory=list)
    lines: list[tuple[tuple[float, float], tuple[float, float]]] = dc_field(default_factory=list)
    goal_half_width: float = GOAL_HALF_WIDTH

    def __post_init__(self):
        self._by_class: dict[int, np.ndarray] | None = None

    @property
    def half_length(self) -> float:
        return self.length / 2.0

    @property
    def half_width(self) -> float:
        return self.width / 2.0

    @property
    def diagonal(self) -> float:
        return math.hypot(self.length, self.width)

    def goal_center(self, team: int) -> np.ndarray:
        """Center of the goal defended by `team` (0 defends x=-L/2, 1 defends x=+L/2)."""
        return np.array([-self.half_length if team == 0 else self.half_length, 0.0])

    def goal_segments(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Goal mouths as (post, post) segments, x=-L/2 goal first."""
        h, g = self.half_length, self.goal_half_width
        return [
            (np.array([-h, -g]), np.array([-h, g])),
            (np.array([h, -g]), np.array([h, g])),
        ]

    def contains(self, point, margin: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(
            abs(p[0]) <= self.half_length + margin and abs(p[1]) <= self.half_width + margin
        )

    def landmark_array(self) -> tuple[np.ndarray, np.ndarray]:
        """All landmarks as (classes int array, positions (n,2) array)."""
        cls = np.array([int(c) for c, _ in self.landmarks], dtype=int)
        pos = np.array([p for _, p in self.landmarks], dtype=float).reshape(-1, 2)
        return cls, pos

    def positions_of(self, cls: LandmarkClass) -> np.ndarray:
        if self._by_class is None:
            self._by_class = {}
            classes, pos = self.landmark_array()
            for c in LandmarkClass:
                self._by_class[int(c)] = pos[classes == int(c)]
        return self._by_class[int(cls)]

    def to_dict(self) -> dict:
        return {
            "length": self.length,
            "width": self.width,
            "goal_half_width": self.goal_half_width,
            "landmarks": [[c.name, list(p)] for c, p in self.landmarks],
            "lines": [[list(a), list(b)] for a, b in self.lines],
        }

    @staticmethod
    def from_dict(d: dict) -> "FieldMap":
        return FieldMap(
            length=float(d["length"]),
            width=float(d["width"]),
            goal_half_width=float(d.get("goal_half_width", GOAL_HALF_WIDTH)),
            landmarks=[(LandmarkClass[c], (float(p[0]), float(p[1]))) for c, p in d["landmarks"]],
            lines=[((a[0], a[1]), (b[0], b[1])) for a, b in d["lines"]],
        )


@dataclass
class RuleConfig:
    """Match administration parameters."""

    half_duration_s: float = 300.0
    halves: int = 2
    kickoff_clear_radius: float = 2.0  # m, non-kicking team stays outside at kickoff
    kickoff_wait_s: float = 5.0  # s, play opens to everyone after this
    restart_inset: float = 0.5  # m, ball placed this far inside the line after going out
    free_kick_clear_radius: float = 1.5  # m
    free_kick_wait_s: float = 4.0
    collision_foul_dist: float = 0.30  # m, center distance that counts as a charge
    collision_foul_speed: float = 0.35  # m/s, closing speed threshold for a foul
    foul_cooldown_s: float = 3.0
    setup_duration_s: float = 3.0  # s, teleport-free repositioning window after a goal

    def to_dict(self) -> dict:
        return {
            "half_duration_s": self.half_duration_s,
            "halves": self.halves,
            "kickoff_clear_radius": self.kickoff_clear_radius,
            "kickoff_wait_s": self.kickoff_wait_s,
            "restart_inset": self.restart_inset,
            "free_kick_clear_radius": self.free_kick_clear_radius,
            "free_kick_wait_s": self.free_kick_wait_s,
            "collision_foul_dist": self.collision_foul_dist,
            "collision_foul_speed": self.collision_foul_speed,
            "foul_cooldown_s": self.foul_cooldown_s,
            "setup_duration_s": self.setup_duration_s,
        }

    @staticmethod
    def from_dict(d: dict) -> "RuleConfig":
        return RuleConfig(**{k: float(v) if k != "halves" else int(v) for k, v in d.items()})


def _mirror4(x: float, y: float) -> list[tuple[float, float]]:
    """The four-fold reflections of a point, de-duplicated, in a fixed order."""
    pts = []
    for p in ((x, y), (-x, y), (x, -y), (-x, -y)):
        if p not in pts:
            pts.append(p)
    return pts


def build_default_field() -> FieldMap:
    """Landmark map of the default 14 x 8 m field.

    Every landmark sits on a painted line and the set is mirror symmetric
    about both axes, so a pose and its half-turn image around the center
    explain the same local view.
    """
    hl, hw = FIELD_LENGTH / 2.0, FIELD_WIDTH / 2.0
    lm: list[tuple[LandmarkClass, tuple[float, float]]] = []

    def add(cls: LandmarkClass, x: float, y: float):
        for p in _mirror4(x, y):
            lm.append((cls, p))

    # corner-type features
    add(LandmarkClass.L, hl, hw)  # field corners
    add(LandmarkClass.L, hl - PENALTY_AREA_DEPTH, PENALTY_AREA_HALF_WIDTH)
    add(LandmarkClass.L, hl - GOAL_AREA_DEPTH, GOAL_AREA_HALF_WIDTH)
    # line terminations
    add(LandmarkClass.T, 0.0, hw)  # halfway line on the touchlines
    add(LandmarkClass.T, hl, PENALTY_AREA_HALF_WIDTH)
    add(LandmarkClass.T, hl, GOAL_AREA_HALF_WIDTH)
    # crossings and marks
    add(LandmarkClass.X, 0.0, 0.0)  # center mark
    add(LandmarkClass.X, 0.0, CENTER_CIRCLE_RADIUS)  # circle meets halfway line
    add(LandmarkClass.X, PENALTY_MARK_X, 0.0)  # penalty crosses
    # goal posts
    add(LandmarkClass.G, hl, GOAL_HALF_WIDTH)

    lines: list[tuple[tuple[float, float], tuple[float, float]]] = [
        ((-hl, -hw), (hl, -hw)),
        ((-hl, hw), (hl, hw)),
        ((-hl, -hw), (-hl, hw)),
        ((hl, -hw), (hl, hw)),
        ((0.0, -hw), (0.0, hw)),  # halfway line
    ]
    for sx in (-1.0, 1.0):
        pa_x = sx * (hl - PENALTY_AREA_DEPTH)
        ga_x = sx * (hl - GOAL_AREA_DEPTH)
        lines += [
            ((pa_x, -PENALTY_AREA_HALF_WIDTH), (pa_x, PENALTY_AREA_HALF_WIDTH)),
            ((pa_x, PENALTY_AREA_HALF_WIDTH), (sx * hl, PENALTY_AREA_HALF_WIDTH)),
            ((pa_x, -PENALTY_AREA_HALF_WIDTH), (sx * hl, -PENALTY_AREA_HALF_WIDTH)),
            ((ga_x, -GOAL_AREA_HALF_WIDTH), (ga_x, GOAL_AREA_HALF_WIDTH)),
            ((ga_x, GOAL_AREA_HALF_WIDTH), (sx * hl, GOAL_AREA_HALF_WIDTH)),
            ((ga_x, -GOAL_AREA_HALF_WIDTH), (sx * hl, -GOAL_AREA_HALF_WIDTH)),
            # penalty mark painted as a small cross
            ((sx * PENALTY_MARK_X - PENALTY_MARK_ARM, 0.0), (sx * PENALTY_MARK_X + PENALTY_MARK_ARM, 0.0)),
            ((sx * PENALTY_MARK_X, -PENALTY_MARK_ARM), (sx * PENALTY_MARK_X, PENALTY_MARK_ARM)),
        ]
    return FieldMap(landmarks=lm, lines=lines)


def point_segment_distance(p, a, b) -> float:
    """Distance from point p to segment ab."""
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return float(np.hypot(*(p - a)))
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.hypot(*(p - (a + t * ab))))
