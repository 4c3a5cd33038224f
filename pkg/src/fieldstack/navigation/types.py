"""Shared navigation types: obstacles, reference trajectories, tracker config."""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from ..field import Pose2D, wrap_angle

OCTAGON_SIDES = 8
NOMINAL_WALK_SPEED = 0.6  # m/s used to timestamp planned paths


@dataclass
class Obstacle:
    """Disc keep-out region, optionally drifting at a constant velocity."""

    center: np.ndarray  # (2,) world, m
    radius: float  # m, keep-out radius
    velocity: np.ndarray = dc_field(default_factory=lambda: np.zeros(2))  # m/s

    def polygon(self, n_sides: int = OCTAGON_SIDES, margin: float = 0.0) -> np.ndarray:
        """Regular polygon circumscribing the (margin-inflated) keep-out disc.

        The polygon's inradius equals radius+margin so the disc sits fully
        inside; vertices are returned counter-clockwise.
        """
        r_out = (self.radius + margin) / math.cos(math.pi / n_sides)
        ang = np.arange(n_sides) * (2.0 * math.pi / n_sides) + math.pi / n_sides
        return np.column_stack(
            (self.center[0] + r_out * np.cos(ang), self.center[1] + r_out * np.sin(ang))
        )

    def at(self, t: float) -> np.ndarray:
        """Predicted center after t seconds of constant-velocity drift."""
        return self.center + t * self.velocity

    def to_dict(self) -> dict:
        return {
            "center": [float(self.center[0]), float(self.center[1])],
            "radius": self.radius,
            "velocity": [float(self.velocity[0]), float(self.velocity[1])],
        }


class ReferenceTrajectory:
    """Timestamped piecewise-linear path with per-segment headings."""

    def __init__(self, points: np.ndarray, times: np.ndarray, headings: np.ndarray):
        self.points = np.asarray(points, dtype=float).reshape(-1, 2)
        self.times = np.asarray(times, dtype=float).ravel()
        self.headings = np.asarray(headings, dtype=float).ravel()
        if not (len(self.points) == len(self.times) == len(self.headings)):
            raise ValueError("points, times, headings must have equal length")
        if len(self.times) == 0:
            raise ValueError("empty trajectory")
        if np.any(np.diff(self.times) < -1e-12):
            raise ValueError("times must be non-decreasing")

    @staticmethod
    def from_waypoints(
        points: np.ndarray, speed: float = NOMINAL_WALK_SPEED, t0: float = 0.0
    ) -> "ReferenceTrajectory":
        """Timestamp a polyline at constant ground speed."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts) == 1:
            return ReferenceTrajectory(pts, np.array([t0]), np.zeros(1))
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        times = t0 + np.concatenate([[0.0], np.cumsum(seg_len / max(speed, 1e-9))])
        head = np.arctan2(seg[:, 1], seg[:, 0])
        headings = np.concatenate([head, head[-1:]])
        return ReferenceTrajectory(pts, times, headings)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def length(self) -> float:
        seg = np.diff(self.points, axis=0)
        return float(np.hypot(seg[:, 0], seg[:, 1]).sum())

    def sample(self, t: float) -> np.ndarray:
        """State [x y theta] at time t, clamped to the trajectory's span."""
        ts = self.times
        if t <= ts[0]:
            return np.array([self.points[0, 0], self.points[0, 1], self.headings[0]])
        if t >= ts[-1]:
            return np.array([self.points[-1, 0], self.points[-1, 1], self.headings[-1]])
        i = int(np.searchsorted(ts, t, side="right") - 1)
        i = min(i, len(ts) - 2)
        span = ts[i + 1] - ts[i]
        a = 0.0 if span <= 1e-12 else (t - ts[i]) / span
        p = (1.0 - a) * self.points[i] + a * self.points[i + 1]
        return np.array([p[0], p[1], self.headings[i]])

    def sample_many(self, times: np.ndarray) -> np.ndarray:
        ts = self.times
        t = np.asarray(times, dtype=float)
        out = np.empty((t.shape[0], 3))
        if len(ts) == 1:
            out[:, :2] = self.points[0]
            out[:, 2] = self.headings[0]
            return out
        out[:, 0] = np.interp(t, ts, self.points[:, 0])
        out[:, 1] = np.interp(t, ts, self.points[:, 1])
        idx = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2)
        out[:, 2] = self.headings[idx]
        out[t >= ts[-1], 2] = self.headings[-1]
        return out


def step_dynamics(state: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """Body-frame velocity integrator for the walking robot.

    state = [x y theta]; u = [vx vy omega] in the body frame. Planar
    displacement is rotated into the world by the current heading.
    """
    c, s = math.cos(state[2]), math.sin(state[2])
    return np.array(
        [
            state[0] + dt * (c * u[0] - s * u[1]),
            state[1] + dt * (s * u[0] + c * u[1]),
            wrap_angle(state[2] + dt * u[2]),
        ]
    )


@dataclass
class MpcConfig:
    horizon: int = 20
    dt: float = 0.1  # s
    q_pos: float = 4.0  # position tracking weight
    q_heading: float = 0.6  # heading tracking weight
    r_vx: float = 0.05
    r_vy: float = 0.08
    r_omega: float = 0.02
    rho: float = 80.0  # obstacle slack penalty
    vx_max: float = 1.2  # m/s, forward speed bound
    vy_max: float = 0.5  # m/s
    omega_max: float = 1.8  # rad/s
    iterations: int = 25
    tolerance: float = 1e-8

    def u_max(self) -> np.ndarray:
        return np.array([self.vx_max, self.vy_max, self.omega_max])

    def r_diag(self) -> np.ndarray:
        return np.array([self.r_vx, self.r_vy, self.r_omega])

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @staticmethod
    def from_dict(d: dict) -> "MpcConfig":
        out = MpcConfig()
        for k, v in d.items():
            setattr(out, k, type(getattr(out, k))(v))
        return out


@dataclass
class MpcSolution:
    states: np.ndarray  # (N+1, 3) including the current state
    inputs: np.ndarray  # (N, 3)
    slacks: np.ndarray  # (N, n_obstacles) constraint violations in m^2
    objective: float
    iterations: int
    converged: bool
    objective_trace: list[float] = dc_field(default_factory=list)

    @property
    def first_input(self) -> np.ndarray:
        return self.inputs[0].copy()


@dataclass
class PlanResult:
    ok: bool
    trajectory: ReferenceTrajectory | None
    cost: float = math.inf  # m-equivalent: length + turn_weight * total turn
    length: float = math.inf
    turn_total: float = 0.0  # rad of accumulated heading change
    active_obstacles: int = 0
    iterations: int = 0
    reason: str = ""
