"""In-gait kicking on a kinematic gait abstraction.

A fixed-period alternating swing/stance cycle stands in for the walking
stack: liftoff and touchdown events are generated kinematically. The
commander gates on balance, ball freshness, speed, an in-kick zone, and
a re-arm counter; when armed it retargets the swing's mid waypoint to a
clipped strike point so the degree-6 swing polynomial drives the foot
through the ball while the gait keeps cycling. Ball launch is a simple
impulse: speed proportional to foot speed at first contact, direction
along the foot velocity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, replace
from enum import IntEnum

import numpy as np

from .field import Pose2D, wrap_angle
from .perception import BALL_DIAMETER, NoiseModel

SWING_DURATION = 0.4  # s per swing phase
MID_SWING_FRACTION = 0.5  # strike waypoint sits at this fraction of the swing
STEP_HALF = 0.14  # m, nominal swing travels -STEP_HALF -> +STEP_HALF
DX_MAX = 0.25  # m of forward retarget at full power
DY_OFFSET = 0.05  # m lateral bias toward the ball side
FACE_OFFSET = 0.05  # m, contact face sits this far off the foot center line
STRIKE_BOX_X = (0.0, 0.35)  # m, strike-point clip box, forward axis
STRIKE_BOX_Y = (-0.15, 0.15)  # m, lateral axis
MIN_TOUCHDOWNS = 3  # alternating touchdowns required between kicks
BALL_FRESH_S = 0.1  # s, older ball measurements do not arm
MIN_FORWARD_SPEED = -0.1  # m/s, walking backward faster than this blocks kicks
IMPULSE_GAIN = 1.2  # ball speed = gain * foot speed at contact
BALL_RADIUS = BALL_DIAMETER / 2.0  # m
CONTACT_SLOP = 0.02  # m of extra reach for the contact test


class Foot(IntEnum):
    LEFT = 0
    RIGHT = 1

    def other(self) -> "Foot":
        return Foot.RIGHT if self == Foot.LEFT else Foot.LEFT


@dataclass
class GaitState:
    """Kinematic gait: one foot swings at a time for `period` seconds."""

    swing_foot: Foot = Foot.LEFT
    phase: float = 0.0  # normalized swing phase in [0, 1)
    period: float = SWING_DURATION
    touchdown_count: int = 0  # alternating touchdowns since the last kick
    balancing: bool = False
    v_x: float = 0.0  # m/s commanded forward speed

    def advance(self, dt: float) -> list[tuple[str, Foot]]:
        """Step the phase; returns (event, foot) pairs in order."""
        events: list[tuple[str, Foot]] = []
        self.phase += dt / self.period
        while self.phase >= 1.0:
            self.phase -= 1.0
            events.append(("touchdown", self.swing_foot))
            self.touchdown_count += 1
            self.swing_foot = self.swing_foot.other()
            events.append(("liftoff", self.swing_foot))
        return events


@dataclass
class KickZone:
    """Body-frame box the ball must occupy for a kick to arm."""

    x_lo: float = 0.15
    x_hi: float = 0.45
    y_half: float = 0.25

    def contains(self, b: np.ndarray) -> bool:
        return bool(self.x_lo <= b[0] <= self.x_hi and abs(b[1]) <= self.y_half)


@dataclass
class CommanderState:
    """Request/in-progress flags plus the data captured at liftoff."""

    request_left: bool = False
    request_right: bool = False
    progress_left: bool = False
    progress_right: bool = False
    ball_star: np.ndarray | None = None  # ball pose stored at liftoff
    strike: np.ndarray | None = None  # strike point in the foot frame
    power: float = 0.0

    @property
    def in_progress(self) -> bool:
        return self.progress_left or self.progress_right

    @property
    def striking_foot(self) -> Foot | None:
        if self.progress_left:
            return Foot.LEFT
        if self.progress_right:
            return Foot.RIGHT
        return None

    def to_dict(self) -> dict:
        return {
            "request_left": self.request_left,
            "request_right": self.request_right,
            "progress_left": self.progress_left,
            "progress_right": self.progress_right,
            "ball_star": None if self.ball_star is None else [float(v) for v in self.ball_star],
            "strike": None if self.strike is None else [float(v) for v in self.strike],
            "power": self.power,
        }


def strike_point(
    p_ball: np.ndarray,
    p_stance: np.ndarray,
    stance_yaw: float,
    power: float,
    dy: float,
    box_x: tuple[float, float] = STRIKE_BOX_X,
    box_y: tuple[float, float] = STRIKE_BOX_Y,
) -> np.ndarray:
    """Ball position mapped into the stance frame, pushed forward with
    power and sideways by the contact-face offset, clipped into the box."""
    c, s = math.cos(stance_yaw), math.sin(stance_yaw)
    rel = np.asarray(p_ball, dtype=float) - np.asarray(p_stance, dtype=float)
    local = np.array([c * rel[0] + s * rel[1], -s * rel[0] + c * rel[1]])
    target = local + np.array([DX_MAX * float(np.clip(power, 0.0, 1.0)), dy])
    return np.array(
        [
            float(np.clip(target[0], box_x[0], box_x[1])),
            float(np.clip(target[1], box_y[0], box_y[1])),
        ]
    )


def commander_tick(
    gait: GaitState,
    cmd: CommanderState,
    ball_body: np.ndarray | None,
    ball_age_s: float,
    power: float,
    events: list[tuple[str, Foot]],
    zone: KickZone | None = None,
) -> tuple[CommanderState, bool]:
    """One commander cycle. Applies gait events first (liftoff arms an
    active kick, touchdown of the striker retires it and resets the
    re-arm counter), then runs the gating chain; returns the new state
    and whether a swing was started this tick."""
    zone = zone or KickZone()
    cmd = replace(cmd)
    started = False

    for event, foot in events:
        if event == "touchdown" and cmd.in_progress and foot == cmd.striking_foot:
            cmd = CommanderState()
            gait.touchdown_count = 0
        elif event == "liftoff" and not cmd.in_progress:
            armed = (foot == Foot.LEFT and cmd.request_left) or (
                foot == Foot.RIGHT and cmd.request_right
            )
            if armed and ball_body is not None:
                dy = DY_OFFSET if foot == Foot.LEFT else -DY_OFFSET
                cmd.ball_star = np.asarray(ball_body, dtype=float).copy()
                cmd.strike = strike_point(cmd.ball_star, np.zeros(2), 0.0, power, dy)
                cmd.power = float(np.clip(power, 0.0, 1.0))
                cmd.request_left = cmd.request_right = False
                cmd.progress_left = foot == Foot.LEFT
                cmd.progress_right = foot == Foot.RIGHT
                started = True

    if (
        gait.balancing
        or cmd.in_progress
        or ball_body is None
        or ball_age_s > BALL_FRESH_S
        or gait.v_x < MIN_FORWARD_SPEED
        or not zone.contains(ball_body)
        or gait.touchdown_count < MIN_TOUCHDOWNS
    ):
        return cmd, started

    cmd.request_left = bool(ball_body[1] > 0.0)
    cmd.request_right = not cmd.request_left
    return cmd, started


# ------------------------------------------------------------ swing fit

@dataclass
class SwingPolynomial:
    """Degree-6 planar swing: coeffs[:, k] are the x/y polynomials."""

    coeffs: np.ndarray  # (7, 2), ascending powers
    duration: float
    t_mid: float

    def _powers(self, t: float) -> np.ndarray:
        return np.power(t, np.arange(7))

    def position(self, t: float) -> np.ndarray:
        return self._powers(t) @ self.coeffs

    def velocity(self, t: float) -> np.ndarray:
        k = np.arange(1, 7)
        return (k * np.power(t, k - 1)) @ self.coeffs[1:]

    def acceleration(self, t: float) -> np.ndarray:
        k = np.arange(2, 7)
        return (k * (k - 1) * np.power(t, k - 2)) @ self.coeffs[2:]

    def to_dict(self) -> dict:
        return {
            "coeffs": self.coeffs.tolist(),
            "duration": self.duration,
            "t_mid": self.t_mid,
        }


def fit_swing(
    p0: np.ndarray,
    v0: np.ndarray,
    a0: np.ndarray,
    p_end: np.ndarray,
    v_end: np.ndarray,
    a_end: np.ndarray,
    waypoint: np.ndarray,
    t_mid: float,
    duration: float,
) -> SwingPolynomial:
    """Unique degree-6 polynomial per axis through six boundary
    conditions plus the mid-swing waypoint."""
    if not 0.0 < t_mid < duration:
        raise ValueError(f"mid-swing time {t_mid} outside (0, {duration})")
    T = duration
    k = np.arange(7)
    rows = [
        np.where(k == 0, 1.0, 0.0),
        np.where(k == 1, 1.0, 0.0),
        np.where(k == 2, 2.0, 0.0),
        np.power(T, k),
        k * np.power(T, np.maximum(k - 1, 0)) * (k >= 1),
        k * (k - 1) * np.power(T, np.maximum(k - 2, 0)) * (k >= 2),
        np.power(t_mid, k),
    ]
    mat = np.array(rows)
    rhs = np.array(
        [p0, v0, a0, p_end, v_end, a_end, waypoint], dtype=float
    )  # (7, 2)
    coeffs = np.linalg.solve(mat, rhs)
    return SwingPolynomial(coeffs=coeffs, duration=duration, t_mid=t_mid)


LATERAL_LEAD_FRACTION = 0.3  # y reaches its target before first contact


def plan_kick_swing(
    strike: np.ndarray,
    duration: float = SWING_DURATION,
    mid_fraction: float = MID_SWING_FRACTION,
    step_half: float = STEP_HALF,
) -> SwingPolynomial:
    """Rest-to-rest stride from -step_half to +step_half whose mid
    waypoint is retargeted to the strike point. The forward axis meets
    the waypoint at mid-swing; the lateral axis leads so the contact
    face is already aligned when the foot first reaches the ball."""
    strike = np.asarray(strike, dtype=float)
    zeros = np.zeros(2)
    p0 = np.array([-step_half, 0.0])
    p_end = np.array([step_half, 0.0])
    forward = fit_swing(
        p0, zeros, zeros, p_end, zeros, zeros, strike,
        t_mid=mid_fraction * duration, duration=duration,
    )
    lateral = fit_swing(
        p0, zeros, zeros, p_end, zeros, zeros, strike,
        t_mid=LATERAL_LEAD_FRACTION * duration, duration=duration,
    )
    coeffs = np.column_stack([forward.coeffs[:, 0], lateral.coeffs[:, 1]])
    return SwingPolynomial(coeffs=coeffs, duration=duration, t_mid=mid_fraction * duration)


def foot_speed_profile(poly: SwingPolynomial, samples: int = 2001) -> tuple[float, float]:
    """(peak |velocity|, time of peak) from dense sampling."""
    ts = np.linspace(0.0, poly.duration, samples)
    k = np.arange(1, 7)
    basis = k[None, :] * np.power(ts[:, None], k[None, :] - 1)
    vel = basis @ poly.coeffs[1:]
    speeds = np.hypot(vel[:, 0], vel[:, 1])
    idx = int(np.argmax(speeds))
    return float(speeds[idx]), float(ts[idx])


@dataclass
class KickImpulse:
    time_s: float  # contact time within the swing
    speed: float  # m/s imparted to the ball
    direction: np.ndarray  # (2,) unit, body frame
    foot_speed: float


def swing_contact(
    poly: SwingPolynomial,
    ball_body: np.ndarray,
    foot: Foot,
    body_speed: float = 0.0,
    samples: int = 801,
) -> KickImpulse | None:
    """First time the contact face reaches the ball; None if the swing
    misses. The ball drifts backward in the body frame while the body
    advances."""
    face = np.array([0.0, -FACE_OFFSET if foot == Foot.LEFT else FACE_OFFSET])
    ts = np.linspace(0.0, poly.duration, samples)
    for t in ts:
        foot_pos = poly.position(float(t)) + face
        ball_rel = np.asarray(ball_body, dtype=float) - np.array([body_speed * t, 0.0])
        gap = ball_rel - foot_pos
        if float(np.hypot(*gap)) <= BALL_RADIUS + CONTACT_SLOP:
            vel = poly.velocity(float(t)) + np.array([body_speed, 0.0])
            speed = float(np.hypot(*vel))
            if speed < 1e-9:
                return None
            # a round ball leaves along the push line through its center
            norm = float(np.hypot(*gap))
            direction = gap / norm if norm > 1e-9 else vel / speed
            if float(direction @ vel) <= 0.0:
                direction = vel / speed  # face arriving from ahead: shove forward
            return KickImpulse(
                time_s=float(t),
                speed=IMPULSE_GAIN * speed,
                direction=direction,
                foot_speed=speed,
            )
    return None


# ---------------------------------------------------------------- rig

@dataclass
class KickOutcome:
    launched: bool
    direction_error_rad: float = math.nan
    launch_speed: float = 0.0
    scored: bool = False
    contact_time: float = math.nan
    strike: np.ndarray | None = None


def run_seeded_kick(
    seed: int,
    noise: NoiseModel | None = None,
    goal_distance: float | None = None,
    goal_half_width: float = 1.3,
    dt: float = 0.01,
) -> KickOutcome:
    """One closed-loop kick: the gait cycles, the commander arms off a
    noisy ball estimate, and the launch is checked against the commanded
    direction (body +x). With `goal_distance` set, the outcome also
    scores the rolled ball against a goal mouth straight ahead."""
    rng = np.random.default_rng(seed)
    noise = noise or NoiseModel()
    gait = GaitState(v_x=0.2)
    cmd = CommanderState()
    zone = KickZone()

    ball_true = np.array(
        [rng.uniform(0.24, 0.34), rng.uniform(-0.08, 0.08)]
    )
    power = 1.0
    swing: SwingPolynomial | None = None
    impulse: KickImpulse | None = None

    for _ in range(int(6.0 / dt)):
        events = gait.advance(dt)
        true_range = float(np.hypot(*ball_true))
        envelope = noise.range_error_pct(true_range) * true_range
        bearing = math.atan2(ball_true[1], ball_true[0])
        noisy_range = true_range + rng.uniform(-envelope, envelope)
        noisy_bearing = bearing + rng.normal(0.0, noise.bearing_sigma)
        ball_seen = noisy_range * np.array([math.cos(noisy_bearing), math.sin(noisy_bearing)])
        cmd, started = commander_tick(gait, cmd, ball_seen, 0.0, power, events, zone)
        if started and cmd.strike is not None:
            swing = plan_kick_swing(cmd.strike)
            impulse = swing_contact(swing, ball_true, cmd.striking_foot, body_speed=gait.v_x)
            break

    if impulse is None:
        return KickOutcome(launched=False)
    err = abs(wrap_angle(math.atan2(impulse.direction[1], impulse.direction[0])))
    scored = False
    if goal_distance is not None:
        # straight roll with rolling friction: does it cross the line inside the mouth?
        v0 = impulse.speed
        reach = v0 * v0 / (2.0 * 0.5)  # stops after v^2 / (2 a)
        if reach >= goal_distance:
            lateral = goal_distance * math.tan(
                math.atan2(impulse.direction[1], impulse.direction[0])
            )
            scored = abs(lateral) < goal_half_width
    return KickOutcome(
        launched=True,
        direction_error_rad=err,
        launch_speed=impulse.speed,
        scored=scored,
        contact_time=impulse.time_s,
        strike=None if cmd.strike is None else cmd.strike.copy(),
    )


def run_kick_cone_batch(
    n: int = 50, seed0: int = 0, goal_distance: float = 4.0
) -> list[KickOutcome]:
    """Seeded batch used by the acceptance suite and the CLI."""
    return [
        run_seeded_kick(seed0 + k, goal_distance=goal_distance) for k in range(n)
    ]
