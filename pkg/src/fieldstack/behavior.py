"""Decision layer: pass-target search, ball memory, and the play tree.

Pass targets come from a finite candidate set: bounding lines through
the ball (rays to goal posts and field corners, tangents to opponent
discs) plus the goal lines and inset sidelines are combined in triplets;
each valid triangle contributes its inscribed circle. Candidates are
scored by a weighted utility and the argmax circle's tangent cone sets
the kick tolerance. A small FSM keeps object permanence for the ball,
and decide() maps one snapshot of the world to one action per tick.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field, replace
from enum import IntEnum

import numpy as np

from .field import FieldMap, Pose2D, wrap_angle, wrap_angle_array, world_to_body
from .perception import CameraModel, _occluded

SIDELINE_INSET = 0.5  # m, bounding lines sit inside the touchlines
OPPONENT_CLEAR_RADIUS = 0.4  # m, opponent disc for tangents and blocking
BLOCK_CLEAR_DISTANCE = 0.3  # m of extra clearance for a fully clean lane
MIN_CANDIDATE_RADIUS = 1e-3  # m, smaller circles are degenerate
MAX_KICK_RANGE = 8.0  # m, kick power saturates here
MIN_SHOT_HALF_ANGLE = 0.1  # rad, goal mouth narrower than this -> pass
CANDIDATE_GATE_DISTANCE = 2.0  # m, run the full pass search only near the ball
SHOT_STICKY_HALF_ANGLE = 0.07  # rad, relaxed mouth gate while already lining up a shot
SHOT_STICKY_MARGIN = -0.1  # m, relaxed intercept-margin gate while already lining up a shot
SHOT_LAUNCH_SPEED = 4.6  # m/s a full-power strike leaves the foot at
SHOT_BLOCK_REACH = 0.3  # m of body a blocker puts on the line without moving
SHOT_BLOCK_SPEED = 0.7  # m/s a blocker closes on the line while the ball rolls
SHOT_REACT_LAG = 0.6  # s of sensing + replanning before a blocker starts closing
PASS_STICKY_RADIUS = 0.8  # m, candidates this close to the previous target count as the same
PASS_STICKY_BONUS = 0.08  # fraction of the utility scale added to keep a target from flip-flopping
KICK_STANCE_DISTANCE = 0.32  # m behind the ball for the kicking stance
KICK_READY_DISTANCE = 0.55  # m, close enough to arm the kick
KICK_READY_HEADING = 0.15  # rad of facing error tolerated when arming
SHOT_FORCE_DISTANCE = 3.8  # m from goal inside which a covered shot still beats recycling
MEMORY_TIMEOUT_S = 5.0  # s until an unseen ball is forgotten
EXPECTED_VISIBLE_MISSES = 3  # consecutive unexplained misses before Lost
EXPECTED_FOV_FRACTION = 0.9  # only solidly-in-view points count as expected
PREDICT_MIN_SPEED = 0.15  # m/s of remembered velocity worth extrapolating
BALL_ROLL_DECEL = 1.2  # m/s^2 rolling deceleration, shared with the sim
TAP_POWER = 0.25  # kickoff cooperation tap
DEFENSE_BISECT_RATIO = 0.5  # support sits at this fraction ball -> own goal
KEEPER_MAX_DIST = 1.6  # m, bisect point clamped this close to goal so the lane is holdable
SHOT_INTERCEPT_SPEED = 0.8  # m/s of tracked ball speed that flips defense to line-blocking
FREE_KICK_STANDOFF = 1.9  # m from the spot the lane defender holds during their restart
CONTAIN_DISTANCE = 1.8  # m goal-side of the ball the striker plants when beaten to it
DUTY_BIAS = 0.3  # m of slack the nominal striker gets before ceding possession duty
CLEARANCE_PRESSURE_DIST = 2.5  # m, opponent this close to a deep ball forces a clearance


class BallState(IntEnum):
    LOST = 0
    IN_VIEW = 1
    REMEMBERED = 2
    PREDICTED = 3


class Movement(IntEnum):
    HALT = 0
    APPROACH = 1
    KICK = 2
    REPOSITION = 3
    SEARCH = 4


class NeckMode(IntEnum):
    TRACK = 0
    PREDICT = 1
    SEARCH = 2
    RELOCALIZE = 3


class Role(IntEnum):
    STRIKER = 0
    SUPPORT = 1


class Phase(IntEnum):
    PLAY = 0
    KICKOFF_US = 1
    KICKOFF_THEM = 2
    FREE_KICK_US = 3
    FREE_KICK_THEM = 4


@dataclass
class BoundLine:
    """Infinite line through `point` along unit `direction`."""

    point: np.ndarray  # (2,)
    direction: np.ndarray  # (2,) unit
    kind: str = ""

    def distance_to(self, p: np.ndarray) -> float:
        rel = p - self.point
        return abs(float(self.direction[0] * rel[1] - self.direction[1] * rel[0]))


@dataclass
class PassCandidate:
    center: np.ndarray  # (2,)
    radius: float
    triplet: tuple[int, int, int]  # generating line indices
    score: float = 0.0


@dataclass
class StrategyProfile:
    name: str
    w_area: float
    w_angle: float
    w_goal_dist: float
    w_self: float
    w_team: float
    w_opp: float
    w_block: float
    always_shoot: bool = False

    def weights(self) -> np.ndarray:
        return np.array(
            [
                self.w_area,
                self.w_angle,
                self.w_goal_dist,
                self.w_self,
                self.w_team,
                self.w_opp,
                self.w_block,
            ]
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "w_area": self.w_area,
            "w_angle": self.w_angle,
            "w_goal_dist": self.w_goal_dist,
            "w_self": self.w_self,
            "w_team": self.w_team,
            "w_opp": self.w_opp,
            "w_block": self.w_block,
            "always_shoot": self.always_shoot,
        }

    @staticmethod
    def from_dict(d: dict) -> "StrategyProfile":
        return StrategyProfile(**d)


PRESETS: dict[str, StrategyProfile] = {
    "shoot_on_goal": StrategyProfile(
        name="shoot_on_goal",
        w_area=2.0, w_angle=1.0, w_goal_dist=4.0, w_self=0.0,
        w_team=0.0, w_opp=1.0, w_block=2.0, always_shoot=True,
    ),
    "kick_away_from_opponents": StrategyProfile(
        name="kick_away_from_opponents",
        w_area=3.0, w_angle=0.5, w_goal_dist=4.0, w_self=1.0,
        w_team=2.5, w_opp=1.0, w_block=6.0,
    ),
    "kick_closest_to_goal": StrategyProfile(
        name="kick_closest_to_goal",
        w_area=1.0, w_angle=0.5, w_goal_dist=8.0, w_self=1.0,
        w_team=2.5, w_opp=0.5, w_block=4.0,
    ),
}


def strategy_preset(name: str) -> StrategyProfile:
    if name not in PRESETS:
        raise KeyError(f"unknown strategy preset: {name!r}")
    return replace(PRESETS[name])


@dataclass
class BallMemory:
    state: BallState = BallState.LOST
    position: np.ndarray | None = None  # (2,) world
    velocity: np.ndarray | None = None  # (2,) world, m/s
    last_seen_tick: int = -1
    miss_count: int = 0
    shadow: tuple[int, ...] = ()  # obstacle indices shadowing the memory point

    def to_dict(self) -> dict:
        return {
            "state": int(self.state),
            "position": None if self.position is None else [float(v) for v in self.position],
            "velocity": None if self.velocity is None else [float(v) for v in self.velocity],
            "last_seen_tick": self.last_seen_tick,
            "miss_count": self.miss_count,
            "shadow": list(self.shadow),
        }


@dataclass
class KickCommand:
    target: np.ndarray  # (2,) world
    power: float  # in [0, 1]
    cone_half_angle: float  # rad of admissible direction error

    def to_dict(self) -> dict:
        return {
            "target": [float(self.target[0]), float(self.target[1])],
            "power": self.power,
            "cone_half_angle": self.cone_half_angle,
        }


@dataclass
class BehaviorOutput:
    desired_pose: Pose2D
    movement: Movement
    neck: NeckMode
    kick: KickCommand | None = None
    target: np.ndarray | None = None  # (2,) intended ball destination
    candidates: list[PassCandidate] | None = None
    selected_index: int | None = None
    mode: str = ""
    watch: np.ndarray | None = None  # (2,) point the walk must keep in the sensing arc


@dataclass
class GameSnapshot:
    """Everything decide() may look at; one frozen view of a tick."""

    tick: int
    dt: float
    pose: Pose2D  # own estimate
    localized: bool
    memory: BallMemory
    team: int  # 0 defends -x, 1 defends +x
    role: Role
    phase: Phase
    teammates: list[np.ndarray] = dc_field(default_factory=list)
    opponents: list[np.ndarray] = dc_field(default_factory=list)
    fmap: FieldMap = dc_field(default_factory=FieldMap)
    previous_target: np.ndarray | None = None  # kick target chosen last decision, for hysteresis


# ------------------------------------------------------------- candidates

def build_bounding_lines(
    ball: np.ndarray, opponents: list[np.ndarray], fmap: FieldMap
) -> list[BoundLine]:
    """Line set for the pass search: rays from the ball through goal posts
    and field corners, tangents to opponent discs, goal lines, and
    sidelines inset toward the pitch."""
    hl, hw = fmap.length / 2.0, fmap.width / 2.0
    lines: list[BoundLine] = []

    def ray_through(p: np.ndarray, kind: str) -> None:
        d = p - ball
        norm = float(np.hypot(d[0], d[1]))
        if norm < 1e-9:
            return
        lines.append(BoundLine(ball.copy(), d / norm, kind))

    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            ray_through(np.array([sx * hl, sy * fmap.goal_half_width]), "goal_post")
            ray_through(np.array([sx * hl, sy * hw]), "field_corner")
    for k, opp in enumerate(opponents):
        rel = opp - ball
        dist = float(np.hypot(rel[0], rel[1]))
        if dist <= OPPONENT_CLEAR_RADIUS + 1e-9:
            continue  # standing on top of the disc: no tangent exists
        base = math.atan2(rel[1], rel[0])
        spread = math.asin(OPPONENT_CLEAR_RADIUS / dist)
        for sgn in (-1.0, 1.0):
            ang = base + sgn * spread
            lines.append(
                BoundLine(ball.copy(), np.array([math.cos(ang), math.sin(ang)]), f"tangent_{k}")
            )
    for sx in (-1.0, 1.0):
        lines.append(BoundLine(np.array([sx * hl, 0.0]), np.array([0.0, 1.0]), "goal_line"))
    for sy in (-1.0, 1.0):
        lines.append(
            BoundLine(
                np.array([0.0, sy * (hw - SIDELINE_INSET)]), np.array([1.0, 0.0]), "sideline"
            )
        )
    return lines


def candidates_from_lines(lines: list[BoundLine], fmap: FieldMap) -> list[PassCandidate]:
    """Inscribed circles of every valid triangle formed by a line triplet."""
    n = len(lines)
    if n < 3:
        return []
    pts = np.array([l.point for l in lines])
    dirs = np.array([l.direction for l in lines])

    inter = np.full((n, n, 2), np.nan)
    for i in range(n):
        for j in range(i + 1, n):
            cross = dirs[i, 0] * dirs[j, 1] - dirs[i, 1] * dirs[j, 0]
            if abs(cross) < 1e-12:
                continue
            rel = pts[j] - pts[i]
            t = (rel[0] * dirs[j, 1] - rel[1] * dirs[j, 0]) / cross
            inter[i, j] = inter[j, i] = pts[i] + t * dirs[i]

    trips = np.array(list(itertools.combinations(range(n), 3)))
    if len(trips) == 0:
        return []
    v1 = inter[trips[:, 0], trips[:, 1]]
    v2 = inter[trips[:, 1], trips[:, 2]]
    v3 = inter[trips[:, 0], trips[:, 2]]
    finite = np.isfinite(v1).all(axis=1) & np.isfinite(v2).all(axis=1) & np.isfinite(v3).all(axis=1)

    a = np.hypot(*(v2 - v3).T)  # side opposite v1
    b = np.hypot(*(v1 - v3).T)
    c = np.hypot(*(v1 - v2).T)
    s = 0.5 * (a + b + c)
    with np.errstate(invalid="ignore", divide="ignore"):
        heron = (s - a) * (s - b) * (s - c) / s
        centers = (a[:, None] * v1 + b[:, None] * v2 + c[:, None] * v3) / (a + b + c)[:, None]
    radius = np.sqrt(np.maximum(heron, 0.0))

    keep = (
        finite
        & (s > 1e-9)
        & (radius > MIN_CANDIDATE_RADIUS)
        & np.isfinite(centers).all(axis=1)
    )
    out: list[PassCandidate] = []
    for k in np.flatnonzero(keep):
        if not fmap.contains(centers[k]):
            continue
        out.append(
            PassCandidate(
                center=centers[k].copy(),
                radius=float(radius[k]),
                triplet=(int(trips[k, 0]), int(trips[k, 1]), int(trips[k, 2])),
            )
        )
    return out


def generate_candidates(
    ball: np.ndarray,
    opponents: list[np.ndarray],
    teammates: list[np.ndarray],
    fmap: FieldMap,
) -> list[PassCandidate]:
    del teammates  # present for signature symmetry; lines ignore teammates
    return candidates_from_lines(build_bounding_lines(ball, opponents, fmap), fmap)


# ---------------------------------------------------------------- scoring

@dataclass
class ScoreContext:
    ball: np.ndarray
    pose: Pose2D  # the kicking robot
    goal: np.ndarray  # attacked goal center
    teammates: list[np.ndarray]
    opponents: list[np.ndarray]
    fmap: FieldMap

    @property
    def diagonal(self) -> float:
        return float(self.fmap.diagonal)


def _segment_point_distances(a: np.ndarray, b: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Distance from each point to segment ab; points (k, 2)."""
    d = b - a
    denom = float(d @ d)
    if denom < 1e-18:
        return np.hypot(*(points - a[None, :]).T)
    t = np.clip(((points - a[None, :]) @ d) / denom, 0.0, 1.0)
    closest = a[None, :] + t[:, None] * d[None, :]
    return np.hypot(*(points - closest).T)


def score_terms(candidates: list[PassCandidate], ctx: ScoreContext) -> np.ndarray:
    """(m, 7) utility terms in [0, 1], ordered to match StrategyProfile."""
    m = len(candidates)
    terms = np.zeros((m, 7))
    if m == 0:
        return terms
    centers = np.array([c.center for c in candidates])
    radii = np.array([c.radius for c in candidates])
    diag = ctx.diagonal

    terms[:, 0] = np.clip(radii / diag, 0.0, 1.0)
    bearing = np.arctan2(centers[:, 1] - ctx.ball[1], centers[:, 0] - ctx.ball[0])
    turn = np.abs(np.remainder(bearing - ctx.pose.theta + math.pi, 2.0 * math.pi) - math.pi)
    terms[:, 1] = 1.0 - turn / math.pi
    terms[:, 2] = 1.0 - np.clip(np.hypot(*(centers - ctx.goal[None, :]).T) / diag, 0.0, 1.0)
    terms[:, 3] = 1.0 - np.clip(np.hypot(*(centers - ctx.pose.xy[None, :]).T) / diag, 0.0, 1.0)
    if ctx.teammates:
        d_team = np.min(
            np.stack([np.hypot(*(centers - t[None, :]).T) for t in ctx.teammates]), axis=0
        )
        terms[:, 4] = 1.0 - np.clip(d_team / diag, 0.0, 1.0)
    if ctx.opponents:
        opp = np.array(ctx.opponents)
        d_opp = np.min(
            np.stack([np.hypot(*(centers - o[None, :]).T) for o in opp]), axis=0
        )
        terms[:, 5] = np.clip(d_opp / diag, 0.0, 1.0)
        d = centers - ctx.ball[None, :]  # (m, 2) lane vectors
        denom = np.maximum(np.einsum("ij,ij->i", d, d), 1e-18)
        rel = opp - ctx.ball[None, :]  # (p, 2)
        t = np.clip((d @ rel.T) / denom[:, None], 0.0, 1.0)  # (m, p)
        closest = ctx.ball[None, None, :] + t[:, :, None] * d[:, None, :]
        gap = closest - opp[None, :, :]
        clearance = np.sqrt(np.einsum("kpj,kpj->kp", gap, gap)).min(axis=1) - OPPONENT_CLEAR_RADIUS
        terms[:, 6] = np.clip(clearance / BLOCK_CLEAR_DISTANCE, 0.0, 1.0)
    else:
        terms[:, 5] = 1.0
        terms[:, 6] = 1.0
    return terms


def score_candidates(
    candidates: list[PassCandidate], ctx: ScoreContext, profile: StrategyProfile
) -> np.ndarray:
    """Utility of each candidate; also written back onto the candidates."""
    scores = score_terms(candidates, ctx) @ profile.weights()
    for cand, sc in zip(candidates, scores):
        cand.score = float(sc)
    return scores


def score_candidate(
    candidate: PassCandidate, ctx: ScoreContext, profile: StrategyProfile
) -> float:
    return float(score_candidates([candidate], ctx, profile)[0])


@dataclass
class PassSelection:
    target: np.ndarray
    radius: float
    cone_half_angle: float
    candidate_index: int | None  # None for the goal-center fallback


def tangent_cone_half_angle(ball: np.ndarray, center: np.ndarray, radius: float) -> float:
    dist = float(np.hypot(*(center - ball)))
    if dist <= radius:
        return math.pi / 2.0
    return math.asin(radius / dist)


def select_pass(
    ball: np.ndarray,
    candidates: list[PassCandidate],
    ctx: ScoreContext,
    profile: StrategyProfile,
    previous_target: np.ndarray | None = None,
) -> PassSelection:
    """Argmax-utility candidate; ties prefer the larger circle, then the
    one nearer the goal. Empty candidate set falls back to the goal
    center with the goal mouth as tolerance. A candidate near the
    previous target gets a small multiplicative bonus so near-ties do
    not flip the aim point every decision."""
    if not candidates:
        half = goal_mouth_half_angle(ball, ctx.goal, ctx.fmap)
        return PassSelection(ctx.goal.copy(), ctx.fmap.goal_half_width, half, None)
    scores = score_candidates(candidates, ctx, profile)
    if previous_target is not None:
        centers = np.array([c.center for c in candidates])
        near = np.hypot(*(centers - previous_target[None, :]).T) < PASS_STICKY_RADIUS
        scores = np.where(near, scores + PASS_STICKY_BONUS * float(np.abs(scores).max()), scores)
    d_goal = np.hypot(*(np.array([c.center for c in candidates]) - ctx.goal[None, :]).T)
    order = sorted(
        range(len(candidates)),
        key=lambda k: (-scores[k], -candidates[k].radius, d_goal[k]),
    )
    best = order[0]
    cand = candidates[best]
    return PassSelection(
        cand.center.copy(),
        cand.radius,
        tangent_cone_half_angle(ball, cand.center, cand.radius),
        best,
    )


def goal_mouth_half_angle(ball: np.ndarray, goal: np.ndarray, fmap: FieldMap) -> float:
    """Half the angle the goal mouth subtends at the ball."""
    p1 = np.array([goal[0], fmap.goal_half_width])
    p2 = np.array([goal[0], -fmap.goal_half_width])
    b1 = math.atan2(p1[1] - ball[1], p1[0] - ball[0])
    b2 = math.atan2(p2[1] - ball[1], p2[0] - ball[0])
    return abs(wrap_angle(b1 - b2)) / 2.0


def shot_is_clean(
    ball: np.ndarray,
    goal: np.ndarray,
    opponents: list[np.ndarray],
    fmap: FieldMap,
    min_half_angle: float = MIN_SHOT_HALF_ANGLE,
    clear_radius: float = OPPONENT_CLEAR_RADIUS,
) -> bool:
    """A direct shot is on when the lane clears every opponent disc and
    the goal mouth is wide enough not to demand excessive accuracy."""
    if goal_mouth_half_angle(ball, goal, fmap) < min_half_angle:
        return False
    if opponents:
        dists = _segment_point_distances(ball, goal, np.array(opponents))
        if float(dists.min()) < clear_radius:
            return False
    return True


SHOT_AIM_FRACTIONS = (0.0, 0.55, -0.55)  # of goal half width; center first, then past a keeper


def shot_intercept_margin(
    ball: np.ndarray,
    aim: np.ndarray,
    opponents: np.ndarray,
    launch_speed: float = SHOT_LAUNCH_SPEED,
    decel: float = BALL_ROLL_DECEL,
    reach: float = SHOT_BLOCK_REACH,
    blocker_speed: float = SHOT_BLOCK_SPEED,
) -> float:
    """Worst-case spare metres between the shot line and any blocker.

    A blocker's threat is its perpendicular gap to the line minus the
    reach it can add while the rolling ball covers the along-line
    distance to its foot of perpendicular; the first beat of that
    flight is free, because sensing and replanning lag means nobody
    starts moving before the ball is already past a snap-shot range.
    Positive margin means no opponent can make the interception in
    time; a stationary wall on the line still reads blocked, a keeper
    a body-width off the line of a snap shot does not.
    """
    d = aim - ball
    length = float(np.hypot(*d))
    if length < 1e-9 or opponents.size == 0:
        return math.inf
    u = d / length
    along = np.clip((opponents - ball[None, :]) @ u, 0.0, length)
    foot = ball[None, :] + along[:, None] * u
    perp = np.hypot(*(opponents - foot).T)
    # rolling ballistics: time for the ball to cover the along distance
    v2 = np.maximum(launch_speed**2 - 2.0 * decel * along, 0.0)
    t_ball = (launch_speed - np.sqrt(v2)) / decel
    t_close = np.maximum(t_ball - SHOT_REACT_LAG, 0.0)
    return float((perp - reach - blocker_speed * t_close).min())


def select_shot(
    ball: np.ndarray,
    goal: np.ndarray,
    opponents: list[np.ndarray],
    fmap: FieldMap,
    min_half_angle: float = MIN_SHOT_HALF_ANGLE,
    min_margin: float = 0.0,
) -> tuple[np.ndarray, float] | None:
    """Best aim point on the goal mouth: the lane whose intercept margin
    against every opponent is widest, among aims whose angular slack to
    the nearer post still tolerates the kick's direction error. None
    when every lane can be covered before the ball -> better to pass."""
    posts = np.array([goal + [0.0, fmap.goal_half_width], goal - [0.0, fmap.goal_half_width]])
    post_bearings = np.arctan2(posts[:, 1] - ball[1], posts[:, 0] - ball[0])
    opp = np.array(opponents) if opponents else np.zeros((0, 2))
    best: tuple[float, float, np.ndarray] | None = None
    for frac in SHOT_AIM_FRACTIONS:
        aim = goal + np.array([0.0, frac * fmap.goal_half_width])
        bearing = math.atan2(aim[1] - ball[1], aim[0] - ball[0])
        slack = float(np.abs(wrap_angle_array(post_bearings - bearing)).min())
        if slack < min_half_angle:
            continue
        margin = shot_intercept_margin(ball, aim, opp)
        if best is None or margin > best[0] + 1e-9:
            best = (margin, slack, aim)
    if best is None or best[0] < min_margin:
        return None
    return best[2], best[1]


def kick_power(distance: float, goal_shot: bool = False) -> float:
    if goal_shot:
        return 1.0
    return min(1.0, max(0.0, distance) / MAX_KICK_RANGE)


# ------------------------------------------------------------ ball memory

def point_in_fov(
    observer: Pose2D,
    neck_yaw: float,
    point: np.ndarray,
    cam: CameraModel,
    fov_fraction: float = 1.0,
) -> bool:
    rel = world_to_body(observer, point)
    rng = float(np.hypot(rel[0], rel[1]))
    if rng > cam.max_range:
        return False
    bearing = wrap_angle(math.atan2(rel[1], rel[0]) - neck_yaw)
    return abs(bearing) <= fov_fraction * cam.fov_h / 2.0


def shadow_indices(
    observer_xy: np.ndarray, point: np.ndarray, obstacles: list[tuple[np.ndarray, float]]
) -> tuple[int, ...]:
    """Obstacles whose disc occludes the sight line to the point."""
    target = np.asarray(point, dtype=float)[None, :]
    obs = np.asarray(observer_xy, dtype=float)
    out = []
    for k, blocker in enumerate(obstacles):
        if bool(_occluded(obs, target, [blocker])[0]):
            out.append(k)
    return tuple(out)


def update_ball_memory(
    mem: BallMemory,
    detection_world: np.ndarray | None,
    observer: Pose2D,
    neck_yaw: float,
    cam: CameraModel,
    obstacles: list[tuple[np.ndarray, float]],
    tick: int,
    dt: float,
    velocity: np.ndarray | None = None,
    fmap: FieldMap | None = None,
) -> BallMemory:
    """One FSM step. A fresh detection locks In-View; without one the
    memory ages, extrapolates when the stored velocity is trustworthy,
    and forgets on timeout or repeated unexplained absence. Obstacle
    shadows explain absence, so an occluded ball stays remembered."""
    if detection_world is not None:
        return BallMemory(
            state=BallState.IN_VIEW,
            position=np.asarray(detection_world, dtype=float).copy(),
            velocity=None if velocity is None else np.asarray(velocity, dtype=float).copy(),
            last_seen_tick=tick,
            miss_count=0,
            shadow=(),
        )
    if mem.state == BallState.LOST or mem.position is None:
        return BallMemory()

    age_s = (tick - mem.last_seen_tick) * dt
    if age_s > MEMORY_TIMEOUT_S:
        return BallMemory()

    pos = mem.position.copy()
    vel = None if mem.velocity is None else mem.velocity.copy()
    predicted = False
    if vel is not None:
        speed = float(np.hypot(vel[0], vel[1]))
        if speed >= PREDICT_MIN_SPEED:
            pos = pos + vel * dt
            vel = vel * max(0.0, 1.0 - BALL_ROLL_DECEL * dt / speed)
            predicted = True
            if fmap is not None and not fmap.contains(pos, margin=0.2):
                vel = np.zeros(2)  # rolled out: hold at the boundary estimate
    shadow = shadow_indices(observer.xy, pos, obstacles)
    expected = (
        point_in_fov(observer, neck_yaw, pos, cam, EXPECTED_FOV_FRACTION) and not shadow
    )
    miss = mem.miss_count + 1 if expected else 0
    if miss >= EXPECTED_VISIBLE_MISSES:
        return BallMemory()
    return BallMemory(
        state=BallState.PREDICTED if predicted else BallState.REMEMBERED,
        position=pos,
        velocity=vel,
        last_seen_tick=mem.last_seen_tick,
        miss_count=miss,
        shadow=shadow,
    )


# --------------------------------------------------------------- deciding

def _stance_pose(ball: np.ndarray, target: np.ndarray) -> Pose2D:
    """Kicking stance: behind the ball, facing the target."""
    d = target - ball
    norm = float(np.hypot(d[0], d[1]))
    if norm < 1e-9:
        d, norm = np.array([1.0, 0.0]), 1.0
    u = d / norm
    spot = ball - KICK_STANCE_DISTANCE * u
    return Pose2D(float(spot[0]), float(spot[1]), math.atan2(u[1], u[0]))


def _neck_for(memory: BallMemory, localized: bool) -> NeckMode:
    if not localized:
        return NeckMode.RELOCALIZE
    if memory.state == BallState.IN_VIEW:
        return NeckMode.TRACK
    if memory.state in (BallState.REMEMBERED, BallState.PREDICTED):
        return NeckMode.PREDICT
    return NeckMode.SEARCH


def _search_output(snap: GameSnapshot) -> BehaviorOutput:
    """Rotate in place scanning for the ball; support drops back."""
    pose = snap.pose
    if snap.role == Role.SUPPORT:
        own_goal = snap.fmap.goal_center(snap.team)
        spot = 0.5 * (own_goal + np.zeros(2))
        desired = Pose2D(float(spot[0]), float(spot[1]), _face(spot, np.zeros(2)))
        return BehaviorOutput(
            desired, Movement.REPOSITION, NeckMode.SEARCH, mode="search", watch=np.zeros(2)
        )
    desired = Pose2D(pose.x, pose.y, wrap_angle(pose.theta + 0.9))
    return BehaviorOutput(desired, Movement.SEARCH, NeckMode.SEARCH, mode="search")


def decide(snap: GameSnapshot, profile: StrategyProfile) -> BehaviorOutput:
    """One snapshot in, one action out; no hidden state, no randomness."""
    fmap = snap.fmap
    attack_goal = fmap.goal_center(1 - snap.team)
    own_goal = fmap.goal_center(snap.team)
    neck = _neck_for(snap.memory, snap.localized)

    if not snap.localized:
        return BehaviorOutput(snap.pose, Movement.HALT, NeckMode.RELOCALIZE, mode="relocalize")
    if snap.memory.position is None:
        return _search_output(snap)

    ball = snap.memory.position
    my_dist = float(np.hypot(*(ball - snap.pose.xy)))
    # in the attacking half possession follows proximity, with a bias band so
    # the nominal striker keeps the ball on near-ties instead of the pair
    # flapping duties; in our own half (or with the teammate unseen) role
    # decides, so the rear player never abandons the goal to chase
    attack_sign = 1.0 if snap.team == 0 else -1.0
    if snap.teammates and ball[0] * attack_sign > 0.0:
        mate_dist = min(float(np.hypot(*(ball - t))) for t in snap.teammates)
        attacker_duty = my_dist <= mate_dist + (
            DUTY_BIAS if snap.role == Role.STRIKER else -DUTY_BIAS
        )
    else:
        attacker_duty = snap.role == Role.STRIKER

    if snap.phase == Phase.KICKOFF_THEM:
        hold = own_goal + 0.35 * (ball - own_goal)
        desired = Pose2D(float(hold[0]), float(hold[1]), _face(hold, ball))
        return BehaviorOutput(desired, Movement.REPOSITION, neck, mode="setpiece", watch=ball)
    if snap.phase == Phase.FREE_KICK_THEM:
        lane = own_goal - ball
        span = float(np.hypot(*lane))
        u = lane / span if span > 1e-9 else np.array([-1.0 if snap.team == 0 else 1.0, 0.0])
        if attacker_duty:
            spot = ball + FREE_KICK_STANDOFF * u  # on the lane, legal distance, first to the release
        else:
            spot = own_goal - min(KEEPER_MAX_DIST, 0.5 * span) * u
        spot = _clamp_into_field(spot, fmap)
        desired = Pose2D(float(spot[0]), float(spot[1]), _face(spot, ball))
        return BehaviorOutput(desired, Movement.REPOSITION, neck, mode="setpiece", watch=ball)

    if snap.phase == Phase.KICKOFF_US:
        if snap.role == Role.STRIKER:
            if snap.teammates:
                tap_target = snap.teammates[0].copy()
            else:
                direction = attack_goal - ball
                tap_target = ball + 1.5 * direction / float(np.hypot(*direction))
            return _approach_or_kick(
                snap, ball, tap_target, TAP_POWER, 0.3, mode="setpiece", candidates=None
            )
        hold = ball + np.array([0.0, 1.6 if ball[1] <= 0 else -1.6])
        hold = own_goal + 0.7 * (hold - own_goal)
        desired = Pose2D(float(hold[0]), float(hold[1]), _face(hold, ball))
        return BehaviorOutput(desired, Movement.REPOSITION, neck, mode="setpiece", watch=ball)

    offense = _we_are_closer(snap, ball, my_dist)

    if attacker_duty:
        if not offense and ball[0] * attack_sign < 0.0:
            # race to the ball is lost in our half: don't feed the duel,
            # plant on the shot lane goal-side and force the play wide
            lane = own_goal - ball
            span = float(np.hypot(*lane))
            u = lane / span if span > 1e-9 else np.array([-attack_sign, 0.0])
            spot = _clamp_into_field(ball + min(CONTAIN_DISTANCE, 0.5 * span) * u, fmap)
            desired = Pose2D(float(spot[0]), float(spot[1]), _face(spot, ball))
            return BehaviorOutput(
                desired, Movement.REPOSITION, neck, target=spot, mode="contain", watch=ball
            )
        in_own_third = ball[0] * attack_sign < -fmap.length / 6.0
        pressured = any(
            float(np.hypot(*(o - ball))) < CLEARANCE_PRESSURE_DIST for o in snap.opponents
        )
        if in_own_third and (snap.phase == Phase.FREE_KICK_US or pressured):
            # danger zone: boot it upfield to the emptier flank, no finesse
            flanks = [
                np.array([attack_sign * fmap.length / 4.0, sign * fmap.width / 4.0])
                for sign in (1.0, -1.0)
            ]
            if snap.opponents:
                opp = np.array(snap.opponents)
                room = [float(np.hypot(*(opp - f[None, :]).T).min()) for f in flanks]
                outlet = flanks[int(np.argmax(room))]
            else:
                outlet = flanks[0] if ball[1] <= 0 else flanks[1]
            return _approach_or_kick(
                snap, ball, outlet, 1.0, 0.3, mode="clearance", candidates=None
            )
        candidates: list[PassCandidate] | None = None
        selected: int | None = None
        was_shooting = (
            snap.previous_target is not None
            and float(np.hypot(*(snap.previous_target - attack_goal))) < fmap.goal_half_width + 0.3
        )
        shot = select_shot(ball, attack_goal, snap.opponents, fmap)
        if shot is None and was_shooting:
            # already lining up: keep the shot through a marginal occlusion
            shot = select_shot(
                ball, attack_goal, snap.opponents, fmap,
                SHOT_STICKY_HALF_ANGLE, SHOT_STICKY_MARGIN,
            )
        if shot is None and float(np.hypot(*(ball - attack_goal))) < SHOT_FORCE_DISTANCE:
            # point blank a covered shot still carries rebound value; recycling
            # the ball here just hands the defense time to reset
            shot = select_shot(
                ball, attack_goal, snap.opponents, fmap, min_margin=-1e9
            )
        if profile.always_shoot:
            target = attack_goal
            power = 1.0
            cone = max(goal_mouth_half_angle(ball, attack_goal, fmap), 0.05)
        elif shot is not None:
            target, slack = shot
            power = 1.0
            cone = max(slack, 0.05)
        elif my_dist <= CANDIDATE_GATE_DISTANCE:
            ctx = ScoreContext(
                ball=ball, pose=snap.pose, goal=attack_goal,
                teammates=snap.teammates, opponents=snap.opponents, fmap=fmap,
            )
            candidates = generate_candidates(ball, snap.opponents, snap.teammates, fmap)
            prev = None if was_shooting else snap.previous_target
            sel = select_pass(ball, candidates, ctx, profile, previous_target=prev)
            target, selected = sel.target, sel.candidate_index
            goal_shot = bool(np.hypot(*(target - attack_goal)) < 1e-6)
            power = kick_power(float(np.hypot(*(target - ball))), goal_shot)
            cone = sel.cone_half_angle
        else:
            target = attack_goal
            power = 1.0
            cone = max(goal_mouth_half_angle(ball, attack_goal, fmap), 0.05)
        out = _approach_or_kick(snap, ball, target, power, cone, mode="offense", candidates=candidates)
        out.selected_index = selected
        return out

    # support duties
    block = _shot_intercept(snap, ball, own_goal, neck)
    if block is not None:
        return block
    if offense:
        direction = attack_goal - ball
        norm = float(np.hypot(*direction))
        u = direction / norm if norm > 1e-9 else np.array([1.0, 0.0])
        spot = ball + 3.5 * u
        spot[1] += 1.2 if ball[1] <= 0.0 else -1.2  # drift to the open side
        spot = _clamp_into_field(spot, fmap)
        if float(np.hypot(*(spot - ball))) < 1.2:
            spot = ball + 1.2 * u
        desired = Pose2D(float(spot[0]), float(spot[1]), _face(spot, ball))
        return BehaviorOutput(
            desired, Movement.REPOSITION, neck, target=spot, mode="offense", watch=ball
        )
    lane = ball - own_goal
    span = float(np.hypot(*lane))
    u = lane / span if span > 1e-9 else np.array([1.0 if snap.team == 0 else -1.0, 0.0])
    spot = own_goal + min(KEEPER_MAX_DIST, DEFENSE_BISECT_RATIO * span) * u
    desired = Pose2D(float(spot[0]), float(spot[1]), _face(spot, ball))
    return BehaviorOutput(
        desired, Movement.REPOSITION, neck, target=spot, mode="defense", watch=ball
    )


def _shot_intercept(
    snap: GameSnapshot, ball: np.ndarray, own_goal: np.ndarray, neck: NeckMode
) -> BehaviorOutput | None:
    """Line-blocking stance while a fast ball is tracking into our goal.

    The bisector chase can't keep up with a rolling shot, so once the
    travel line crosses the mouth the defender plants itself on that
    line instead, as near its current spot as the line allows.
    """
    vel = snap.memory.velocity
    if vel is None:
        return None
    speed = float(np.hypot(*vel))
    if speed <= SHOT_INTERCEPT_SPEED or abs(float(vel[0])) < 1e-6:
        return None
    to_plane = (own_goal[0] - ball[0]) / float(vel[0])  # s until the goal plane
    if to_plane <= 0.0:
        return None
    y_cross = float(ball[1] + to_plane * vel[1])
    if abs(y_cross) >= snap.fmap.goal_half_width + 0.6:
        return None
    v = vel / speed
    t = float(np.clip((snap.pose.xy - ball) @ v, 0.3, to_plane * speed - 0.3))
    spot = _clamp_into_field(ball + t * v, snap.fmap)
    desired = Pose2D(float(spot[0]), float(spot[1]), _face(spot, ball))
    return BehaviorOutput(
        desired, Movement.REPOSITION, neck, target=spot, mode="block", watch=ball
    )


def _face(from_pt: np.ndarray, to_pt: np.ndarray) -> float:
    return math.atan2(to_pt[1] - from_pt[1], to_pt[0] - from_pt[0])


def _clamp_into_field(p: np.ndarray, fmap: FieldMap, inset: float = 0.5) -> np.ndarray:
    return np.array(
        [
            float(np.clip(p[0], -fmap.length / 2 + inset, fmap.length / 2 - inset)),
            float(np.clip(p[1], -fmap.width / 2 + inset, fmap.width / 2 - inset)),
        ]
    )


def _we_are_closer(snap: GameSnapshot, ball: np.ndarray, my_dist: float) -> bool:
    ours = [my_dist] + [float(np.hypot(*(ball - t))) for t in snap.teammates]
    theirs = [float(np.hypot(*(ball - o))) for o in snap.opponents]
    if not theirs:
        return True
    return min(ours) <= min(theirs) + 0.3


def _approach_or_kick(
    snap: GameSnapshot,
    ball: np.ndarray,
    target: np.ndarray,
    power: float,
    cone: float,
    mode: str,
    candidates: list[PassCandidate] | None,
) -> BehaviorOutput:
    stance = _stance_pose(ball, target)
    neck = _neck_for(snap.memory, snap.localized)
    my_dist = float(np.hypot(*(ball - snap.pose.xy)))
    facing_err = abs(wrap_angle(stance.theta - snap.pose.theta))
    if my_dist <= KICK_READY_DISTANCE and facing_err <= KICK_READY_HEADING:
        kick = KickCommand(target=np.asarray(target, dtype=float).copy(), power=power,
                           cone_half_angle=cone)
        return BehaviorOutput(
            stance, Movement.KICK, neck, kick=kick, target=kick.target,
            candidates=candidates, mode=mode,
        )
    return BehaviorOutput(
        stance, Movement.APPROACH, neck,
        target=np.asarray(target, dtype=float).copy(), candidates=candidates, mode=mode,
    )
