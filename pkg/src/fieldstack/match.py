"""Deterministic 2D match engine.

Each player runs the full stack: synthetic sensing, landmark
localization, ball memory, the decision layer, visibility-graph
planning with the fast tracker variant, and the in-gait kick commander.
Ball dynamics are rolling friction plus restitution against player
bodies; rules cover goals, kickoffs, out-of-bounds restarts, and
collision fouls. Identical seeds produce bit-identical histories.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field as dc_field

import numpy as np

from .behavior import (
    BallMemory,
    BehaviorOutput,
    GameSnapshot,
    Movement,
    NeckMode,
    Phase,
    Role,
    StrategyProfile,
    decide,
    update_ball_memory,
)
from .field import (
    FieldMap,
    Pose2D,
    RuleConfig,
    build_default_field,
    rot2,
    world_to_body,
    wrap_angle,
    wrap_angle_array,
)
from .kick import (
    CONTACT_SLOP,
    CommanderState,
    Foot,
    GaitState,
    KickZone,
    SwingPolynomial,
    commander_tick,
    plan_kick_swing,
)
from .localization import ClapConfig, ClapLocalizer, OdometryDelta
from .navigation import (
    MpcConfig,
    Obstacle,
    ReferenceTrajectory,
    plan_davg,
    solve_cfmpc_qp,
)
from .perception import (
    BallTrack,
    CameraModel,
    Detection,
    NoiseModel,
    ObjectClass,
    ROBOT_BODY_RADIUS,
    Scene,
    SceneRobot,
    kalman_step,
    project_detection,
    select_landmarks,
    sense,
    validate_ball,
)

TICK_DT = 0.05  # s, simulator control rate (20 Hz)
PERCEPTION_PERIOD = 2  # ticks between sensing/decision updates (10 Hz)
MPC_PERIOD = 2  # ticks the first tracker input is held for
REPLAN_PERIOD = 10  # ticks between forced path replans
OPPONENT_MEMORY_S = 3.0  # s a detected opponent stays on the books
OPPONENT_DISC_RADIUS = 0.36  # m keep-out radius used for planning
PLAYERS_PER_TEAM = 2
STANCE_GAIN = 2.0  # P-gain for the kick-stance controller, 1/s
HEADING_GAIN = 2.5  # 1/s
NECK_SLEW = 2.5  # rad/s
NECK_LIMIT = 1.2  # rad
SET_PIECE_RELEASE_DIST = 0.15  # m of ball displacement that opens play
PUSH_TRANSFER = 0.8  # fraction of walking speed handed to a touched ball
IMPULSE_FLOOR = 0.3  # contact efficiency at zero commanded power
DIRECTION_BLEND = 0.5  # contact normal vs foot-velocity weighting
BALL_KEEPOUT_RADIUS = 0.2  # m the approach planner stays off the ball
FACE_BALL_LIMIT = 1.6  # rad of heading-to-ball slack before a repositioning walk turns to watch it


@dataclass
class BallDynamics:
    decel: float = 1.2  # m/s^2 rolling deceleration
    restitution: float = 0.6  # bounce factor against player bodies
    radius: float = 0.11  # m

    def to_dict(self) -> dict:
        return {"decel": self.decel, "restitution": self.restitution, "radius": self.radius}

    @staticmethod
    def from_dict(d: dict) -> "BallDynamics":
        return BallDynamics(**{k: float(v) for k, v in d.items()})


@dataclass
class MatchEvent:
    tick: int
    kind: str  # kick, goal, out_of_bounds, free_kick, foul, kickoff, half_start, end
    team: int | None = None
    data: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"tick": self.tick, "kind": self.kind, "team": self.team, "data": self.data}

    @staticmethod
    def from_dict(d: dict) -> "MatchEvent":
        return MatchEvent(int(d["tick"]), d["kind"], d.get("team"), d.get("data", {}))


class MatchPhase:
    KICKOFF = "kickoff"
    PLAY = "play"
    FREE_KICK = "free_kick"
    END = "end"


@dataclass
class PlayerState:
    """Full per-player stack state owned by the engine."""

    index: int
    team: int
    role: Role
    pose: Pose2D  # ground truth
    rng: np.random.Generator
    cmd_vel: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    neck_yaw: float = 0.0
    localizer: ClapLocalizer | None = None
    memory: BallMemory = dc_field(default_factory=BallMemory)
    ball_track: BallTrack = dc_field(default_factory=BallTrack)
    gait: GaitState = dc_field(default_factory=GaitState)
    kick_state: CommanderState = dc_field(default_factory=CommanderState)
    active_swing: SwingPolynomial | None = None
    swing_started_tick: int = -1
    swing_foot: Foot = Foot.LEFT
    swing_hit: bool = False
    swing_power: float = 0.0
    opponents_seen: list[tuple[np.ndarray, int]] = dc_field(default_factory=list)
    plan_ref: ReferenceTrajectory | None = None
    plan_tick: int = -10_000
    plan_goal: np.ndarray | None = None
    behavior: BehaviorOutput | None = None
    last_ball_tick: int = -10_000
    last_detections: list[Detection] = dc_field(default_factory=list)

    @property
    def estimate(self) -> Pose2D | None:
        return None if self.localizer is None else self.localizer.estimate

    @property
    def localized(self) -> bool:
        return self.localizer is not None and not self.localizer.delocalized

    def reset_stack(self):
        self.cmd_vel = np.zeros(3)
        self.memory = BallMemory()
        self.ball_track = BallTrack()
        self.gait = GaitState()
        self.kick_state = CommanderState()
        self.active_swing = None
        self.swing_hit = False
        self.opponents_seen = []
        self.plan_ref = None
        self.plan_goal = None
        self.behavior = None
        self.last_ball_tick = -10_000


@dataclass
class PlayerSnapshot:
    index: int
    team: int
    role: str
    pose: list[float]  # truth [x y theta]
    velocity: list[float]  # commanded body-frame [vx vy omega]
    estimate: list[float] | None
    localized: bool
    neck_yaw: float
    ball_memory_state: str
    ball_memory_position: list[float] | None
    movement: str
    kick_active: bool

    def to_dict(self) -> dict:
        return self.__dict__.copy()


@dataclass
class MatchState:
    """Plain-data view of the engine for telemetry and tests."""

    tick: int
    time_s: float
    phase: str
    half: int
    score: list[int]
    ball_position: list[float]
    ball_velocity: list[float]
    players: list[PlayerSnapshot]
    restart_team: int

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["players"] = [p.to_dict() for p in self.players]
        return d


@dataclass
class MatchResult:
    score: tuple[int, int]
    differential: int  # team 0 minus team 1
    seed: int
    strategy_a: str
    strategy_b: str
    ticks: int
    events: list[MatchEvent]

    def to_row(self) -> str:
        return "\t".join(
            [
                str(self.seed),
                self.strategy_a,
                self.strategy_b,
                str(self.score[0]),
                str(self.score[1]),
                str(self.differential),
            ]
        )


RESULT_HEADER = "seed\tstrategy_a\tstrategy_b\tscore_a\tscore_b\tdifferential"


class MatchEngine:
    """Single-owner tick loop; every stochastic draw derives from the seed."""

    def __init__(
        self,
        profile_a: StrategyProfile,
        profile_b: StrategyProfile,
        rules: RuleConfig | None = None,
        seed: int = 0,
        fmap: FieldMap | None = None,
        dynamics: BallDynamics | None = None,
        noise: NoiseModel | None = None,
        mpc: MpcConfig | None = None,
        clap: ClapConfig | None = None,
        frozen_teams: tuple[int, ...] = (),
    ):
        self.profiles = (profile_a, profile_b)
        self.rules = rules or RuleConfig()
        self.seed = seed
        self.fmap = fmap or build_default_field()
        self.dynamics = dynamics or BallDynamics()
        self.noise = noise or NoiseModel()
        self.cam = CameraModel()
        self.mpc = mpc or MpcConfig(horizon=6, dt=0.12)
        # local tracking only: players are placed (and told where) at every
        # kickoff, so kidnap recovery never earns its keep here — while a
        # rare mirrored global cluster would snap a healthy estimate across
        # the field mid-match and turn one aligned shot into an own goal
        self.clap = clap or ClapConfig(global_period=1_000_000, global_window=8)
        self.zone = KickZone()
        self.frozen_teams = tuple(frozen_teams)
        self._lm_classes, self._lm_positions = self.fmap.landmark_array()

        master = np.random.default_rng(seed)
        streams = master.spawn(2 * PLAYERS_PER_TEAM)
        self.players: list[PlayerState] = []
        for k in range(2 * PLAYERS_PER_TEAM):
            team = k // PLAYERS_PER_TEAM
            player = PlayerState(
                index=k,
                team=team,
                role=Role.STRIKER if k % PLAYERS_PER_TEAM == 0 else Role.SUPPORT,
                pose=Pose2D(0.0, 0.0, 0.0),
                rng=streams[k],
            )
            player.localizer = ClapLocalizer(self.fmap, self.clap)
            self.players.append(player)

        self.tick = 0
        self.half = 0
        self.score = [0, 0]
        self.ball_pos = np.zeros(2)
        self.ball_vel = np.zeros(2)
        self.phase = MatchPhase.KICKOFF
        self.phase_tick = 0
        self.kickoff_team = 0
        self.restart_team = 0
        self.last_touch: int | None = None
        self.last_foul_tick = -10_000
        self.events: list[MatchEvent] = []
        self._pending_odo = [np.zeros(3) for _ in self.players]
        self._reset_set_piece(MatchPhase.KICKOFF, 0, np.zeros(2))

    # ------------------------------------------------------------ setup

    def _formation(self, kicking: int) -> list[Pose2D]:
        """Kickoff poses, point-mirrored through the center for team 1."""
        poses: list[Pose2D] = []
        for k in range(2 * PLAYERS_PER_TEAM):
            team = k // PLAYERS_PER_TEAM
            member = k % PLAYERS_PER_TEAM
            if team == kicking:
                x, y = (-0.55, 0.15) if member == 0 else (-2.4, -1.4)
            else:
                x, y = (-2.6, 0.6) if member == 0 else (-4.6, -0.6)
            if team == 0:
                poses.append(Pose2D(x, y, 0.0))
            else:
                poses.append(Pose2D(-x, -y, math.pi))
        return poses

    def _reset_set_piece(self, phase: str, team: int, spot: np.ndarray):
        self.phase = phase
        self.phase_tick = self.tick
        self.restart_team = team
        self.ball_pos = spot.copy()
        self.ball_vel = np.zeros(2)
        self.set_piece_spot = spot.copy()
        if phase == MatchPhase.KICKOFF:
            self.kickoff_team = team
            for player, pose in zip(self.players, self._formation(team)):
                player.pose = pose
                player.neck_yaw = 0.0
                player.reset_stack()
                # manual placement: the robot is told where it stands
                player.localizer.force_estimate(pose)
                self._pending_odo[player.index] = np.zeros(3)

    # ------------------------------------------------------- perception

    def _scene(self) -> Scene:
        robots = [
            SceneRobot(position=p.pose.xy, team=p.team, radius=ROBOT_BODY_RADIUS)
            for p in self.players
        ]
        return Scene(
            landmark_classes=self._lm_classes,
            landmark_positions=self._lm_positions,
            ball=self.ball_pos.copy(),
            robots=robots,
        )

    def _perceive(self, player: PlayerState, scene: Scene):
        dets = sense(
            scene, player.pose, player.neck_yaw, self.cam, self.noise, player.rng,
            observer_index=player.index,
        )
        player.last_detections = dets
        odo = self._pending_odo[player.index]
        self._pending_odo[player.index] = np.zeros(3)
        landmarks = select_landmarks([d for d in dets if d.kind <= ObjectClass.G])
        player.localizer.update(
            landmarks, OdometryDelta(float(odo[0]), float(odo[1]), float(odo[2]))
        )

        est = player.estimate
        ball_det = next(
            (d for d in dets if d.kind == ObjectClass.BALL and validate_ball(d, self.cam)),
            None,
        )
        ball_world = None
        velocity = None
        dt_meas = PERCEPTION_PERIOD * TICK_DT
        if ball_det is not None and est is not None:
            ball_world = project_detection(ball_det, est)
            meas = np.array([ball_world[0], ball_world[1], 0.0])
            player.ball_track = kalman_step(player.ball_track, meas, dt_meas, validate=False)
            velocity = player.ball_track.velocity()[:2]
            player.last_ball_tick = self.tick
        else:
            player.ball_track = kalman_step(player.ball_track, None, dt_meas, validate=False)

        if est is not None:
            obstacles = [(pos, OPPONENT_DISC_RADIUS) for pos, _ in player.opponents_seen]
            player.memory = update_ball_memory(
                player.memory, ball_world, est, player.neck_yaw, self.cam,
                obstacles, self.tick, dt_meas, velocity=velocity, fmap=self.fmap,
            )
            self._note_opponents(player, dets, est)

    def _note_opponents(self, player: PlayerState, dets: list[Detection], est: Pose2D):
        horizon = self.tick - int(OPPONENT_MEMORY_S / TICK_DT)
        kept = [(p, t) for p, t in player.opponents_seen if t >= horizon]
        own_kind = ObjectClass.ROBOT_RED if player.team == 0 else ObjectClass.ROBOT_BLUE
        for det in dets:
            if det.kind not in (ObjectClass.ROBOT_RED, ObjectClass.ROBOT_BLUE):
                continue
            if det.kind == own_kind:
                continue
            pos = project_detection(det, est)
            kept = [(p, t) for p, t in kept if float(np.hypot(*(p - pos))) > 0.6]
            kept.append((pos, self.tick))
        player.opponents_seen = kept

    # --------------------------------------------------------- deciding

    def _phase_for(self, team: int) -> Phase:
        if self.phase == MatchPhase.KICKOFF:
            return Phase.KICKOFF_US if team == self.kickoff_team else Phase.KICKOFF_THEM
        if self.phase == MatchPhase.FREE_KICK:
            return Phase.FREE_KICK_US if team == self.restart_team else Phase.FREE_KICK_THEM
        return Phase.PLAY

    def _assign_roles(self):
        for team in (0, 1):
            members = [p for p in self.players if p.team == team]
            dists = [
                math.inf
                if p.memory.position is None
                else float(np.hypot(*(p.memory.position - p.pose.xy)))
                for p in members
            ]
            current = next((m for m in members if m.role == Role.STRIKER), members[0])
            other = members[1] if current is members[0] else members[0]
            if dists[members.index(other)] < dists[members.index(current)] - 0.3:
                current, other = other, current  # hysteresis against role thrash
            current.role = Role.STRIKER
            other.role = Role.SUPPORT

    def _decide(self, player: PlayerState):
        est = player.estimate
        teammates = [
            q.estimate.xy
            for q in self.players
            if q.team == player.team and q is not player and q.estimate is not None
        ]
        snap = GameSnapshot(
            tick=self.tick,
            dt=PERCEPTION_PERIOD * TICK_DT,
            pose=est if est is not None else player.pose,
            localized=player.localized and est is not None,
            memory=player.memory,
            team=player.team,
            role=player.role,
            phase=self._phase_for(player.team),
            teammates=teammates,
            opponents=[pos.copy() for pos, _ in player.opponents_seen],
            fmap=self.fmap,
            previous_target=player.behavior.target if player.behavior is not None else None,
        )
        player.behavior = decide(snap, self.profiles[player.team])

    # ------------------------------------------------------- navigation

    def _planning_obstacles(self, player: PlayerState) -> list[Obstacle]:
        obstacles = [
            Obstacle(center=pos.copy(), radius=OPPONENT_DISC_RADIUS)
            for pos, _ in player.opponents_seen
        ]
        for q in self.players:
            if q.team == player.team and q is not player and q.estimate is not None:
                obstacles.append(Obstacle(center=q.estimate.xy, radius=OPPONENT_DISC_RADIUS))
        blocking = player.behavior is not None and player.behavior.mode == "block"
        if player.memory.position is not None and not blocking:
            # walk around the ball, not through it; the kick stance sits
            # outside this disc so the final approach stays reachable.
            # A keeper stepping onto a shot line wants the contact.
            obstacles.append(
                Obstacle(center=player.memory.position.copy(), radius=BALL_KEEPOUT_RADIUS)
            )
        return obstacles

    def _track_plan(self, player: PlayerState, goal_pose: Pose2D):
        est = player.estimate or player.pose
        goal = goal_pose.xy
        obstacles = self._planning_obstacles(player)
        stale = (
            player.plan_ref is None
            or self.tick - player.plan_tick >= REPLAN_PERIOD
            or player.plan_goal is None
            or float(np.hypot(*(player.plan_goal - goal))) > 0.4
        )
        if stale:
            plan = plan_davg(est, goal, obstacles, fmap=self.fmap, margin=0.05, speed=0.9)
            if plan.ok and plan.trajectory is not None:
                player.plan_ref = plan.trajectory
            else:  # walled in: drive straight and let the tracker slide along
                player.plan_ref = ReferenceTrajectory.from_waypoints(
                    np.vstack([est.xy, goal]), speed=0.9
                )
            watch = None if player.behavior is None else player.behavior.watch
            if watch is not None and player.behavior.movement == Movement.REPOSITION:
                # never walk blind: where the path heading would swing the
                # watch point out of the sensing arc, face it and strafe
                ref = player.plan_ref
                bear = np.arctan2(watch[1] - ref.points[:, 1], watch[0] - ref.points[:, 0])
                hidden = np.abs(wrap_angle_array(ref.headings - bear)) > FACE_BALL_LIMIT
                if hidden.any():
                    player.plan_ref = ReferenceTrajectory(
                        ref.points, ref.times, np.where(hidden, bear, ref.headings)
                    )
            player.plan_tick = self.tick
            player.plan_goal = goal.copy()

        if float(np.hypot(*(goal - est.xy))) < 0.25:
            rel = world_to_body(est, goal)
            err_theta = wrap_angle(goal_pose.theta - est.theta)
            player.cmd_vel = self._clip_u(
                np.array([STANCE_GAIN * rel[0], STANCE_GAIN * rel[1], HEADING_GAIN * err_theta])
            )
            return
        if (self.tick - player.plan_tick) % MPC_PERIOD == 0:
            t_on = (self.tick - player.plan_tick) * TICK_DT
            sol = solve_cfmpc_qp(
                est.as_array(), player.plan_ref, obstacles, self.mpc, t0=t_on, margin=0.05
            )
            player.cmd_vel = self._clip_u(sol.first_input)

    def _clip_u(self, u: np.ndarray) -> np.ndarray:
        lim = self.mpc.u_max()
        return np.clip(u, -lim, lim)

    def _stance_control(self, player: PlayerState, stance: Pose2D):
        est = player.estimate or player.pose
        rel = world_to_body(est, stance.xy)
        err_theta = wrap_angle(stance.theta - est.theta)
        u = self._clip_u(
            np.array([STANCE_GAIN * rel[0], STANCE_GAIN * rel[1], HEADING_GAIN * err_theta])
        )
        u[0] = max(u[0], 0.05)  # keep drifting forward so the gait stays armable
        player.cmd_vel = u

    def _actuate(self, player: PlayerState):
        out = player.behavior
        if out is None or self.phase == MatchPhase.END or player.team in self.frozen_teams:
            player.cmd_vel = np.zeros(3)
            return
        if out.movement == Movement.HALT:
            player.cmd_vel = np.zeros(3)
        elif out.movement == Movement.SEARCH:
            player.cmd_vel = np.array([0.0, 0.0, 1.1])
        elif out.movement == Movement.KICK:
            self._stance_control(player, out.desired_pose)
        else:  # APPROACH / REPOSITION
            self._track_plan(player, out.desired_pose)
        self._enforce_set_piece_distance(player)

    def _enforce_set_piece_distance(self, player: PlayerState):
        """Non-restarting players may not close in on the ball during a
        set piece: the inward velocity component is removed."""
        if self.phase not in (MatchPhase.KICKOFF, MatchPhase.FREE_KICK):
            return
        if player.team == self.restart_team:
            return
        clear = (
            self.rules.kickoff_clear_radius
            if self.phase == MatchPhase.KICKOFF
            else self.rules.free_kick_clear_radius
        )
        rel = player.pose.xy - self.ball_pos
        dist = float(np.hypot(*rel))
        if dist > clear + 0.2:
            return
        R = rot2(player.pose.theta)
        vel_world = R @ player.cmd_vel[:2]
        n = rel / max(dist, 1e-9)
        inward = float(vel_world @ n)
        if inward < 0.0:
            vel_world = vel_world - inward * n
            back = R.T @ vel_world
            player.cmd_vel = np.array([back[0], back[1], player.cmd_vel[2]])

    # ------------------------------------------------------- neck servo

    def _neck_update(self, player: PlayerState):
        out = player.behavior
        mode = out.neck if out is not None else NeckMode.SEARCH
        est = player.estimate
        if (
            mode in (NeckMode.TRACK, NeckMode.PREDICT)
            and player.memory.position is not None
            and est is not None
        ):
            rel = world_to_body(est, player.memory.position)
            target_yaw = math.atan2(rel[1], rel[0])
        elif mode == NeckMode.RELOCALIZE:
            target_yaw = NECK_LIMIT * math.sin(0.07 * self.tick + player.index)
        else:
            target_yaw = NECK_LIMIT * math.sin(0.15 * self.tick + player.index)
        target_yaw = float(np.clip(target_yaw, -NECK_LIMIT, NECK_LIMIT))
        step = float(
            np.clip(target_yaw - player.neck_yaw, -NECK_SLEW * TICK_DT, NECK_SLEW * TICK_DT)
        )
        player.neck_yaw += step

    # ------------------------------------------------------------ kicks

    def _kick_tick(self, player: PlayerState) -> list[MatchEvent]:
        events: list[MatchEvent] = []
        player.gait.v_x = float(player.cmd_vel[0])
        gait_events = player.gait.advance(TICK_DT)

        out = player.behavior
        wants_kick = (
            out is not None
            and out.kick is not None
            and out.movement == Movement.KICK
            and self.phase != MatchPhase.END
            and not self._ball_frozen()
            and player.team not in self.frozen_teams
        )
        ball_body = None
        age_s = 1e9
        power = 0.0
        if wants_kick and player.estimate is not None and player.memory.position is not None:
            ball_body = world_to_body(player.estimate, player.memory.position)
            age_s = (self.tick - player.last_ball_tick) * TICK_DT
            power = out.kick.power

        player.kick_state, started = commander_tick(
            player.gait, player.kick_state, ball_body, age_s, power, gait_events, self.zone
        )
        if started and player.kick_state.strike is not None:
            player.active_swing = plan_kick_swing(player.kick_state.strike)
            player.swing_started_tick = self.tick
            player.swing_foot = player.kick_state.striking_foot or Foot.LEFT
            player.swing_hit = False
            player.swing_power = player.kick_state.power

        if player.active_swing is not None:
            t0 = (self.tick - player.swing_started_tick) * TICK_DT
            if t0 > player.active_swing.duration:
                player.active_swing = None
            elif not player.swing_hit:
                hit = self._window_contact(player, t0)
                if hit is not None:
                    speed, dir_body = hit
                    self.ball_vel = speed * (rot2(player.pose.theta) @ dir_body)
                    self.last_touch = player.team
                    player.swing_hit = True
                    events.append(
                        MatchEvent(
                            self.tick, "kick", player.team,
                            {
                                "player": player.index,
                                "speed": round(speed, 4),
                                "power": round(player.swing_power, 4),
                            },
                        )
                    )
        return events

    def _window_contact(self, player: PlayerState, t0: float) -> tuple[float, np.ndarray] | None:
        """Check this tick's slice of the active swing against the true ball.

        Sampled at 1 ms so the first penetrating sample sits close to the
        ball surface; a coarse step would bury the foot in the ball and
        tilt the contact normal."""
        poly = player.active_swing
        ball_body = world_to_body(player.pose, self.ball_pos)
        face = np.array([0.0, -0.05 if player.swing_foot == Foot.LEFT else 0.05])
        t_end = min(t0 + TICK_DT, poly.duration)
        n = max(2, 1 + int((t_end - t0) / 0.001))
        for t in np.linspace(t0, t_end, n):
            foot = poly.position(float(t)) + face
            gap = ball_body - foot
            dist = float(np.hypot(*gap))
            if dist <= self.dynamics.radius + CONTACT_SLOP:
                vel = poly.velocity(float(t)) + np.array([max(player.cmd_vel[0], 0.0), 0.0])
                speed = float(np.hypot(*vel))
                if speed < 1e-9:
                    return None
                v_hat = vel / speed
                normal = gap / dist if dist > 1e-9 else v_hat
                if float(normal @ v_hat) <= 0.0:
                    normal = v_hat  # arriving from ahead: shove forward
                direction = DIRECTION_BLEND * normal + (1.0 - DIRECTION_BLEND) * v_hat
                direction = direction / float(np.hypot(*direction))
                # soft contact at low commanded power deadens the strike;
                # composed with power = distance / MAX_KICK_RANGE this puts
                # the stop point within ~0.4 m of the asked distance across
                # the 1-8 m band under the rolling-friction ballistics
                efficiency = IMPULSE_FLOOR + (1.0 - IMPULSE_FLOOR) * player.swing_power
                return 1.2 * speed * efficiency, direction
        return None

    # ---------------------------------------------------------- physics

    def _world_vel(self, player: PlayerState) -> np.ndarray:
        return rot2(player.pose.theta) @ player.cmd_vel[:2]

    def _integrate_players(self):
        margin = 0.5
        for player in self.players:
            u = player.cmd_vel
            v = self._world_vel(player)
            pose = player.pose
            x = float(
                np.clip(
                    pose.x + v[0] * TICK_DT,
                    -self.fmap.half_length - margin,
                    self.fmap.half_length + margin,
                )
            )
            y = float(
                np.clip(
                    pose.y + v[1] * TICK_DT,
                    -self.fmap.half_width - margin,
                    self.fmap.half_width + margin,
                )
            )
            player.pose = Pose2D(x, y, wrap_angle(pose.theta + u[2] * TICK_DT))
            self._pending_odo[player.index] += u * TICK_DT

        for i in range(len(self.players)):
            for j in range(i + 1, len(self.players)):
                a, b = self.players[i], self.players[j]
                rel = b.pose.xy - a.pose.xy
                dist = float(np.hypot(*rel))
                min_dist = 2.0 * ROBOT_BODY_RADIUS
                if 1e-9 < dist < min_dist:
                    push = 0.5 * (min_dist - dist) * rel / dist
                    a.pose = Pose2D(a.pose.x - push[0], a.pose.y - push[1], a.pose.theta)
                    b.pose = Pose2D(b.pose.x + push[0], b.pose.y + push[1], b.pose.theta)

    def _integrate_ball(self) -> list[MatchEvent]:
        events: list[MatchEvent] = []
        if self._ball_frozen():
            self.ball_vel = np.zeros(2)
            return events

        speed = float(np.hypot(*self.ball_vel))
        if speed > 1e-12:
            new_speed = max(0.0, speed - self.dynamics.decel * TICK_DT)
            self.ball_vel = self.ball_vel * (new_speed / speed)
        self.ball_pos = self.ball_pos + self.ball_vel * TICK_DT

        for player in self.players:
            rel = self.ball_pos - player.pose.xy
            dist = float(np.hypot(*rel))
            contact = self.dynamics.radius + ROBOT_BODY_RADIUS
            if 1e-9 < dist < contact:
                n = rel / dist
                self.ball_pos = player.pose.xy + n * contact
                v_n = float(self.ball_vel @ n)
                if v_n < 0.0:
                    self.ball_vel = self.ball_vel - (1.0 + self.dynamics.restitution) * v_n * n
                push = float(self._world_vel(player) @ n)
                if push > 0.0:  # walking into the ball nudges it along
                    self.ball_vel = self.ball_vel + PUSH_TRANSFER * push * n
                self.last_touch = player.team

        r = self.dynamics.radius
        bx, by = float(self.ball_pos[0]), float(self.ball_pos[1])
        if abs(bx) > self.fmap.half_length + r:
            if abs(by) < self.fmap.goal_half_width:
                scorer = 0 if bx > 0 else 1
                self.score[scorer] += 1
                events.append(
                    MatchEvent(self.tick, "goal", scorer, {"score": list(self.score)})
                )
                self._reset_set_piece(MatchPhase.KICKOFF, 1 - scorer, np.zeros(2))
                events.append(MatchEvent(self.tick, "kickoff", 1 - scorer, {}))
            else:
                events.extend(self._out_of_bounds())
        elif abs(by) > self.fmap.half_width + r:
            events.extend(self._out_of_bounds())
        return events

    def _out_of_bounds(self) -> list[MatchEvent]:
        inset = self.rules.restart_inset
        spot = np.array(
            [
                float(
                    np.clip(
                        self.ball_pos[0],
                        -self.fmap.half_length + inset,
                        self.fmap.half_length - inset,
                    )
                ),
                float(
                    np.clip(
                        self.ball_pos[1],
                        -self.fmap.half_width + inset,
                        self.fmap.half_width - inset,
                    )
                ),
            ]
        )
        team = 1 - self.last_touch if self.last_touch is not None else 0
        out_team = self.last_touch
        self._reset_set_piece(MatchPhase.FREE_KICK, team, spot)
        return [
            MatchEvent(self.tick, "out_of_bounds", out_team, {}),
            MatchEvent(
                self.tick, "free_kick", team, {"spot": [round(float(v), 3) for v in spot]}
            ),
        ]

    def _check_fouls(self) -> list[MatchEvent]:
        if self.phase != MatchPhase.PLAY:
            return []
        if self.tick - self.last_foul_tick < int(self.rules.foul_cooldown_s / TICK_DT):
            return []
        for a in self.players:
            for b in self.players:
                if a.index >= b.index or a.team == b.team:
                    continue
                rel = b.pose.xy - a.pose.xy
                dist = float(np.hypot(*rel))
                if dist >= self.rules.collision_foul_dist:
                    continue
                n = rel / max(dist, 1e-9)
                closing_a = float(self._world_vel(a) @ n)  # a moving toward b
                closing_b = float(-self._world_vel(b) @ n)
                if max(closing_a, closing_b) < self.rules.collision_foul_speed:
                    continue
                offender = a if closing_a >= closing_b else b
                fouled_team = 1 - offender.team
                self.last_foul_tick = self.tick
                spot = self.ball_pos.copy()
                self._reset_set_piece(MatchPhase.FREE_KICK, fouled_team, spot)
                return [
                    MatchEvent(self.tick, "foul", offender.team, {"player": offender.index}),
                    MatchEvent(
                        self.tick, "free_kick", fouled_team,
                        {"spot": [round(float(v), 3) for v in spot]},
                    ),
                ]
        return []

    # ------------------------------------------------------------- loop

    def _ball_frozen(self) -> bool:
        if self.phase not in (MatchPhase.KICKOFF, MatchPhase.FREE_KICK):
            return False
        return (self.tick - self.phase_tick) * TICK_DT < self.rules.setup_duration_s

    def _update_phase(self) -> list[MatchEvent]:
        events: list[MatchEvent] = []
        t_s = self.tick * TICK_DT
        half_len = self.rules.half_duration_s
        if t_s >= self.rules.halves * half_len:
            if self.phase != MatchPhase.END:
                self.phase = MatchPhase.END
                events.append(MatchEvent(self.tick, "end", None, {"score": list(self.score)}))
            return events
        if self.rules.halves >= 2 and self.half == 0 and t_s >= half_len:
            self.half = 1
            events.append(MatchEvent(self.tick, "half_start", None, {"half": 2}))
            self._reset_set_piece(MatchPhase.KICKOFF, 1, np.zeros(2))
            events.append(MatchEvent(self.tick, "kickoff", 1, {}))
            return events

        if self.phase in (MatchPhase.KICKOFF, MatchPhase.FREE_KICK) and not self._ball_frozen():
            elapsed = (self.tick - self.phase_tick) * TICK_DT
            wait = (
                self.rules.kickoff_wait_s
                if self.phase == MatchPhase.KICKOFF
                else self.rules.free_kick_wait_s
            )
            moved = (
                float(np.hypot(*(self.ball_pos - self.set_piece_spot)))
                > SET_PIECE_RELEASE_DIST
            )
            if moved or elapsed >= wait + self.rules.setup_duration_s:
                self.phase = MatchPhase.PLAY
                self.phase_tick = self.tick
        return events

    def step(self) -> list[MatchEvent]:
        """Advance one tick; returns the events it produced."""
        tick_events: list[MatchEvent] = []
        tick_events.extend(self._update_phase())
        if self.phase == MatchPhase.END:
            self.events.extend(tick_events)
            self.tick += 1
            return tick_events

        if self.tick % PERCEPTION_PERIOD == 0:
            scene = self._scene()
            for player in self.players:
                self._perceive(player, scene)
            self._assign_roles()
            for player in self.players:
                self._decide(player)

        for player in self.players:
            self._neck_update(player)
            self._actuate(player)
        for player in self.players:
            tick_events.extend(self._kick_tick(player))

        self._integrate_players()
        tick_events.extend(self._integrate_ball())
        tick_events.extend(self._check_fouls())

        self.events.extend(tick_events)
        self.tick += 1
        return tick_events

    def snapshot(self) -> MatchState:
        players = []
        for p in self.players:
            est = p.estimate
            out = p.behavior
            players.append(
                PlayerSnapshot(
                    index=p.index,
                    team=p.team,
                    role=p.role.name.lower(),
                    pose=[round(float(v), 5) for v in p.pose.as_array()],
                    velocity=[round(float(v), 5) for v in p.cmd_vel],
                    estimate=None if est is None else [round(float(v), 5) for v in est.as_array()],
                    localized=p.localized,
                    neck_yaw=round(p.neck_yaw, 5),
                    ball_memory_state=p.memory.state.name.lower(),
                    ball_memory_position=(
                        None
                        if p.memory.position is None
                        else [round(float(v), 5) for v in p.memory.position]
                    ),
                    movement=out.movement.name.lower() if out is not None else "halt",
                    kick_active=p.active_swing is not None,
                )
            )
        return MatchState(
            tick=self.tick,
            time_s=round(self.tick * TICK_DT, 4),
            phase=self.phase,
            half=self.half + 1,
            score=list(self.score),
            ball_position=[round(float(v), 5) for v in self.ball_pos],
            ball_velocity=[round(float(v), 5) for v in self.ball_vel],
            players=players,
            restart_team=self.restart_team,
        )

    def run(self) -> MatchResult:
        total_ticks = int(self.rules.halves * self.rules.half_duration_s / TICK_DT)
        while self.phase != MatchPhase.END and self.tick <= total_ticks:
            self.step()
        if self.phase != MatchPhase.END:
            self.step()  # emit the end event
        return MatchResult(
            score=(self.score[0], self.score[1]),
            differential=self.score[0] - self.score[1],
            seed=self.seed,
            strategy_a=self.profiles[0].name,
            strategy_b=self.profiles[1].name,
            ticks=self.tick,
            events=self.events,
        )


def run_match(
    profile_a: StrategyProfile,
    profile_b: StrategyProfile,
    rules: RuleConfig | None = None,
    seed: int = 0,
    **kw,
) -> MatchResult:
    return MatchEngine(profile_a, profile_b, rules=rules, seed=seed, **kw).run()


@dataclass
class EvalSummary:
    results: list[MatchResult]
    mean_differential: float
    histogram: dict[tuple[int, int], int]  # (score_a, score_b) -> matches

    def table(self) -> str:
        lines = [RESULT_HEADER]
        lines.extend(r.to_row() for r in self.results)
        return "\n".join(lines) + "\n"

    def wins(self) -> tuple[int, int, int]:
        """(team-a wins, draws, team-b wins)."""
        a = sum(1 for r in self.results if r.differential > 0)
        d = sum(1 for r in self.results if r.differential == 0)
        return a, d, len(self.results) - a - d


def evaluate_strategies(
    profile_a: StrategyProfile,
    profile_b: StrategyProfile,
    n_matches: int,
    seed0: int = 0,
    rules: RuleConfig | None = None,
    **kw,
) -> EvalSummary:
    """Seeded batch: one match per seed, outcome histogram plus the
    mean goal differential of profile_a over profile_b."""
    results = [
        run_match(profile_a, profile_b, rules=rules, seed=seed0 + k, **kw)
        for k in range(n_matches)
    ]
    mean_diff = float(np.mean([r.differential for r in results])) if results else 0.0
    hist = Counter((r.score[0], r.score[1]) for r in results)
    return EvalSummary(
        results=results,
        mean_differential=mean_diff,
        histogram=dict(sorted(hist.items())),
    )
