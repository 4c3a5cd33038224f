"""Body-frame trajectory tracker solved as a Gauss-Newton SQP.

The robot follows a timestamped reference with body-frame velocity
commands [vx vy omega]. Obstacle keep-outs enter the objective through
analytic slacks d = max(0, R^2 - dist^2) penalized quadratically, so
the problem stays smooth and unconstrained apart from box bounds on
the inputs, which are handled by projection inside the line search.
A single-linearization variant serves the 10 Hz in-match loop.
"""
from __future__ import annotations

import math

import numpy as np

from ..field import wrap_angle, wrap_angle_array
from .types import MpcConfig, MpcSolution, Obstacle, ReferenceTrajectory, step_dynamics

_LEVENBERG = 1e-9  # floor on the normal-equation diagonal
_LINE_SEARCH_STEPS = 7  # alpha halvings tried before giving up


def rollout(state: np.ndarray, inputs: np.ndarray, dt: float) -> np.ndarray:
    """Integrate the body-frame dynamics; returns (N+1, 3) states."""
    states = np.empty((len(inputs) + 1, 3))
    states[0] = state
    for i, u in enumerate(inputs):
        states[i + 1] = step_dynamics(states[i], u, dt)
    return states


def _predict_centers(obstacles: list[Obstacle], cfg: MpcConfig) -> np.ndarray:
    """(N, n_obs, 2) obstacle centers at each future stage time."""
    n = cfg.horizon
    if not obstacles:
        return np.zeros((n, 0, 2))
    out = np.empty((n, len(obstacles), 2))
    for i in range(n):
        t = (i + 1) * cfg.dt
        for k, ob in enumerate(obstacles):
            out[i, k] = ob.at(t)
    return out


def _slacks(states: np.ndarray, centers: np.ndarray, radii_sq: np.ndarray) -> np.ndarray:
    """(N, n_obs) keep-out violations in m^2 for stages 1..N."""
    if centers.shape[1] == 0:
        return np.zeros((len(states) - 1, 0))
    diff = states[1:, None, :2] - centers  # (N, K, 2)
    dist_sq = np.einsum("ikj,ikj->ik", diff, diff)
    return np.maximum(0.0, radii_sq[None, :] - dist_sq)


def _objective(
    states: np.ndarray,
    inputs: np.ndarray,
    ref: np.ndarray,
    centers: np.ndarray,
    radii_sq: np.ndarray,
    cfg: MpcConfig,
) -> tuple[float, np.ndarray]:
    pos_err = states[1:, :2] - ref[:, :2]
    head_err = np.array([wrap_angle(states[i + 1, 2] - ref[i, 2]) for i in range(len(ref))])
    slacks = _slacks(states, centers, radii_sq)
    r = cfg.r_diag()
    obj = (
        cfg.q_pos * float(np.sum(pos_err**2))
        + cfg.q_heading * float(np.sum(head_err**2))
        + float(np.sum(inputs**2 * r[None, :]))
        + cfg.rho * float(np.sum(slacks**2))
    )
    return obj, slacks


def reference_inputs(
    state: np.ndarray, reference: ReferenceTrajectory, cfg: MpcConfig, t0: float = 0.0
) -> np.ndarray:
    """Feed-forward body-frame inputs that track the reference exactly
    when starting on it; used to warm-start the solver."""
    n = cfg.horizon
    u_max = cfg.u_max()
    samp = reference.sample_many(t0 + cfg.dt * np.arange(n + 1))
    a, b = samp[:-1], samp[1:]
    th = a[:, 2].copy()
    th[0] = state[2]
    c, s = np.cos(th), np.sin(th)
    dx, dy = (b[:, 0] - a[:, 0]) / cfg.dt, (b[:, 1] - a[:, 1]) / cfg.dt
    inputs = np.stack(
        [c * dx + s * dy, -s * dx + c * dy, wrap_angle_array(b[:, 2] - a[:, 2]) / cfg.dt],
        axis=1,
    )
    return np.clip(inputs, -u_max, u_max)


def _linearize(
    states: np.ndarray,
    inputs: np.ndarray,
    ref: np.ndarray,
    centers: np.ndarray,
    radii_sq: np.ndarray,
    cfg: MpcConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """One linearization around the current rollout: the Gauss-Newton
    normal matrix J'J (Levenberg-floored) and J'r, each over the
    flattened (3N,) input vector. The objective gradient is 2 J'r."""
    n = cfg.horizon
    nu = 3 * n
    sens = np.zeros((n + 1, 3, nu))  # sens[i] = d x_i / d u
    for i in range(n):
        th = states[i, 2]
        vx, vy = inputs[i, 0], inputs[i, 1]
        c, s = math.cos(th), math.sin(th)
        a_th = np.array([cfg.dt * (-s * vx - c * vy), cfg.dt * (c * vx - s * vy)])
        sens[i + 1] = sens[i].copy()
        sens[i + 1][0] += a_th[0] * sens[i][2]
        sens[i + 1][1] += a_th[1] * sens[i][2]
        b = cfg.dt * np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        sens[i + 1][:, 3 * i : 3 * i + 3] += b

    sq_pos, sq_head, sq_rho = math.sqrt(cfg.q_pos), math.sqrt(cfg.q_heading), math.sqrt(cfg.rho)
    slacks = _slacks(states, centers, radii_sq)
    scale = np.array([sq_pos, sq_pos, sq_head])
    jac_track = (sens[1:] * scale[None, :, None]).reshape(3 * n, nu)
    res_track = np.empty((n, 3))
    res_track[:, :2] = sq_pos * (states[1:, :2] - ref[:, :2])
    res_track[:, 2] = sq_head * wrap_angle_array(states[1:, 2] - ref[:, 2])
    sq_r = np.sqrt(cfg.r_diag())
    jac_input = np.zeros((3 * n, nu))
    jac_input[np.arange(3 * n), np.arange(3 * n)] = np.tile(sq_r, n)
    res_input = (inputs * sq_r[None, :]).ravel()

    rows: list[np.ndarray] = []
    res: list[float] = []
    if slacks.size and (slacks > 0.0).any():
        for i, k in zip(*np.nonzero(slacks > 0.0)):
            s_i = sens[i + 1]
            grad_p = -2.0 * (states[i + 1, :2] - centers[i, k])  # d slack / d position
            rows.append(sq_rho * (grad_p[0] * s_i[0] + grad_p[1] * s_i[1]))
            res.append(sq_rho * slacks[i, k])

    jac = np.concatenate([jac_track, np.array(rows).reshape(-1, nu), jac_input])
    residual = np.concatenate([res_track.ravel(), np.array(res), res_input])
    hess = jac.T @ jac
    hess[np.diag_indices_from(hess)] += _LEVENBERG
    return hess, jac.T @ residual


def _reduced_step(hess: np.ndarray, jtr: np.ndarray, clamped: np.ndarray) -> np.ndarray:
    """Gauss-Newton step with the clamped coordinates frozen at zero."""
    step = np.zeros_like(jtr)
    free = ~clamped
    if free.any():
        idx = np.where(free)[0]
        step[idx] = np.linalg.solve(hess[np.ix_(idx, idx)], -jtr[idx])
    return step


def _prepare(
    state: np.ndarray,
    reference: ReferenceTrajectory,
    obstacles: list[Obstacle],
    cfg: MpcConfig,
    t0: float,
    margin: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ref = reference.sample_many(t0 + cfg.dt * np.arange(1, cfg.horizon + 1))
    centers = _predict_centers(obstacles, cfg)
    radii_sq = np.array([(ob.radius + margin) ** 2 for ob in obstacles])
    return ref, centers, radii_sq


def _solve_from(
    state: np.ndarray,
    inputs: np.ndarray,
    ref: np.ndarray,
    centers: np.ndarray,
    radii_sq: np.ndarray,
    cfg: MpcConfig,
) -> MpcSolution:
    """Iterated Gauss-Newton from one starting input sequence, with a
    projecting backtracking line search (monotone objective trace)."""
    u_max = cfg.u_max()
    states = rollout(state, inputs, cfg.dt)
    obj, slacks = _objective(states, inputs, ref, centers, radii_sq, cfg)
    trace = [obj]

    def backtrack(direction: np.ndarray, halvings: int):
        alpha = 1.0
        for _ in range(halvings):
            trial = np.clip(inputs + alpha * direction, -u_max, u_max)
            t_states = rollout(state, trial, cfg.dt)
            t_obj, t_slacks = _objective(t_states, trial, ref, centers, radii_sq, cfg)
            if t_obj < obj - 1e-15:
                return trial, t_states, t_obj, t_slacks
            alpha *= 0.5
        return None

    u_flat_max = np.tile(u_max, cfg.horizon)
    converged = False
    it = 0
    for it in range(1, cfg.iterations + 1):
        hess, jtr = _linearize(states, inputs, ref, centers, radii_sq, cfg)
        grad = 2.0 * jtr
        # active set: coordinates pinned at a bound with the gradient
        # pushing outward stay frozen, so the reduced Newton step aims
        # where movement is actually possible
        flat = inputs.ravel()
        clamped = ((flat >= u_flat_max - 1e-12) & (grad < 0.0)) | (
            (flat <= -u_flat_max + 1e-12) & (grad > 0.0)
        )
        if clamped.all():
            converged = True
            break
        step = _reduced_step(hess, jtr, clamped)
        found = backtrack(step.reshape(cfg.horizon, 3), _LINE_SEARCH_STEPS)
        if found is None:
            # insurance when the reduced model is poor: plain projected
            # gradient with a deep backtrack
            scale = float(np.abs(grad).max())
            if scale > 0.0:
                descent = (-grad / scale).reshape(cfg.horizon, 3)
                found = backtrack(descent, 3 * _LINE_SEARCH_STEPS)
        if found is None:
            converged = True  # stationary under projection
            break
        gain = obj - found[2]
        inputs, states, obj, slacks = found
        trace.append(obj)
        if gain < cfg.tolerance * (1.0 + abs(obj)):
            converged = True
            break

    return MpcSolution(
        states=states,
        inputs=inputs,
        slacks=slacks,
        objective=obj,
        iterations=it,
        converged=converged,
        objective_trace=trace,
    )


def _turn_then_track_inputs(
    state: np.ndarray, reference: ReferenceTrajectory, cfg: MpcConfig, t0: float
) -> np.ndarray:
    """Warm start that first spins toward the reference heading in place;
    seeds the other turn-direction basin when badly misaligned."""
    inputs = reference_inputs(state, reference, cfg, t0)
    d_theta = wrap_angle(reference.sample(t0 + cfg.dt)[2] - state[2])
    n_turn = min(cfg.horizon, int(math.ceil(abs(d_theta) / (cfg.omega_max * cfg.dt))))
    if n_turn > 0:
        inputs[:n_turn] = (0.0, 0.0, math.copysign(cfg.omega_max, d_theta))
    return inputs


def solve_cfmpc(
    state: np.ndarray,
    reference: ReferenceTrajectory,
    obstacles: list[Obstacle] | None = None,
    cfg: MpcConfig | None = None,
    t0: float = 0.0,
    u_init: np.ndarray | None = None,
    margin: float = 0.0,
) -> MpcSolution:
    """Full solver. Without an explicit warm start it multi-starts from
    feed-forward, all-zero, and turn-then-track input sequences and keeps
    the best local solution, since the turn direction makes the problem
    multimodal when the robot faces away from the reference."""
    cfg = cfg or MpcConfig()
    obstacles = obstacles or []
    state = np.asarray(state, dtype=float).reshape(3)
    ref, centers, radii_sq = _prepare(state, reference, obstacles, cfg, t0, margin)
    u_max = cfg.u_max()

    if u_init is not None:
        starts = [np.clip(np.asarray(u_init, dtype=float).reshape(cfg.horizon, 3), -u_max, u_max)]
    else:
        feed = reference_inputs(state, reference, cfg, t0)
        starts = [
            feed,
            np.zeros((cfg.horizon, 3)),
            _turn_then_track_inputs(state, reference, cfg, t0),
        ]
        if obstacles:
            # an obstacle dead ahead makes y=0 a saddle (the slack gradient
            # has no lateral component there); nudged starts break the tie
            for side in (1.0, -1.0):
                nudged = feed.copy()
                nudged[: cfg.horizon // 2, 1] = np.clip(
                    nudged[: cfg.horizon // 2, 1] + side * 0.3, -cfg.vy_max, cfg.vy_max
                )
                starts.append(nudged)
    best: MpcSolution | None = None
    for inputs in starts:
        sol = _solve_from(state, inputs, ref, centers, radii_sq, cfg)
        if best is None or sol.objective < best.objective:
            best = sol
    return best


def solve_cfmpc_qp(
    state: np.ndarray,
    reference: ReferenceTrajectory,
    obstacles: list[Obstacle] | None = None,
    cfg: MpcConfig | None = None,
    t0: float = 0.0,
    margin: float = 0.0,
) -> MpcSolution:
    """Single-linearization variant: one Gauss-Newton solve around the
    feed-forward rollout, then projection onto the input bounds. On
    linear sub-problems (straight reference, aligned heading) this
    matches the iterated solver exactly; elsewhere it trades a little
    tracking accuracy for a fixed, small compute cost."""
    cfg = cfg or MpcConfig()
    obstacles = obstacles or []
    state = np.asarray(state, dtype=float).reshape(3)
    ref, centers, radii_sq = _prepare(state, reference, obstacles, cfg, t0, margin)
    u_max = cfg.u_max()

    inputs = reference_inputs(state, reference, cfg, t0)
    states = rollout(state, inputs, cfg.dt)
    obj0, _ = _objective(states, inputs, ref, centers, radii_sq, cfg)
    hess, jtr = _linearize(states, inputs, ref, centers, radii_sq, cfg)
    step = np.linalg.solve(hess, -jtr)
    trial = np.clip(inputs + step.reshape(cfg.horizon, 3), -u_max, u_max)
    t_states = rollout(state, trial, cfg.dt)
    t_obj, t_slacks = _objective(t_states, trial, ref, centers, radii_sq, cfg)
    if t_obj <= obj0:
        inputs, states, obj = trial, t_states, t_obj
        slacks = t_slacks
        trace = [obj0, t_obj]
    else:  # keep the feed-forward rollout if the full step overshoots
        obj = obj0
        slacks = _slacks(states, centers, radii_sq)
        trace = [obj0]
    return MpcSolution(
        states=states,
        inputs=inputs,
        slacks=slacks,
        objective=obj,
        iterations=1,
        converged=True,
        objective_trace=trace,
    )
