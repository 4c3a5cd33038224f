"""Turn-aware visibility-graph planning over octagonal keep-outs.

Obstacles become regular octagons circumscribing their keep-out discs.
Planning starts from the obstacles that obstruct the straight
start-goal segment and grows that active region until the plan clears
every obstacle, so the graph stays small in open play. Edge costs add
path length and a weighted incremental heading change, which favors
routes a walking robot can follow without pirouetting.
"""
from __future__ import annotations

import heapq
import math

import numpy as np

from ..field import FieldMap, Pose2D, wrap_angle
from .types import NOMINAL_WALK_SPEED, Obstacle, PlanResult, ReferenceTrajectory

DEFAULT_TURN_WEIGHT = 0.5  # m per rad of heading change
FIELD_PLAN_MARGIN = 0.5  # m outside the boundary still usable for planning

_EPS = 1e-12


def point_in_convex(p: np.ndarray, poly: np.ndarray, strict: bool = True) -> bool:
    """Point-in-polygon for a CCW convex polygon."""
    nxt = np.concatenate([poly[1:], poly[:1]])
    cross = (nxt[:, 0] - poly[:, 0]) * (p[1] - poly[:, 1]) - (nxt[:, 1] - poly[:, 1]) * (
        p[0] - poly[:, 0]
    )
    if strict:
        return bool(np.all(cross > _EPS))
    return bool(np.all(cross > -_EPS))


class PreparedPolys:
    """Half-plane form of a polygon set, batched for segment queries.

    Polygons with a shared vertex count stack into (m, k, ...) arrays so
    one query tests every polygon in a single numpy pass; a mixed set
    falls back to one batch per vertex count, preserving input order
    through `index` so callers can map verdicts back to their polygons.
    """

    def __init__(self, polys: list[np.ndarray]):
        self.count = len(polys)
        self.groups: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
        by_k: dict[int, list[int]] = {}
        for i, poly in enumerate(polys):
            by_k.setdefault(len(poly), []).append(i)
        for k, idx in sorted(by_k.items()):
            verts = np.stack([polys[i] for i in idx])  # (m, k, 2)
            edges = np.concatenate([verts[:, 1:], verts[:, :1]], axis=1) - verts
            normals = np.stack([edges[:, :, 1], -edges[:, :, 0]], axis=2)  # outward, CCW
            base = np.einsum("mkc,mkc->mk", normals, verts)
            self.groups.append((np.array(idx), verts, normals, base))

    def blocked_matrix(self, a: np.ndarray, d: np.ndarray) -> np.ndarray:
        """(s, count) verdicts for segments a[i] -> a[i] + d[i]."""
        s = len(a)
        out = np.zeros((s, self.count), dtype=bool)
        for idx, _verts, normals, base in self.groups:
            denom = np.einsum("mkc,sc->smk", normals, d)
            offset = np.einsum("mkc,sc->smk", normals, a) - base[None, :, :]
            par = np.abs(denom) < 1e-14
            miss = np.any(par & (offset > 0.0), axis=2)  # parallel fully outside
            ts = -offset / np.where(par, 1.0, denom)
            t0 = np.where(~par & (denom < 0.0), ts, -np.inf).max(axis=2)
            t1 = np.where(~par & (denom > 0.0), ts, np.inf).min(axis=2)
            t0 = np.maximum(t0, 0.0)
            t1 = np.minimum(t1, 1.0)
            span = (t1 - t0) > 1e-12
            mid = a[:, None, :] + (0.5 * (t0 + t1))[:, :, None] * d[:, None, :]
            inside = np.all(
                np.einsum("mkc,smc->smk", normals, mid) - base[None, :, :] < -_EPS,
                axis=2,
            )
            out[:, idx] = ~miss & span & inside
        return out

    def blocked_each(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Per-polygon verdicts for segment ab, in input order."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return self.blocked_matrix(a[None, :], (b - a)[None, :])[0]

    def blocked(self, a: np.ndarray, b: np.ndarray) -> bool:
        return bool(self.blocked_each(a, b).any())


def segment_blocked(a: np.ndarray, b: np.ndarray, polys: list[np.ndarray]) -> bool:
    """True if segment ab passes through any polygon's interior.

    Each convex polygon clips the segment to a parameter interval via
    its edge half-planes; the segment is blocked when that interval has
    positive length and its midpoint lies strictly inside. Grazing along
    an edge or touching a vertex leaves the clipped midpoint on the
    boundary (or the interval empty), so visibility edges may run along
    obstacle boundaries and thread exact corner touches.
    """
    if not polys:
        return False
    return PreparedPolys(polys).blocked(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def _turn_search(
    adj: list[list[tuple[int, float, float]]],
    start_idx: int,
    goal_idx: int,
    turn_weight: float,
    start_heading: float | None,
) -> tuple[list[int], float] | None:
    """Dijkstra over directed edges so turn costs chain correctly.

    adj[i] holds (j, length, heading) for each visibility edge i->j.
    The cost of traversing i->j after arriving via h_in adds
    turn_weight * |wrap(heading - h_in)|; the first edge turns from
    start_heading when one is given.
    """
    best: dict[tuple[int, int], float] = {}
    prev: dict[tuple[int, int], tuple[int, int] | None] = {}
    heap: list[tuple[float, int, int, float]] = []
    for j, length, heading in adj[start_idx]:
        cost = length
        if start_heading is not None and turn_weight > 0.0:
            cost += turn_weight * abs(wrap_angle(heading - start_heading))
        key = (start_idx, j)
        if cost < best.get(key, math.inf):
            best[key] = cost
            prev[key] = None
            heapq.heappush(heap, (cost, start_idx, j, heading))
    while heap:
        cost, i, j, h_in = heapq.heappop(heap)
        if cost > best.get((i, j), math.inf) + 1e-15:
            continue
        if j == goal_idx:
            path = [j]
            key: tuple[int, int] | None = (i, j)
            while key is not None:
                path.append(key[0])
                key = prev[key]
            path.reverse()
            return path, cost
        for k, length, heading in adj[j]:
            if k == i:
                continue  # no immediate backtracking
            nc = cost + length + turn_weight * abs(wrap_angle(heading - h_in))
            key2 = (j, k)
            if nc < best.get(key2, math.inf) - 1e-15:
                best[key2] = nc
                prev[key2] = (i, j)
                heapq.heappush(heap, (nc, j, k, heading))
    return None


def _build_and_search(
    start: np.ndarray,
    goal: np.ndarray,
    polys: list[np.ndarray],
    turn_weight: float,
    start_heading: float | None,
    fmap: FieldMap | None,
) -> tuple[list[np.ndarray], float] | None:
    """Visibility graph over the given polygons, plus the turn-aware search."""
    nodes = [start, goal]
    owners = [-1, -1]  # polygon index each graph vertex belongs to
    for pi, poly in enumerate(polys):
        for v in poly:
            if fmap is not None and not fmap.contains(v, margin=FIELD_PLAN_MARGIN):
                continue
            if any(point_in_convex(v, q) for qi, q in enumerate(polys) if qi != pi):
                continue
            nodes.append(v)
            owners.append(pi)
    pts = np.array(nodes)
    n = len(nodes)

    start_inside = {pi for pi, poly in enumerate(polys) if point_in_convex(start, poly)}
    goal_inside = {pi for pi, poly in enumerate(polys) if point_in_convex(goal, poly)}
    prep_all = PreparedPolys(polys)

    adj: list[list[tuple[int, float, float]]] = [[] for _ in range(n)]

    def add_edge(i: int, j: int) -> None:
        d = pts[j] - pts[i]
        length = float(math.hypot(d[0], d[1]))
        if length < 1e-9:
            return
        adj[i].append((j, length, math.atan2(d[1], d[0])))

    def run_batch(pairs: list[tuple[int, int]], prep: PreparedPolys) -> np.ndarray:
        if not pairs:
            return np.zeros(0, dtype=bool)
        ii = np.array([p[0] for p in pairs])
        jj = np.array([p[1] for p in pairs])
        return prep.blocked_matrix(pts[ii], pts[jj] - pts[ii]).any(axis=1)

    # ordinary edges clear every polygon; exit edges from an enclosed start
    # go straight to a vertex of the containing polygon (checked only
    # against the other polygons), entry edges to an enclosed goal mirror that
    plain: list[tuple[int, int]] = []
    if not start_inside and not goal_inside:
        plain.append((0, 1))
    if not start_inside:
        plain.extend((0, j) for j in range(2, n))
    if not goal_inside:
        plain.extend((j, 1) for j in range(2, n))
    sym_base = len(plain)
    plain.extend((i, j) for i in range(2, n) for j in range(i + 1, n))
    verdict = run_batch(plain, prep_all)
    for k, (i, j) in enumerate(plain):
        if verdict[k]:
            continue
        add_edge(i, j)
        if k >= sym_base:
            add_edge(j, i)
    if start_inside:
        exits = [j for j in range(2, n) if owners[j] in start_inside]
        prep = PreparedPolys([q for qi, q in enumerate(polys) if qi not in start_inside])
        for j, bad in zip(exits, run_batch([(0, j) for j in exits], prep)):
            if not bad:
                add_edge(0, j)
    if goal_inside:
        entries = [i for i in range(2, n) if owners[i] in goal_inside]
        prep = PreparedPolys([q for qi, q in enumerate(polys) if qi not in goal_inside])
        for i, bad in zip(entries, run_batch([(i, 1) for i in entries], prep)):
            if not bad:
                add_edge(i, 1)

    found = _turn_search(adj, 0, 1, turn_weight, start_heading)
    if found is None:
        return None
    path_idx, cost = found
    return [pts[i] for i in path_idx], cost


def plan_davg(
    start: Pose2D,
    goal: np.ndarray,
    obstacles: list[Obstacle],
    turn_weight: float = DEFAULT_TURN_WEIGHT,
    speed: float = NOMINAL_WALK_SPEED,
    fmap: FieldMap | None = None,
    margin: float = 0.0,
    use_start_heading: bool = True,
    prune: bool = True,
) -> PlanResult:
    """Plan a timestamped path from start to goal around the keep-outs.

    With prune=True the visibility graph is first built only from the
    obstacles obstructing the direct start-goal segment; obstacles the
    resulting plan still hits are added and planning repeats, which
    converges because the active set only grows. prune=False plans
    against everything at once (the reference for equivalence tests).
    """
    goal = np.asarray(goal, dtype=float).reshape(2)
    s = start.xy
    if float(np.hypot(*(goal - s))) < 1e-9:
        traj = ReferenceTrajectory(s[None, :], np.zeros(1), np.array([start.theta]))
        return PlanResult(ok=True, trajectory=traj, cost=0.0, length=0.0, iterations=0)
    polys_all = [ob.polygon(margin=margin) for ob in obstacles]
    prep_polys_all = PreparedPolys(polys_all)
    heading = start.theta if use_start_heading else None

    if prune:
        active = list(np.flatnonzero(prep_polys_all.blocked_each(s, goal)))
    else:
        active = list(range(len(obstacles)))

    iterations = 0
    while True:
        iterations += 1
        found = _build_and_search(
            s, goal, [polys_all[i] for i in active], turn_weight, heading, fmap
        )
        if found is None:
            if prune and len(active) < len(obstacles):
                # a partial graph can wall itself in; retry with everything
                active = list(range(len(obstacles)))
                prune = False
                continue
            return PlanResult(
                ok=False, trajectory=None, active_obstacles=len(active),
                iterations=iterations, reason="no feasible path",
            )
        path, cost = found
        hits = np.zeros(len(polys_all), dtype=bool)
        for k in range(len(path) - 1):
            hits |= prep_polys_all.blocked_each(path[k], path[k + 1])
        newly = [i for i in np.flatnonzero(hits) if i not in active]
        if not newly:
            break
        active = sorted(active + newly)

    pts = np.array(path)
    traj = ReferenceTrajectory.from_waypoints(pts, speed=speed)
    seg = np.diff(pts, axis=0)
    length = float(np.hypot(seg[:, 0], seg[:, 1]).sum())
    return PlanResult(
        ok=True,
        trajectory=traj,
        cost=cost,
        length=length,
        turn_total=(cost - length) / turn_weight if turn_weight > 0.0 else 0.0,
        active_obstacles=len(active),
        iterations=iterations,
    )
