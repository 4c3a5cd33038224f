"""Pose estimation from classed landmark pairs.

Every pair of landmark detections, matched against map pairs of the
same classes and a similar separation, yields one closed-form pose
hypothesis. A local average around the dead-reckoned estimate tracks
the pose frame to frame; a trimmed k-means over a multi-frame window
runs at a reduced rate and snaps the estimate back when it has
diverged. The field's half-turn symmetry makes hypothesis sets
two-lobed, which is why cluster selection is anchored to the previous
estimate.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import FieldMap, Pose2D, angle_mean, wrap_angle, wrap_angle_array
from .perception import Detection, LANDMARK_CLASSES


@dataclass
class ClapConfig:
    pair_tolerance: float = 0.35  # m, map-pair separation match window
    min_pair_separation: float = 0.3  # m, closer detection pairs are degenerate
    local_radius: float = 0.75  # m, gating radius around the prediction
    local_heading_gate: float = math.pi / 3  # rad
    support_radius: float = 0.12  # m, hypothesis agreement radius
    support_heading: float = 0.25  # rad, hypothesis agreement heading band
    residual_weight_floor: float = 1e-8  # m^2, regularizer for 1/residual^2 weights
    global_window: int = 15  # frames pooled for global clustering
    global_period: int = 30  # run global clustering every this many updates
    k_clusters: int = 4
    trim_fraction: float = 0.2
    trim_iterations: int = 3
    lloyd_iterations: int = 8
    reset_threshold: float = 1.5  # m, divergence that triggers a snap
    blend_weight: float = 0.8  # pull toward the local cluster per update
    field_margin: float = 1.0  # m, estimates are clamped inside field+margin

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @staticmethod
    def from_dict(d: dict) -> "ClapConfig":
        out = ClapConfig()
        for k, v in d.items():
            setattr(out, k, type(getattr(out, k))(v))
        return out


@dataclass
class OdometryDelta:
    """Body-frame displacement since the previous update."""

    dx: float = 0.0
    dy: float = 0.0
    dtheta: float = 0.0

    def compose(self, pose: Pose2D) -> Pose2D:
        c, s = math.cos(pose.theta), math.sin(pose.theta)
        return Pose2D(
            pose.x + c * self.dx - s * self.dy,
            pose.y + s * self.dx + c * self.dy,
            pose.theta + self.dtheta,
        )


@dataclass
class PoseHypothesis:
    pose: Pose2D
    residual: float  # m, |map separation - measured separation|
    det_pair: tuple[int, int]


class HypothesisSet:
    """Column-array container for one frame's pose hypotheses."""

    def __init__(self, xyt: np.ndarray, residuals: np.ndarray, det_pairs: np.ndarray):
        self.xyt = xyt.reshape(-1, 3)
        self.residuals = residuals
        self.det_pairs = det_pairs.reshape(-1, 2)

    def __len__(self) -> int:
        return self.xyt.shape[0]

    def __getitem__(self, i: int) -> PoseHypothesis:
        return PoseHypothesis(
            pose=Pose2D(*self.xyt[i]),
            residual=float(self.residuals[i]),
            det_pair=(int(self.det_pairs[i, 0]), int(self.det_pairs[i, 1])),
        )

    @staticmethod
    def empty() -> "HypothesisSet":
        return HypothesisSet(np.zeros((0, 3)), np.zeros(0), np.zeros((0, 2), dtype=int))


class MapPairTable:
    """Landmark pairs bucketed by ordered class pair, sorted by separation."""

    def __init__(self, fmap: FieldMap):
        classes, pos = fmap.landmark_array()
        self.buckets: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        n = len(classes)
        idx = np.arange(n)
        for ca in range(4):
            for cb in range(4):
                ii = idx[classes == ca]
                jj = idx[classes == cb]
                if ii.size == 0 or jj.size == 0:
                    continue
                gi, gj = np.meshgrid(ii, jj, indexing="ij")
                gi, gj = gi.ravel(), gj.ravel()
                keep = gi != gj
                gi, gj = gi[keep], gj[keep]
                p1, p2 = pos[gi], pos[gj]
                d = np.hypot(p2[:, 0] - p1[:, 0], p2[:, 1] - p1[:, 1])
                order = np.argsort(d, kind="stable")
                self.buckets[(ca, cb)] = (p1[order], p2[order], d[order])

    def candidates(self, ca: int, cb: int, separation: float, tol: float):
        """Map pairs of classes (ca, cb) within tol of the separation."""
        bucket = self.buckets.get((ca, cb))
        if bucket is None:
            return None
        p1, p2, d = bucket
        lo = np.searchsorted(d, separation - tol, side="left")
        hi = np.searchsorted(d, separation + tol, side="right")
        if hi <= lo:
            return None
        return p1[lo:hi], p2[lo:hi], d[lo:hi]


def pose_from_pair(
    p1_body: np.ndarray, p2_body: np.ndarray, p1_world: np.ndarray, p2_world: np.ndarray
) -> Pose2D:
    """Closed-form observer pose from one matched landmark pair.

    The heading aligns the body-frame displacement with the world-frame
    displacement; the position then follows from either landmark.
    Raises on a (near-)coincident pair, which fixes no unique pose.
    """
    p1b = np.asarray(p1_body, dtype=float)
    p2b = np.asarray(p2_body, dtype=float)
    p1w = np.asarray(p1_world, dtype=float)
    p2w = np.asarray(p2_world, dtype=float)
    db = p2b - p1b
    dw = p2w - p1w
    if float(db @ db) < 1e-12 or float(dw @ dw) < 1e-12:
        raise ValueError("coincident landmark pair fixes no pose")
    theta = wrap_angle(math.atan2(dw[1], dw[0]) - math.atan2(db[1], db[0]))
    c, s = math.cos(theta), math.sin(theta)
    # anchor at the pair midpoint so the result does not depend on which
    # landmark is named first when the measured separation carries noise
    mb = 0.5 * (p1b + p2b)
    mw = 0.5 * (p1w + p2w)
    x = mw[0] - (c * mb[0] - s * mb[1])
    y = mw[1] - (s * mb[0] + c * mb[1])
    return Pose2D(float(x), float(y), theta)


def generate_hypotheses(
    dets: list[Detection], table: MapPairTable, fmap: FieldMap, cfg: ClapConfig
) -> HypothesisSet:
    """All pose hypotheses from the frame's landmark detections.

    Invariant under detection reordering (up to hypothesis order), and
    silently skips degenerate pairs.
    """
    lms = [d for d in dets if d.kind in LANDMARK_CLASSES]
    n = len(lms)
    if n < 2:
        return HypothesisSet.empty()
    pos = np.array([d.position for d in lms])
    kinds = [int(d.kind) for d in lms]
    ii, jj = np.triu_indices(n, 1)
    db_all = pos[jj] - pos[ii]
    sep_all = np.hypot(db_all[:, 0], db_all[:, 1])
    ang_all = np.arctan2(db_all[:, 1], db_all[:, 0])
    mid_all = 0.5 * (pos[ii] + pos[jj])
    p1w_l, p2w_l, dmap_l, kept, counts = [], [], [], [], []
    for k in np.flatnonzero(sep_all >= cfg.min_pair_separation):
        cand = table.candidates(
            kinds[int(ii[k])], kinds[int(jj[k])], float(sep_all[k]), cfg.pair_tolerance
        )
        if cand is None:
            continue
        p1, p2, d = cand
        p1w_l.append(p1)
        p2w_l.append(p2)
        dmap_l.append(d)
        kept.append(k)
        counts.append(d.shape[0])
    if not p1w_l:
        return HypothesisSet.empty()
    kept = np.asarray(kept)
    counts = np.asarray(counts)
    p1w = np.concatenate(p1w_l)
    p2w = np.concatenate(p2w_l)
    dmap = np.concatenate(dmap_l)
    mb = np.repeat(mid_all[kept], counts, axis=0)
    dbang = np.repeat(ang_all[kept], counts)
    sep = np.repeat(sep_all[kept], counts)
    pairs = np.repeat(np.column_stack([ii[kept], jj[kept]]), counts, axis=0)

    theta = wrap_angle_array(np.arctan2(p2w[:, 1] - p1w[:, 1], p2w[:, 0] - p1w[:, 0]) - dbang)
    c, s = np.cos(theta), np.sin(theta)
    # midpoint anchor: swap-invariant under detection reordering
    mwx = 0.5 * (p1w[:, 0] + p2w[:, 0])
    mwy = 0.5 * (p1w[:, 1] + p2w[:, 1])
    x = mwx - (c * mb[:, 0] - s * mb[:, 1])
    y = mwy - (s * mb[:, 0] + c * mb[:, 1])
    inside = (np.abs(x) <= fmap.half_length + cfg.field_margin) & (
        np.abs(y) <= fmap.half_width + cfg.field_margin
    )
    xyt = np.column_stack((x, y, theta))[inside]
    return HypothesisSet(xyt, np.abs(dmap - sep)[inside], pairs[inside])


def local_cluster(hyps: HypothesisSet, previous: Pose2D, cfg: ClapConfig) -> Pose2D | None:
    """Consensus pose from the hypotheses that agree with the prediction.

    Hypotheses are first gated around the previous (dead-reckoned)
    estimate. Within the gate, each hypothesis is scored by how many
    others agree with it to within a tight radius and heading band; the
    best-supported one (ties broken toward the prediction) defines the
    clump that gets averaged. The average weights each member by the
    inverse squared separation residual of its generating pair, so
    exact pair matches dominate near-degenerate false ones.
    """
    if len(hyps) == 0:
        return None
    xyt = hyps.xyt
    d2 = (xyt[:, 0] - previous.x) ** 2 + (xyt[:, 1] - previous.y) ** 2
    dth = np.abs(wrap_angle_array(xyt[:, 2] - previous.theta))
    gate = (d2 <= cfg.local_radius**2) & (dth <= cfg.local_heading_gate)
    if not gate.any():
        return None
    sel = xyt[gate]
    resid = hyps.residuals[gate]
    dx = sel[:, 0][:, None] - sel[:, 0][None, :]
    dy = sel[:, 1][:, None] - sel[:, 1][None, :]
    dt = np.abs(wrap_angle_array(sel[:, 2][:, None] - sel[:, 2][None, :]))
    agree = (dx * dx + dy * dy <= cfg.support_radius**2) & (dt <= cfg.support_heading)
    support = agree.sum(axis=1)
    best_support = support.max()
    tied = np.nonzero(support == best_support)[0]
    winner = tied[int(np.argmin(d2[gate][tied]))]
    members = agree[winner]
    w = 1.0 / (cfg.residual_weight_floor + resid[members] ** 2)
    w /= w.sum()
    cx = float(w @ sel[members, 0])
    cy = float(w @ sel[members, 1])
    ct = float(
        math.atan2(w @ np.sin(sel[members, 2]), w @ np.cos(sel[members, 2]))
    )
    return Pose2D(cx, cy, ct)


def global_cluster(pool: np.ndarray, previous: Pose2D | None, cfg: ClapConfig) -> Pose2D | None:
    """Trimmed k-means consensus over a window of hypothesis frames.

    pool is an (n,3) array of pose hypotheses. Clustering runs on the
    positions; the returned heading is the circular mean of the chosen
    cluster. Selection is anchored to the previous estimate when one
    exists, otherwise the most populated cluster wins. Deterministic:
    seeding is farthest-point from the anchor, no randomness.
    """
    pts = pool.reshape(-1, 3)
    if pts.shape[0] == 0:
        return None
    xy = pts[:, :2]
    n = xy.shape[0]
    k = min(cfg.k_clusters, n)
    anchor = np.array([previous.x, previous.y]) if previous is not None else xy.mean(axis=0)

    # seed only from dense points so isolated junk hypotheses cannot grab
    # a centroid ahead of a genuine consensus lobe
    d2_all = ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=2)
    counts = (d2_all <= 0.25).sum(axis=1)  # neighbors within 0.5 m
    dense = counts >= max(3, int(0.05 * n))
    seed_xy = xy[dense] if int(dense.sum()) >= k else xy

    # deterministic seeding: nearest-to-anchor first, then maximin
    d_anchor = np.einsum("ij,ij->i", seed_xy - anchor, seed_xy - anchor)
    centroids = [seed_xy[int(np.argmin(d_anchor))]]
    while len(centroids) < k:
        dmin = np.min(
            [np.einsum("ij,ij->i", seed_xy - c, seed_xy - c) for c in centroids], axis=0
        )
        centroids.append(seed_xy[int(np.argmax(dmin))])
    cents = np.array(centroids)

    active = np.ones(n, dtype=bool)
    assign = np.zeros(n, dtype=int)
    for trim_round in range(cfg.trim_iterations + 1):
        for _ in range(cfg.lloyd_iterations):
            d2 = ((xy[active, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
            a = np.argmin(d2, axis=1)
            new = cents.copy()
            for ci in range(cents.shape[0]):
                members = xy[active][a == ci]
                if members.shape[0]:
                    new[ci] = members.mean(axis=0)
            if np.allclose(new, cents, atol=1e-12):
                cents = new
                break
            cents = new
        d2 = ((xy[active, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
        a = np.argmin(d2, axis=1)
        assign[active] = a
        if trim_round == cfg.trim_iterations:
            break
        # drop the fraction of active points farthest from their centroid
        dist = np.sqrt(((xy[active] - cents[assign[active]]) ** 2).sum(axis=1))
        n_active = dist.shape[0]
        n_drop = int(cfg.trim_fraction * n_active)
        if n_drop == 0 or n_active - n_drop < cents.shape[0]:
            break
        keep_thresh = np.partition(dist, n_active - n_drop - 1)[n_active - n_drop - 1]
        local_keep = dist <= keep_thresh
        ai = np.nonzero(active)[0]
        active[:] = False
        active[ai[local_keep]] = True

    sizes = np.array([(assign[active] == ci).sum() for ci in range(cents.shape[0])])
    if previous is not None:
        da = ((cents - anchor) ** 2).sum(axis=1)
        best = int(np.argmin(da))
    else:
        best = int(np.argmax(sizes))
    members = pts[active][assign[active] == best]
    if members.shape[0] == 0:
        return None
    return Pose2D(float(cents[best, 0]), float(cents[best, 1]), angle_mean(members[:, 2]))


@dataclass
class LocalizationState:
    estimate: Pose2D | None = None
    buffer: deque = dc_field(default_factory=lambda: deque(maxlen=15))
    updates: int = 0
    frames_without_local: int = 0
    last_reset_update: int = -1


def fuse(
    state: LocalizationState,
    odo: OdometryDelta,
    local_est: Pose2D | None,
    global_est: Pose2D | None,
    fmap: FieldMap,
    cfg: ClapConfig,
) -> Pose2D | None:
    """Combine dead reckoning, the local cluster, and the global check.

    Dead-reckons the previous estimate, pulls it toward the local
    cluster, and snaps to the global consensus when the two disagree by
    more than the reset threshold. The result is clamped to the field
    plus a margin. Returns None only while still uninitialized.
    """
    if state.estimate is None:
        est = local_est if local_est is not None else global_est
        if est is None:
            return None
    else:
        est = odo.compose(state.estimate)
        if local_est is not None:
            w = cfg.blend_weight
            est = Pose2D(
                est.x + w * (local_est.x - est.x),
                est.y + w * (local_est.y - est.y),
                est.theta + w * wrap_angle(local_est.theta - est.theta),
            )
        if global_est is not None and est.distance_to(global_est) > cfg.reset_threshold:
            est = global_est
            state.last_reset_update = state.updates
    x = min(max(est.x, -fmap.half_length - cfg.field_margin), fmap.half_length + cfg.field_margin)
    y = min(max(est.y, -fmap.half_width - cfg.field_margin), fmap.half_width + cfg.field_margin)
    return Pose2D(x, y, est.theta)


class ClapLocalizer:
    """Per-robot localization pipeline; feed it frames, read the estimate."""

    def __init__(self, fmap: FieldMap, cfg: ClapConfig | None = None, initial: Pose2D | None = None):
        self.fmap = fmap
        self.cfg = cfg or ClapConfig()
        self.table = MapPairTable(fmap)
        self.state = LocalizationState(estimate=initial)
        self.state.buffer = deque(maxlen=self.cfg.global_window)
        self.last_local: Pose2D | None = None
        self.last_global: Pose2D | None = None
        self.last_hypothesis_count = 0

    @property
    def estimate(self) -> Pose2D | None:
        return self.state.estimate

    @property
    def delocalized(self) -> bool:
        return self.state.estimate is None or self.state.frames_without_local > 2 * self.cfg.global_window

    def force_estimate(self, pose: Pose2D | None):
        self.state.estimate = pose

    def update(self, dets: list[Detection], odo: OdometryDelta) -> Pose2D | None:
        st, cfg = self.state, self.cfg
        st.updates += 1
        hyps = generate_hypotheses(dets, self.table, self.fmap, cfg)
        self.last_hypothesis_count = len(hyps)
        if len(hyps):
            st.buffer.append(hyps.xyt)

        predicted = odo.compose(st.estimate) if st.estimate is not None else None
        local_est = None
        if len(hyps):
            if predicted is not None:
                local_est = local_cluster(hyps, predicted, cfg)
            elif len(hyps) >= 3:
                # uninitialized: bootstrap from the window consensus
                pool = np.concatenate(list(st.buffer))
                local_est = global_cluster(pool, None, cfg)
        st.frames_without_local = 0 if local_est is not None else st.frames_without_local + 1

        global_est = None
        if st.updates % cfg.global_period == 0 and st.buffer:
            pool = np.concatenate(list(st.buffer))
            global_est = global_cluster(pool, predicted, cfg)
            self.last_global = global_est

        st.estimate = fuse(st, odo, local_est, global_est, self.fmap, cfg)
        self.last_local = local_est
        return st.estimate
