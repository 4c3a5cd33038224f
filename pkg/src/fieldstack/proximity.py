"""Near-field obstacle detection from a coarse depth grid.

A low-resolution depth image is converted from matcher cost, rows are
assigned vertical angles from the camera pitch, floor pixels are
removed by a per-row distance ceiling, and the surviving pixels are
clustered into boxes. The two nearest boxes are published, padded with
infinite-depth dummies so consumers always see a fixed-size list.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage

from .field import FieldMap, Pose2D, body_to_world


@dataclass
class ProximityConfig:
    rows: int = 48
    cols: int = 64
    fov_h: float = math.radians(90.0)
    fov_v: float = math.radians(60.0)
    camera_height: float = 1.25  # m
    safe_height: float = 0.2  # m, anything entirely below this is "floor"
    distance_threshold: float = 2.5  # m, near-field cutoff
    cost_min: float = 0.0
    cost_max: float = 255.0
    depth_min: float = 0.3  # m at cost_max
    depth_max: float = 3.0  # m at cost_min
    min_pixels: int = 4  # components smaller than this are noise
    merge_gap_px: int = 2  # boxes separated by up to this many pixels merge
    wall_margin: float = 0.5  # m outside the field counts as wall
    publish_count: int = 2

    def row_angles(self, pitch: float) -> np.ndarray:
        """Downward-positive vertical angle of each grid row."""
        return np.linspace(-self.fov_v / 2.0, self.fov_v / 2.0, self.rows) + pitch

    def col_angles(self) -> np.ndarray:
        """Leftward-positive horizontal angle of each grid column."""
        return np.linspace(self.fov_h / 2.0, -self.fov_h / 2.0, self.cols)


@dataclass
class DepthGrid:
    """Depth in meters per cell; non-finite cells mean no stereo match."""

    values: np.ndarray  # (rows, cols)
    pitch: float = math.radians(20.0)


@dataclass
class ObstacleBox:
    """One published near-field obstacle, body-frame."""

    distance: float  # m to the nearest surface; +inf for a dummy slot
    bearing: float  # rad, body frame
    position: np.ndarray  # (2,) body frame of the front surface center
    row_span: tuple[int, int] = (0, 0)
    col_span: tuple[int, int] = (0, 0)
    pixel_count: int = 0

    @property
    def valid(self) -> bool:
        return math.isfinite(self.distance)

    @staticmethod
    def dummy() -> "ObstacleBox":
        return ObstacleBox(distance=math.inf, bearing=0.0, position=np.array([math.inf, math.inf]))

    def to_dict(self) -> dict:
        return {
            "distance": self.distance if math.isfinite(self.distance) else "inf",
            "bearing": round(self.bearing, 6),
            "position": [
                round(float(self.position[0]), 4) if math.isfinite(self.position[0]) else "inf",
                round(float(self.position[1]), 4) if math.isfinite(self.position[1]) else "inf",
            ],
            "pixel_count": self.pixel_count,
        }


def near_field_estimate(cost: np.ndarray, cfg: ProximityConfig) -> np.ndarray:
    """Map matcher cost to depth with the linear near-field model.

    Higher cost means closer; cost_max maps to depth_min and cost_min
    to depth_max. Costs outside the calibrated interval are clamped.
    """
    c = np.clip(np.asarray(cost, dtype=float), cfg.cost_min, cfg.cost_max)
    slope = (cfg.depth_max - cfg.depth_min) / (cfg.cost_max - cfg.cost_min)
    return cfg.depth_max - slope * (c - cfg.cost_min)


def floor_ceiling(cfg: ProximityConfig, pitch: float) -> np.ndarray:
    """Per-row depth beyond which a return is floor, not obstacle."""
    theta = cfg.row_angles(pitch)
    ceil = np.full(cfg.rows, math.inf)
    below = theta > 1e-6  # rows that look downward can see the floor
    ceil[below] = (cfg.camera_height - cfg.safe_height) / np.sin(theta[below])
    return ceil


def fov_floor_filter(grid: DepthGrid, cfg: ProximityConfig) -> np.ndarray:
    """Boolean mask of depth cells that are near-field obstacle returns."""
    d = grid.values
    if d.shape != (cfg.rows, cfg.cols):
        raise ValueError(f"depth grid shape {d.shape} does not match config {(cfg.rows, cfg.cols)}")
    ceil = np.minimum(floor_ceiling(cfg, grid.pitch), cfg.distance_threshold)
    with np.errstate(invalid="ignore"):
        return np.isfinite(d) & (d > 0.0) & (d < ceil[:, None])


_EIGHT_CONN = np.ones((3, 3), dtype=int)


def connected_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """8-connected component labeling; labels start at 1."""
    labels, count = ndimage.label(mask, structure=_EIGHT_CONN)
    return labels, int(count)


def _merge_boxes(boxes: list[dict], gap: int) -> list[dict]:
    """Merge pixel boxes that overlap or nearly touch, until stable."""
    merged = True
    boxes = [dict(b) for b in boxes]
    while merged:
        merged = False
        out: list[dict] = []
        for b in boxes:
            hit = None
            for o in out:
                if (
                    b["r0"] <= o["r1"] + gap
                    and o["r0"] <= b["r1"] + gap
                    and b["c0"] <= o["c1"] + gap
                    and o["c0"] <= b["c1"] + gap
                ):
                    hit = o
                    break
            if hit is None:
                out.append(b)
            else:
                hit["r0"] = min(hit["r0"], b["r0"])
                hit["r1"] = max(hit["r1"], b["r1"])
                hit["c0"] = min(hit["c0"], b["c0"])
                hit["c1"] = max(hit["c1"], b["c1"])
                hit["pixels"] += b["pixels"]
                hit["distance"] = min(hit["distance"], b["distance"])
                merged = True
        boxes = out
    return boxes


def detect(
    grid: DepthGrid,
    cfg: ProximityConfig,
    pose: Pose2D | None = None,
    fmap: FieldMap | None = None,
) -> list[ObstacleBox]:
    """Full pipeline: filter, cluster, merge, wall-reject, publish top 2.

    Returns exactly cfg.publish_count boxes sorted by distance, padded
    with dummy boxes of infinite depth.
    """
    mask = fov_floor_filter(grid, cfg)
    labels, count = connected_components(mask)
    # ground-plane range per cell: project each row's ray onto the floor
    ground = grid.values * np.cos(cfg.row_angles(grid.pitch))[:, None]
    raw: list[dict] = []
    for lbl in range(1, count + 1):
        rows, cols = np.nonzero(labels == lbl)
        if rows.size < cfg.min_pixels:
            continue
        raw.append(
            {
                "r0": int(rows.min()),
                "r1": int(rows.max()),
                "c0": int(cols.min()),
                "c1": int(cols.max()),
                "pixels": int(rows.size),
                # front-surface range: a low percentile is robust to
                # pixels on the obstacle's rounded flanks
                "distance": float(np.percentile(ground[rows, cols], 10.0)),
            }
        )
    col_angle = cfg.col_angles()
    boxes: list[ObstacleBox] = []
    for b in _merge_boxes(raw, cfg.merge_gap_px):
        bearing = float(col_angle[b["c0"] : b["c1"] + 1].mean())
        position = np.array([b["distance"] * math.cos(bearing), b["distance"] * math.sin(bearing)])
        if pose is not None and fmap is not None:
            world = body_to_world(pose, position)
            if not fmap.contains(world, margin=cfg.wall_margin):
                continue  # that is the wall or something beyond it
        boxes.append(
            ObstacleBox(
                distance=b["distance"],
                bearing=bearing,
                position=position,
                row_span=(b["r0"], b["r1"]),
                col_span=(b["c0"], b["c1"]),
                pixel_count=b["pixels"],
            )
        )
    boxes.sort(key=lambda b: b.distance)
    boxes = boxes[: cfg.publish_count]
    while len(boxes) < cfg.publish_count:
        boxes.append(ObstacleBox.dummy())
    return boxes


@dataclass
class Cylinder:
    """Upright cylinder obstacle for the synthetic depth renderer."""

    center: np.ndarray  # (2,) body frame (x forward, y left), m
    radius: float = 0.2  # m
    height: float = 1.0  # m


def render_depth(
    cylinders: list[Cylinder],
    cfg: ProximityConfig,
    pitch: float,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
    max_depth: float | None = None,
) -> DepthGrid:
    """Ray-cast a depth grid of upright cylinders above a flat floor.

    Rays originate at the camera (height cfg.camera_height) and return
    euclidean distance to the first hit; cells with no return within
    max_depth are non-finite.
    """
    far = max_depth if max_depth is not None else cfg.depth_max
    theta = cfg.row_angles(pitch)[:, None]  # (rows,1) downward angle
    phi = cfg.col_angles()[None, :]  # (1,cols) leftward angle
    # unit ray directions in the body-level frame
    dx = np.cos(theta) * np.cos(phi)
    dy = np.cos(theta) * np.sin(phi)
    dz = -np.sin(theta) + 0.0 * phi
    depth = np.full((cfg.rows, cfg.cols), np.inf)

    # floor plane z=0
    desc = dz < -1e-9
    t_floor = np.where(desc, cfg.camera_height / np.maximum(-dz, 1e-9), np.inf)
    depth = np.minimum(depth, t_floor)

    for cyl in cylinders:
        a = dx * dx + dy * dy
        b = 2.0 * (dx * (-cyl.center[0]) + dy * (-cyl.center[1]))
        c = float(cyl.center @ cyl.center) - cyl.radius**2
        disc = b * b - 4.0 * a * c
        hit = disc > 0.0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t = (-b - sq) / np.maximum(2.0 * a, 1e-12)
        z_hit = cfg.camera_height + t * dz
        ok = hit & (t > 0.0) & (z_hit >= 0.0) & (z_hit <= cyl.height)
        depth = np.where(ok & (t < depth), t, depth)

    depth[depth > far] = np.inf
    if noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noise requires an rng")
        finite = np.isfinite(depth)
        depth = depth + np.where(finite, rng.normal(0.0, noise_sigma, size=depth.shape), 0.0)
        depth[finite] = np.maximum(depth[finite], 0.05)
    return DepthGrid(values=depth, pitch=pitch)
