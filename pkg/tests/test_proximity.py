"""Depth-grid obstacle detection: filtering, clustering, publication."""
import math

import numpy as np
import pytest

from fieldstack.field import Pose2D, build_default_field
from fieldstack.proximity import (
    Cylinder,
    DepthGrid,
    ObstacleBox,
    ProximityConfig,
    connected_components,
    detect,
    floor_ceiling,
    fov_floor_filter,
    near_field_estimate,
    render_depth,
)


def _flood_fill_components(mask: np.ndarray) -> list[frozenset]:
    """Independent 8-connected labeling by explicit flood fill."""
    rows, cols = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for r in range(rows):
        for c in range(cols):
            if not mask[r, c] or seen[r, c]:
                continue
            stack, cells = [(r, c)], set()
            seen[r, c] = True
            while stack:
                i, j = stack.pop()
                cells.add((i, j))
                for di in (-1, 0, 1):
                    for dj in (-1, 0, 1):
                        ni, nj = i + di, j + dj
                        if 0 <= ni < rows and 0 <= nj < cols and mask[ni, nj] and not seen[ni, nj]:
                            seen[ni, nj] = True
                            stack.append((ni, nj))
            comps.append(frozenset(cells))
    return comps


def test_near_field_estimate_endpoints_and_monotone():
    cfg = ProximityConfig()
    assert near_field_estimate(np.array([cfg.cost_min]), cfg)[0] == pytest.approx(cfg.depth_max)
    assert near_field_estimate(np.array([cfg.cost_max]), cfg)[0] == pytest.approx(cfg.depth_min)
    costs = np.linspace(cfg.cost_min, cfg.cost_max, 50)
    depths = near_field_estimate(costs, cfg)
    assert np.all(np.diff(depths) < 0.0), "higher cost must mean closer"
    # clamping outside calibration
    assert near_field_estimate(np.array([-10.0]), cfg)[0] == pytest.approx(cfg.depth_max)


def test_floor_ceiling_geometry():
    cfg = ProximityConfig(camera_height=1.25, safe_height=0.2)
    ceil = floor_ceiling(cfg, pitch=math.radians(15.0))
    theta = cfg.row_angles(math.radians(15.0))
    up = theta <= 1e-6
    assert np.all(np.isinf(ceil[up]))
    down = ~up
    assert np.allclose(ceil[down], (1.25 - 0.2) / np.sin(theta[down]))


def test_floor_filter_removes_synthetic_floor_keeps_box():
    cfg = ProximityConfig()
    pitch = math.radians(25.0)
    # pure floor scene: every return is the floor plane
    grid = render_depth([], cfg, pitch)
    mask = fov_floor_filter(grid, cfg)
    assert not mask.any(), "flat floor must be filtered out entirely"
    # add an obstacle standing on the floor in the near field
    grid2 = render_depth([Cylinder(center=np.array([1.4, 0.0]))], cfg, pitch)
    mask2 = fov_floor_filter(grid2, cfg)
    assert mask2.any(), "an elevated obstacle must survive the floor filter"


def test_connected_components_against_flood_fill():
    rng = np.random.default_rng(21)
    for trial in range(1000):
        shape = (int(rng.integers(4, 17)), int(rng.integers(4, 17)))
        mask = rng.uniform(size=shape) < rng.uniform(0.2, 0.7)
        labels, count = connected_components(mask)
        oracle = _flood_fill_components(mask)
        assert count == len(oracle), f"trial {trial}: component count mismatch"
        got = []
        for lbl in range(1, count + 1):
            cells = frozenset(zip(*np.nonzero(labels == lbl)))
            got.append(frozenset((int(a), int(b)) for a, b in cells))
        assert set(got) == set(oracle), f"trial {trial}: component sets differ"


def test_detect_single_cylinder_accuracy():
    cfg = ProximityConfig()
    pitch = math.radians(25.0)
    cyl = Cylinder(center=np.array([1.5, 0.0]), radius=0.2)
    grid = render_depth([cyl], cfg, pitch)
    boxes = detect(grid, cfg)
    assert len(boxes) == cfg.publish_count
    assert boxes[0].valid and not boxes[1].valid
    truth = 1.5 - 0.2  # ground distance to the front surface
    assert abs(boxes[0].distance - truth) <= 0.05
    assert abs(boxes[0].bearing) <= math.radians(2.0)


def test_detect_publishes_two_sorted_with_padding():
    cfg = ProximityConfig()
    pitch = math.radians(25.0)
    scenes = {
        0: [],
        1: [Cylinder(center=np.array([1.2, 0.3]))],
        3: [
            Cylinder(center=np.array([1.0, 0.5])),
            Cylinder(center=np.array([1.6, -0.5])),
            Cylinder(center=np.array([2.1, 0.0])),
        ],
    }
    for n, cyls in scenes.items():
        boxes = detect(render_depth(cyls, cfg, pitch), cfg)
        assert len(boxes) == 2
        assert boxes[0].distance <= boxes[1].distance
        n_valid = sum(b.valid for b in boxes)
        assert n_valid == min(n, 2)
        for b in boxes:
            if not b.valid:
                assert math.isinf(b.distance)


def test_detect_wall_filter():
    cfg = ProximityConfig()
    pitch = math.radians(25.0)
    fmap = build_default_field()
    cyl = Cylinder(center=np.array([1.5, 0.0]))
    grid = render_depth([cyl], cfg, pitch)
    inside = detect(grid, cfg, pose=Pose2D(0.0, 0.0, 0.0), fmap=fmap)
    assert inside[0].valid
    # same body-frame return, but the robot is at the edge facing out:
    # the "obstacle" now sits beyond the boundary margin and is a wall
    outside = detect(grid, cfg, pose=Pose2D(6.9, 0.0, 0.0), fmap=fmap)
    assert not outside[0].valid


def test_detect_merges_split_returns():
    cfg = ProximityConfig()
    pitch = math.radians(25.0)
    cyl = Cylinder(center=np.array([1.3, 0.0]))
    grid = render_depth([cyl], cfg, pitch)
    # punch a one-pixel horizontal seam through the obstacle's mask region
    mask = fov_floor_filter(grid, cfg)
    rows = np.nonzero(mask.any(axis=1))[0]
    mid = int(rows.mean())
    grid.values[mid, :] = np.inf
    boxes = detect(grid, cfg)
    assert sum(b.valid for b in boxes) == 1, "seam-split returns should merge into one box"


def test_detect_noise_robustness():
    cfg = ProximityConfig()
    pitch = math.radians(25.0)
    rng = np.random.default_rng(3)
    cyl = Cylinder(center=np.array([1.5, 0.2]))
    errs = []
    for _ in range(20):
        grid = render_depth([cyl], cfg, pitch, noise_sigma=0.02, rng=rng)
        boxes = detect(grid, cfg)
        assert boxes[0].valid
        errs.append(abs(boxes[0].distance - (math.hypot(1.5, 0.2) - 0.2)))
    assert np.mean(errs) <= 0.05
