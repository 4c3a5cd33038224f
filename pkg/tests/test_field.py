"""Frame transforms, angle wrapping, and the default landmark map."""
import math

import numpy as np
import pytest

from fieldstack.field import (
    FieldMap,
    LandmarkClass,
    Pose2D,
    angle_mean,
    body_to_world,
    build_default_field,
    point_segment_distance,
    rot2,
    wrap_angle,
    wrap_angle_array,
    world_to_body,
)


def test_wrap_angle_basics():
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi, abs=1e-12)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi, abs=1e-12)
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(math.pi) == pytest.approx(math.pi, abs=1e-12)
    assert wrap_angle(2 * math.pi) == pytest.approx(0.0, abs=1e-12)
    for k in range(-7, 8):
        a = 0.37 + k * 2 * math.pi
        assert wrap_angle(a) == pytest.approx(0.37, abs=1e-9)


def test_wrap_angle_range_property():
    rng = np.random.default_rng(7)
    vals = rng.uniform(-50, 50, size=2000)
    for v in vals:
        w = wrap_angle(float(v))
        assert -math.pi < w <= math.pi
    warr = wrap_angle_array(vals)
    assert np.all(warr > -math.pi) and np.all(warr <= math.pi)
    for v, w in zip(vals, warr):
        assert abs(wrap_angle(float(v)) - w) < 1e-9


def test_wrap_angle_rejects_nonfinite():
    with pytest.raises(ValueError):
        wrap_angle(float("nan"))
    with pytest.raises(ValueError):
        wrap_angle(float("inf"))


def test_rotation_convention_ccw():
    # a positive quarter turn maps +x onto +y
    v = rot2(math.pi / 2) @ np.array([1.0, 0.0])
    assert v == pytest.approx([0.0, 1.0], abs=1e-12)


def test_frame_roundtrip_random():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        pose = Pose2D(*rng.uniform(-8, 8, size=2), rng.uniform(-4, 4))
        p = rng.uniform(-10, 10, size=2)
        back = body_to_world(pose, world_to_body(pose, p))
        assert np.allclose(back, p, atol=1e-12)


def test_frame_roundtrip_batch():
    pose = Pose2D(1.0, -2.0, 0.7)
    pts = np.random.default_rng(3).uniform(-5, 5, size=(64, 2))
    assert np.allclose(body_to_world(pose, world_to_body(pose, pts)), pts, atol=1e-12)


def test_world_to_body_known_case():
    # robot at (1,0) facing +y; world point (1,2) is 2 m straight ahead
    pose = Pose2D(1.0, 0.0, math.pi / 2)
    assert world_to_body(pose, np.array([1.0, 2.0])) == pytest.approx([2.0, 0.0], abs=1e-12)


def test_pose_theta_normalized():
    p = Pose2D(0.0, 0.0, 3 * math.pi)
    assert p.theta == pytest.approx(math.pi, abs=1e-12)
    assert -math.pi < Pose2D(0, 0, -math.pi).theta <= math.pi


def test_angle_mean_across_seam():
    m = angle_mean([math.pi - 0.1, -math.pi + 0.1])
    assert abs(wrap_angle(m - math.pi)) < 1e-9
    with pytest.raises(ValueError):
        angle_mean([])


def test_default_field_landmark_contents():
    fmap = build_default_field()
    assert (LandmarkClass.L, (7.0, 4.0)) in fmap.landmarks
    # both goals carry at least two post landmarks
    for sx in (-1.0, 1.0):
        posts = [p for c, p in fmap.landmarks if c == LandmarkClass.G and p[0] == sx * 7.0]
        assert len(posts) >= 2
    assert len(fmap.landmarks) == 31


def test_default_field_mirror_symmetry():
    fmap = build_default_field()
    entries = {(c, p) for c, p in fmap.landmarks}
    for c, (x, y) in fmap.landmarks:
        assert (c, (-x, -y)) in entries  # half-turn image has the same class


def test_default_field_landmarks_on_lines():
    fmap = build_default_field()
    for _, p in fmap.landmarks:
        d = min(point_segment_distance(p, a, b) for a, b in fmap.lines)
        assert d < 1e-9, f"landmark {p} off the painted lines (min dist {d})"


def test_field_serialization_roundtrip():
    fmap = build_default_field()
    back = FieldMap.from_dict(fmap.to_dict())
    assert back.length == fmap.length and back.width == fmap.width
    assert back.landmarks == fmap.landmarks
    assert back.lines == [(tuple(a), tuple(b)) for a, b in fmap.lines]


def test_positions_of_class():
    fmap = build_default_field()
    g = fmap.positions_of(LandmarkClass.G)
    assert g.shape == (4, 2)
    assert np.allclose(np.abs(g), [[7.0, 1.3]] * 4)


def test_contains_margin():
    fmap = build_default_field()
    assert fmap.contains((7.0, 4.0))
    assert not fmap.contains((7.3, 0.0))
    assert fmap.contains((7.3, 0.0), margin=0.5)
