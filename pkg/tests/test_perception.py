"""Synthetic sensing, ball validation, and the ball Kalman filter."""
import math

import numpy as np
import pytest

from fieldstack.field import Pose2D, build_default_field
from fieldstack.perception import (
    BALL_DIAMETER,
    BallTrack,
    CameraModel,
    Detection,
    NoiseModel,
    ObjectClass,
    Scene,
    SceneRobot,
    geometric_depth,
    kalman_step,
    project_detection,
    select_landmarks,
    sense,
    validate_ball,
)


def _scene(ball=None, robots=()):
    fmap = build_default_field()
    cls, pos = fmap.landmark_array()
    return Scene(
        landmark_classes=cls,
        landmark_positions=pos,
        ball=None if ball is None else np.asarray(ball, dtype=float),
        robots=list(robots),
    )


def test_zero_noise_sense_recovers_truth():
    scene = _scene()
    cam = CameraModel()
    pose = Pose2D(2.0, 1.0, 0.4)
    dets = sense(scene, pose, 0.0, cam, NoiseModel.zero(), np.random.default_rng(0))
    assert dets, "expected visible landmarks"
    for d in dets:
        world = project_detection(d, pose)
        truth = scene.landmark_positions[d.truth_index]
        assert np.allclose(world, truth, atol=1e-9)


def test_sense_respects_fov_and_range():
    scene = _scene()
    cam = CameraModel(fov_h=math.radians(90))
    pose = Pose2D(0.0, 0.0, 0.0)  # facing +x
    dets = sense(scene, pose, 0.0, cam, NoiseModel.zero(), np.random.default_rng(0))
    for d in dets:
        assert abs(d.bearing) <= cam.fov_h / 2 + 1e-9
        assert d.range <= cam.max_range + 1e-9
        truth = scene.landmark_positions[d.truth_index]
        assert truth[0] > 0.0, "object behind the robot must not be detected"


def test_sense_neck_yaw_shifts_fov():
    scene = _scene()
    cam = CameraModel(fov_h=math.radians(60))
    pose = Pose2D(0.0, 0.0, 0.0)
    left = sense(scene, pose, math.radians(90), cam, NoiseModel.zero(), np.random.default_rng(0))
    assert left, "expected landmarks when looking along +y"
    for d in left:
        truth = scene.landmark_positions[d.truth_index]
        assert truth[1] > 0.0


def test_occlusion_by_robot_body():
    # landmark at (7,0)... use the goal posts: put a robot directly on the ray
    scene = _scene(robots=[SceneRobot(position=np.array([3.5, 2.0]), team=1)])
    pose = Pose2D(0.0, 0.0, math.atan2(2.0, 3.5))
    cam = CameraModel(fov_h=math.radians(40))
    dets = sense(scene, pose, 0.0, cam, NoiseModel.zero(), np.random.default_rng(0))
    # the corner at (7,4) lies on the observer->robot ray extension; it must be missing
    hit_idx = [d.truth_index for d in dets if d.kind in (ObjectClass.L, ObjectClass.T, ObjectClass.X, ObjectClass.G)]
    corner_idx = int(
        np.where((scene.landmark_positions == np.array([7.0, 4.0])).all(axis=1))[0][0]
    )
    assert corner_idx not in hit_idx


def test_noise_bands_bounded_and_spread():
    noise = NoiseModel(bearing_sigma=0.0)
    rng = np.random.default_rng(11)
    r = 5.0
    scene = Scene(
        landmark_classes=np.array([0]),
        landmark_positions=np.array([[r, 0.0]]),
    )
    errs = []
    pose = Pose2D(0.0, 0.0, 0.0)
    cam = CameraModel()
    for _ in range(10_000):
        dets = sense(scene, pose, 0.0, cam, noise, rng)
        assert len(dets) == 1
        errs.append(dets[0].range - r)
    errs = np.asarray(errs)
    assert np.all(np.abs(errs) <= 0.05 * r + 1e-9)  # 5 % band at 5 m
    assert errs.std() > 0.01  # nonzero spread
    # envelope lookup at band edges
    assert noise.range_error_pct(1.9) == pytest.approx(0.01)
    assert noise.range_error_pct(2.0) == pytest.approx(0.03)
    assert noise.range_error_pct(7.9) == pytest.approx(0.08)
    assert noise.range_error_pct(12.0) == pytest.approx(0.10)


def test_noise_band_validation():
    with pytest.raises(ValueError):
        NoiseModel(range_bands=((4.0, 0.03), (2.0, 0.01)))
    with pytest.raises(ValueError):
        NoiseModel(range_bands=((2.0, 0.05), (4.0, 0.01)))


def test_sense_deterministic_given_seed():
    scene = _scene(ball=(1.5, 0.3))
    pose = Pose2D(0.0, 0.0, 0.1)
    cam = CameraModel()
    noise = NoiseModel()
    a = sense(scene, pose, 0.0, cam, noise, np.random.default_rng(123))
    b = sense(scene, pose, 0.0, cam, noise, np.random.default_rng(123))
    assert len(a) == len(b)
    for da, db in zip(a, b):
        assert da.kind == db.kind
        assert np.array_equal(da.position, db.position)


def test_ball_detectable_inside_stereo_minimum():
    scene = _scene(ball=(0.25, 0.0))
    pose = Pose2D(0.0, 0.0, 0.0)
    cam = CameraModel(min_depth=0.4)
    dets = sense(scene, pose, 0.0, cam, NoiseModel.zero(), np.random.default_rng(0))
    kinds = [d.kind for d in dets]
    assert ObjectClass.BALL in kinds
    ball = dets[kinds.index(ObjectClass.BALL)]
    assert ball.pixel_diameter > 0.0


def test_validate_ball_size_gate():
    cam = CameraModel(focal_px=500.0)
    good = Detection(ObjectClass.BALL, np.array([1.0, 0.0]), 0.9, pixel_diameter=110.0)
    assert validate_ball(good, cam)
    assert geometric_depth(110.0, 500.0) == pytest.approx(1.0, abs=1e-9)
    tiny = Detection(ObjectClass.BALL, np.array([1.0, 0.0]), 0.9, pixel_diameter=20.0)
    assert not validate_ball(tiny, cam)  # implied diameter far too small
    huge = Detection(ObjectClass.BALL, np.array([1.0, 0.0]), 0.9, pixel_diameter=400.0)
    assert not validate_ball(huge, cam)


def test_validate_ball_rejects_elevated_and_colorless():
    cam = CameraModel()
    lifted = Detection(ObjectClass.BALL, np.array([1.0, 0.0]), 0.9, height=0.5, pixel_diameter=110.0)
    assert not validate_ball(lifted, cam)
    ok = Detection(ObjectClass.BALL, np.array([1.0, 0.0]), 0.9, pixel_diameter=110.0)
    assert not validate_ball(ok, cam, green_flag=False)


def test_kalman_convergence_to_fixed_point():
    track = BallTrack()
    z = np.array([2.0, -1.0, 0.0])
    for _ in range(50):
        track = kalman_step(track, z, dt=1 / 30)
    assert np.linalg.norm(track.position() - z) < 0.01


def test_kalman_prediction_grows_trace():
    track = BallTrack()
    for _ in range(10):
        track = kalman_step(track, np.array([1.0, 1.0, 0.0]), dt=1 / 30)
    traces = [np.trace(track.cov)]
    for _ in range(20):
        track = kalman_step(track, None, dt=1 / 30)
        traces.append(np.trace(track.cov))
    assert all(b > a for a, b in zip(traces, traces[1:]))


def test_kalman_tracks_constant_velocity():
    track = BallTrack()
    dt = 1 / 30
    for k in range(60):
        p = np.array([0.5 * k * dt, -0.2 * k * dt, 0.0])
        track = kalman_step(track, p, dt)
    assert np.allclose(track.velocity()[:2], [0.5, -0.2], atol=0.05)


def test_kalman_covariance_stays_spd():
    rng = np.random.default_rng(5)
    track = BallTrack()
    for i in range(10_000):
        z = rng.uniform(-5, 5, size=3) if rng.uniform() < 0.6 else None
        track = kalman_step(track, z, dt=float(rng.uniform(0.01, 0.2)))
        eig = np.linalg.eigvalsh(track.cov)
        assert eig.min() > 0.0, f"covariance lost positive definiteness at step {i}"


def test_kalman_rejects_bad_inputs():
    track = BallTrack()
    with pytest.raises(ValueError):
        kalman_step(track, np.array([1.0, np.nan, 0.0]), dt=0.1)
    bad = BallTrack(cov=np.eye(6) * -1.0)
    with pytest.raises(ValueError):
        kalman_step(bad, None, dt=0.1)
    with pytest.raises(ValueError):
        kalman_step(track, None, dt=0.0)


def test_select_landmarks_budget_and_order():
    rng = np.random.default_rng(9)
    dets = []
    for i in range(10):
        pos = rng.uniform(1, 8, size=2)
        dets.append(Detection(ObjectClass(int(rng.integers(0, 4))), pos, float(rng.uniform(0.4, 1.0))))
    dets.append(Detection(ObjectClass.BALL, np.array([1.0, 0.0]), 0.99, pixel_diameter=110.0))
    picked = select_landmarks(dets)
    assert len(picked) == 6
    assert all(d.kind != ObjectClass.BALL for d in picked)
    scores = [d.confidence / (1.0 + d.range) for d in picked]
    assert scores == sorted(scores, reverse=True)
    # the dropped landmarks all score no better than the kept ones
    kept = set(map(id, picked))
    for d in dets:
        if d.kind != ObjectClass.BALL and id(d) not in kept:
            assert d.confidence / (1.0 + d.range) <= scores[-1] + 1e-12
