import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from estpred.errors import ConfigurationError, EmptyInputError
from estpred.geom import (
    CAMERA_XZ,
    WORLD_XY,
    Motion3,
    Pose2,
    Pose3,
    camera_object_pose,
    project_to_plane,
    recover_pose,
    recover_track,
    wrap_angle,
)
from helpers import homogeneous, random_pose, yaw_matrix


def test_pose_reorthonormalized_on_construction():
    noisy = np.eye(3) + 1e-6 * np.arange(9).reshape(3, 3)
    p = Pose3(noisy, [0, 0, 0])
    assert np.allclose(p.rotation.T @ p.rotation, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(p.rotation) - 1) < 1e-12


def test_pose_inverse_composition_is_identity(rng):
    for _ in range(50):
        p = random_pose(rng)
        assert p.compose(p.inverse()).allclose(Pose3.identity(), atol=1e-9)


def test_quaternion_round_trip(rng):
    for _ in range(50):
        p = random_pose(rng)
        q = p.to_quaternion()
        back = Pose3.from_quaternion(p.translation, q)
        assert back.allclose(p, atol=1e-12)


def test_recover_pose_identity_motion(rng):
    p = random_pose(rng)
    assert recover_pose(Motion3.identity(), p).allclose(p, atol=0)


def test_recover_pose_additive_translation():
    m = Motion3(Pose3(np.eye(3), [1, 0, 0]))
    p = Pose3(np.eye(3), [2, 0, 0])
    assert np.allclose(recover_pose(m, p).translation, [3, 0, 0])


def test_recover_pose_matches_homogeneous_product():
    motion_m = yaw_matrix(math.pi / 2)
    motion_m[0, 3] = 1.0
    pose_m = yaw_matrix(math.pi / 2)
    pose_m[1, 3] = 1.0
    expected = motion_m @ pose_m
    got = recover_pose(Motion3(Pose3.from_yaw(math.pi / 2, (1, 0, 0))), Pose3.from_yaw(math.pi / 2, (0, 1, 0)))
    assert np.allclose(got.matrix(), expected, atol=1e-12)
    # 180 deg yaw placed at (1 - 1, 0, 0)
    assert np.allclose(got.translation, [0, 0, 0], atol=1e-12)


def test_recover_pose_inverse_round_trip(rng):
    for _ in range(100):
        m = Motion3(random_pose(rng))
        p = random_pose(rng)
        assert recover_pose(m, recover_pose(m.inverse(), p)).allclose(p, atol=1e-9)


def test_recover_track_identity_motions(rng):
    p = random_pose(rng)
    out = recover_track([Motion3.identity()] * 3, p)
    assert len(out) == 4
    assert all(o.allclose(p, atol=0) for o in out)


def test_recover_track_constant_translation():
    out = recover_track([Motion3(Pose3(np.eye(3), [0.1, 0, 0]))] * 30, Pose3.identity())
    assert len(out) == 31
    assert np.allclose(out[-1].translation, [3.0, 0, 0], atol=1e-12)


def test_recover_track_matches_matrix_fold(rng):
    motions = [Motion3(random_pose(rng, 1.0)) for _ in range(10)]
    initial = random_pose(rng)
    expected = homogeneous(initial)
    for m in motions:
        expected = homogeneous(m.transform) @ expected
    out = recover_track(motions, initial)
    assert np.allclose(out[-1].matrix(), expected, atol=1e-9)


def test_recover_track_pairwise_consistency(rng):
    motions = [Motion3(random_pose(rng, 1.0)) for _ in range(20)]
    out = recover_track(motions, random_pose(rng))
    for k, m in enumerate(motions, start=1):
        rederived = Motion3.between(out[k - 1], out[k])
        assert rederived.transform.allclose(m.transform, atol=1e-9)


def test_recover_track_empty():
    with pytest.raises(EmptyInputError):
        recover_track([], Pose3.identity())


def test_project_identity():
    assert project_to_plane(Pose3.identity(), WORLD_XY) == Pose2(0.0, 0.0, 0.0)


def test_project_world_yaw():
    p = project_to_plane(Pose3.from_yaw(math.pi / 2, (1, 2, 3)), WORLD_XY)
    assert (p.x, p.y) == (1, 2)
    assert p.heading == pytest.approx(math.pi / 2, abs=1e-12)


def test_project_camera_convention():
    # forward axis R @ e1 = (cos ry, 0, -sin ry); planar (z, -x) = (-sin ry, -cos ry)
    ry = 0.3
    p = project_to_plane(camera_object_pose((2.0, 1.0, 15.0), ry), CAMERA_XZ)
    assert (p.x, p.y) == (15.0, -2.0)
    assert p.heading == pytest.approx(-math.pi / 2 - ry, abs=1e-12)


def test_project_unknown_convention():
    with pytest.raises(ConfigurationError):
        project_to_plane(Pose3.identity(), "xz-world")


def test_wrap_angle_half_open():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert np.allclose(wrap_angle(np.array([math.pi, -math.pi, 0.0])), [math.pi, math.pi, 0.0])


@given(st.floats(min_value=-10 * math.pi, max_value=10 * math.pi, allow_nan=False))
def test_wrap_angle_total_and_idempotent(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert wrap_angle(w) == w
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)
    vec = wrap_angle(np.array([a]))[0]
    assert vec == w
