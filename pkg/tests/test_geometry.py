import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from scopesim.geometry import (
    Action,
    EulerPose,
    Pose,
    apply_action,
    compose,
    euler_from_rotation,
    euler_to_pose,
    inverse,
    look_at_rotation,
    pose_to_euler,
    position_distance,
    relative_action,
    rotation_from_euler,
    rotation_geodesic,
)

angle = st.floats(-math.pi, math.pi, allow_nan=False)
safe_beta = st.floats(-math.pi / 2 + 1e-3, math.pi / 2 - 1e-3, allow_nan=False)
coord = st.floats(-100, 100, allow_nan=False)


def random_pose(rng):
    return euler_to_pose(EulerPose(*rng.uniform(-50, 50, 3), *rng.uniform(-math.pi, math.pi, 3)))


def test_identity_euler():
    p = euler_to_pose(EulerPose(0, 0, 0, 0, 0, 0))
    assert np.array_equal(p.rotation, np.eye(3))
    assert np.array_equal(p.translation, np.zeros(3))


def test_quarter_turn_about_x_maps_y_to_z():
    # Rx(pi/2) written out by hand: [[1,0,0],[0,c,-s],[0,s,c]] with c = 0, s = 1
    p = euler_to_pose(EulerPose(1, 2, 3, math.pi / 2, 0, 0))
    assert np.allclose(p.rotation @ [0, 1, 0], [0, 0, 1], atol=1e-15)
    assert np.allclose(p.rotation, [[1, 0, 0], [0, 0, -1], [0, 1, 0]], atol=1e-15)
    assert np.array_equal(p.translation, [1, 2, 3])


def test_matches_scipy_intrinsic_xyz():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = rng.uniform(-math.pi, math.pi, 3)
        ref = Rotation.from_euler("XYZ", a).as_matrix()
        assert np.allclose(rotation_from_euler(*a), ref, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(coord, coord, coord, angle, safe_beta, angle)
def test_euler_round_trip(x, y, z, a, b, g):
    e = EulerPose(x, y, z, a, b, g)
    back = pose_to_euler(euler_to_pose(e))
    assert np.allclose(back.position, e.position, atol=1e-12)
    # angles compared through wrapped differences so that -pi and pi agree
    d = np.angle(np.exp(1j * (back.angles - e.angles)))
    assert np.all(np.abs(d) < 1e-9)


def test_gimbal_lock_sets_gamma_zero():
    R = rotation_from_euler(0.3, math.pi / 2, 0.2)
    a, b, g = euler_from_rotation(R)
    assert g == 0.0 and b == pytest.approx(math.pi / 2)
    assert np.allclose(rotation_from_euler(a, b, g), R, atol=1e-9)


def test_pose_invariants_and_validation():
    rng = np.random.default_rng(1)
    p = random_pose(rng)
    assert p.is_valid()
    R = p.rotation
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-9) and abs(np.linalg.det(R) - 1) < 1e-9
    with pytest.raises(ValueError):
        Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        Pose(2 * np.eye(3), np.zeros(3))


def test_compose_associative_and_inverse():
    rng = np.random.default_rng(2)
    for _ in range(100):
        a, b, c = random_pose(rng), random_pose(rng), random_pose(rng)
        assert compose(compose(a, b), c).allclose(compose(a, compose(b, c)), atol=1e-9)
        assert compose(inverse(a), a).allclose(Pose.identity(), atol=1e-12)
        assert np.allclose((a @ b).matrix, a.matrix @ b.matrix, atol=1e-12)


def test_relative_action_replay_closure():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a, b = random_pose(rng), random_pose(rng)
        act = relative_action(a, b)
        assert apply_action(a, act).allclose(b, atol=1e-9)


def test_relative_action_is_in_camera_frame():
    start = euler_to_pose(EulerPose(0, 0, 0, 0, math.pi / 2, 0))  # camera +Z points along world +X
    ahead = compose(start, Pose(np.eye(3), [0, 0, 1.0]))
    assert np.allclose(ahead.translation, [1, 0, 0], atol=1e-15)
    assert np.allclose(relative_action(start, ahead).as_array(), [0, 0, 1, 0, 0, 0], atol=1e-12)


def test_geodesic_known_angles():
    I = np.eye(3)
    assert rotation_geodesic(I, I) == 0.0
    flip = Rotation.from_rotvec([0, 0, math.pi]).as_matrix()
    assert rotation_geodesic(flip, I) == pytest.approx(math.pi, abs=1e-12)
    rng = np.random.default_rng(4)
    for _ in range(200):
        q = Rotation.random(random_state=rng)
        r = Rotation.random(random_state=rng)
        ref = (q * r.inv()).magnitude()
        assert rotation_geodesic(q.as_matrix(), r.as_matrix()) == pytest.approx(ref, abs=1e-9)


def test_geodesic_small_angle_precision():
    for ang in (1e-9, 1e-6, 1e-3):
        R = Rotation.from_rotvec([ang, 0, 0]).as_matrix()
        assert rotation_geodesic(R, np.eye(3)) == pytest.approx(ang, rel=1e-6)


def test_position_distance():
    a = Pose(np.eye(3), [0, 0, 0])
    b = Pose(np.eye(3), [3, 4, 0])
    assert position_distance(a, b) == 5.0


def test_action_normalization_round_trip_and_clip():
    lim = np.array([1.5, 1.5, 1.5, math.radians(3)] * 1 + [math.radians(3)] * 2)
    a = Action(0.75, -1.5, 0.0, math.radians(1.5), 0.0, -math.radians(3))
    n = a.normalized(lim)
    assert np.all(np.abs(n) <= 1.0)
    assert np.allclose(Action.from_normalized(n, lim).as_array(), a.as_array(), atol=1e-15)
    big = Action.from_normalized([5, -5, 0, 0, 0, 0], lim)
    assert big.dx == 1.5 and big.dy == -1.5


def test_look_at_identity_for_plus_z():
    assert np.allclose(look_at_rotation([0, 0, 1]), np.eye(3), atol=1e-15)
    R = look_at_rotation([1, 1, 1])
    assert np.allclose(R[:, 2], np.ones(3) / math.sqrt(3))
    assert Pose(R, np.zeros(3)).is_valid()


def test_poses_are_read_only():
    p = Pose.identity()
    with pytest.raises(ValueError):
        p.translation[0] = 1.0
