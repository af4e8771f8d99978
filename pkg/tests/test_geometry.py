import numpy as np
import pytest
from hypothesis import given, strategies as st

from maglev_twin.geometry import (Pose, quat_from_axis_angle, quat_from_rotvec,
                                  quat_multiply, quat_normalize, quat_rotate,
                                  quat_to_matrix, quat_to_rotvec, rotation_error)


def test_identity_rotation():
    q = np.array([1.0, 0, 0, 0])
    v = np.array([1.0, 2.0, 3.0])
    assert np.allclose(quat_rotate(q, v), v)


def test_axis_angle_90deg_about_z():
    q = quat_from_axis_angle([0, 0, 1], np.pi / 2)
    assert np.allclose(quat_rotate(q, [1, 0, 0]), [0, 1, 0], atol=1e-12)


def test_rotation_matrix_orthonormal():
    q = quat_normalize(np.array([0.3, -0.5, 0.7, 0.2]))
    R = quat_to_matrix(q)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.isclose(np.linalg.det(R), 1.0)


@given(st.lists(st.floats(-2.0, 2.0), min_size=3, max_size=3))
def test_rotvec_round_trip(rv):
    rv = np.asarray(rv)
    if np.linalg.norm(rv) > np.pi:  # keep within principal branch
        return
    q = quat_from_rotvec(rv)
    assert np.allclose(quat_to_rotvec(q), rv, atol=1e-9)


@given(st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4))
def test_quat_multiply_preserves_norm(vals):
    q = np.asarray(vals)
    if np.linalg.norm(q) < 1e-3:
        return
    q = quat_normalize(q)
    p = quat_from_axis_angle([1, 1, 0], 0.7)
    assert np.isclose(np.linalg.norm(quat_multiply(p, q)), 1.0, atol=1e-12)


def test_pose_transform_round_trip():
    pose = Pose(position=[0.1, -0.2, 0.3],
                quaternion=quat_from_axis_angle([1, 2, 3], 0.8))
    pts = np.random.default_rng(1).normal(size=(5, 3))
    back = pose.inverse_transform_points(pose.transform_points(pts))
    assert np.allclose(back, pts, atol=1e-12)


def test_rotation_error_recovers_perturbation():
    q = quat_from_axis_angle([0, 1, 0], 0.4)
    rv = np.array([0.01, -0.02, 0.03])
    q2 = quat_multiply(quat_from_rotvec(rv), q)
    assert np.allclose(rotation_error(q, q2), rv, atol=1e-9)


def test_pose_array_round_trip():
    pose = Pose([1, 2, 3], quat_from_axis_angle([0, 0, 1], 1.0))
    again = Pose.from_array(pose.as_array())
    assert np.allclose(again.position, pose.position)
    assert np.allclose(again.quaternion, pose.quaternion)


def test_zero_quaternion_rejected():
    with pytest.raises(ValueError):
        Pose(quaternion=[0, 0, 0, 0])
