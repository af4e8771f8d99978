"""Rigid-body geometry helpers: quaternions, rotation vectors, poses.

Quaternions are stored as (w, x, y, z) numpy arrays and kept unit-norm.
All frames are right-handed with z up; the base frame origin sits at the
center of the coil array on the core-top plane.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("cannot normalize zero quaternion")
    return q / n


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by quaternion q.  v may be (3,) or (N, 3)."""
    return np.asarray(v, dtype=float) @ quat_to_matrix(q).T


def quat_from_rotvec(rv: np.ndarray) -> np.ndarray:
    rv = np.asarray(rv, dtype=float)
    angle = np.linalg.norm(rv)
    if angle < 1e-12:
        # second-order small-angle expansion keeps this C1-smooth at zero
        half = 0.5 * rv
        return quat_normalize(np.array([1.0, half[0], half[1], half[2]]))
    axis = rv / angle
    s = np.sin(angle / 2.0)
    return np.array([np.cos(angle / 2.0), s * axis[0], s * axis[1], s * axis[2]])


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    q = quat_normalize(q)
    if q[0] < 0.0:
        q = -q
    vec = q[1:]
    s = np.linalg.norm(vec)
    if s < 1e-12:
        return 2.0 * vec
    angle = 2.0 * np.arctan2(s, q[0])
    return vec * (angle / s)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return quat_from_rotvec(axis * angle)


@dataclass
class Pose:
    """Position (m) and orientation (unit quaternion) of a body frame."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quaternion: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).copy()
        self.quaternion = quat_normalize(np.asarray(self.quaternion, dtype=float))

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)

    def transform_points(self, pts: np.ndarray) -> np.ndarray:
        """Map body-frame point(s) into the parent frame."""
        return np.asarray(pts, dtype=float) @ self.rotation().T + self.position

    def rotate_vectors(self, vecs: np.ndarray) -> np.ndarray:
        return np.asarray(vecs, dtype=float) @ self.rotation().T

    def inverse_transform_points(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts, dtype=float) - self.position) @ self.rotation()

    def perturbed(self, dpos: np.ndarray, drot: np.ndarray) -> "Pose":
        """New pose with a translation offset and a local rotation-vector increment."""
        return Pose(self.position + np.asarray(dpos, dtype=float),
                    quat_multiply(self.quaternion, quat_from_rotvec(drot)))

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.quaternion.copy())

    def as_array(self) -> np.ndarray:
        """Flat [x, y, z, qw, qx, qy, qz] representation."""
        return np.concatenate([self.position, self.quaternion])

    @staticmethod
    def from_array(arr: np.ndarray) -> "Pose":
        arr = np.asarray(arr, dtype=float)
        return Pose(arr[:3], arr[3:7])


def rotation_error(q_actual: np.ndarray, q_target: np.ndarray) -> np.ndarray:
    """Rotation vector taking q_actual to q_target, expressed in the parent frame."""
    dq = quat_multiply(q_target, quat_conjugate(q_actual))
    return quat_to_rotvec(dq)
