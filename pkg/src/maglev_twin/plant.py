"""Rigid-body dynamics of the levitated handle at a fixed timestep.

The handle is a free rigid body driven by coil wrenches, gravity, and an
optional hand-impedance disturbance standing in for the human grasp.  The
integrator is semi-implicit Euler: velocities first, then pose, with the
gyroscopic torque evaluated at a midpoint so torque-free tumbling holds
energy and momentum at haptic rates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (Pose, quat_conjugate, quat_from_rotvec, quat_multiply,
                       quat_normalize, quat_to_rotvec)
from ._kernels import integrate_rigid
from .magnetics import Wrench

GRAVITY = 9.81               # m/s^2
SCREEN_HEIGHT = 0.008        # m, handle cannot descend below the screen top
DT_MAX = 2.0e-3              # s
MAGNET_DENSITY = 7500.0      # kg/m^3, sintered NdFeB
BODY_MASS = 0.040            # kg, shell + LEDs + battery lump


class IntegrationError(RuntimeError):
    """The applied wrench contained non-finite components."""


@dataclass
class CylinderComponent:
    """Solid cylinder, axis along body z, centered at ``center``."""

    mass: float
    radius: float
    height: float
    center: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)

    def inertia_about_own_com(self) -> np.ndarray:
        ixx = self.mass * (3.0 * self.radius ** 2 + self.height ** 2) / 12.0
        izz = 0.5 * self.mass * self.radius ** 2
        return np.diag([ixx, ixx, izz])


@dataclass
class PointMassComponent:
    mass: float
    center: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)

    def inertia_about_own_com(self) -> np.ndarray:
        return np.zeros((3, 3))


def handle_inertia(components: list) -> tuple:
    """Compose (mass, COM, inertia about COM) from simple primitives.

    Each component supplies its own mass, center, and central inertia;
    the parallel-axis theorem moves everything to the composite COM.
    """
    if not components:
        raise ValueError("component list must be non-empty")
    mass = sum(c.mass for c in components)
    com = sum(c.mass * c.center for c in components) / mass
    inertia = np.zeros((3, 3))
    for c in components:
        d = c.center - com
        shift = c.mass * (np.dot(d, d) * np.eye(3) - np.outer(d, d))
        inertia += c.inertia_about_own_com() + shift
    return mass, com, inertia


@dataclass
class HandleProperties:
    """Mass properties of the levitated handle (body frame, about COM)."""

    mass: float
    inertia: np.ndarray
    com_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        self.com_offset = np.asarray(self.com_offset, dtype=float)
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if not np.allclose(self.inertia, self.inertia.T, atol=1e-12):
            raise ValueError("inertia tensor must be symmetric")
        w = np.linalg.eigvalsh(self.inertia)
        if np.any(w <= 0):
            raise ValueError("inertia tensor must be positive definite")
        if w[0] + w[1] < w[2] - 1e-12:
            raise ValueError("principal moments violate the triangle inequality")
        self.inertia_inv = np.linalg.inv(self.inertia)


def default_handle_components(magnet_spacing: float = 0.060) -> list:
    """Two Table-sized magnets on the x axis plus a lumped 40 g body."""
    radius = 0.01905 / 2.0
    height = 0.00902
    volume = np.pi * radius ** 2 * height
    m = MAGNET_DENSITY * volume
    half = magnet_spacing / 2.0
    return [CylinderComponent(m, radius, height, np.array([-half, 0.0, 0.0])),
            CylinderComponent(m, radius, height, np.array([half, 0.0, 0.0])),
            PointMassComponent(BODY_MASS, np.zeros(3))]


def default_handle_properties() -> HandleProperties:
    mass, com, inertia = handle_inertia(default_handle_components())
    return HandleProperties(mass, inertia, com)


@dataclass
class RigidBodyState:
    """Pose plus twist of the handle; angular velocity in the body frame."""

    pose: Pose
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    time: float = 0.0
    on_screen: bool = False

    def __post_init__(self):
        self.linear_velocity = np.asarray(self.linear_velocity, dtype=float)
        self.angular_velocity = np.asarray(self.angular_velocity, dtype=float)

    def copy(self) -> "RigidBodyState":
        return RigidBodyState(self.pose.copy(), self.linear_velocity.copy(),
                              self.angular_velocity.copy(), self.time,
                              self.on_screen)


def step_dynamics(state: RigidBodyState, applied: Wrench,
                  props: HandleProperties, dt: float,
                  substeps: int = 1) -> RigidBodyState:
    """Advance the rigid body one fixed step under the applied wrench.

    Semi-implicit Euler: translational and angular velocities are updated
    from the Newton-Euler equations (gyroscopic term at a half-step
    midpoint), then the pose is integrated with the new velocities and the
    quaternion renormalized.  The handle cannot pass below the screen
    surface; hitting it zeroes downward velocity and sets ``on_screen``.
    """
    if not 0.0 < dt <= DT_MAX:
        raise ValueError("dt must lie in (0, 2e-3] s")
    force = np.asarray(applied.force, dtype=float)
    torque = np.asarray(applied.torque, dtype=float)
    if not (np.all(np.isfinite(force)) and np.all(np.isfinite(torque))):
        raise IntegrationError("applied wrench is not finite")
    h = dt / substeps
    pos = state.pose.position.copy()
    quat = state.pose.quaternion.copy()
    v = state.linear_velocity.copy()
    w = state.angular_velocity.copy()
    on_screen = integrate_rigid(pos, quat, v, w, force, torque, props.mass,
                                props.inertia, props.inertia_inv, h,
                                substeps, SCREEN_HEIGHT)
    return RigidBodyState(Pose(pos, quat), v, w, state.time + dt,
                          bool(on_screen))


@dataclass
class HandModel:
    """Spring-damper grasp pulling the handle toward a target trajectory.

    ``target`` is either a fixed Pose or a callable t -> Pose.  Stiffness
    and damping are 6-vectors: (x, y, z) then rotation about (x, y, z).
    """

    target: object
    stiffness: np.ndarray = field(
        default_factory=lambda: np.array([50.0, 50.0, 50.0, 0.5, 0.5, 0.5]))
    damping: np.ndarray = field(
        default_factory=lambda: np.array([2.0, 2.0, 2.0, 0.01, 0.01, 0.01]))
    enabled: bool = True

    def __post_init__(self):
        self.stiffness = np.asarray(self.stiffness, dtype=float)
        self.damping = np.asarray(self.damping, dtype=float)
        if np.any(self.stiffness < 0) or np.any(self.damping < 0):
            raise ValueError("stiffness and damping must be non-negative")

    def target_pose(self, t: float) -> Pose:
        return self.target(t) if callable(self.target) else self.target


def hand_impedance_wrench(state: RigidBodyState, hand: HandModel,
                          t: float) -> Wrench:
    """Grasp wrench: proportional to pose error, opposing the twist."""
    if not hand.enabled:
        return Wrench(np.zeros(3), np.zeros(3))
    target = hand.target_pose(t)
    pos_err = target.position - state.pose.position
    q_rel = quat_multiply(target.quaternion,
                          quat_conjugate(state.pose.quaternion))
    rot_err = quat_to_rotvec(q_rel)
    w_world = state.pose.rotation() @ state.angular_velocity
    force = hand.stiffness[:3] * pos_err - hand.damping[:3] * state.linear_velocity
    torque = hand.stiffness[3:] * rot_err - hand.damping[3:] * w_world
    return Wrench(force, torque)
