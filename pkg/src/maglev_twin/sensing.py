"""Optical pose sensing: PSD cameras imaging handle-mounted LEDs.

Three planar position-sensitive diodes each image one infrared LED fixed
to the handle.  A pinhole projection gives each diode a 2-D image-plane
reading; the handle pose is recovered from the stacked readings by
warm-started Gauss-Newton with Levenberg damping.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._kernels import gn_estimate, psd_project, psd_residual_rows
from .geometry import (Pose, quat_from_axis_angle, quat_from_rotvec,
                       quat_multiply, quat_normalize)

SENSOR_RADIUS = 0.280        # m, optical centers on a circle around the array
SENSOR_HEIGHT = 0.180        # m, sensors look down and inward at the handle
AIM_POINT = np.array([0.0, 0.0, 0.025])   # m, nominal hover point
FOCAL_LENGTH = 0.095         # m
ACTIVE_HALF_WIDTH = 0.0225   # m, usable image-plane half extent
LED_RADIUS = 0.040           # m, marker circle on the handle top
LED_HEIGHT = 0.010           # m, above the handle frame origin
LED_TILT = np.deg2rad(50.0)  # emission axes lean outward from vertical
LED_HALF_ANGLE = np.deg2rad(75.0)
DEFAULT_NOISE_STD = 3.0e-6   # m, image-plane Gaussian noise
MAX_ITERATIONS = 10
STEP_TOLERANCE = 1.0e-9
INITIAL_DAMPING = 1.0e-6


class ObservabilityError(RuntimeError):
    """Fewer than five valid scalar measurements; pose is unobservable."""


class EstimatorDivergenceError(RuntimeError):
    """Residual grew three iterations in a row; carries the best iterate."""

    def __init__(self, message: str, best: "PoseEstimate"):
        super().__init__(message)
        self.best = best


@dataclass
class LedMarker:
    """Infrared LED rigidly attached to the handle."""

    position: np.ndarray       # m, handle frame
    emission_axis: np.ndarray  # unit vector, handle frame
    half_angle: float = LED_HALF_ANGLE

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        axis = np.asarray(self.emission_axis, dtype=float)
        n = np.linalg.norm(axis)
        if n == 0:
            raise ValueError("emission axis must be nonzero")
        self.emission_axis = axis / n
        if not 0 < self.half_angle <= np.pi:
            raise ValueError("half angle must lie in (0, pi]")


@dataclass
class PsdSensor:
    """Pinhole PSD camera; its local +z axis is the optical axis."""

    pose: Pose
    led_id: int
    focal_length: float = FOCAL_LENGTH
    active_half_width: float = ACTIVE_HALF_WIDTH
    noise_std: float = DEFAULT_NOISE_STD

    def __post_init__(self):
        if self.focal_length <= 0:
            raise ValueError("focal length must be positive")


@dataclass
class PsdReading:
    """One sensor's image-plane measurement; axes are flagged separately."""

    u: float
    v: float
    valid_u: bool
    valid_v: bool

    @property
    def valid(self) -> bool:
        return self.valid_u and self.valid_v


@dataclass
class PsdReadingSet:
    readings: list        # one PsdReading per sensor
    timestamp: float = 0.0

    def valid_count(self) -> int:
        return sum(int(r.valid_u) + int(r.valid_v) for r in self.readings)


@dataclass
class PoseEstimate:
    pose: Pose
    rms_residual: float
    iterations: int
    converged: bool


@dataclass
class SensingRig:
    """A matched set of sensors and markers (sensor k images marker k)."""

    sensors: list
    markers: list

    def __post_init__(self):
        ids = sorted(s.led_id for s in self.sensors)
        if ids != list(range(len(self.markers))):
            raise ValueError("sensor/LED assignment must be a bijection")
        pts = np.array([m.position for m in self.markers])
        if len(pts) >= 3:
            spans = pts[1:] - pts[0]
            if np.linalg.matrix_rank(spans, tol=1e-9) < 2:
                raise ValueError("marker positions must be non-collinear")
        # Per-sensor arrays cached for the vectorized measurement and
        # Jacobian paths; markers are reordered to match sensor order.
        paired = [self.markers[s.led_id] for s in self.sensors]
        self._sensor_pos = np.array([s.pose.position for s in self.sensors])
        self._sensor_rot_t = np.array([s.pose.rotation().T
                                       for s in self.sensors])
        self._focal = np.array([s.focal_length for s in self.sensors])
        self._half_width = np.array([s.active_half_width
                                     for s in self.sensors])
        self._noise_std = np.array([s.noise_std for s in self.sensors])
        self._cos_half = np.array([np.cos(m.half_angle) for m in paired])
        self._marker_pos = np.array([m.position for m in paired])
        self._marker_axis = np.array([m.emission_axis for m in paired])


def _aimed_quaternion(position: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Orientation whose +z axis points from ``position`` at ``target``."""
    direction = target - position
    direction = direction / np.linalg.norm(direction)
    z0 = np.array([0.0, 0.0, 1.0])
    c = float(np.dot(z0, direction))
    if c > 1.0 - 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])
    if c < -1.0 + 1e-12:
        return np.array([0.0, 1.0, 0.0, 0.0])
    axis = np.cross(z0, direction)
    axis /= np.linalg.norm(axis)
    return quat_from_axis_angle(axis, float(np.arccos(c)))


def default_rig(noise_std: float = DEFAULT_NOISE_STD) -> SensingRig:
    """Three sensors at 120 degree spacing, each aimed at its own LED's
    nominal hover position, paired with outward-leaning LEDs on the handle
    top.  Geometry chosen numerically so every LED stays visible and on the
    active area over the rated motion range while image noise maps to tens
    of micrometers of pose error."""
    sensors = []
    markers = []
    for k in range(3):
        phi = 2.0 * np.pi * k / 3.0
        c, s = np.cos(phi), np.sin(phi)
        marker_pos = np.array([LED_RADIUS * c, LED_RADIUS * s, LED_HEIGHT])
        axis = np.array([np.sin(LED_TILT) * c, np.sin(LED_TILT) * s,
                         np.cos(LED_TILT)])
        markers.append(LedMarker(marker_pos, axis))
        center = np.array([SENSOR_RADIUS * c, SENSOR_RADIUS * s, SENSOR_HEIGHT])
        aim = AIM_POINT + marker_pos
        sensors.append(PsdSensor(Pose(center, _aimed_quaternion(center, aim)),
                                 led_id=k, noise_std=noise_std))
    return SensingRig(sensors, markers)


def project_led(sensor: PsdSensor, led_world: np.ndarray,
                led_axis_world: np.ndarray,
                half_angle: float = LED_HALF_ANGLE) -> PsdReading:
    """Pinhole projection of one LED onto the sensor's image plane.

    The reading is invalid when the LED sits behind the image plane or the
    sensor lies outside the LED's emission cone; each image axis is further
    flagged invalid when it leaves the active area.
    """
    p = sensor.pose.inverse_transform_points(np.asarray(led_world, dtype=float))
    if p[2] <= 0:
        return PsdReading(0.0, 0.0, False, False)
    to_sensor = sensor.pose.position - led_world
    cos_cone = float(np.dot(to_sensor, led_axis_world) / np.linalg.norm(to_sensor))
    if cos_cone < np.cos(half_angle):
        return PsdReading(0.0, 0.0, False, False)
    u = sensor.focal_length * p[0] / p[2]
    v = sensor.focal_length * p[1] / p[2]
    w = sensor.active_half_width
    return PsdReading(float(u), float(v), bool(abs(u) <= w), bool(abs(v) <= w))


def forward_measure(handle_pose: Pose, rig: SensingRig,
                    noise_seed: int | None = None,
                    timestamp: float = 0.0) -> PsdReadingSet:
    """Simulated readings for all sensors, with seeded image-plane noise."""
    R = handle_pose.rotation()
    n = len(rig.sensors)
    uv = np.empty((n, 2))
    visible = np.empty(n, dtype=np.int64)
    psd_project(rig._sensor_rot_t, rig._sensor_pos, rig._focal,
                rig._cos_half, rig._marker_pos, rig._marker_axis, R,
                handle_pose.position, uv, visible)
    visible = visible.astype(bool)
    if np.any(rig._noise_std > 0):
        rng = np.random.default_rng(noise_seed)
        uv = uv + rng.standard_normal(uv.shape) * rig._noise_std[:, None]
        uv[~visible] = 0.0
    on_area = np.abs(uv) <= rig._half_width[:, None]
    readings = [PsdReading(float(uv[k, 0]), float(uv[k, 1]),
                           bool(visible[k] and on_area[k, 0]),
                           bool(visible[k] and on_area[k, 1]))
                for k in range(len(rig.sensors))]
    return PsdReadingSet(readings, timestamp)


def _residual_rows(pose: Pose, rig: SensingRig, readings: PsdReadingSet):
    """Stacked image-plane residuals and their analytic Jacobian.

    State is (position, rotation-vector increment) applied on the left of
    the current quaternion; rows for invalid scalar measurements are
    omitted.  Residual rows are (measured - predicted).
    """
    n = len(rig.sensors)
    meas = np.array([[r.u, r.v] for r in readings.readings])
    mask = np.array([[r.valid_u, r.valid_v] for r in readings.readings],
                    dtype=bool).reshape(-1)
    rows = np.empty(2 * n)
    jac = np.empty((2 * n, 6))
    count = psd_residual_rows(rig._sensor_rot_t, rig._sensor_pos, rig._focal,
                              rig._marker_pos, pose.rotation(),
                              pose.position, meas, mask, rows, jac)
    return rows[:count], jac[:count]


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def estimate_pose(readings: PsdReadingSet, prior: Pose, rig: SensingRig,
                  max_iterations: int = MAX_ITERATIONS,
                  step_tolerance: float = STEP_TOLERANCE) -> PoseEstimate:
    """Recover the handle pose from PSD readings, warm-started at ``prior``.

    Gauss-Newton on (position, rotation-vector increment) with a Levenberg
    damping parameter that grows tenfold when the residual increases and
    shrinks tenfold when it decreases.
    """
    if readings.valid_count() < 5:
        raise ObservabilityError(
            f"only {readings.valid_count()} of 6 scalar measurements valid")
    meas = np.array([[r.u, r.v] for r in readings.readings])
    mask = np.array([[r.valid_u, r.valid_v] for r in readings.readings],
                    dtype=bool).reshape(-1)
    pos = prior.position.copy()
    quat = prior.quaternion.copy()
    rms, iterations, status, best_pos, best_quat, best_rms = gn_estimate(
        rig._sensor_rot_t, rig._sensor_pos, rig._focal, rig._marker_pos,
        meas, mask, pos, quat, max_iterations, step_tolerance,
        INITIAL_DAMPING)
    if status == 2:
        best = PoseEstimate(Pose(best_pos, best_quat), best_rms,
                            iterations, False)
        raise EstimatorDivergenceError(
            "residual grew three consecutive iterations", best)
    return PoseEstimate(Pose(pos, quat), float(rms), int(iterations),
                        status == 1)
