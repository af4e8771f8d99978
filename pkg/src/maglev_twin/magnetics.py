"""Electromagnetics of the iron-core coil array and the levitated magnets.

Model summary
-------------
* Each coil winding is an annulus of circular filament loops; its field is
  evaluated with the exact elliptic-integral loop formulas (equivalent to
  Biot-Savart quadrature of the winding volume).
* Each iron core is represented as a uniformly magnetized cylinder whose
  magnetization follows a tanh saturation law of the axial excitation H at
  the core; externally the core is a cloud of point dipoles spread along
  the core axis, which keeps magnet<->core forces exactly reciprocal.
* Each handle magnet is a cloud of point dipoles distributed over the
  magnet volume (near-field accuracy at ~10 mm standoffs).

Forces on the handle are Sum_d grad(m_d . B) over the magnet dipole cloud,
with core magnetizations held fixed during the gradient; torques are taken
about the handle frame origin (the handle COM for the default handle).

Coil frame convention: ``base_position`` is the point on the coil axis at
the core-top plane; the winding occupies local z in [-height, 0] and the
core occupies local z in [-core.height, 0].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.special import ellipe, ellipk

from .geometry import Pose

try:
    from . import _kernels
except ImportError:  # numba unavailable: fall back to the numpy path
    _kernels = None

MU0 = 4.0e-7 * math.pi

# winding quadrature discretization (converged to <0.1% in self-test)
N_RADIAL = 20
N_AXIAL = 27
# point dipoles along each core axis
CORE_CLOUD_POINTS = 7
# finite-difference step for field gradients on the quadrature path [m]
GRADIENT_STEP = 1.0e-5


class MagneticsDomainError(ValueError):
    """Field requested inside a winding or core volume."""


class GridCoverageError(ValueError):
    """Pose requires field samples outside the precomputed grid."""

    def __init__(self, message: str, coil_index: int | None = None,
                 point_index: int | None = None):
        super().__init__(message)
        self.coil_index = coil_index
        self.point_index = point_index


@dataclass(frozen=True)
class CoreModel:
    height: float = 0.037
    diameter: float = 0.008
    m_sat: float = 1.6e6          # A/m
    chi_a: float = 25.0           # apparent (demagnetizing-limited) susceptibility
    enabled: bool = True

    def __post_init__(self):
        if self.height <= 0 or self.diameter <= 0:
            raise ValueError("core dimensions must be positive")
        if self.m_sat <= 0 or self.chi_a <= 0:
            raise ValueError("m_sat and chi_a must be positive")

    @property
    def volume(self) -> float:
        return math.pi * (self.diameter / 2.0) ** 2 * self.height


@dataclass(frozen=True)
class CylindricalCoil:
    base_position: tuple = (0.0, 0.0, 0.0)
    axis: tuple = (0.0, 0.0, 1.0)
    height: float = 0.027
    outer_diameter: float = 0.025
    inner_diameter: float = 0.0125
    turns: int = 1000
    max_current: float = 4.0
    core: CoreModel = field(default_factory=CoreModel)

    def __post_init__(self):
        if not self.inner_diameter < self.outer_diameter:
            raise ValueError("inner_diameter must be smaller than outer_diameter")
        if self.height <= 0:
            raise ValueError("height must be positive")
        if self.turns < 1:
            raise ValueError("turns must be >= 1")
        if self.max_current <= 0:
            raise ValueError("max_current must be positive")
        axis = np.asarray(self.axis, dtype=float)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError("axis must be a unit vector")

    @property
    def position(self) -> np.ndarray:
        return np.asarray(self.base_position, dtype=float)

    def geometry_key(self) -> tuple:
        """Geometry-only identity (excludes placement), used for shared caches."""
        return (self.height, self.outer_diameter, self.inner_diameter, self.turns,
                self.core.height, self.core.diameter, self.core.m_sat,
                self.core.chi_a, self.core.enabled)


@dataclass(frozen=True)
class PermanentMagnet:
    thickness: float = 0.00902
    diameter: float = 0.01905
    remanence: float = 1.45       # T, N52 nominal
    moment_direction: tuple = (0.0, 0.0, 1.0)
    attach_point: tuple = (0.0, 0.0, 0.0)
    cloud: tuple = ()             # ((offset xyz, partial moment A.m^2), ...)

    def __post_init__(self):
        if self.thickness <= 0 or self.diameter <= 0 or self.remanence <= 0:
            raise ValueError("magnet parameters must be positive")
        d = np.asarray(self.moment_direction, dtype=float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("moment_direction must be a unit vector")
        if not self.cloud:
            object.__setattr__(self, "cloud", _default_magnet_cloud(self))
        total = sum(p for _, p in self.cloud)
        if abs(total - self.total_moment) > 1e-9 * self.total_moment:
            raise ValueError("dipole cloud moments must sum to Br*V/mu0")

    @property
    def volume(self) -> float:
        return math.pi * (self.diameter / 2.0) ** 2 * self.thickness

    @property
    def total_moment(self) -> float:
        return self.remanence * self.volume / MU0

    def cloud_arrays(self) -> tuple:
        """(offsets (D,3), moment vectors (D,3)) in the handle frame."""
        attach = np.asarray(self.attach_point, dtype=float)
        axis = np.asarray(self.moment_direction, dtype=float)
        offsets = np.array([attach + np.asarray(o, dtype=float) for o, _ in self.cloud])
        moments = np.array([p * axis for _, p in self.cloud])
        return offsets, moments


def _default_magnet_cloud(magnet: PermanentMagnet) -> tuple:
    """2x2x2 dipole cloud spread over the magnet volume, axes along the moment."""
    axis = np.asarray(magnet.moment_direction, dtype=float)
    # orthonormal basis with e3 = moment axis
    ref = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    a = magnet.diameter / 4.0
    c = magnet.thickness / 4.0
    partial = magnet.total_moment / 8.0
    cloud = []
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                offset = sx * a * e1 + sy * a * e2 + sz * c * axis
                cloud.append((tuple(offset), partial))
    return tuple(cloud)


@dataclass
class Wrench:
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float)
        self.torque = np.asarray(self.torque, dtype=float)
        if not (np.all(np.isfinite(self.force)) and np.all(np.isfinite(self.torque))):
            raise ValueError("wrench components must be finite")

    def vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])

    @staticmethod
    def from_vector(v: np.ndarray) -> "Wrench":
        v = np.asarray(v, dtype=float)
        return Wrench(v[:3], v[3:6])


# ---------------------------------------------------------------------------
# elementary sources
# ---------------------------------------------------------------------------

def loop_field_rz(a, z_loop, r, z):
    """(Br, Bz) in T per ampere of circular filament loops.

    ``a``/``z_loop`` are loop radii and axial positions with shape (L,);
    ``r``/``z`` are evaluation points with shape (N,).  Result is summed
    over loops: shape (N,).
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))[None, :]
    zl = np.atleast_1d(np.asarray(z_loop, dtype=float))[None, :]
    r = np.atleast_1d(np.asarray(r, dtype=float))[:, None]
    z = np.atleast_1d(np.asarray(z, dtype=float))[:, None]
    dz = z - zl
    r_safe = np.maximum(r, 1e-12)
    q = (a + r_safe) ** 2 + dz * dz
    m = 4.0 * a * r_safe / q
    K = ellipk(m)
    E = ellipe(m)
    denom = (a - r_safe) ** 2 + dz * dz
    front = MU0 / (2.0 * math.pi * np.sqrt(q))
    bz = front * (K + E * (a * a - r_safe * r_safe - dz * dz) / denom)
    br = front * (dz / r_safe) * (-K + E * (a * a + r_safe * r_safe + dz * dz) / denom)
    br = np.where(r < 1e-9, 0.0, br)
    return br.sum(axis=1), bz.sum(axis=1)


@lru_cache(maxsize=8)
def _winding_loops(height: float, outer_diameter: float, inner_diameter: float,
                   turns: int) -> tuple:
    """Loop radii, axial positions, and per-loop turn fraction for a winding."""
    radii = inner_diameter / 2.0 + (outer_diameter - inner_diameter) / 2.0 * \
        (np.arange(N_RADIAL) + 0.5) / N_RADIAL
    zs = -height * (np.arange(N_AXIAL) + 0.5) / N_AXIAL
    rr, zz = np.meshgrid(radii, zs, indexing="ij")
    weight = turns / (N_RADIAL * N_AXIAL)
    return rr.ravel(), zz.ravel(), weight


def winding_field_rz(coil: CylindricalCoil, r, z, chunk: int = 4096):
    """(Br, Bz) per ampere of the full winding at coil-local (r, z) points."""
    loops_r, loops_z, weight = _winding_loops(
        coil.height, coil.outer_diameter, coil.inner_diameter, coil.turns)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    br = np.empty_like(r)
    bz = np.empty_like(r)
    for i in range(0, r.size, chunk):
        s = slice(i, i + chunk)
        br[s], bz[s] = loop_field_rz(loops_r, loops_z, r[s], z[s])
    return br * weight, bz * weight


def dipole_field(points: np.ndarray, dip_pos: np.ndarray,
                 dip_moments: np.ndarray) -> np.ndarray:
    """B (N,3) at ``points`` from point dipoles at ``dip_pos`` with ``dip_moments``."""
    points = np.atleast_2d(points)
    dip_pos = np.atleast_2d(dip_pos)
    dip_moments = np.atleast_2d(dip_moments)
    rvec = points[:, None, :] - dip_pos[None, :, :]           # (N, D, 3)
    r2 = np.einsum("ndk,ndk->nd", rvec, rvec)
    r2 = np.maximum(r2, 1e-18)
    inv_r = 1.0 / np.sqrt(r2)
    rhat = rvec * inv_r[:, :, None]
    mdotr = np.einsum("dk,ndk->nd", dip_moments, rhat)
    term = 3.0 * mdotr[:, :, None] * rhat - dip_moments[None, :, :]
    B = (MU0 / (4.0 * math.pi)) * term * (inv_r ** 3)[:, :, None]
    return B.sum(axis=1)


def core_cloud_local(core: CoreModel) -> np.ndarray:
    """Core dipole sample points (K,3) in the coil-local frame."""
    zs = -core.height * (np.arange(CORE_CLOUD_POINTS) + 0.5) / CORE_CLOUD_POINTS
    pts = np.zeros((CORE_CLOUD_POINTS, 3))
    pts[:, 2] = zs
    return pts


def core_unit_field(core: CoreModel, points_local: np.ndarray) -> np.ndarray:
    """B (N,3) of the core cloud per unit total moment (1 A.m^2 along +z)."""
    cloud = core_cloud_local(core)
    moments = np.zeros_like(cloud)
    moments[:, 2] = 1.0 / CORE_CLOUD_POINTS
    return dipole_field(points_local, cloud, moments)


def core_induced_moment(core: CoreModel, axial_H: float):
    """Induced core dipole moment (A.m^2, along the coil axis).

    Saturating law m = V*M_sat*tanh(chi_a*H/M_sat): odd, monotone, bounded
    by V*M_sat.  Accepts scalars or arrays.
    """
    if not core.enabled:
        return np.zeros_like(np.asarray(axial_H, dtype=float))
    return core.volume * core.m_sat * np.tanh(
        core.chi_a * np.asarray(axial_H, dtype=float) / core.m_sat)


@lru_cache(maxsize=8)
def _self_excitation_per_amp(geom_key: tuple) -> float:
    """Mean axial H (A/m per A) of the winding over the core sample points."""
    height, od, idm, turns, core_h, core_d, m_sat, chi_a, enabled = geom_key
    coil = CylindricalCoil(height=height, outer_diameter=od, inner_diameter=idm,
                           turns=turns,
                           core=CoreModel(core_h, core_d, m_sat, chi_a, enabled))
    pts = core_cloud_local(coil.core)
    _, bz = winding_field_rz(coil, np.zeros(len(pts)), pts[:, 2])
    return float(np.mean(bz)) / MU0


def self_excitation_per_amp(coil: CylindricalCoil) -> float:
    return _self_excitation_per_amp(coil.geometry_key())


def _point_inside_coil(coil: CylindricalCoil, local: np.ndarray) -> bool:
    r = math.hypot(local[0], local[1])
    z = local[2]
    in_winding = (coil.inner_diameter / 2.0 <= r <= coil.outer_diameter / 2.0
                  and -coil.height <= z <= 0.0)
    in_core = (r <= coil.core.diameter / 2.0 and -coil.core.height <= z <= 0.0)
    return in_winding or in_core


def _coil_local_frame(coil: CylindricalCoil) -> np.ndarray:
    """Rotation matrix whose columns are the coil-local axes in base frame."""
    e3 = np.asarray(coil.axis, dtype=float)
    ref = np.array([1.0, 0.0, 0.0]) if abs(e3[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(ref, e3)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)
    return np.column_stack([e1, e2, e3])


def coil_field_quadrature(coil: CylindricalCoil, current: float, point,
                          external_axial_H: float = 0.0) -> np.ndarray:
    """B (3,) in the base frame: winding quadrature plus induced-core field.

    ``external_axial_H`` is additional axial excitation at the core (e.g.
    from the handle magnets); the core responds to the sum of it and the
    winding's own excitation.
    """
    point = np.asarray(point, dtype=float)
    R = _coil_local_frame(coil)
    local = R.T @ (point - coil.position)
    if _point_inside_coil(coil, local):
        raise MagneticsDomainError(
            f"field point {point.tolist()} lies inside the winding/core volume")
    r = math.hypot(local[0], local[1])
    br, bz = winding_field_rz(coil, np.array([r]), np.array([local[2]]))
    phi = math.atan2(local[1], local[0]) if r > 1e-12 else 0.0
    b_local = current * np.array([br[0] * math.cos(phi), br[0] * math.sin(phi), bz[0]])
    if coil.core.enabled:
        h = self_excitation_per_amp(coil) * current + external_axial_H
        m_core = float(core_induced_moment(coil.core, h))
        b_local = b_local + m_core * core_unit_field(coil.core, local[None, :])[0]
    return R @ b_local


# ---------------------------------------------------------------------------
# coil array layout and handle magnets
# ---------------------------------------------------------------------------

COIL_PITCH = 0.027  # Table-1 OD 25 mm + 2 mm separation


def default_coil_array(core: CoreModel | None = None) -> list:
    """3x4 planar grid, vertical axes, core tops on the z = 0 plane."""
    core = core or CoreModel()
    coils = []
    xs = (np.arange(4) - 1.5) * COIL_PITCH
    ys = (np.arange(3) - 1.0) * COIL_PITCH
    for y in ys:
        for x in xs:
            coils.append(CylindricalCoil(base_position=(x, y, 0.0), core=core))
    return coils


def default_handle_magnets(spacing: float = 0.06, remanence: float = 1.45) -> list:
    """Two magnets on the handle x axis, both moments along handle +z."""
    half = spacing / 2.0
    return [
        PermanentMagnet(remanence=remanence, attach_point=(-half, 0.0, 0.0)),
        PermanentMagnet(remanence=remanence, attach_point=(half, 0.0, 0.0)),
    ]


def magnet_cloud_arrays(magnets: list) -> tuple:
    """Stacked (offsets (D,3), moments (D,3)) in the handle frame."""
    offsets = []
    moments = []
    for mag in magnets:
        o, m = mag.cloud_arrays()
        offsets.append(o)
        moments.append(m)
    return np.vstack(offsets), np.vstack(moments)


# ---------------------------------------------------------------------------
# field backends
# ---------------------------------------------------------------------------

def _cyl_to_cart_field(x, y, br, bz):
    r = np.hypot(x, y)
    r_safe = np.maximum(r, 1e-12)
    c = np.where(r > 1e-12, x / r_safe, 1.0)
    s = np.where(r > 1e-12, y / r_safe, 0.0)
    return np.stack([br * c, br * s, bz], axis=-1)


def cyl_to_cart_field_grad(x, y, br, bz, dbr_dr, dbr_dz, dbz_dr, dbz_dz,
                           br_over_r):
    """Map axisymmetric field and derivatives to Cartesian B (N,3), G (N,3,3).

    ``br_over_r`` must be the limit dBr/dr where r -> 0.  G[i, j] = dB_i/dx_j.
    """
    r = np.hypot(x, y)
    r_safe = np.maximum(r, 1e-12)
    c = np.where(r > 1e-12, x / r_safe, 1.0)
    s = np.where(r > 1e-12, y / r_safe, 0.0)
    B = np.stack([br * c, br * s, bz], axis=-1)
    G = np.empty(B.shape[:-1] + (3, 3))
    G[..., 0, 0] = dbr_dr * c * c + br_over_r * s * s
    G[..., 0, 1] = (dbr_dr - br_over_r) * c * s
    G[..., 0, 2] = dbr_dz * c
    G[..., 1, 0] = G[..., 0, 1]
    G[..., 1, 1] = dbr_dr * s * s + br_over_r * c * c
    G[..., 1, 2] = dbr_dz * s
    G[..., 2, 0] = dbz_dr * c
    G[..., 2, 1] = dbz_dr * s
    G[..., 2, 2] = dbz_dz
    return B, G


class QuadratureBackend:
    """Slow exact path: elliptic-integral winding field, FD gradients."""

    def __init__(self, coil: CylindricalCoil):
        self.coil = coil

    def _field(self, pts: np.ndarray) -> tuple:
        r = np.hypot(pts[:, 0], pts[:, 1])
        br, bz = winding_field_rz(self.coil, r, pts[:, 2])
        air = _cyl_to_cart_field(pts[:, 0], pts[:, 1], br, bz)
        core = core_unit_field(self.coil.core, pts)
        return air, core

    def evaluate(self, pts: np.ndarray) -> tuple:
        """(B_air, G_air, B_core, G_core) per A / per unit core moment at
        coil-local Cartesian points (N,3)."""
        b_air, b_core = self._field(pts)
        g_air = np.empty((len(pts), 3, 3))
        g_core = np.empty((len(pts), 3, 3))
        for j in range(3):
            dp = np.zeros(3)
            dp[j] = GRADIENT_STEP
            ap, cp = self._field(pts + dp)
            am, cm = self._field(pts - dp)
            g_air[:, :, j] = (ap - am) / (2.0 * GRADIENT_STEP)
            g_core[:, :, j] = (cp - cm) / (2.0 * GRADIENT_STEP)
        return b_air, g_air, b_core, g_core


class GridBackend:
    """Fast path: precomputed (r, z) grid with stored derivative samples."""

    def __init__(self, grid):
        self.grid = grid

    def evaluate(self, pts: np.ndarray) -> tuple:
        return self.grid.evaluate_cartesian(pts)


# ---------------------------------------------------------------------------
# wrench engine
# ---------------------------------------------------------------------------

class CoilArrayModel:
    """Coil array + handle magnets with quadrature and grid field paths.

    All coils must share one geometry (layout positions may differ); the
    field grid and self-excitation constant are computed once and shared.
    """

    def __init__(self, coils: list, magnets: list, grid=None):
        if not coils:
            raise ValueError("need at least one coil")
        key = coils[0].geometry_key()
        for c in coils:
            if c.geometry_key() != key:
                raise ValueError("all coils must share one geometry")
            if abs(np.dot(np.asarray(c.axis, dtype=float), [0, 0, 1]) - 1.0) > 1e-9:
                raise ValueError("array model assumes vertical coil axes")
        self.coils = list(coils)
        self.magnets = list(magnets)
        self.positions = np.array([c.position for c in coils])     # (C,3)
        self.core = coils[0].core
        self.h_self = self_excitation_per_amp(coils[0])
        self.body_offsets, self.body_moments = magnet_cloud_arrays(magnets)
        self.grid = grid
        self._quad = QuadratureBackend(coils[0])
        self._core_pts_local = core_cloud_local(self.core)

    @property
    def n_coils(self) -> int:
        return len(self.coils)

    def attach_grid(self, grid) -> None:
        self.grid = grid

    def _local_points(self, world_pts: np.ndarray) -> np.ndarray:
        """(C, N, 3) coil-local coordinates of world points (N, 3)."""
        return world_pts[None, :, :] - self.positions[:, None, :]

    def magnet_excitation(self, dip_pos: np.ndarray, dip_moments: np.ndarray
                          ) -> np.ndarray:
        """Mean axial H (C,) at each core from the handle magnet cloud."""
        C = self.n_coils
        K = CORE_CLOUD_POINTS
        core_world = (self.positions[:, None, :]
                      + self._core_pts_local[None, :, :]).reshape(C * K, 3)
        B = dipole_field(core_world, dip_pos, dip_moments).reshape(C, K, 3)
        return B[:, :, 2].mean(axis=1) / MU0

    def pose_map(self, pose: Pose, source: str = "grid") -> "PoseWrenchMap":
        """Precompute the pose-dependent linear wrench structure."""
        R = pose.rotation()
        dip_pos = self.body_offsets @ R.T + pose.position        # (D,3)
        dip_m = self.body_moments @ R.T                          # (D,3)
        D = len(dip_pos)
        C = self.n_coils
        local = self._local_points(dip_pos).reshape(C * D, 3)
        arm = dip_pos - pose.position                            # torque about origin
        if source == "grid":
            if self.grid is None:
                raise ValueError("no field grid attached; build or load one first")
            if _kernels is not None:
                return self._pose_map_kernel(pose, local, dip_pos, dip_m, arm)
            try:
                b_air, g_air, b_core, g_core = self.grid.evaluate_cartesian(local)
            except GridCoverageError as err:
                raise self._coverage_error(err.point_index, D) from None
        elif source == "oracle":
            b_air, g_air, b_core, g_core = self._quad.evaluate(local)
        else:
            raise ValueError(f"unknown field source {source!r}")
        b_air = b_air.reshape(C, D, 3)
        g_air = g_air.reshape(C, D, 3, 3)
        b_core = b_core.reshape(C, D, 3)
        g_core = g_core.reshape(C, D, 3, 3)
        w_air = _assemble_wrench_columns(b_air, g_air, dip_m, arm)
        u_core = _assemble_wrench_columns(b_core, g_core, dip_m, arm)
        h_mag = self.magnet_excitation(dip_pos, dip_m)
        return PoseWrenchMap(self, pose, w_air, u_core, h_mag)

    def _coverage_error(self, point_index, D) -> GridCoverageError:
        coil_index = point_index // D if point_index is not None else None
        return GridCoverageError(
            f"handle pose leaves the field grid of coil {coil_index}",
            coil_index=coil_index)

    def _pose_map_kernel(self, pose, local, dip_pos, dip_m, arm):
        """Compiled fast path; numerically pinned to the numpy path by tests."""
        D = len(dip_pos)
        C = self.n_coils
        g = self.grid
        w_air = np.zeros((6, C))
        u_core = np.zeros((6, C))
        moments_flat = np.ascontiguousarray(
            np.broadcast_to(dip_m, (C, D, 3)).reshape(C * D, 3))
        arms_flat = np.ascontiguousarray(
            np.broadcast_to(arm, (C, D, 3)).reshape(C * D, 3))
        bad = _kernels.wrench_tables(
            g.stacked(), g.nr, g.nz, g.r0, g.dr, g.z0, g.dz,
            local, moments_flat, arms_flat, C, D, w_air, u_core)
        if bad >= 0:
            raise self._coverage_error(bad, D)
        K = CORE_CLOUD_POINTS
        core_world = np.ascontiguousarray(
            (self.positions[:, None, :] + self._core_pts_local[None, :, :])
            .reshape(C * K, 3))
        h_mag = _kernels.axial_excitation(core_world, dip_pos, dip_m, C, K)
        return PoseWrenchMap(self, pose, w_air, u_core, h_mag)


def _assemble_wrench_columns(B, G, moments, arms) -> np.ndarray:
    """6xC wrench per unit source strength from per-coil dipole samples.

    B: (C,D,3), G: (C,D,3,3) with G[i,j] = dB_i/dx_j; moments/arms: (D,3).
    """
    # F_d,i = sum_j m_j dB_j/dx_i  ->  G^T m
    F = np.einsum("cdji,dj->cdi", G, moments)                    # (C,D,3)
    torque = np.cross(moments[None, :, :], B) + np.cross(arms[None, :, :], F)
    return np.concatenate([F.sum(axis=1), torque.sum(axis=1)], axis=1).T


@dataclass
class PoseWrenchMap:
    """Wrench as a function of coil currents at one frozen handle pose."""

    model: CoilArrayModel
    pose: Pose
    w_air: np.ndarray      # (6, C) per ampere, winding contribution
    u_core: np.ndarray     # (6, C) per unit core moment
    h_mag: np.ndarray      # (C,) axial H at each core from the magnets

    def core_moments(self, currents: np.ndarray) -> np.ndarray:
        h = self.model.h_self * np.asarray(currents, dtype=float) + self.h_mag
        return core_induced_moment(self.model.core, h)

    def wrench_vector(self, currents: np.ndarray) -> np.ndarray:
        currents = np.asarray(currents, dtype=float)
        return self.w_air @ currents + self.u_core @ self.core_moments(currents)

    def wrench(self, currents: np.ndarray) -> Wrench:
        return Wrench.from_vector(self.wrench_vector(currents))

    def cogging_vector(self) -> np.ndarray:
        return self.u_core @ self.core_moments(np.zeros(self.model.n_coils))

    def column_matrix(self, base_currents: np.ndarray | None = None,
                      eps: float = 1.0e-3) -> np.ndarray:
        """6xC wrench per ampere of each coil's current-driven contribution.

        The saturating core makes the per-coil gain current-dependent; each
        column uses the secant gain from zero current to the coil's base
        current (so A i = wrench(i) - wrench(0) holds exactly when the base
        equals the operating currents).  At zero base the secant is taken
        over ``eps`` = 1 mA, matching a finite-difference of the wrench.
        """
        C = self.model.n_coils
        base = np.zeros(C) if base_currents is None else np.asarray(base_currents)
        i_eff = np.where(np.abs(base) > eps, base, eps * np.where(base < 0, -1.0, 1.0))
        m0 = self.core_moments(np.zeros(C))
        m1 = self.core_moments(i_eff)
        return self.w_air + self.u_core * ((m1 - m0) / i_eff)[None, :]


def wrench_on_handle(handle_pose: Pose, magnets: list, coils: list,
                     currents: np.ndarray, field_source: str = "oracle",
                     grid=None) -> Wrench:
    """Wrench (about the handle frame origin) for a given current vector."""
    model = CoilArrayModel(coils, magnets, grid=grid)
    return model.pose_map(handle_pose, source=field_source).wrench(currents)


def zero_current_wrench(handle_pose: Pose, magnets: list, coils: list,
                        field_source: str = "oracle", grid=None) -> Wrench:
    """Cogging wrench from magnet-induced core magnetization alone."""
    model = CoilArrayModel(coils, magnets, grid=grid)
    pm = model.pose_map(handle_pose, source=field_source)
    return Wrench.from_vector(pm.cogging_vector())


def system_coenergy(model: CoilArrayModel, pose: Pose,
                    currents: np.ndarray) -> float:
    """Pose-dependent co-energy whose negative gradient is the handle force.

    U = -sum_d m_d . B_winding(p_d)
        - mu0 * V * (M_sat^2 / chi) * sum_c ln cosh(chi * H_c / M_sat)
    with H_c the total axial core excitation (winding + magnets).  Constant
    terms (magnet-magnet, winding self) are omitted; only pose-dependence
    matters for force checks.
    """
    currents = np.asarray(currents, dtype=float)
    R = pose.rotation()
    dip_pos = model.body_offsets @ R.T + pose.position
    dip_m = model.body_moments @ R.T
    D = len(dip_pos)
    local = model._local_points(dip_pos).reshape(model.n_coils * D, 3)
    r = np.hypot(local[:, 0], local[:, 1])
    br, bz = winding_field_rz(model.coils[0], r, local[:, 2])
    b_air = _cyl_to_cart_field(local[:, 0], local[:, 1], br, bz)
    b_air = b_air.reshape(model.n_coils, D, 3)
    u_air = -float(np.einsum("c,cdk,dk->", currents, b_air, dip_m))
    core = model.core
    if not core.enabled:
        return u_air
    h = model.h_self * currents + model.magnet_excitation(dip_pos, dip_m)
    scale = MU0 * core.volume * core.m_sat ** 2 / core.chi_a
    u_core = -scale * float(np.sum(np.log(np.cosh(core.chi_a * h / core.m_sat))))
    return u_air + u_core


def magnet_core_coenergy(model: CoilArrayModel, pose: Pose) -> float:
    """Interaction co-energy of magnets and passively magnetized cores.

    U = -mu0 * V * (M_sat^2 / chi) * sum_c ln cosh(chi * H_c / M_sat); the
    zero-current cogging force equals -dU/dpose.
    """
    R = pose.rotation()
    dip_pos = model.body_offsets @ R.T + pose.position
    dip_m = model.body_moments @ R.T
    h = model.magnet_excitation(dip_pos, dip_m)
    core = model.core
    if not core.enabled:
        return 0.0
    scale = MU0 * core.volume * core.m_sat ** 2 / core.chi_a
    return float(-scale * np.sum(np.log(np.cosh(core.chi_a * h / core.m_sat))))
