"""Wrench-to-current allocation: damped min-norm least squares with limits.

The 6x12 wrench matrix is the incremental wrench per ampere of each coil,
linearized at the current pose (and, for the saturating cores, about the
previous tick's currents).  Torque rows are scaled by a characteristic
length before solving so the min-norm trade-off between forces and torques
is unit-balanced.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import alloc_fixed_point
from .geometry import Pose
from .magnetics import CoilArrayModel, PoseWrenchMap, Wrench

CURRENT_LIMIT = 4.0          # A, per coil (hardware amplifier limit)
DEFAULT_DAMPING = 1.0e-6
TORQUE_SCALE = 0.05          # m, characteristic arm for row balancing
LINEARIZATION_EPS = 1.0e-3   # A, secant step for the core gain


class ConditioningError(RuntimeError):
    """The damped normal equations are numerically singular."""


@dataclass
class WrenchMatrix:
    """Incremental wrench per ampere at a linearization pose."""

    entries: np.ndarray            # (6, C)
    pose: Pose

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        if self.entries.ndim != 2 or self.entries.shape[0] != 6:
            raise ValueError("wrench matrix must be 6 x n_coils")
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("wrench matrix must be finite")


@dataclass
class CurrentVector:
    currents: np.ndarray
    saturated: bool = False

    def __post_init__(self):
        self.currents = np.asarray(self.currents, dtype=float)
        if np.any(np.abs(self.currents) > CURRENT_LIMIT + 1e-12):
            raise ValueError("coil current exceeds the hardware limit")


def assemble_wrench_matrix(pose_map: PoseWrenchMap,
                           base_currents: np.ndarray | None = None
                           ) -> WrenchMatrix:
    """Wrench matrix at a precomputed pose map.

    Column j is (wrench(base + eps e_j) - wrench(base)) / eps with
    eps = 1 mA, i.e. the local secant gain including core saturation.
    """
    entries = pose_map.column_matrix(base_currents, eps=LINEARIZATION_EPS)
    return WrenchMatrix(entries, pose_map.pose)


def assemble_at_pose(model: CoilArrayModel, pose: Pose,
                     field_source: str = "grid",
                     base_currents: np.ndarray | None = None) -> WrenchMatrix:
    return assemble_wrench_matrix(model.pose_map(pose, field_source),
                                  base_currents)


def solve_currents(A: WrenchMatrix, desired: Wrench | np.ndarray,
                   limit: float = CURRENT_LIMIT,
                   damping: float = DEFAULT_DAMPING) -> CurrentVector:
    """Damped min-norm currents i = A^T (A A^T + lambda I)^-1 w.

    When any |i_j| exceeds ``limit`` the whole solution is scaled uniformly
    so max |i_j| = limit: the commanded wrench keeps its direction but
    loses magnitude, and the saturated flag is set.
    """
    if damping < 0:
        raise ValueError("damping must be >= 0")
    w = desired.vector() if isinstance(desired, Wrench) else np.asarray(desired)
    scale = np.ones(6)
    scale[3:] = 1.0 / TORQUE_SCALE
    As = A.entries * scale[:, None]
    ws = w * scale
    gram = As @ As.T + damping * np.eye(6)
    # cond(gram) = cond(A)^2 when undamped; reject above 1e28 so the
    # effective matrix condition stays below 1e14.
    evals = np.linalg.eigvalsh(gram)
    if evals[-1] <= 0 or evals[0] <= evals[-1] * 1e-28 \
            or not np.all(np.isfinite(evals)):
        raise ConditioningError("normal equations ill-conditioned")
    try:
        y = np.linalg.solve(gram, ws)
    except np.linalg.LinAlgError as err:
        raise ConditioningError(f"normal equations singular: {err}") from None
    currents = As.T @ y
    saturated = False
    peak = np.max(np.abs(currents)) if currents.size else 0.0
    if peak > limit:
        currents = currents * (limit / peak)
        saturated = True
    return CurrentVector(currents, saturated)


def allocate_currents(pose_map: PoseWrenchMap, desired: Wrench | np.ndarray,
                      base_currents: np.ndarray | None = None,
                      limit: float = CURRENT_LIMIT,
                      damping: float = DEFAULT_DAMPING,
                      iterations: int = 4,
                      tol: float = 1.0e-6) -> CurrentVector:
    """Currents whose current-driven wrench matches ``desired``.

    Wraps :func:`solve_currents` in a short fixed-point loop: the wrench
    matrix is re-linearized about each trial solution so the secant gain of
    the saturating cores is evaluated at the operating currents rather than
    at zero.  Warm-starting with the previous tick's currents via
    ``base_currents`` typically converges in one step.
    """
    if damping < 0:
        raise ValueError("damping must be >= 0")
    base = np.zeros(pose_map.model.n_coils) if base_currents is None \
        else np.asarray(base_currents, dtype=float)
    w = desired.vector() if isinstance(desired, Wrench) \
        else np.asarray(desired, dtype=float)
    core = pose_map.model.core
    currents, saturated, status = alloc_fixed_point(
        pose_map.w_air, pose_map.u_core, pose_map.h_mag,
        pose_map.model.h_self, core.volume, core.m_sat, core.chi_a,
        core.enabled, w, base, limit, damping, iterations, tol,
        TORQUE_SCALE, LINEARIZATION_EPS)
    if status != 0:
        raise ConditioningError("normal equations ill-conditioned")
    return CurrentVector(currents, bool(saturated))


def capability(A: WrenchMatrix | PoseWrenchMap, direction: np.ndarray,
               limit: float = CURRENT_LIMIT,
               damping: float = DEFAULT_DAMPING,
               resolution: float = 1.0e-3, max_magnitude: float = 64.0) -> float:
    """Largest wrench magnitude along ``direction`` solvable unsaturated.

    ``direction`` is a unit 6-vector; bisection refines to ``resolution``.
    Passing a pose map instead of a fixed matrix makes the feasibility
    check re-linearize the core gain at each trial solution.
    """
    direction = np.asarray(direction, dtype=float)
    n = np.linalg.norm(direction)
    if not np.isclose(n, 1.0, rtol=1e-6):
        raise ValueError("direction must be a unit wrench")

    if isinstance(A, PoseWrenchMap):
        pose_map = A
        warm = np.zeros(pose_map.model.n_coils)

        def unsaturated(alpha: float) -> bool:
            sol = allocate_currents(pose_map, alpha * direction,
                                    warm, limit, damping)
            if not sol.saturated:
                warm[:] = sol.currents
            return not sol.saturated
    else:
        def unsaturated(alpha: float) -> bool:
            return not solve_currents(A, alpha * direction, limit, damping).saturated

    lo = 0.0
    hi = resolution
    while hi < max_magnitude and unsaturated(hi):
        lo = hi
        hi *= 2.0
    if hi >= max_magnitude:
        return max_magnitude
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if unsaturated(mid):
            lo = mid
        else:
            hi = mid
    return lo
