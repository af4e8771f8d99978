"""Workspace capability mapping: hover feasibility and force envelopes.

For every point on an (x, y) lattice at the requested heights the map
records whether the coil array can hold the handle against gravity within
the current limit, and the largest force it can apply along each of the
six axis directions at that pose.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..allocation import ConditioningError, allocate_currents, capability
from ..geometry import Pose
from ..magnetics import CoilArrayModel, GridCoverageError
from ..plant import GRAVITY, HandleProperties
from .config import Config, build_model, build_props

CSV_COLUMNS = ["x", "y", "z", "hover_feasible",
               "cap_fx_pos", "cap_fx_neg", "cap_fy_pos", "cap_fy_neg",
               "cap_fz_pos", "cap_fz_neg"]

_DIRECTIONS = [
    np.array([1.0, 0, 0, 0, 0, 0]), np.array([-1.0, 0, 0, 0, 0, 0]),
    np.array([0, 1.0, 0, 0, 0, 0]), np.array([0, -1.0, 0, 0, 0, 0]),
    np.array([0, 0, 1.0, 0, 0, 0]), np.array([0, 0, -1.0, 0, 0, 0]),
]


def point_capability(model: CoilArrayModel, props: HandleProperties,
                     position) -> dict:
    """Hover feasibility and force capability at one handle position."""
    pose = Pose(np.asarray(position, dtype=float))
    row = {"x": pose.position[0], "y": pose.position[1],
           "z": pose.position[2],
           "hover_feasible": False,
           "caps": np.zeros(6)}
    try:
        pm = model.pose_map(pose)
        hover = np.zeros(6)
        hover[2] = props.mass * GRAVITY
        hover -= pm.cogging_vector()
        solution = allocate_currents(pm, hover)
        row["hover_feasible"] = not solution.saturated
        row["caps"] = np.array([capability(pm, d) for d in _DIRECTIONS])
    except (GridCoverageError, ConditioningError):
        pass    # outside the modeled field volume: infeasible, zero force
    return row


def capability_map(config: Config, heights, grid_step: float,
                   out_path=None, half_extent: float = 0.06,
                   model: CoilArrayModel | None = None) -> list:
    """Capability rows over an (x, y) lattice at each height.

    The lattice spans ``[-half_extent, half_extent]`` in x and y with
    spacing ``grid_step``.  Returns the row dicts; when ``out_path`` is
    given, also writes them as CSV in a fixed column order.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    if model is None:
        model = build_model(config)
    props = build_props(config)
    n = int(np.floor(half_extent / grid_step + 1e-9))
    axis = np.arange(-n, n + 1) * grid_step
    rows = []
    for z in heights:
        for y in axis:
            for x in axis:
                rows.append(point_capability(model, props, (x, y, z)))
    if out_path is not None:
        write_capability_csv(rows, out_path)
    return rows


def write_capability_csv(rows: list, out_path) -> None:
    path = Path(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            cells = [format(row["x"], ".17g"), format(row["y"], ".17g"),
                     format(row["z"], ".17g"),
                     str(int(row["hover_feasible"]))]
            cells += [format(c, ".17g") for c in row["caps"]]
            fh.write(",".join(cells) + "\n")
