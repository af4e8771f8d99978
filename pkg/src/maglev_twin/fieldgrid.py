"""Precomputed per-coil field grids: the control loop's fast field path.

A grid stores the axisymmetric winding field per ampere and the core-cloud
field per unit core moment on an (r, z) lattice in the coil-local frame,
together with their first derivatives (computed once on the lattice).  At
runtime samples are bilinear in all stored quantities, so interpolated
gradients keep second-order accuracy across the whole cell, not just at
its center.

Grids are persisted to a binary cache file: a header carrying a parameter
hash, dimensions, and ranges, followed by the row-major float64 samples.
A stale hash forces a rebuild.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .magnetics import (CylindricalCoil, GridCoverageError, core_unit_field,
                        cyl_to_cart_field_grad, winding_field_rz)

MAGIC = b"MAGLEVGRID1\x00"

# build ranges: slightly wider than the declared coverage
# (r in [0, 0.12] m, z in [0.002, 0.08] m above the coil top; radial margin
# covers magnet-cloud excursions at the workspace corners)
R_MAX = 0.145
Z_MIN = 0.001
Z_MAX = 0.086

# stored per contribution: Br, Bz, dBr/dr, dBr/dz, dBz/dr, dBz/dz
N_CHANNELS = 6


@dataclass
class FieldGrid:
    r0: float
    dr: float
    nr: int
    z0: float
    dz: float
    nz: int
    air: np.ndarray    # (6, nr, nz) per ampere
    core: np.ndarray   # (6, nr, nz) per unit core moment
    param_hash: str

    def stacked(self) -> np.ndarray:
        """(12, nr*nz) contiguous channel stack (air then core) for kernels."""
        if not hasattr(self, "_stacked"):
            self._stacked = np.ascontiguousarray(np.vstack([
                self.air.reshape(N_CHANNELS, -1),
                self.core.reshape(N_CHANNELS, -1)]))
        return self._stacked

    @property
    def r1(self) -> float:
        return self.r0 + (self.nr - 1) * self.dr

    @property
    def z1(self) -> float:
        return self.z0 + (self.nz - 1) * self.dz

    # -- sampling ----------------------------------------------------------

    def _interp(self, r: np.ndarray, z: np.ndarray) -> tuple:
        """Bilinear interpolation of all channels at (r, z); returns
        (air (6,N), core (6,N))."""
        fr = (r - self.r0) / self.dr
        fz = (z - self.z0) / self.dz
        ir = np.clip(fr.astype(int), 0, self.nr - 2)
        iz = np.clip(fz.astype(int), 0, self.nz - 2)
        tr = fr - ir
        tz = fz - iz
        w00 = (1 - tr) * (1 - tz)
        w10 = tr * (1 - tz)
        w01 = (1 - tr) * tz
        w11 = tr * tz
        out = []
        for arr in (self.air, self.core):
            vals = (arr[:, ir, iz] * w00 + arr[:, ir + 1, iz] * w10
                    + arr[:, ir, iz + 1] * w01 + arr[:, ir + 1, iz + 1] * w11)
            out.append(vals)
        return out[0], out[1]

    def coverage_mask(self, pts: np.ndarray) -> np.ndarray:
        r = np.hypot(pts[:, 0], pts[:, 1])
        z = pts[:, 2]
        return (r <= self.r1) & (z >= self.z0) & (z <= self.z1)

    def evaluate_cartesian(self, pts: np.ndarray) -> tuple:
        """(B_air, G_air, B_core, G_core) at coil-local Cartesian points.

        Raises GridCoverageError (with the offending flat point index) when
        any point falls outside the lattice.
        """
        pts = np.atleast_2d(pts)
        ok = self.coverage_mask(pts)
        if not np.all(ok):
            idx = int(np.argmin(ok))
            raise GridCoverageError(
                f"point {pts[idx].tolist()} outside field grid coverage "
                f"(r <= {self.r1:.3f}, {self.z0:.4f} <= z <= {self.z1:.3f})",
                point_index=idx)
        r = np.hypot(pts[:, 0], pts[:, 1])
        z = pts[:, 2]
        air, core = self._interp(r, z)
        results = []
        for ch in (air, core):
            br, bz, dbr_dr, dbr_dz, dbz_dr, dbz_dz = ch
            br_over_r = np.where(r > 1e-9, br / np.maximum(r, 1e-12), dbr_dr)
            B, G = cyl_to_cart_field_grad(pts[:, 0], pts[:, 1], br, bz,
                                          dbr_dr, dbr_dz, dbz_dr, dbz_dz,
                                          br_over_r)
            results.extend([B, G])
        return tuple(results)

    def sample(self, point) -> tuple:
        """(B (3,), gradient (3,3)) per unit current at one coil-local point."""
        B, G, _, _ = self.evaluate_cartesian(np.asarray(point, dtype=float)[None, :])
        return B[0], G[0]

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        header = struct.pack("<6d2q", self.r0, self.dr, self.z0, self.dz,
                             0.0, 0.0, self.nr, self.nz)
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(bytes.fromhex(self.param_hash))
            f.write(header)
            f.write(np.ascontiguousarray(self.air, dtype=np.float64).tobytes())
            f.write(np.ascontiguousarray(self.core, dtype=np.float64).tobytes())

    @staticmethod
    def load(path) -> "FieldGrid":
        with open(path, "rb") as f:
            magic = f.read(len(MAGIC))
            if magic != MAGIC:
                raise ValueError(f"{path}: not a field grid cache file")
            param_hash = f.read(32).hex()
            r0, dr, z0, dz, _, _, nr, nz = struct.unpack("<6d2q",
                                                         f.read(6 * 8 + 2 * 8))
            count = N_CHANNELS * nr * nz
            air = np.frombuffer(f.read(count * 8), dtype=np.float64)
            core = np.frombuffer(f.read(count * 8), dtype=np.float64)
        shape = (N_CHANNELS, nr, nz)
        return FieldGrid(r0, dr, nr, z0, dz, nz,
                         air.reshape(shape).copy(), core.reshape(shape).copy(),
                         param_hash)


def grid_param_hash(coil: CylindricalCoil, resolution: float) -> str:
    payload = {
        "geometry": list(coil.geometry_key()),
        "resolution": resolution,
        "ranges": [0.0, R_MAX, Z_MIN, Z_MAX],
        "version": 1,
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def build_field_grid(coil: CylindricalCoil, resolution: float = 5.0e-4) -> FieldGrid:
    """Sample the winding and core unit fields on the coil-local lattice."""
    if resolution > 1.0e-3:
        raise ValueError("grid resolution must be <= 1 mm")
    nr = int(round(R_MAX / resolution)) + 1
    nz = int(round((Z_MAX - Z_MIN) / resolution)) + 1
    rs = np.arange(nr) * resolution
    zs = Z_MIN + np.arange(nz) * resolution
    rr, zz = np.meshgrid(rs, zs, indexing="ij")
    flat_r = rr.ravel()
    flat_z = zz.ravel()

    air_br, air_bz = winding_field_rz(coil, flat_r, flat_z)
    pts = np.column_stack([flat_r, np.zeros_like(flat_r), flat_z])
    core_field = core_unit_field(coil.core, pts)
    core_br = core_field[:, 0]
    core_bz = core_field[:, 2]

    def channels(br, bz):
        br = br.reshape(nr, nz)
        bz = bz.reshape(nr, nz)
        dbr_dr, dbr_dz = np.gradient(br, resolution, resolution)
        dbz_dr, dbz_dz = np.gradient(bz, resolution, resolution)
        return np.stack([br, bz, dbr_dr, dbr_dz, dbz_dr, dbz_dz])

    return FieldGrid(0.0, resolution, nr, Z_MIN, resolution, nz,
                     channels(air_br, air_bz), channels(core_br, core_bz),
                     grid_param_hash(coil, resolution))


def load_or_build_grid(coil: CylindricalCoil, resolution: float,
                       cache_path=None) -> FieldGrid:
    """Return a cached grid when its parameter hash matches, else rebuild."""
    expected = grid_param_hash(coil, resolution)
    if cache_path is not None:
        try:
            grid = FieldGrid.load(cache_path)
            if grid.param_hash == expected:
                return grid
        except (FileNotFoundError, ValueError):
            pass
    grid = build_field_grid(coil, resolution)
    if cache_path is not None:
        grid.save(cache_path)
    return grid
