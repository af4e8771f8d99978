import numpy as np
import pytest

import maglev_twin.magnetics as mg
from maglev_twin.fieldgrid import (FieldGrid, build_field_grid,
                                   grid_param_hash, load_or_build_grid)
from maglev_twin.geometry import Pose, quat_from_axis_angle
from maglev_twin.magnetics import (CylindricalCoil, GridCoverageError,
                                   winding_field_rz)

COIL = CylindricalCoil()


def test_resolution_limit_enforced():
    with pytest.raises(ValueError):
        build_field_grid(COIL, resolution=2e-3)


def test_lattice_node_identity(field_grid):
    # interpolation at a node reproduces the stored quadrature sample exactly
    i, j = 40, 30
    r = field_grid.r0 + i * field_grid.dr
    z = field_grid.z0 + j * field_grid.dz
    B, _ = field_grid.sample((r, 0.0, z))
    br, bz = winding_field_rz(COIL, np.array([r]), np.array([z]))
    assert B[0] == pytest.approx(br[0], abs=0, rel=1e-15)
    assert B[2] == pytest.approx(bz[0], abs=0, rel=1e-15)


def test_cell_center_accuracy(field_grid, rng):
    # mid-cell samples against fresh quadrature, across the workspace
    for _ in range(40):
        i = rng.integers(5, field_grid.nr - 6)
        j = rng.integers(20, field_grid.nz - 6)
        r = field_grid.r0 + (i + 0.5) * field_grid.dr
        z = field_grid.z0 + (j + 0.5) * field_grid.dz
        B, _ = field_grid.sample((r, 0.0, z))
        br, bz = winding_field_rz(COIL, np.array([r]), np.array([z]))
        exact = np.array([br[0], 0.0, bz[0]])
        assert np.linalg.norm(B - exact) <= 0.01 * np.linalg.norm(exact)


def test_on_axis_gradient_symmetry(field_grid):
    _, G = field_grid.sample((0.0, 0.0, 0.03))
    assert G[0, 1] == pytest.approx(0.0, abs=1e-12)
    assert G[1, 0] == pytest.approx(0.0, abs=1e-12)


def test_coverage_error_names_coil(array_model):
    with pytest.raises(GridCoverageError) as exc:
        array_model.pose_map(Pose(position=(0.3, 0.0, 0.02)), "grid")
    assert exc.value.coil_index is not None
    assert str(exc.value.coil_index) in str(exc.value)


def test_grid_wrench_matches_oracle(array_model, rng):
    for _ in range(15):
        pose = Pose(
            position=(rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04),
                      rng.uniform(0.012, 0.04)),
            quaternion=quat_from_axis_angle(rng.normal(size=3),
                                            rng.uniform(0, 0.3)))
        I = rng.uniform(-4, 4, 12)
        wo = array_model.pose_map(pose, "oracle").wrench_vector(I)
        wg = array_model.pose_map(pose, "grid").wrench_vector(I)
        assert np.linalg.norm(wo - wg) <= 0.01 * np.linalg.norm(wo)


def test_kernel_matches_numpy_path(array_model):
    if mg._kernels is None:
        pytest.skip("numba kernels unavailable")
    pose = Pose(position=(0.01, 0.005, 0.025),
                quaternion=quat_from_axis_angle([0.3, 1, 0], 0.2))
    pm_k = array_model.pose_map(pose, "grid")
    kernels = mg._kernels
    mg._kernels = None
    try:
        pm_n = array_model.pose_map(pose, "grid")
    finally:
        mg._kernels = kernels
    assert np.allclose(pm_k.w_air, pm_n.w_air, rtol=1e-12, atol=1e-15)
    assert np.allclose(pm_k.u_core, pm_n.u_core, rtol=1e-12, atol=1e-15)
    assert np.allclose(pm_k.h_mag, pm_n.h_mag, rtol=1e-12)


def test_cache_round_trip(tmp_path):
    grid = build_field_grid(COIL, resolution=1e-3)
    path = tmp_path / "grid.bin"
    grid.save(path)
    loaded = FieldGrid.load(path)
    assert loaded.param_hash == grid.param_hash
    assert np.array_equal(loaded.air, grid.air)
    assert np.array_equal(loaded.core, grid.core)
    assert (loaded.nr, loaded.nz) == (grid.nr, grid.nz)


def test_stale_hash_forces_rebuild(tmp_path):
    path = tmp_path / "grid.bin"
    grid = build_field_grid(COIL, resolution=1e-3)
    grid.param_hash = "00" * 32  # corrupt the parameter hash
    grid.save(path)
    rebuilt = load_or_build_grid(COIL, 1e-3, cache_path=path)
    assert rebuilt.param_hash == grid_param_hash(COIL, 1e-3)
    assert FieldGrid.load(path).param_hash == rebuilt.param_hash


def test_corrupt_file_rejected(tmp_path):
    path = tmp_path / "bogus.bin"
    path.write_bytes(b"not a grid")
    with pytest.raises(ValueError):
        FieldGrid.load(path)
