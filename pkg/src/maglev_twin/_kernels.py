"""Compiled hot-path kernels for the 2 kHz control loop.

These duplicate the numpy grid-sampling / wrench-assembly math in
``fieldgrid``/``magnetics`` with fused loops; tests pin them against the
numpy reference to 1e-12.  Only the grid fast path uses them.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

MU0_OVER_4PI = 1.0e-7


@njit(cache=True)
def wrench_tables(chan, nr, nz, r0, dr, z0, dz, pts, moments, arms,
                  n_coils, n_dip, w_air, u_core):
    """Accumulate per-coil wrench tables from bilinear grid samples.

    chan: (12, nr*nz) stacked channels, air then core, each
          (Br, Bz, dBr/dr, dBr/dz, dBz/dr, dBz/dz).
    pts/moments/arms: (n_coils*n_dip, 3) coil-local points, magnet dipole
          moments, and torque arms (world-aligned axes).
    w_air/u_core: (6, n_coils) outputs, zeroed by the caller.

    Returns -1 on success or the first out-of-coverage point index.
    """
    r_max = r0 + (nr - 1) * dr
    z_max = z0 + (nz - 1) * dz
    for n in range(n_coils * n_dip):
        x = pts[n, 0]
        y = pts[n, 1]
        zp = pts[n, 2]
        r = math.sqrt(x * x + y * y)
        if r > r_max or zp < z0 or zp > z_max:
            return n
        fr = (r - r0) / dr
        fz = (zp - z0) / dz
        ir = int(fr)
        iz = int(fz)
        if ir > nr - 2:
            ir = nr - 2
        if iz > nz - 2:
            iz = nz - 2
        tr = fr - ir
        tz = fz - iz
        w00 = (1.0 - tr) * (1.0 - tz)
        w10 = tr * (1.0 - tz)
        w01 = (1.0 - tr) * tz
        w11 = tr * tz
        i00 = ir * nz + iz
        i10 = i00 + nz
        i01 = i00 + 1
        i11 = i10 + 1
        if r > 1e-12:
            cphi = x / r
            sphi = y / r
        else:
            cphi = 1.0
            sphi = 0.0
        mx = moments[n, 0]
        my = moments[n, 1]
        mz = moments[n, 2]
        ax = arms[n, 0]
        ay = arms[n, 1]
        az = arms[n, 2]
        c = n // n_dip
        for block in range(2):
            o = 6 * block
            br = (chan[o, i00] * w00 + chan[o, i10] * w10
                  + chan[o, i01] * w01 + chan[o, i11] * w11)
            bz = (chan[o + 1, i00] * w00 + chan[o + 1, i10] * w10
                  + chan[o + 1, i01] * w01 + chan[o + 1, i11] * w11)
            dbr_dr = (chan[o + 2, i00] * w00 + chan[o + 2, i10] * w10
                      + chan[o + 2, i01] * w01 + chan[o + 2, i11] * w11)
            dbr_dz = (chan[o + 3, i00] * w00 + chan[o + 3, i10] * w10
                      + chan[o + 3, i01] * w01 + chan[o + 3, i11] * w11)
            dbz_dr = (chan[o + 4, i00] * w00 + chan[o + 4, i10] * w10
                      + chan[o + 4, i01] * w01 + chan[o + 4, i11] * w11)
            dbz_dz = (chan[o + 5, i00] * w00 + chan[o + 5, i10] * w10
                      + chan[o + 5, i01] * w01 + chan[o + 5, i11] * w11)
            if r > 1e-9:
                br_over_r = br / r
            else:
                br_over_r = dbr_dr
            bx = br * cphi
            by = br * sphi
            g00 = dbr_dr * cphi * cphi + br_over_r * sphi * sphi
            g01 = (dbr_dr - br_over_r) * cphi * sphi
            g02 = dbr_dz * cphi
            g11 = dbr_dr * sphi * sphi + br_over_r * cphi * cphi
            g12 = dbr_dz * sphi
            g20 = dbz_dr * cphi
            g21 = dbz_dr * sphi
            g22 = dbz_dz
            # F_i = sum_j m_j dB_j/dx_i
            fx = mx * g00 + my * g01 + mz * g20
            fy = mx * g01 + my * g11 + mz * g21
            fz2 = mx * g02 + my * g12 + mz * g22
            # tau = m x B + arm x F
            tx = my * bz - mz * by + ay * fz2 - az * fy
            ty = mz * bx - mx * bz + az * fx - ax * fz2
            tz2 = mx * by - my * bx + ax * fy - ay * fx
            out = w_air if block == 0 else u_core
            out[0, c] += fx
            out[1, c] += fy
            out[2, c] += fz2
            out[3, c] += tx
            out[4, c] += ty
            out[5, c] += tz2
    return -1


@njit(cache=True)
def axial_excitation(core_pts, dip_pos, dip_m, n_coils, n_core) -> np.ndarray:
    """Mean axial H per coil at core sample points from magnet dipoles."""
    h = np.zeros(n_coils)
    n_dip = dip_pos.shape[0]
    for i in range(n_coils * n_core):
        bz = 0.0
        for d in range(n_dip):
            rx = core_pts[i, 0] - dip_pos[d, 0]
            ry = core_pts[i, 1] - dip_pos[d, 1]
            rz = core_pts[i, 2] - dip_pos[d, 2]
            r2 = rx * rx + ry * ry + rz * rz
            if r2 < 1e-18:
                r2 = 1e-18
            inv_r = 1.0 / math.sqrt(r2)
            rhx = rx * inv_r
            rhy = ry * inv_r
            rhz = rz * inv_r
            mdotr = (dip_m[d, 0] * rhx + dip_m[d, 1] * rhy + dip_m[d, 2] * rhz)
            bz += MU0_OVER_4PI * (3.0 * mdotr * rhz - dip_m[d, 2]) * inv_r ** 3
        h[i // n_core] += bz
    mu0 = 4.0 * math.pi * 1.0e-7
    return h / (n_core * mu0)


@njit(cache=True)
def integrate_rigid(pos, quat, v, w, force, torque, mass, inertia,
                    inertia_inv, h, substeps, screen_height):
    """Semi-implicit Euler substeps for the free handle (arrays mutated).

    Velocity updates use the Newton-Euler equations with the gyroscopic
    torque evaluated at a half-step midpoint; the position update is a
    trapezoid of the old and new velocity and the quaternion is advanced
    by the body-frame rotation increment and renormalized.  Returns 1 if
    the screen surface was hit during any substep.
    """
    on_screen = 0
    for _ in range(substeps):
        qw, qx, qy, qz = quat[0], quat[1], quat[2], quat[3]
        # tau_body = R^T torque with R from the unit quaternion
        r00 = 1.0 - 2.0 * (qy * qy + qz * qz)
        r01 = 2.0 * (qx * qy - qw * qz)
        r02 = 2.0 * (qx * qz + qw * qy)
        r10 = 2.0 * (qx * qy + qw * qz)
        r11 = 1.0 - 2.0 * (qx * qx + qz * qz)
        r12 = 2.0 * (qy * qz - qw * qx)
        r20 = 2.0 * (qx * qz - qw * qy)
        r21 = 2.0 * (qy * qz + qw * qx)
        r22 = 1.0 - 2.0 * (qx * qx + qy * qy)
        tb = np.empty(3)
        tb[0] = r00 * torque[0] + r10 * torque[1] + r20 * torque[2]
        tb[1] = r01 * torque[0] + r11 * torque[1] + r21 * torque[2]
        tb[2] = r02 * torque[0] + r12 * torque[1] + r22 * torque[2]
        iw = inertia @ w
        gyro = np.empty(3)
        gyro[0] = w[1] * iw[2] - w[2] * iw[1]
        gyro[1] = w[2] * iw[0] - w[0] * iw[2]
        gyro[2] = w[0] * iw[1] - w[1] * iw[0]
        w_mid = w + 0.5 * h * (inertia_inv @ (tb - gyro))
        iwm = inertia @ w_mid
        gyro[0] = w_mid[1] * iwm[2] - w_mid[2] * iwm[1]
        gyro[1] = w_mid[2] * iwm[0] - w_mid[0] * iwm[2]
        gyro[2] = w_mid[0] * iwm[1] - w_mid[1] * iwm[0]
        w += h * (inertia_inv @ (tb - gyro))
        for k in range(3):
            v_new = v[k] + h * force[k] / mass
            pos[k] += 0.5 * h * (v[k] + v_new)
            v[k] = v_new
        # quat <- normalize(quat * exp(h * w))
        rx, ry, rz = h * w[0], h * w[1], h * w[2]
        angle = math.sqrt(rx * rx + ry * ry + rz * rz)
        if angle < 1e-12:
            bw, bx, by, bz = 1.0, 0.5 * rx, 0.5 * ry, 0.5 * rz
        else:
            s = math.sin(0.5 * angle) / angle
            bw, bx, by, bz = math.cos(0.5 * angle), s * rx, s * ry, s * rz
        nw = qw * bw - qx * bx - qy * by - qz * bz
        nx = qw * bx + qx * bw + qy * bz - qz * by
        ny = qw * by - qx * bz + qy * bw + qz * bx
        nz = qw * bz + qx * by - qy * bx + qz * bw
        norm = math.sqrt(nw * nw + nx * nx + ny * ny + nz * nz)
        quat[0], quat[1], quat[2], quat[3] = (nw / norm, nx / norm,
                                              ny / norm, nz / norm)
        if pos[2] < screen_height:
            pos[2] = screen_height
            if v[2] < 0.0:
                v[2] = 0.0
            on_screen = 1
    return on_screen


@njit(cache=True)
def psd_project(rot_t, spos, focal, cos_half, mpos, maxis, R, pos, uv,
                visible):
    """Pinhole projection of every LED; fills uv (S,2) and visible (S,)."""
    n = spos.shape[0]
    for s in range(n):
        lx = pos[0] + R[0, 0] * mpos[s, 0] + R[0, 1] * mpos[s, 1] + R[0, 2] * mpos[s, 2]
        ly = pos[1] + R[1, 0] * mpos[s, 0] + R[1, 1] * mpos[s, 1] + R[1, 2] * mpos[s, 2]
        lz = pos[2] + R[2, 0] * mpos[s, 0] + R[2, 1] * mpos[s, 1] + R[2, 2] * mpos[s, 2]
        ax = R[0, 0] * maxis[s, 0] + R[0, 1] * maxis[s, 1] + R[0, 2] * maxis[s, 2]
        ay = R[1, 0] * maxis[s, 0] + R[1, 1] * maxis[s, 1] + R[1, 2] * maxis[s, 2]
        az = R[2, 0] * maxis[s, 0] + R[2, 1] * maxis[s, 1] + R[2, 2] * maxis[s, 2]
        dx = lx - spos[s, 0]
        dy = ly - spos[s, 1]
        dz = lz - spos[s, 2]
        px = rot_t[s, 0, 0] * dx + rot_t[s, 0, 1] * dy + rot_t[s, 0, 2] * dz
        py = rot_t[s, 1, 0] * dx + rot_t[s, 1, 1] * dy + rot_t[s, 1, 2] * dz
        pz = rot_t[s, 2, 0] * dx + rot_t[s, 2, 1] * dy + rot_t[s, 2, 2] * dz
        d = math.sqrt(dx * dx + dy * dy + dz * dz)
        cone = -(dx * ax + dy * ay + dz * az) / d
        if pz > 0.0 and cone >= cos_half[s]:
            visible[s] = 1
            uv[s, 0] = focal[s] * px / pz
            uv[s, 1] = focal[s] * py / pz
        else:
            visible[s] = 0
            uv[s, 0] = 0.0
            uv[s, 1] = 0.0


@njit(cache=True)
def psd_residual_rows(rot_t, spos, focal, mpos, R, pos, meas, mask, rows,
                      jac):
    """Masked image-plane residuals and pose Jacobian.

    State is (position, left rotation-vector increment); fills the first
    ``count`` entries of rows (2S,) and jac (2S, 6) and returns count.
    """
    n = spos.shape[0]
    count = 0
    for s in range(n):
        if not (mask[2 * s] or mask[2 * s + 1]):
            continue
        ax = R[0, 0] * mpos[s, 0] + R[0, 1] * mpos[s, 1] + R[0, 2] * mpos[s, 2]
        ay = R[1, 0] * mpos[s, 0] + R[1, 1] * mpos[s, 1] + R[1, 2] * mpos[s, 2]
        az = R[2, 0] * mpos[s, 0] + R[2, 1] * mpos[s, 1] + R[2, 2] * mpos[s, 2]
        dx = pos[0] + ax - spos[s, 0]
        dy = pos[1] + ay - spos[s, 1]
        dz = pos[2] + az - spos[s, 2]
        px = rot_t[s, 0, 0] * dx + rot_t[s, 0, 1] * dy + rot_t[s, 0, 2] * dz
        py = rot_t[s, 1, 0] * dx + rot_t[s, 1, 1] * dy + rot_t[s, 1, 2] * dz
        pz = rot_t[s, 2, 0] * dx + rot_t[s, 2, 1] * dy + rot_t[s, 2, 2] * dz
        f = focal[s]
        u = f * px / pz
        v = f * py / pz
        for axis in range(2):
            if not mask[2 * s + axis]:
                continue
            # dp/dposition is Rs^T; dp/drotvec is -Rs^T skew(arm)
            g = np.empty(6)
            for j in range(3):
                g[j] = rot_t[s, axis, j]
            g[3] = -(rot_t[s, axis, 1] * az - rot_t[s, axis, 2] * ay)
            g[4] = -(rot_t[s, axis, 2] * ax - rot_t[s, axis, 0] * az)
            g[5] = -(rot_t[s, axis, 0] * ay - rot_t[s, axis, 1] * ax)
            gz = np.empty(6)
            for j in range(3):
                gz[j] = rot_t[s, 2, j]
            gz[3] = -(rot_t[s, 2, 1] * az - rot_t[s, 2, 2] * ay)
            gz[4] = -(rot_t[s, 2, 2] * ax - rot_t[s, 2, 0] * az)
            gz[5] = -(rot_t[s, 2, 0] * ay - rot_t[s, 2, 1] * ax)
            pa = px if axis == 0 else py
            for j in range(6):
                jac[count, j] = f * (g[j] / pz - pa * gz[j] / (pz * pz))
            rows[count] = meas[s, axis] - (u if axis == 0 else v)
            count += 1
    return count


@njit(cache=True)
def gn_estimate(rot_t, spos, focal, mpos, meas, mask, pos, quat,
                max_iter, step_tol, damping0):
    """Damped Gauss-Newton pose refinement (pos/quat mutated in place).

    Returns (rms, iterations, status, best_pos, best_quat, best_rms) with
    status 0 = hit the iteration cap, 1 = converged, 2 = the residual grew
    three iterations in a row (caller treats as divergence).
    """
    n2 = mask.shape[0]
    rows = np.empty(n2)
    jac = np.empty((n2, 6))
    count = psd_residual_rows(rot_t, spos, focal, mpos,
                              _quat_matrix(quat), pos, meas, mask, rows, jac)
    cost = 0.0
    for k in range(count):
        cost += rows[k] * rows[k]
    best_pos = pos.copy()
    best_quat = quat.copy()
    best_rms = math.sqrt(cost / count)
    damping = damping0
    growth_streak = 0
    iterations = 0
    status = 0
    for it in range(1, max_iter + 1):
        iterations = it
        h = np.zeros((6, 6))
        g = np.zeros(6)
        for k in range(count):
            for i in range(6):
                g[i] += jac[k, i] * rows[k]
                for j in range(6):
                    h[i, j] += jac[k, i] * jac[k, j]
        for i in range(6):
            h[i, i] += damping
        step = np.linalg.solve(h, g)
        for i in range(3):
            pos[i] += step[i]
        _quat_left_update(quat, step[3], step[4], step[5])
        norm2 = 0.0
        for i in range(6):
            norm2 += step[i] * step[i]
        if math.sqrt(norm2) < step_tol:
            status = 1
            break
        count = psd_residual_rows(rot_t, spos, focal, mpos,
                                  _quat_matrix(quat), pos, meas, mask,
                                  rows, jac)
        new_cost = 0.0
        for k in range(count):
            new_cost += rows[k] * rows[k]
        if new_cost > cost:
            damping *= 10.0
            growth_streak += 1
            if growth_streak >= 3:
                status = 2
                break
        else:
            damping *= 0.1
            growth_streak = 0
        cost = new_cost
        if cost <= best_rms * best_rms * count:
            best_pos = pos.copy()
            best_quat = quat.copy()
            best_rms = math.sqrt(cost / count)
    rms = math.sqrt(cost / count)
    return rms, iterations, status, best_pos, best_quat, best_rms


@njit(cache=True)
def _quat_matrix(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    out = np.empty((3, 3))
    out[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    out[0, 1] = 2.0 * (x * y - w * z)
    out[0, 2] = 2.0 * (x * z + w * y)
    out[1, 0] = 2.0 * (x * y + w * z)
    out[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    out[1, 2] = 2.0 * (y * z - w * x)
    out[2, 0] = 2.0 * (x * z - w * y)
    out[2, 1] = 2.0 * (y * z + w * x)
    out[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return out


@njit(cache=True)
def _quat_left_update(quat, rx, ry, rz):
    """quat <- normalize(exp(r) * quat), a world-frame increment."""
    angle = math.sqrt(rx * rx + ry * ry + rz * rz)
    if angle < 1e-12:
        aw, ax, ay, az = 1.0, 0.5 * rx, 0.5 * ry, 0.5 * rz
    else:
        s = math.sin(0.5 * angle) / angle
        aw, ax, ay, az = math.cos(0.5 * angle), s * rx, s * ry, s * rz
    bw, bx, by, bz = quat[0], quat[1], quat[2], quat[3]
    nw = aw * bw - ax * bx - ay * by - az * bz
    nx = aw * bx + ax * bw + ay * bz - az * by
    ny = aw * by - ax * bz + ay * bw + az * bx
    nz = aw * bz + ax * by - ay * bx + az * bw
    norm = math.sqrt(nw * nw + nx * nx + ny * ny + nz * nz)
    quat[0], quat[1], quat[2], quat[3] = (nw / norm, nx / norm,
                                          ny / norm, nz / norm)


@njit(cache=True)
def alloc_fixed_point(w_air, u_core, h_mag, h_self, volume, m_sat, chi_a,
                      core_enabled, desired, base, limit, damping,
                      iterations, tol, torque_scale, eps):
    """Re-linearized damped min-norm allocation.

    Returns (currents, saturated, status) with status 1 when the damped
    normal equations are ill-conditioned (cond above 1e14 on the original
    matrix scale).
    """
    n = w_air.shape[1]
    cur = np.empty(n)
    for j in range(n):
        c = base[j]
        if c > limit:
            c = limit
        elif c < -limit:
            c = -limit
        cur[j] = c
    ws = desired.copy()
    for i in range(3, 6):
        ws[i] /= torque_scale
    m0 = np.empty(n)
    for j in range(n):
        if core_enabled:
            m0[j] = volume * m_sat * math.tanh(chi_a * h_mag[j] / m_sat)
        else:
            m0[j] = 0.0
    a_s = np.empty((6, n))
    saturated = 0
    for _ in range(iterations):
        for j in range(n):
            ie = cur[j]
            if abs(ie) <= eps:
                ie = eps if ie >= 0.0 else -eps
            if core_enabled:
                m1 = volume * m_sat * math.tanh(
                    chi_a * (h_self * ie + h_mag[j]) / m_sat)
            else:
                m1 = 0.0
            gain = (m1 - m0[j]) / ie
            for i in range(6):
                a = w_air[i, j] + u_core[i, j] * gain
                if i >= 3:
                    a /= torque_scale
                a_s[i, j] = a
        gram = a_s @ a_s.T
        for i in range(6):
            gram[i, i] += damping
        evals = np.linalg.eigvalsh(gram)
        if (not np.isfinite(evals[5])) or evals[5] <= 0.0 \
                or evals[0] <= evals[5] * 1e-28:
            return cur, saturated, 1
        y = np.linalg.solve(gram, ws)
        new = a_s.T @ y
        peak = 0.0
        for j in range(n):
            if abs(new[j]) > peak:
                peak = abs(new[j])
        saturated = 0
        if peak > limit:
            for j in range(n):
                new[j] *= limit / peak
            saturated = 1
        delta = 0.0
        for j in range(n):
            d = abs(new[j] - cur[j])
            if d > delta:
                delta = d
            cur[j] = new[j]
        if delta < tol:
            break
    return cur, saturated, 0
