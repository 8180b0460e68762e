# cython: language_level=3
"""Compiled inner loops. All quantities are in the package's scaled units
(length l0, time 1/omega_par, mass m), where the Coulomb prefactor is 1."""

from libc.math cimport sqrt, exp, isfinite, INFINITY

BACKEND = "cython"


cdef double _accel(const double[:, ::1] pos, const double[:, ::1] vel,
                   double kx, double ky, double kz, double wcp,
                   double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t i, j
    cdef double xi, yi, zi, dx, dy, dz, r2, inv, inv3, fx, fy, fz
    cdef double min_r2 = INFINITY
    for i in range(n):
        out[i, 0] = -kx * pos[i, 0] + wcp * vel[i, 1]
        out[i, 1] = -ky * pos[i, 1] - wcp * vel[i, 0]
        out[i, 2] = -kz * pos[i, 2]
    for i in range(n):
        xi = pos[i, 0]
        yi = pos[i, 1]
        zi = pos[i, 2]
        fx = 0.0
        fy = 0.0
        fz = 0.0
        for j in range(i + 1, n):
            dx = xi - pos[j, 0]
            dy = yi - pos[j, 1]
            dz = zi - pos[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 < min_r2:
                min_r2 = r2
            inv = 1.0 / sqrt(r2)
            inv3 = inv * inv * inv
            fx += dx * inv3
            fy += dy * inv3
            fz += dz * inv3
            out[j, 0] -= dx * inv3
            out[j, 1] -= dy * inv3
            out[j, 2] -= dz * inv3
        out[i, 0] += fx
        out[i, 1] += fy
        out[i, 2] += fz
    return min_r2


cdef double _coulomb(const double[:, ::1] pos) noexcept nogil:
    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, acc = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            acc += 1.0 / sqrt(dx * dx + dy * dy + dz * dz)
    return acc


cdef double _potential(const double[:, ::1] pos, double kx, double ky, double kz) noexcept nogil:
    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t i
    cdef double trap = 0.0
    for i in range(n):
        trap += kx * pos[i, 0] * pos[i, 0] + ky * pos[i, 1] * pos[i, 1] + kz * pos[i, 2] * pos[i, 2]
    return 0.5 * trap + _coulomb(pos)


cdef double _kinetic(const double[:, ::1] vel) noexcept nogil:
    cdef Py_ssize_t n = vel.shape[0]
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(n):
        acc += vel[i, 0] * vel[i, 0] + vel[i, 1] * vel[i, 1] + vel[i, 2] * vel[i, 2]
    return 0.5 * acc


def min_separation_sq(const double[:, ::1] pos):
    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, r2, best = INFINITY
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                dx = pos[i, 0] - pos[j, 0]
                dy = pos[i, 1] - pos[j, 1]
                dz = pos[i, 2] - pos[j, 2]
                r2 = dx * dx + dy * dy + dz * dz
                if r2 < best:
                    best = r2
    return best


def coulomb_energy(const double[:, ::1] pos):
    cdef double out
    with nogil:
        out = _coulomb(pos)
    return out


def potential_energy(const double[:, ::1] pos, double kx, double ky, double kz):
    cdef double out
    with nogil:
        out = _potential(pos, kx, ky, kz)
    return out


def accelerations(const double[:, ::1] pos, const double[:, ::1] vel,
                  double kx, double ky, double kz, double wcp, double[:, ::1] out):
    """Fill ``out`` with the equations-of-motion right-hand side; return min r^2."""
    cdef double m
    with nogil:
        m = _accel(pos, vel, kx, ky, kz, wcp, out)
    return m


def rk4(double[:, ::1] pos, double[:, ::1] vel,
        double kx, double ky, double kz, double wcp,
        double h, long n_steps, long record_stride, long energy_stride,
        double[:, :, ::1] rec_pos, double[:, :, ::1] rec_vel,
        double[::1] energies):
    """Classic RK4, advancing ``pos``/``vel`` in place.

    Samples are written at steps 0, record_stride, ...; energies at steps
    0, energy_stride, .... Returns (status, min_r2) where status is -1 on
    success or the step at which a non-finite coordinate appeared.
    """
    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t i, c
    cdef long step
    cdef long irec = 0, ien = 0
    cdef long status = -1
    cdef double half = 0.5 * h, sixth = h / 6.0
    cdef double min_r2 = INFINITY, m
    cdef bint ok
    import numpy as np
    cdef double[:, ::1] p2 = np.empty((n, 3))
    cdef double[:, ::1] v2 = np.empty((n, 3))
    cdef double[:, ::1] p3 = np.empty((n, 3))
    cdef double[:, ::1] v3 = np.empty((n, 3))
    cdef double[:, ::1] p4 = np.empty((n, 3))
    cdef double[:, ::1] v4 = np.empty((n, 3))
    cdef double[:, ::1] a1 = np.empty((n, 3))
    cdef double[:, ::1] a2 = np.empty((n, 3))
    cdef double[:, ::1] a3 = np.empty((n, 3))
    cdef double[:, ::1] a4 = np.empty((n, 3))

    with nogil:
        for step in range(n_steps + 1):
            if record_stride > 0 and step % record_stride == 0 and irec < rec_pos.shape[0]:
                for i in range(n):
                    for c in range(3):
                        rec_pos[irec, i, c] = pos[i, c]
                        rec_vel[irec, i, c] = vel[i, c]
                irec += 1
            if energy_stride > 0 and step % energy_stride == 0 and ien < energies.shape[0]:
                energies[ien] = _kinetic(vel) + _potential(pos, kx, ky, kz)
                ien += 1
            if step == n_steps:
                break

            m = _accel(pos, vel, kx, ky, kz, wcp, a1)
            if m < min_r2:
                min_r2 = m
            for i in range(n):
                for c in range(3):
                    p2[i, c] = pos[i, c] + half * vel[i, c]
                    v2[i, c] = vel[i, c] + half * a1[i, c]
            _accel(p2, v2, kx, ky, kz, wcp, a2)
            for i in range(n):
                for c in range(3):
                    p3[i, c] = pos[i, c] + half * v2[i, c]
                    v3[i, c] = vel[i, c] + half * a2[i, c]
            _accel(p3, v3, kx, ky, kz, wcp, a3)
            for i in range(n):
                for c in range(3):
                    p4[i, c] = pos[i, c] + h * v3[i, c]
                    v4[i, c] = vel[i, c] + h * a3[i, c]
            _accel(p4, v4, kx, ky, kz, wcp, a4)
            ok = True
            for i in range(n):
                for c in range(3):
                    pos[i, c] += sixth * (vel[i, c] + 2.0 * v2[i, c] + 2.0 * v3[i, c] + v4[i, c])
                    vel[i, c] += sixth * (a1[i, c] + 2.0 * a2[i, c] + 2.0 * a3[i, c] + a4[i, c])
                    if not (isfinite(pos[i, c]) and isfinite(vel[i, c])):
                        ok = False
            if not ok:
                status = step + 1
                break
    return status, min_r2


def mh_scans(double[:, ::1] xy, double kx, double ky, double beta, double step,
             const double[:, :, ::1] offsets, const double[:, ::1] uniforms):
    """Run sequential single-ion Metropolis scans in the z = 0 plane.

    ``offsets[s, i]`` is a point in the unit disc (scaled by ``step``) and
    ``uniforms[s, i]`` the acceptance draw for ion i in scan s. Returns
    (n_accepted, total change in potential energy).
    """
    cdef Py_ssize_t n = xy.shape[0]
    cdef Py_ssize_t n_scans = offsets.shape[0]
    cdef Py_ssize_t s, i, k
    cdef long accepted = 0
    cdef double x0, y0, x1, y1, dphi, dx, dy, total = 0.0
    with nogil:
        for s in range(n_scans):
            for i in range(n):
                x0 = xy[i, 0]
                y0 = xy[i, 1]
                x1 = x0 + step * offsets[s, i, 0]
                y1 = y0 + step * offsets[s, i, 1]
                dphi = 0.5 * (kx * (x1 * x1 - x0 * x0) + ky * (y1 * y1 - y0 * y0))
                for k in range(n):
                    if k == i:
                        continue
                    dx = x1 - xy[k, 0]
                    dy = y1 - xy[k, 1]
                    dphi += 1.0 / sqrt(dx * dx + dy * dy)
                    dx = x0 - xy[k, 0]
                    dy = y0 - xy[k, 1]
                    dphi -= 1.0 / sqrt(dx * dx + dy * dy)
                if dphi <= 0.0 or uniforms[s, i] < exp(-beta * dphi):
                    xy[i, 0] = x1
                    xy[i, 1] = y1
                    accepted += 1
                    total += dphi
    return accepted, total
