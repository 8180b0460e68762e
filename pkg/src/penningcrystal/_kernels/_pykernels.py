"""Numpy implementations of the compiled kernels (same signatures and units)."""

import numpy as np

BACKEND = "python"


def _pair_geometry(pos):
    d = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    np.fill_diagonal(r2, np.inf)
    return d, r2


def min_separation_sq(pos):
    if len(pos) < 2:
        return np.inf
    _, r2 = _pair_geometry(pos)
    return float(r2.min())


def coulomb_energy(pos):
    if len(pos) < 2:
        return 0.0
    iu = np.triu_indices(len(pos), 1)
    d = pos[iu[0]] - pos[iu[1]]
    return float(np.sum(1.0 / np.sqrt(np.einsum("ij,ij->i", d, d))))


def potential_energy(pos, kx, ky, kz):
    trap = kx * pos[:, 0] @ pos[:, 0] + ky * pos[:, 1] @ pos[:, 1] + kz * pos[:, 2] @ pos[:, 2]
    return 0.5 * float(trap) + coulomb_energy(pos)


def accelerations(pos, vel, kx, ky, kz, wcp, out):
    out[:, 0] = -kx * pos[:, 0] + wcp * vel[:, 1]
    out[:, 1] = -ky * pos[:, 1] - wcp * vel[:, 0]
    out[:, 2] = -kz * pos[:, 2]
    if len(pos) < 2:
        return np.inf
    d, r2 = _pair_geometry(pos)
    inv3 = r2 ** -1.5
    out += np.einsum("ij,ijk->ik", inv3, d)
    return float(r2.min())


def _kinetic(vel):
    return 0.5 * float(np.einsum("ij,ij->", vel, vel))


def rk4(pos, vel, kx, ky, kz, wcp, h, n_steps, record_stride, energy_stride,
        rec_pos, rec_vel, energies):
    # a blow-up is reported through the returned step index, not as warnings
    with np.errstate(over="ignore", invalid="ignore"):
        return _rk4(pos, vel, kx, ky, kz, wcp, h, n_steps, record_stride, energy_stride, rec_pos, rec_vel, energies)


def _rk4(pos, vel, kx, ky, kz, wcp, h, n_steps, record_stride, energy_stride,
         rec_pos, rec_vel, energies):
    n = len(pos)
    a1, a2, a3, a4 = (np.empty((n, 3)) for _ in range(4))
    irec = ien = 0
    min_r2 = np.inf
    for step in range(n_steps + 1):
        if record_stride > 0 and step % record_stride == 0 and irec < rec_pos.shape[0]:
            rec_pos[irec] = pos
            rec_vel[irec] = vel
            irec += 1
        if energy_stride > 0 and step % energy_stride == 0 and ien < energies.shape[0]:
            energies[ien] = _kinetic(vel) + potential_energy(pos, kx, ky, kz)
            ien += 1
        if step == n_steps:
            break
        min_r2 = min(min_r2, accelerations(pos, vel, kx, ky, kz, wcp, a1))
        p2 = pos + 0.5 * h * vel
        v2 = vel + 0.5 * h * a1
        accelerations(p2, v2, kx, ky, kz, wcp, a2)
        p3 = pos + 0.5 * h * v2
        v3 = vel + 0.5 * h * a2
        accelerations(p3, v3, kx, ky, kz, wcp, a3)
        p4 = pos + h * v3
        v4 = vel + h * a3
        accelerations(p4, v4, kx, ky, kz, wcp, a4)
        pos += (h / 6.0) * (vel + 2.0 * v2 + 2.0 * v3 + v4)
        vel += (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        if not (np.isfinite(pos).all() and np.isfinite(vel).all()):
            return step + 1, min_r2
    return -1, min_r2


def mh_scans(xy, kx, ky, beta, step, offsets, uniforms):
    n = len(xy)
    accepted = 0
    total = 0.0
    others = np.ones(n, dtype=bool)
    for s in range(offsets.shape[0]):
        for i in range(n):
            x0, y0 = xy[i]
            x1 = x0 + step * offsets[s, i, 0]
            y1 = y0 + step * offsets[s, i, 1]
            dphi = 0.5 * (kx * (x1 * x1 - x0 * x0) + ky * (y1 * y1 - y0 * y0))
            if n > 1:
                others[i] = False
                rest = xy[others]
                others[i] = True
                new = 1.0 / np.hypot(x1 - rest[:, 0], y1 - rest[:, 1])
                old = 1.0 / np.hypot(x0 - rest[:, 0], y0 - rest[:, 1])
                dphi += float(new.sum() - old.sum())
            if dphi <= 0.0 or uniforms[s, i] < np.exp(-beta * dphi):
                xy[i, 0] = x1
                xy[i, 1] = y1
                accepted += 1
                total += dphi
    return accepted, total
