"""Compare the compiled and pure-Python kernel backends.

Times RK4 stepping, Metropolis scans and a force evaluation on a relaxed
crystal and checks that both backends return the same numbers.

    python3 benchmarks/bench_kernels.py --ions 24 120
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from penningcrystal import _kernels
from penningcrystal.equilibrium import crystal_equilibrium
from penningcrystal.physcore import TrapConfig, derive_frequencies, scales

TWO_PI = 2 * math.pi


def _trap(n: int) -> TrapConfig:
    return TrapConfig.from_frequencies(omega_par=TWO_PI * 1.59e6, omega_r=TWO_PI * 180e3,
                                       omega_w=TWO_PI * 68e3, n_ions=n, b_field=4.4588)


def _best_of(fn, repeats: int) -> tuple[float, object]:
    best, out = math.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _cases(n: int, rk4_steps: int, scans: int):
    cfg = _trap(n)
    freqs = derive_frequencies(cfg)
    sc = scales(cfg, freqs)
    xy = crystal_equilibrium(cfg, freqs).positions / sc.length
    rng = np.random.default_rng(0)
    pos = np.ascontiguousarray(np.column_stack([xy, 1e-3 * rng.standard_normal(n)]))
    vel = np.ascontiguousarray(1e-3 * rng.standard_normal((n, 3)))
    h = TWO_PI / (100 * freqs.omega_plus * sc.time)
    r = np.sqrt(rng.random((scans, n)))
    phi = TWO_PI * rng.random((scans, n))
    offsets = np.ascontiguousarray(np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1))
    uniforms = rng.random((scans, n))

    def accel(k):
        out = np.empty((n, 3))
        k.accelerations(pos, vel, sc.kx, sc.ky, sc.kz, sc.wcp, out)
        return out

    def rk4(k):
        p, v = pos.copy(), vel.copy()
        rec_p = np.empty((2, n, 3))
        rec_v = np.empty((2, n, 3))
        en = np.empty(2)
        k.rk4(p, v, sc.kx, sc.ky, sc.kz, sc.wcp, h, rk4_steps, rk4_steps, rk4_steps, rec_p, rec_v, en)
        return rec_p[-1]

    def mh(k):
        q = np.ascontiguousarray(xy.copy())
        k.mh_scans(q, sc.kx, sc.ky, 1e3, 0.02, offsets, uniforms)
        return q

    return {"accelerations": accel, f"rk4 x{rk4_steps}": rk4, f"mh x{scans} scans": mh}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ions", type=int, nargs="+", default=[24, 120])
    ap.add_argument("--rk4-steps", type=int, default=200)
    ap.add_argument("--scans", type=int, default=5)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels.compiled is None:
        print("compiled backend not built; timing the Python backend only")
    print(f"{'N':>5} {'kernel':<18} {'python [s]':>12} {'compiled [s]':>13} {'speed-up':>9} {'max |diff|':>11}")
    for n in args.ions:
        for name, fn in _cases(n, args.rk4_steps, args.scans).items():
            tp, outp = _best_of(lambda: fn(_kernels.python), args.repeats)
            if _kernels.compiled is None:
                print(f"{n:>5} {name:<18} {tp:>12.4g} {'-':>13} {'-':>9} {'-':>11}")
                continue
            tc, outc = _best_of(lambda: fn(_kernels.compiled), args.repeats)
            diff = float(np.max(np.abs(np.asarray(outp) - np.asarray(outc))))
            print(f"{n:>5} {name:<18} {tp:>12.4g} {tc:>13.4g} {tp / tc:>9.1f} {diff:>11.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
