"""Zero-temperature planar equilibria.

The crystal is relaxed in the z = 0 plane by BFGS with Armijo backtracking on
the analytic gradient, followed by a few Newton steps on the analytic planar
Hessian to push the residual force down to ~1e-10 (scaled units), which a
line search on the energy alone cannot resolve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import NoConvergence, SaddleDetected
from .physcore import (
    CharacteristicFrequencies,
    CrystalState,
    TrapConfig,
    planar_energy_and_gradient,
    planar_stiffness,
    scales,
)

DEFAULT_TOL = 1e-10
_EPS = np.finfo(float).eps
_NEWTON_SWITCH = 1e-4


@dataclass
class EquilibriumConfiguration:
    positions: np.ndarray  # (N, 2) metres, z = 0
    energy_v0: float  # J
    gradient_norm: float  # N
    seed_descriptor: dict
    tolerance: float  # scaled force-norm tolerance
    gradient_norm_scaled: float = 0.0
    iterations: int = 0
    energy_history: list = field(default_factory=list, repr=False)

    @property
    def n_ions(self) -> int:
        return len(self.positions)

    def state(self) -> CrystalState:
        pos = np.zeros((self.n_ions, 3))
        pos[:, :2] = self.positions
        return CrystalState(pos)

    def second_moments(self) -> tuple[float, float]:
        return float(np.sum(self.positions[:, 0] ** 2)), float(np.sum(self.positions[:, 1] ** 2))


def seed_lattice(n_ions: int, spacing: float) -> np.ndarray:
    """The ``n_ions`` triangular-lattice sites nearest the origin, ordered by radius then angle."""
    if n_ions < 1 or not spacing > 0:
        raise ValueError("need n_ions >= 1 and spacing > 0")
    m = int(math.ceil(math.sqrt(n_ions))) + 2
    i, j = np.meshgrid(np.arange(-m, m + 1), np.arange(-m, m + 1), indexing="ij")
    x = (i + 0.5 * j).ravel()
    y = (0.5 * math.sqrt(3.0) * j).ravel()
    r = np.round(np.hypot(x, y), 9)
    theta = np.round(np.mod(np.arctan2(y, x), 2 * math.pi), 9)
    order = np.lexsort((theta, r))[:n_ions]
    return spacing * np.column_stack([x[order], y[order]])


def default_spacing(cfg: TrapConfig, freqs: CharacteristicFrequencies) -> float:
    """Mean lattice spacing of a uniform-density estimate of the planar crystal (m)."""
    sc = scales(cfg, freqs)
    k = math.sqrt(sc.kx * sc.ky)
    radius = (3.0 * math.pi * cfg.n_ions / (4.0 * k)) ** (1.0 / 3.0)
    spacing = radius * math.sqrt(2.0 * math.pi / (math.sqrt(3.0) * max(cfg.n_ions, 1)))
    return spacing * sc.length


def _anneal(xy, sc, rng, n_stages=20, scans_per_stage=50):
    """Short Metropolis cooling schedule from ~1 to 1e-4 (scaled temperature)."""
    n = len(xy)
    step = 0.1
    for temp in np.geomspace(1.0, 1e-4, n_stages):
        r = np.sqrt(rng.random((scans_per_stage, n)))
        phi = 2 * math.pi * rng.random((scans_per_stage, n))
        offsets = np.ascontiguousarray(np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1))
        u = rng.random((scans_per_stage, n))
        acc, _ = _kernels.mh_scans(xy, sc.kx, sc.ky, 1.0 / temp, step, offsets, u)
        rate = acc / (scans_per_stage * n)
        step *= math.exp(rate - 0.5)
    return xy


def _bfgs(x, fun, gtol, max_iter, history):
    f, g = fun(x)
    history.append(f)
    n = x.size
    h = np.eye(n)
    it = 0
    for it in range(1, max_iter + 1):
        if np.linalg.norm(g) <= gtol:
            break
        p = -h @ g
        slope = g @ p
        if slope >= 0:
            h = np.eye(n)
            p = -g
            slope = -(g @ g)
        alpha = 1.0
        while True:
            x_new = x + alpha * p
            f_new, g_new = fun(x_new)
            if f_new <= f + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
            if alpha < 1e-20:
                return x, f, g, it
        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-14 * np.linalg.norm(s) * np.linalg.norm(y):
            if it == 1:
                h = np.eye(n) * (sy / (y @ y))
            rho = 1.0 / sy
            hy = h @ y
            h += (rho * rho * (y @ hy) + rho) * np.outer(s, s) - rho * (np.outer(hy, s) + np.outer(s, hy))
        x, f, g = x_new, f_new, g_new
        history.append(f)
    return x, f, g, it


def _relax(x, fun, sc, tol, max_iter, history):
    x, f, g, iters = _bfgs(x, fun, max(tol, _NEWTON_SWITCH), max_iter, history)
    for _ in range(200):
        gnorm = np.linalg.norm(g)
        if gnorm <= tol:
            break
        evals, evecs = np.linalg.eigh(planar_stiffness(x.reshape(-1, 2), sc.kx, sc.ky))
        # saddle-free Newton: curvature magnitudes, floored
        curv = np.maximum(np.abs(evals), 1e-8 * np.abs(evals).max())
        p = -evecs @ ((evecs.T @ g) / curv)
        alpha = 1.0
        while alpha > 1e-12:
            f_new, g_new = fun(x + alpha * p)
            if evals[0] > 0 and np.linalg.norm(g_new) < gnorm and f_new <= f + 4 * _EPS * abs(f):
                break
            if f_new <= f + 1e-4 * alpha * (g @ p):
                break
            alpha *= 0.5
        else:
            break
        x, f, g = x + alpha * p, f_new, g_new
        history.append(f)
        iters += 1
    return x, f, g, iters


def find_equilibrium(
    seed: np.ndarray,
    cfg: TrapConfig,
    freqs: CharacteristicFrequencies,
    tol: float = DEFAULT_TOL,
    *,
    max_iter: int = 20000,
    anneal: bool = False,
    rng: np.random.Generator | None = None,
    seed_descriptor: dict | None = None,
    max_saddle_escapes: int = 5,
) -> EquilibriumConfiguration:
    """Relax ``seed`` (N x 2, metres) to a local minimum of Phi in the plane.

    ``tol`` bounds the Euclidean norm of the residual force in scaled units.
    A stationary point that is not a minimum is left along its most negative
    curvature direction and re-relaxed, at most ``max_saddle_escapes`` times;
    set it to 0 to get :class:`SaddleDetected` instead.
    """
    seed = np.asarray(seed, dtype=float).reshape(-1, 2)
    if len(seed) != cfg.n_ions:
        raise ValueError(f"seed has {len(seed)} ions, config expects {cfg.n_ions}")
    sc = scales(cfg, freqs)
    xy = np.ascontiguousarray(seed / sc.length)
    if len(xy) > 1 and _kernels.min_separation_sq(np.column_stack([xy, np.zeros(len(xy))])) == 0.0:
        raise ValueError("seed has coincident sites")

    def fun(flat):
        return planar_energy_and_gradient(flat, sc.kx, sc.ky)

    history: list[float] = []
    seed_energy = fun(xy.ravel())[0]
    if anneal:
        xy = _anneal(xy, sc, rng if rng is not None else np.random.default_rng(0))

    x = xy.ravel().copy()
    iters = 0
    for attempt in range(max_saddle_escapes + 1):
        x, f, g, more = _relax(x, fun, sc, tol, max_iter, history)
        iters += more
        gnorm = float(np.linalg.norm(g))
        if gnorm > tol:
            raise NoConvergence(f"residual force norm {gnorm:.3e} > tol {tol:.1e} after {iters} iterations")
        evals, evecs = np.linalg.eigh(planar_stiffness(x.reshape(-1, 2), sc.kx, sc.ky))
        if evals[0] > 0:
            break
        if attempt == max_saddle_escapes:
            raise SaddleDetected(f"planar Hessian has eigenvalue {evals[0]:.3e} <= 0")
        # step off the saddle along the negative-curvature direction
        spacing = math.sqrt(_kernels.min_separation_sq(np.column_stack([x.reshape(-1, 2), np.zeros(len(x) // 2)])))
        x = x + 0.05 * spacing * evecs[:, 0] / np.abs(evecs[:, 0]).max()

    descriptor = {"kind": "user", "anneal": anneal}
    descriptor.update(seed_descriptor or {})
    descriptor["seed_energy_J"] = seed_energy * sc.energy
    return EquilibriumConfiguration(
        positions=x.reshape(-1, 2) * sc.length,
        energy_v0=f * sc.energy,
        gradient_norm=gnorm * sc.energy / sc.length,
        seed_descriptor=descriptor,
        tolerance=tol,
        gradient_norm_scaled=gnorm,
        iterations=iters,
        energy_history=[h * sc.energy for h in history],
    )


def crystal_equilibrium(cfg: TrapConfig, freqs: CharacteristicFrequencies,
                        tol: float = DEFAULT_TOL, **kwargs) -> EquilibriumConfiguration:
    """Seed a triangular lattice at the estimated spacing and relax it."""
    spacing = default_spacing(cfg, freqs)
    seed = seed_lattice(cfg.n_ions, spacing)
    desc = {"kind": "triangular", "spacing_m": spacing, "n_ions": cfg.n_ions}
    return find_equilibrium(seed, cfg, freqs, tol, seed_descriptor=desc, **kwargs)
