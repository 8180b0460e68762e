import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from conftest import crystal, nist_trap
from penningcrystal.equilibrium import crystal_equilibrium, find_equilibrium, seed_lattice
from penningcrystal.errors import NoConvergence, SaddleDetected
from penningcrystal.physcore import CONSTANTS, CrystalState, derive_frequencies, planar_stiffness, scales, \
    total_potential_energy


def test_seed_lattice_single_site():
    np.testing.assert_array_equal(seed_lattice(1, 2.0), [[0.0, 0.0]])


def test_seed_lattice_first_shell():
    xy = seed_lattice(7, 3.0)
    r = np.hypot(xy[:, 0], xy[:, 1])
    assert r[0] == 0.0
    np.testing.assert_allclose(r[1:], 3.0, rtol=1e-12)
    angles = np.sort(np.mod(np.arctan2(xy[1:, 1], xy[1:, 0]), 2 * np.pi))
    np.testing.assert_allclose(np.diff(angles), np.pi / 3, rtol=1e-12)


def test_seed_lattice_120_sites():
    xy = seed_lattice(120, 1.0)
    assert xy.shape == (120, 2)
    r = np.hypot(xy[:, 0], xy[:, 1])
    assert r.max() < 8.0
    assert np.all(np.diff(np.round(r, 9)) >= 0)
    assert len(np.unique(np.round(xy, 9), axis=0)) == 120


def test_seed_lattice_rejects_bad_input():
    with pytest.raises(ValueError):
        seed_lattice(0, 1.0)
    with pytest.raises(ValueError):
        seed_lattice(3, 0.0)


def test_single_ion_relaxes_to_origin():
    cfg = nist_trap(1)
    eq = find_equilibrium(np.array([[2e-6, -1e-6]]), cfg, derive_frequencies(cfg))
    assert np.max(np.abs(eq.positions)) < 1e-15
    assert eq.energy_v0 == pytest.approx(0.0, abs=1e-35)


def _pair_energy_along(axis, d, cfg, freqs):
    p = np.zeros((2, 3))
    p[0, axis], p[1, axis] = -d / 2, d / 2
    return total_potential_energy(CrystalState(p), cfg, freqs)


def test_two_ions_sit_on_soft_axis_at_closed_form_spacing():
    cfg = nist_trap(2)
    freqs = derive_frequencies(cfg)
    eq = crystal_equilibrium(cfg, freqs)
    m = cfg.ion_mass
    d_formula = (2 * CONSTANTS.coulomb_constant * cfg.ion_charge**2
                 / (m * (freqs.omega_perp**2 - freqs.omega_w**2))) ** (1 / 3)
    # independent 1-D minimizations along each axis
    best = {}
    for axis in (0, 1):
        res = minimize_scalar(lambda d: _pair_energy_along(axis, d * 1e-6, cfg, freqs), bounds=(1, 100),
                              method="bounded", options={"xatol": 1e-10})
        best[axis] = (res.fun, res.x * 1e-6)
    assert best[1][0] < best[0][0]
    assert best[1][1] == pytest.approx(d_formula, rel=1e-6)
    xy = eq.positions
    assert np.max(np.abs(xy[:, 0])) < 1e-8 * d_formula
    assert abs(xy[0, 1] - xy[1, 1]) == pytest.approx(d_formula, rel=1e-10)
    assert eq.energy_v0 == pytest.approx(best[1][0], rel=1e-9)


def test_120_ion_crystal_is_a_minimum():
    c = crystal(120)
    assert c.eq.gradient_norm_scaled <= c.eq.tolerance
    sc = scales(c.cfg, c.freqs)
    evals = np.linalg.eigvalsh(planar_stiffness(c.eq.positions / sc.length, sc.kx, sc.ky))
    assert evals.min() > 0


def test_energy_history_is_monotone_and_below_seed():
    c = crystal(20)
    h = np.array(c.eq.energy_history)
    assert np.all(np.diff(h) <= 1e-12 * abs(h[0]))
    assert c.eq.energy_v0 <= c.eq.seed_descriptor["seed_energy_J"]


def test_wall_makes_the_crystal_anisotropic():
    sx, sy = crystal(20).eq.second_moments()
    assert sy > sx


def test_relabelled_seed_gives_same_energy():
    cfg = nist_trap(12)
    freqs = derive_frequencies(cfg)
    eq = crystal_equilibrium(cfg, freqs)
    seed = seed_lattice(12, eq.seed_descriptor["spacing_m"])
    perm = np.random.default_rng(4).permutation(12)
    eq2 = find_equilibrium(seed[perm], cfg, freqs)
    assert eq2.energy_v0 == pytest.approx(eq.energy_v0, rel=1e-8)


def test_no_convergence_is_reported():
    cfg = nist_trap(10)
    freqs = derive_frequencies(cfg)
    seed = seed_lattice(10, 5e-6)
    with pytest.raises(NoConvergence):
        find_equilibrium(seed, cfg, freqs, tol=1e-30, max_iter=2)


def test_saddle_on_stiff_axis_detected_or_escaped():
    cfg = nist_trap(2)
    freqs = derive_frequencies(cfg)
    seed = np.array([[-10e-6, 0.0], [10e-6, 0.0]])
    with pytest.raises(SaddleDetected):
        find_equilibrium(seed, cfg, freqs, max_saddle_escapes=0)
    eq = find_equilibrium(seed, cfg, freqs)
    assert abs(eq.positions[0, 1] - eq.positions[1, 1]) > 100 * abs(eq.positions[0, 0] - eq.positions[1, 0])


def test_annealed_start_is_deterministic():
    cfg = nist_trap(7)
    freqs = derive_frequencies(cfg)
    a = crystal_equilibrium(cfg, freqs, anneal=True, rng=np.random.default_rng(1))
    b = crystal_equilibrium(cfg, freqs, anneal=True, rng=np.random.default_rng(1))
    np.testing.assert_array_equal(a.positions, b.positions)
    assert math.isfinite(a.energy_v0)
