import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import crystal, no_wall_single_ion, nist_trap
from penningcrystal import _kernels
from penningcrystal.equilibrium import crystal_equilibrium
from penningcrystal.errors import FactorizationFailure, NotPositiveDefinite
from penningcrystal.linmodes import (
    LinearizedModel,
    build_linearized_model,
    drumhead_modes,
    inplane_diagnostics,
    inplane_modes,
    lorentz_matrix,
    snapshot_drumhead_frequencies,
)
from penningcrystal.physcore import (
    CONSTANTS,
    CrystalState,
    axial_stiffness,
    derive_frequencies,
    planar_stiffness,
    scales,
    total_potential_energy,
)


def _fd_hessian_si(state, cfg, freqs, coords, h):
    """Central-difference Hessian of Phi (J/m^2) over the listed (ion, axis) coordinates."""
    def energy(p):
        return total_potential_energy(CrystalState(p), cfg, freqs)

    base = state.positions
    k = len(coords)
    hess = np.zeros((k, k))
    for a, (i, ax) in enumerate(coords):
        for b, (j, bx) in enumerate(coords):
            vals = []
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                p = base.copy()
                p[i, ax] += si * h
                p[j, bx] += sj * h
                vals.append(energy(p))
            hess[a, b] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4 * h * h)
    return hess


def test_single_ion_stiffness():
    c = crystal(1)
    m, f = c.cfg.ion_mass, c.freqs
    np.testing.assert_allclose(c.model.k_perp, m * np.diag([f.omega_perp**2 + f.omega_w**2,
                                                            f.omega_perp**2 - f.omega_w**2]), rtol=1e-12)
    np.testing.assert_allclose(c.model.k_par, [[m * f.omega_par**2]], rtol=1e-12)


def test_two_ion_stiffness_matches_finite_differences():
    c = crystal(2)
    pos = np.zeros((2, 3))
    pos[:, :2] = c.eq.positions
    state = CrystalState(pos)
    coords = [(i, a) for i in range(2) for a in range(2)]
    h = 1e-4 * np.abs(c.eq.positions).max()
    fd = _fd_hessian_si(state, c.cfg, c.freqs, coords, h)
    np.testing.assert_allclose(c.model.k_perp, fd, rtol=1e-6, atol=1e-6 * np.abs(fd).max())
    fdz = _fd_hessian_si(state, c.cfg, c.freqs, [(0, 2), (1, 2)], h)
    np.testing.assert_allclose(c.model.k_par, fdz, rtol=1e-6, atol=1e-6 * np.abs(fdz).max())


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 10))
def test_analytic_hessians_match_finite_differences(seed, n):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-3, 3, (n, 2))
    if _kernels.min_separation_sq(np.column_stack([xy, np.zeros(n)])) < 0.25:
        return
    kx, ky = 0.05, 0.03

    def energy(flat):
        p = np.zeros((n, 3))
        p[:, :] = flat.reshape(n, 3)
        return _kernels.potential_energy(p, kx, ky, 1.0)

    x0 = np.column_stack([xy, np.zeros(n)]).ravel()
    h = 1e-4
    dim = 3 * n
    hess = np.zeros((dim, dim))
    for a in range(dim):
        for b in range(a, dim):
            vals = []
            for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                x = x0.copy()
                x[a] += sa * h
                x[b] += sb * h
                vals.append(energy(x))
            hess[a, b] = hess[b, a] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4 * h * h)
    planar_idx = [3 * i + k for i in range(n) for k in (0, 1)]
    axial_idx = [3 * i + 2 for i in range(n)]
    fd_perp = hess[np.ix_(planar_idx, planar_idx)]
    fd_par = hess[np.ix_(axial_idx, axial_idx)]
    scale = np.abs(fd_perp).max()
    np.testing.assert_allclose(planar_stiffness(xy, kx, ky), fd_perp, rtol=1e-6, atol=1e-6 * scale)
    np.testing.assert_allclose(axial_stiffness(xy, 1.0), fd_par, rtol=1e-6, atol=1e-6 * scale)


@pytest.mark.parametrize("n", [1, 5, 20])
def test_stiffness_matrices_symmetric_positive_definite(n):
    m = crystal(n).model
    for k in (m.k_par_scaled, m.k_perp_scaled):
        assert np.max(np.abs(k - k.T)) <= 1e-10 * np.abs(k).max()
        assert np.linalg.eigvalsh(k).min() > 0
    np.testing.assert_array_equal(m.lorentz_scaled, -m.lorentz_scaled.T)


def test_lorentz_helicity_operator_has_unit_eigenvalues():
    m = crystal(5).model
    op = -1j * m.lorentz_scaled / m.omega_c_prime_scaled
    ev = np.linalg.eigvalsh(op)
    np.testing.assert_allclose(np.sort(np.abs(ev)), 1.0, rtol=1e-12)
    assert np.sum(ev > 0) == np.sum(ev < 0) == 5


def test_lorentz_matrix_blocks():
    np.testing.assert_array_equal(lorentz_matrix(2, 3.0), [[0, 3, 0, 0], [-3, 0, 0, 0], [0, 0, 0, 3], [0, 0, -3, 0]])


@pytest.mark.parametrize("n", [1, 2, 7, 20])
def test_drumhead_top_mode_is_center_of_mass(n):
    c = crystal(n)
    assert c.drum.frequencies[0] == pytest.approx(c.freqs.omega_par, rel=1e-9)
    np.testing.assert_allclose(c.drum.eigenvectors[:, 0], 1 / math.sqrt(n), rtol=1e-9)
    assert np.all(np.diff(c.drum.frequencies) <= 0)
    b = c.drum.eigenvectors
    assert np.max(np.abs(b.T @ b - np.eye(n))) <= 1e-10


def test_two_ion_drumhead_by_hand():
    c = crystal(2)
    d = float(np.linalg.norm(c.eq.positions[0] - c.eq.positions[1]))
    m = c.cfg.ion_mass
    kc = CONSTANTS.coulomb_constant * c.cfg.ion_charge**2 / d**3
    # 2x2 K_par = [[m w^2 - kc, kc], [kc, m w^2 - kc]]
    lam = np.linalg.eigvalsh(np.array([[m * c.freqs.omega_par**2 - kc, kc], [kc, m * c.freqs.omega_par**2 - kc]]))
    np.testing.assert_allclose(np.sort(c.drum.frequencies), np.sqrt(lam / m), rtol=1e-8)
    assert c.drum.frequencies[1] == pytest.approx(math.sqrt(c.freqs.omega_par**2 - 2 * kc / m), rel=1e-8)


def test_single_ion_inplane_frequencies():
    freqs, _, modes = no_wall_single_ion()
    wcp, wp = freqs.omega_c_prime, freqs.omega_perp
    root = math.sqrt(wcp**2 + 4 * wp**2)
    np.testing.assert_allclose(modes.frequencies, [(root - wcp) / 2, (root + wcp) / 2], rtol=1e-10)
    assert modes.frequencies[0] * modes.frequencies[1] == pytest.approx(wp**2, rel=1e-10)
    assert modes.frequencies[1] == pytest.approx(freqs.omega_plus, rel=1e-10)


def test_single_ion_inplane_eigenvectors_are_circular():
    _, _, modes = no_wall_single_ion()
    ur = modes.position_part
    for col, expected in ((0, [1, 1j]), (1, [1, -1j])):
        e = np.array(expected) / math.sqrt(2)
        v = ur[:, col] / np.linalg.norm(ur[:, col])
        assert abs(np.vdot(e, v)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", [2, 5, 20])
def test_inplane_invariants(n):
    c = crystal(n)
    d = inplane_diagnostics(c.inplane, c.model)
    assert d["max_residual"] <= 1e-8
    assert d["max_e_overlap"] <= 1e-8
    assert d["max_velocity_relation"] <= 1e-8
    np.testing.assert_allclose(c.inplane.energy_norms, 1.0, rtol=1e-10)
    assert np.all(c.inplane.frequencies > 0)
    assert np.all(np.diff(c.inplane.frequencies) >= 0)
    assert list(c.inplane.branch[:n]) == ["ExB"] * n


def test_phase_gauge_makes_largest_position_component_real_positive():
    u = crystal(5).inplane.position_part
    lead = u[np.argmax(np.abs(u), axis=0), np.arange(u.shape[1])]
    assert np.all(np.abs(lead.imag) <= 1e-14 * np.abs(lead))
    assert np.all(lead.real > 0)


def test_spectral_gap_at_operating_point():
    c = crystal(20)
    w = c.inplane.frequencies
    assert w[20] - w[19] > 10 * (w[19] - w[0])


def test_sho_limit_without_lorentz():
    c = crystal(5)
    m0 = c.model.without_lorentz()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        modes = inplane_modes(m0)
    expected = np.sort(np.sqrt(np.linalg.eigvalsh(m0.k_perp) / m0.mass))
    np.testing.assert_allclose(modes.frequencies, expected, rtol=1e-9)


def test_full_spectrum_comes_in_plus_minus_pairs():
    c = crystal(5)
    ev = np.linalg.eigvals(c.model.dynamical_matrix_scaled())
    # D has purely imaginary eigenvalues -i w for the e^{-i w t} convention
    assert np.max(np.abs(ev.real)) < 1e-8
    imag = np.sort(ev.imag)
    w = np.sort(c.inplane.frequencies_scaled)
    np.testing.assert_allclose(imag, np.concatenate([-w[::-1], w]), rtol=1e-9, atol=1e-12)


def test_factorization_failure_on_indefinite_energy_matrix():
    m = crystal(2).model
    bad = LinearizedModel(m.k_par_scaled, -m.k_perp_scaled, m.lorentz_scaled, m.scales)
    with pytest.raises(FactorizationFailure):
        inplane_modes(bad)


def test_non_positive_definite_model_rejected():
    cfg = nist_trap(2)
    freqs = derive_frequencies(cfg)
    eq = crystal_equilibrium(cfg, freqs)
    eq.positions = np.array([[-10e-6, 0.0], [10e-6, 0.0]])  # stationary but a saddle
    with pytest.raises(NotPositiveDefinite):
        build_linearized_model(eq, cfg, freqs)


def test_snapshot_frequencies_at_equilibrium():
    c = crystal(7)
    f = snapshot_drumhead_frequencies(np.stack([c.eq.positions] * 3), c.cfg, c.freqs)
    np.testing.assert_allclose(f, np.tile(c.drum.frequencies, (3, 1)), rtol=1e-12)


def test_si_views_consistent():
    c = crystal(3)
    sc = scales(c.cfg, c.freqs)
    np.testing.assert_allclose(c.model.k_perp, c.model.k_perp_scaled * sc.mass / sc.time**2)
    e = c.model.energy_matrix
    assert e.shape == (12, 12)
    np.testing.assert_allclose(np.diag(e)[6:], sc.mass)
