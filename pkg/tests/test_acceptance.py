"""Acceptance suite: one test per criterion, each printing a PASS/FAIL verdict line.

CI-scale variants run by default; full-size preset variants (N = 120 full ensembles)
are marked ``paper`` and run with PENNINGCRYSTAL_PAPER=1.
"""
import math

import numpy as np
import pytest

from conftest import TWO_PI, crystal, nist_trap
from penningcrystal.dynamics import IntegratorConfig, integrate
from penningcrystal.linmodes import inplane_diagnostics
from penningcrystal.modemetrics import cyclotron_ratio_approx, energy_ratio, helicity
from penningcrystal.physcore import CONSTANTS, CrystalState, derive_frequencies, total_potential_energy
from penningcrystal.studies import preset_spec, run_study
from penningcrystal.thermal import (
    SamplerConfig,
    discrete_chain,
    mh_sample_inplane,
    project_mode_amplitudes,
    sample_axial_thermal,
    sample_velocity_kicks,
)

KB = CONSTANTS.boltzmann
SEED = 0


def _failed_checks(result, prefixes=("",)) -> dict:
    return {k: v["value"] for k, v in result.checks.items() if k.startswith(prefixes) and not v["passed"]}


def _study_verdict(verdict, criterion, result, prefixes=("",)):
    failed = _failed_checks(result, prefixes)
    summary = {k: v["value"] for k, v in result.checks.items() if k.startswith(prefixes)}
    ok = verdict(criterion, not failed, f"{result.kind} [{result.metadata.get('n_realizations', '')}] {summary}")
    assert ok, f"failed checks: {failed}"


# 1 ---------------------------------------------------------------------------


def test_criterion_01_single_ion_spectrum(verdict):
    cfg = nist_trap(1)
    f = derive_frequencies(cfg)
    # independent route: eigenvalues of the 4x4 first-order single-ion system in the rotating frame
    wc = cfg.ion_charge * cfg.b_field / cfg.ion_mass
    wz2 = 2 * cfg.ion_charge * cfg.v0 / cfg.ion_mass
    wperp2 = wc * cfg.omega_r - cfg.omega_r**2 - wz2 / 2
    wcp = wc - 2 * cfg.omega_r
    a = np.array([[0, 0, 1, 0], [0, 0, 0, 1], [-wperp2, 0, 0, wcp], [0, -wperp2, -wcp, 0]])
    w = np.sort(np.abs(np.linalg.eigvals(a).imag))[::2]
    closed = [0.5 * (math.sqrt(wcp**2 + 4 * wperp2) - wcp), 0.5 * (math.sqrt(wcp**2 + 4 * wperp2) + wcp)]
    errs = [abs(f.omega_minus / closed[0] - 1), abs(f.omega_plus / closed[1] - 1),
            abs(w[0] / closed[0] - 1), abs(w[1] / closed[1] - 1),
            abs(f.omega_plus * f.omega_minus / f.omega_perp**2 - 1)]
    ok = verdict(1, max(errs) <= 1e-10, f"max relative error {max(errs):.2e} (f+ = {f.omega_plus / TWO_PI:.6e} Hz)")
    assert ok


# 2 ---------------------------------------------------------------------------


def test_criterion_02_orthogonality_and_residuals(verdict):
    worst = {}
    for n in (5, 20, 120):
        c = crystal(n)
        d = inplane_diagnostics(c.inplane, c.model)
        worst[n] = (d["max_e_overlap"], d["max_residual"])
    ok = verdict(2, all(o <= 1e-8 and r <= 1e-8 for o, r in worst.values()),
                 " ".join(f"N={n}: overlap {o:.1e} residual {r:.1e}" for n, (o, r) in worst.items()))
    assert ok


# 3 ---------------------------------------------------------------------------


def test_criterion_03_ratio_helicity_identities(verdict):
    c = crystal(120)
    n = 120
    r = energy_ratio(c.inplane, c.model)
    chi = helicity(c.inplane, c.model)
    w = c.inplane.frequencies_scaled
    identity = float(np.max(np.abs(r - (1 + c.model.omega_c_prime_scaled / w * chi)) / np.abs(r)))
    exb_min = float(r[:n].min())
    chi_dev = float(np.max(np.abs(chi[n:] + 1)))
    approx = cyclotron_ratio_approx(c.inplane.frequencies[n:], c.freqs.omega_c_prime, c.freqs.omega_plus)
    approx_dev = float(np.max(np.abs(approx - r[n:]) / r[n:]))
    ok = verdict(3, identity <= 1e-8 and exb_min > 10 and chi_dev <= 0.05 and approx_dev <= 0.05,
                 f"identity {identity:.1e}, ExB min R {exb_min:.1f}, max |chi+1| {chi_dev:.3f}, "
                 f"approximation {100 * approx_dev:.2f}%")
    assert ok


# 4 ---------------------------------------------------------------------------


def _fd_hessian(state, cfg, freqs, h):
    base = state.positions
    flat = base.ravel()
    dim = len(flat)

    def energy(x):
        return total_potential_energy(CrystalState(x.reshape(base.shape)), cfg, freqs)

    hess = np.zeros((dim, dim))
    for a in range(dim):
        for b in range(a, dim):
            vals = []
            for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                x = flat.copy()
                x[a] += sa * h
                x[b] += sb * h
                vals.append(energy(x))
            hess[a, b] = hess[b, a] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4 * h * h)
    return hess


def test_criterion_04_hessian_oracle(verdict):
    worst = {}
    for n in (2, 6, 10):
        c = crystal(n)
        pos = np.column_stack([c.eq.positions, np.zeros(n)])
        fd = _fd_hessian(CrystalState(pos), c.cfg, c.freqs, 1e-4 * c.eq.seed_descriptor["spacing_m"])
        planar = [3 * i + k for i in range(n) for k in (0, 1)]
        axial = [3 * i + 2 for i in range(n)]
        errs = []
        for analytic, idx in ((c.model.k_perp, planar), (c.model.k_par, axial)):
            sub = fd[np.ix_(idx, idx)]
            errs.append(float(np.max(np.abs(analytic - sub)) / np.max(np.abs(sub))))
        worst[n] = max(errs)
    ok = verdict(4, max(worst.values()) <= 1e-6, " ".join(f"N={n}: {e:.1e}" for n, e in worst.items()))
    assert ok


# 5 ---------------------------------------------------------------------------


def test_criterion_05_kick_energy_partition(verdict):
    c = crystal(20)
    t = 1e-3
    rng = np.random.default_rng(SEED)
    n_draws = 10_000
    e = np.array([project_mode_amplitudes(sample_velocity_kicks(20, t, rng, c.cfg.ion_mass), c.inplane)
                  .mode_energies(c.inplane) for _ in range(n_draws)])
    expected = KB * t / (1 + energy_ratio(c.inplane, c.model))
    z = np.abs(e.mean(axis=0) - expected) / (e.std(axis=0, ddof=1) / math.sqrt(n_draws))
    ok = verdict(5, bool(np.all(z <= 3)), f"{n_draws} draws, worst deviation {z.max():.2f} SE over {len(z)} modes")
    assert ok


# 6 ---------------------------------------------------------------------------


def test_criterion_06_mh_thermalization(verdict):
    c = crystal(120)
    t = 1e-3
    ens = mh_sample_inplane(c.eq, c.cfg, c.freqs, SamplerConfig(t_perp=t, mh_scans=2000 * 100, snapshot_stride=100,
                                                                rng_seed=SEED))
    excess = ens.mean_delta_phi_per_ion / (KB * t)
    energies = np.array([0.0, 0.4, 1.1, 2.0])
    exact = np.exp(-energies) / np.exp(-energies).sum()
    rng = np.random.default_rng(SEED)
    fractions = np.array([discrete_chain(energies, 1.0, 2000, rng, start=int(rng.integers(4))) / 2000
                          for _ in range(200)])
    z = np.abs(fractions.mean(axis=0) - exact) / (fractions.std(axis=0, ddof=1) / math.sqrt(len(fractions)))
    ok = verdict(6, len(ens) == 2000 and abs(excess - 1) <= 0.1 and bool(np.all(z <= 3)),
                 f"N=120 excess {excess:.3f} kT over {len(ens)} snapshots (acceptance {ens.acceptance_rate:.2f}); "
                 f"discrete chain worst {z.max():.2f} sigma")
    assert ok


# 7 ---------------------------------------------------------------------------


def test_criterion_07_energy_conservation(verdict):
    c = crystal(120)
    rng = np.random.default_rng(SEED)
    m = c.cfg.ion_mass
    vxy = sample_velocity_kicks(120, 1e-3, rng, m)
    z, vz = sample_axial_thermal(c.drum, 0.5e-3, rng, m)
    state = CrystalState(np.column_stack([c.eq.positions, z]), np.column_stack([vxy, vz]))
    traj = integrate(state, c.cfg, c.freqs, IntegratorConfig.default(c.freqs, 560e-6))
    total = traj.energy_fluctuation()
    thermal = traj.thermal_energy_fluctuation(c.eq.energy_v0)
    ok = verdict(7, total < 2e-6 and thermal <= 2e-3,
                 f"N=120, {traj.duration * 1e6:.0f} us: total {total:.2e}, thermal-relative {thermal:.2e}")
    assert ok


# 8 ---------------------------------------------------------------------------


def test_criterion_08_sho_moments(verdict):
    result = run_study(preset_spec("sho_appendix", "ci", nist_trap(1), rng_seed=SEED))
    assert result.metadata["n_samples"] == 10**6
    _study_verdict(verdict, 8, result)


# 9 to 12 at CI scale ---------------------------------------------------------


def test_criterion_09_sqrt_law_ci(verdict):
    result = run_study(preset_spec("fluctuation_surface", "ci", nist_trap(1), rng_seed=SEED, threads=4))
    assert result.metadata["magnitudes"]["t_perp_K"] == pytest.approx(10e-3)
    _study_verdict(verdict, 9, result)


def test_criterion_10_vk_separation_ci(verdict):
    result = run_study(preset_spec("vk_comparison", "ci", nist_trap(1), rng_seed=SEED, threads=4))
    _study_verdict(verdict, 10, result)


def test_criterion_11_spectrum_shape_ci(verdict):
    result = run_study(preset_spec("odf_scan", "ci", nist_trap(1), rng_seed=SEED, threads=4))
    _study_verdict(verdict, 11, result, ("psd_", "odf_zero", "odf_persistent", "odf_resolved"))


def test_criterion_12_support_correlation_ci(verdict):
    result = run_study(preset_spec("support_correlation", "ci", nist_trap(1), rng_seed=SEED, threads=4))
    _study_verdict(verdict, 12, result)


# full-size preset ------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.paper
@pytest.mark.parametrize("criterion, kind", [(9, "fluctuation_surface"), (10, "vk_comparison"),
                                             (11, "odf_scan"), (11, "psd_broadening"),
                                             (12, "support_correlation")])
def test_paper_scale_studies(verdict, criterion, kind):
    result = run_study(preset_spec(kind, "paper", nist_trap(1), rng_seed=SEED, threads=8))
    prefixes = ("psd_", "odf_zero", "odf_persistent", "odf_resolved") if criterion == 11 else ("",)
    _study_verdict(verdict, criterion, result, prefixes)
