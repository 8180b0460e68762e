"""Experiment drivers that compose the library into complete analyses.

Each study takes a :class:`StudySpec`, returns a :class:`StudyResult` with
CSV-ready tables, metadata and pass/fail checks, and is fully determined by
the spec and its seed. Work items (temperatures, realizations) fan out over a
thread pool; results are always assembled in index order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.stats import spearmanr

from . import io
from .dynamics import IntegratorConfig, integrate
from .equilibrium import crystal_equilibrium
from .linmodes import build_linearized_model, drumhead_modes, inplane_modes, snapshot_drumhead_frequencies
from .modemetrics import cold_fluid_reference, mode_entropy_support
from .physcore import CONSTANTS, CrystalState, TrapConfig, derive_frequencies
from .spectra import (
    OdfAccumulator,
    OdfConfig,
    PsdAccumulator,
    Spectrum,
    band_power,
    band_ratio_db,
    calibrate_odf_force,
    detect_peaks,
    smooth,
    to_db,
)
from .thermal import (
    SamplerConfig,
    mh_sample_inplane,
    sample_axial_thermal,
    sample_velocity_kicks,
    sho_kick_moment_study,
    substream,
)

STUDY_KINDS = (
    "snapshot_histogram",
    "fluctuation_surface",
    "support_correlation",
    "psd_broadening",
    "vk_comparison",
    "odf_scan",
    "sho_appendix",
)
PRESETS = ("ci", "paper")
EXB_BAND_HZ = (0.0, 100e3)


@dataclass(frozen=True)
class StudySpec:
    kind: str
    trap: TrapConfig
    rng_seed: int = 0
    temperatures: tuple = (0.0, 1e-3, 10e-3)
    preset: str = "ci"
    n_snapshots: int = 2000
    snapshot_stride: int = 100
    burn_in_scans: int = 1000
    n_realizations: int = 96
    t_total: float = 560e-6
    t_par: float = 0.5e-3
    record_stride: int | None = None
    bin_width_hz: float = 500.0
    n_samples: int = 10**6
    odf_f0: float | None = None
    odf_target: float = 0.4
    odf_gamma: float = 100.0
    odf_t_pi: float = 0.0
    odf_step_hz: float = 500.0
    peak_prominence_db: float = 3.0
    thresholds: dict = field(default_factory=dict)
    threads: int = 1

    def __post_init__(self):
        if self.kind not in STUDY_KINDS:
            raise ValueError(f"unknown study {self.kind!r}; choose from {', '.join(STUDY_KINDS)}")
        if len(self.temperatures) == 0:
            raise ValueError("temperature grid is empty")
        if any(t < 0 for t in self.temperatures):
            raise ValueError("temperatures must be >= 0")
        if self.n_snapshots < 2 or self.n_realizations < 1 or self.n_samples < 2:
            raise ValueError("ensemble sizes too small")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def describe(self) -> dict:
        d = asdict(self)
        d["trap"] = asdict(self.trap)
        d["temperatures"] = list(self.temperatures)
        return d


@dataclass
class StudyResult:
    kind: str
    tables: dict  # name -> (header, rows)
    metadata: dict
    checks: dict  # name -> {"passed": bool, "value": ..., "requirement": str}

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())


def _check(passed: bool, value, requirement: str) -> dict:
    return {"passed": bool(passed), "value": value, "requirement": requirement}


def preset_spec(kind: str, preset: str, trap: TrapConfig, rng_seed: int = 0, **overrides) -> StudySpec:
    """Spec for ``kind`` at the ``ci`` (small N, small ensembles) or ``paper`` (N = 120) scale."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}")
    paper = preset == "paper"
    temps3 = (0.0, 1e-3, 10e-3)
    common = {"preset": preset, "rng_seed": rng_seed}
    if kind == "snapshot_histogram":
        p = {"n": 120 if paper else 24, "temperatures": temps3, "n_snapshots": 2000 if paper else 200}
    elif kind == "fluctuation_surface":
        grid = np.round(np.arange(1, 51) * 0.2e-3, 7) if paper else np.round(np.arange(1, 26) * 0.4e-3, 7)
        p = {"n": 120 if paper else 32, "temperatures": tuple(grid.tolist()),
             "n_snapshots": 2000 if paper else 300}
    elif kind == "support_correlation":
        p = {"n": 120 if paper else 32, "temperatures": (200e-6,), "n_snapshots": 2000 if paper else 500}
    elif kind == "psd_broadening":
        p = {"n": 120 if paper else 24, "temperatures": temps3, "n_realizations": 96 if paper else 4}
    elif kind == "vk_comparison":
        p = {"n": 120 if paper else 32, "temperatures": (10e-3,), "n_realizations": 96 if paper else 6,
             "thresholds": {"exb_db": 15.0, "cyclotron_db": 3.0, "cyclotron_tol_db": 1.0} if paper
             else {"exb_db": 10.0, "cyclotron_db": 3.0, "cyclotron_tol_db": 1.5}}
    elif kind == "odf_scan":
        p = {"n": 120 if paper else 24, "temperatures": temps3, "n_realizations": 96 if paper else 6,
             "record_stride": 20}
    elif kind == "sho_appendix":
        p = {"n": 1, "temperatures": (0.5e-3,), "n_samples": 10**6}
    else:
        raise ValueError(f"unknown study {kind!r}")
    n = p.pop("n")
    spec = StudySpec(kind=kind, trap=trap.with_ions(n), **common, **p)
    return replace(spec, **overrides) if overrides else spec


# shared plumbing -------------------------------------------------------------


@dataclass
class _Context:
    cfg: TrapConfig
    freqs: object
    eq: object
    model: object
    drum: object


def _context(spec: StudySpec) -> _Context:
    cfg = spec.trap
    freqs = derive_frequencies(cfg)
    eq = crystal_equilibrium(cfg, freqs)
    model = build_linearized_model(eq, cfg, freqs)
    return _Context(cfg, freqs, eq, model, drumhead_modes(model))


def _ordered_map(fn: Callable, items, threads: int) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _stream(fn: Callable, items, threads: int):
    """Yield fn(item) in order, keeping at most ``threads`` results in flight."""
    items = list(items)
    if threads <= 1:
        for x in items:
            yield fn(x)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for start in range(0, len(items), threads):
            yield from pool.map(fn, items[start:start + threads])


def _snapshots(ctx: _Context, spec: StudySpec, t_perp: float, n_snapshots: int, key: tuple) -> np.ndarray:
    """MH snapshot positions (S, N, 2); the equilibrium repeated when t_perp is 0."""
    if t_perp == 0:
        return np.repeat(ctx.eq.positions[None], n_snapshots, axis=0)
    sampler = SamplerConfig(t_perp=t_perp, t_par=spec.t_par, mh_scans=n_snapshots * spec.snapshot_stride,
                            mh_burn_in_scans=spec.burn_in_scans, snapshot_stride=spec.snapshot_stride,
                            rng_seed=spec.rng_seed)
    return mh_sample_inplane(ctx.eq, ctx.cfg, ctx.freqs, sampler, rng=substream(spec.rng_seed, *key)).snapshots


def _sorted_snapshot_hz(ctx: _Context, snaps: np.ndarray) -> np.ndarray:
    return snapshot_drumhead_frequencies(snaps, ctx.cfg, ctx.freqs) / (2 * math.pi)


def _integrator(ctx: _Context, spec: StudySpec) -> IntegratorConfig:
    kw = {} if spec.record_stride is None else {"record_stride": spec.record_stride}
    return IntegratorConfig.default(ctx.freqs, spec.t_total, **kw)


def _realizations(ctx: _Context, spec: StudySpec, positions: np.ndarray, t_kick: float, key: tuple):
    """Stream of trajectories: in-plane start ``positions[r]``, kicks at ``t_kick``, axial modes at T_par."""
    integ = _integrator(ctx, spec)
    m = ctx.cfg.ion_mass
    n = ctx.cfg.n_ions

    def one(r):
        rng = substream(spec.rng_seed, *key, r)
        vxy = sample_velocity_kicks(n, t_kick, rng, m)
        z, vz = sample_axial_thermal(ctx.drum, spec.t_par, rng, m)
        state = CrystalState(np.column_stack([positions[r], z]), np.column_stack([vxy, vz]))
        return integrate(state, ctx.cfg, ctx.freqs, integ)

    return _stream(one, range(len(positions)), spec.threads)


def _nearest_distance(targets, peaks) -> np.ndarray:
    peaks = np.asarray(peaks, dtype=float)
    if len(peaks) == 0:
        return np.full(len(np.atleast_1d(targets)), np.inf)
    return np.array([np.min(np.abs(peaks - t)) for t in np.atleast_1d(targets)])


def _spectral_shape_checks(ctx: _Context, temps, spectra: dict, peak_fn: Callable, label: str,
                           resolution: float) -> tuple[dict, dict]:
    """Peak alignment at the lowest T, persistent top peaks at the highest T, and resolved-peak counts."""
    mode_hz = ctx.drum.frequencies / (2 * math.pi)
    tilt, potato = (w / (2 * math.pi) for w in cold_fluid_reference(ctx.freqs))
    lo, hi = mode_hz.min() - 10e3, mode_hz.max() + 10e3
    peaks = {t: peak_fn(spectra[t], lo, hi) for t in temps}
    info = {f"{label}_peaks_{t:g}K": peaks[t] for t in temps}
    counts = [int(np.sum(peaks[t] < tilt - resolution)) for t in temps]
    info[f"{label}_resolved_below_tilt"] = dict(zip([f"{t:g}" for t in temps], counts))
    checks = {}
    t_lo, t_hi = min(temps), max(temps)
    if t_lo == 0:
        d = _nearest_distance(peaks[t_lo], mode_hz)
        checks[f"{label}_zero_T_peaks_on_modes"] = _check(
            len(d) > 0 and bool(np.all(d <= resolution)), float(d.max()) if len(d) else None,
            f"every {label} peak at T_perp=0 within one bin ({resolution:.4g} Hz) of a mode frequency")
    refs = np.array([ctx.freqs.omega_par / (2 * math.pi), tilt, potato])
    d = _nearest_distance(refs, peaks[t_hi])
    checks[f"{label}_persistent_peaks"] = _check(
        bool(np.all(d <= resolution)), d.tolist(),
        f"{label} peaks within one bin of w_par, tilt and potato-chip references at T_perp={t_hi:g} K")
    order = np.argsort(temps)
    c = [counts[i] for i in order]
    checks[f"{label}_resolved_count_decreasing"] = _check(
        all(a > b for a, b in zip(c, c[1:])), c,
        f"{label} peaks below the tilt mode decrease strictly with T_perp")
    return checks, info


# studies ---------------------------------------------------------------------


def snapshot_histogram_study(spec: StudySpec) -> StudyResult:
    ctx = _context(spec)
    ref_hz = ctx.drum.frequencies / (2 * math.pi)
    temps = list(spec.temperatures)
    per_t = _ordered_map(
        lambda it: _sorted_snapshot_hz(ctx, _snapshots(ctx, spec, it[1], spec.n_snapshots, (1, it[0]))),
        enumerate(temps), spec.threads)
    bw = spec.bin_width_hz
    lo = math.floor(min(f.min() for f in per_t) / bw) * bw
    hi = math.ceil(max(f.max() for f in per_t) / bw) * bw + bw
    edges = np.arange(lo, hi + 0.5 * bw, bw)
    counts = [np.histogram(f, edges)[0] for f in per_t]
    centers = 0.5 * (edges[:-1] + edges[1:])
    hist_rows = [[c] + [int(k[i]) for k in counts] for i, c in enumerate(centers)]
    cm_std = [float(np.std(f[:, 0], ddof=1)) for f in per_t]
    checks = {"cm_frequency_std": _check(max(cm_std) < 1.0, cm_std, "c.m. frequency std < 1 Hz at every T_perp")}
    t_lo = min(temps)
    if t_lo == 0 or t_lo < 1e-6:
        f = per_t[temps.index(t_lo)]
        dev = float(np.max(np.abs(f - ref_hz[None, :])))
        checks["low_T_concentration"] = _check(dev <= bw, dev, "every count within one bin of its zero-T frequency")
    isolated = []
    for f in per_t:
        spread = np.std(f, axis=0)
        gaps = np.minimum(np.abs(np.diff(ref_hz, prepend=np.inf)), np.abs(np.diff(ref_hz, append=-np.inf)))
        isolated.append(int(np.sum(2 * spread[1:] < gaps[1:])) + 1)
    tables = {
        "histogram": (["bin_center_Hz"] + [f"count_T{t:g}K" for t in temps], hist_rows),
        "reference": (["mode", "frequency_Hz"], [[i + 1, f] for i, f in enumerate(ref_hz)]),
        "cm_std": (["t_perp_K", "cm_std_Hz", "isolated_modes"],
                   [[t, s, k] for t, s, k in zip(temps, cm_std, isolated)]),
    }
    return StudyResult(spec.kind, tables, {"bin_width_Hz": bw, "isolated_modes": isolated}, checks)


def _sigma_surface(ctx: _Context, spec: StudySpec, key0: int) -> np.ndarray:
    temps = list(spec.temperatures)
    per_t = _ordered_map(
        lambda it: _sorted_snapshot_hz(ctx, _snapshots(ctx, spec, it[1], spec.n_snapshots, (key0, it[0]))),
        enumerate(temps), spec.threads)
    return np.array([np.std(f, axis=0, ddof=1) for f in per_t])


def well_resolved_modes(ref_hz: np.ndarray, sigma_hz: np.ndarray, factor: float = 2.0) -> np.ndarray:
    """Indices n >= 1 (c.m. excluded) whose zero-T gaps to both neighbours exceed factor * sigma_n."""
    gap_up = np.abs(np.diff(ref_hz, prepend=np.inf))
    gap_dn = np.abs(np.diff(ref_hz, append=-np.inf))
    ok = np.minimum(gap_up, gap_dn) > factor * sigma_hz
    ok[0] = False
    # keep only the contiguous run from the top of the spectrum
    idx = []
    for n in range(1, len(ok)):
        if not ok[n]:
            break
        idx.append(n)
    return np.array(idx, dtype=int)


def fit_power_law(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Exponent and prefactor of y = a x^p by least squares in log-log."""
    p, loga = np.polyfit(np.log(x), np.log(y), 1)
    return float(p), float(math.exp(loga))


def fluctuation_surface_study(spec: StudySpec) -> StudyResult:
    ctx = _context(spec)
    ref_hz = ctx.drum.frequencies / (2 * math.pi)
    temps = np.array(spec.temperatures, dtype=float)
    if np.any(temps <= 0) or len(temps) < 2:
        raise ValueError("the fluctuation surface needs at least two positive temperatures")
    sigma = _sigma_surface(ctx, spec, 2)
    n_modes = len(ref_hz)
    fits = [fit_power_law(temps, sigma[:, n]) if np.all(sigma[:, n] > 0) else (float("nan"), float("nan"))
            for n in range(n_modes)]
    resolved = well_resolved_modes(ref_hz, sigma[-1])
    p_res = [fits[n][0] for n in resolved]
    checks = {
        "sqrt_law": _check(len(p_res) > 0 and all(abs(p - 0.5) <= 0.1 for p in p_res),
                           {"modes": (resolved + 1).tolist(), "exponents": p_res},
                           "fitted exponent 0.5 +/- 0.1 for every well-resolved high-frequency mode"),
    }
    t_max = int(np.argmax(temps))
    magnitudes = {"top_modes_sigma_Hz": sigma[t_max, 1:4].tolist(),
                  "lowest_modes_sigma_Hz": sigma[t_max, -3:].tolist(), "t_perp_K": float(temps[t_max])}
    rows = [[float(t), n + 1, ref_hz[n], sigma[i, n]] for i, t in enumerate(temps) for n in range(1, n_modes)]
    fit_rows = [[n + 1, ref_hz[n], fits[n][0], fits[n][1], int(n in resolved)] for n in range(1, n_modes)]
    tables = {
        "surface": (["t_perp_K", "mode", "frequency_Hz", "sigma_Hz"], rows),
        "power_law": (["mode", "frequency_Hz", "exponent", "prefactor_Hz", "well_resolved"], fit_rows),
    }
    return StudyResult(spec.kind, tables, {"magnitudes": magnitudes}, checks)


def support_correlation_study(spec: StudySpec) -> StudyResult:
    ctx = _context(spec)
    ref_hz = ctx.drum.frequencies / (2 * math.pi)
    t = spec.temperatures[0]
    sigma = _sigma_surface(ctx, replace(spec, temperatures=(t,)), 3)[0]
    _, support = mode_entropy_support(ctx.drum)
    inv_s = 1.0 / support
    rho = float(spearmanr(sigma[1:], inv_s[1:]).statistic)
    rows = [[n + 1, ref_hz[n], sigma[n], inv_s[n]] for n in range(1, len(ref_hz))]
    checks = {"spearman": _check(rho > 0.5, rho, "Spearman(sigma_n, 1/S_n) > 0.5, c.m. excluded")}
    tables = {"support": (["mode", "frequency_Hz", "sigma_Hz", "inverse_support"], rows)}
    return StudyResult(spec.kind, tables, {"t_perp_K": t, "cm_support": float(support[0])}, checks)


def _bootstrap_se(values: np.ndarray, rng: np.random.Generator, size: int, n_boot: int = 2000) -> float:
    """Bootstrap standard error of the mean of ``size`` draws resampled from ``values``."""
    idx = rng.integers(0, len(values), size=(n_boot, size))
    return float(np.std(values[idx].mean(axis=1), ddof=1))


def _drumhead_band(ctx: _Context) -> tuple[float, float]:
    f = ctx.drum.frequencies / (2 * math.pi)
    return f.min() - 10e3, f.max() + 10e3


def psd_broadening_study(spec: StudySpec) -> StudyResult:
    ctx = _context(spec)
    temps = list(spec.temperatures)
    band = _drumhead_band(ctx)
    spectra, band_powers = {}, {}
    for i, t in enumerate(temps):
        acc = PsdAccumulator("z")
        powers = []
        snaps = _snapshots(ctx, spec, t, spec.n_realizations, (4, i))
        for traj in _realizations(ctx, spec, snaps, t, (5, i)):
            acc.add(traj)
            single = PsdAccumulator("z")
            single.add(traj)
            powers.append(band_power(single.spectrum(), *band))
        spectra[t] = acc.spectrum()
        band_powers[t] = np.array(powers)
    res = spectra[temps[0]].resolution
    checks, info = _spectral_shape_checks(
        ctx, temps, spectra, lambda s, lo, hi: detect_peaks(s, lo, hi, prominence_db=spec.peak_prominence_db),
        "psd", res)
    rng = substream(spec.rng_seed, 6)
    halving = {}
    for t in temps:
        p = band_powers[t]
        if len(p) >= 4:
            half = p[: len(p) // 2]
            se = _bootstrap_se(p, rng, len(half))
            halving[f"{t:g}"] = abs(half.mean() - p.mean()) / se if se > 0 else 0.0
    if halving:
        checks["ensemble_halving"] = _check(all(v < 3 for v in halving.values()), halving,
                                            "half-ensemble band power within 3 bootstrap SE of the full mean")
    mask = spectra[temps[0]].band(*band)
    freqs = spectra[temps[0]].frequencies[mask]
    rows = [[f] + [spectra[t].values[mask][k] for t in temps] for k, f in enumerate(freqs)]
    tables = {"psd_z": (["frequency_Hz"] + [f"psd_T{t:g}K_m2_per_Hz" for t in temps], rows)}
    meta = {"n_realizations": spec.n_realizations, "resolution_Hz": res, **info}
    return StudyResult(spec.kind, tables, meta, checks)


def vk_comparison_study(spec: StudySpec) -> StudyResult:
    ctx = _context(spec)
    t = spec.temperatures[0]
    n = ctx.cfg.n_ions
    inplane = inplane_modes(ctx.model)
    cyc_hz = inplane.frequencies[n:] / (2 * math.pi)
    cyc_band = (cyc_hz.min() - 20e3, cyc_hz.max() + 20e3)
    arms = {}
    eq_pos = np.repeat(ctx.eq.positions[None], spec.n_realizations, axis=0)
    mh_pos = _snapshots(ctx, spec, t, spec.n_realizations, (7, 0))
    for name, pos, t_kick, key in (("VK", eq_pos, 2.0 * t, 8), ("MH-VK", mh_pos, t, 9)):
        acc_xy, acc_z = PsdAccumulator("inplane"), PsdAccumulator("z")
        for traj in _realizations(ctx, spec, pos, t_kick, (key, 0)):
            acc_xy.add(traj)
            acc_z.add(traj)
        arms[name] = (acc_xy.spectrum(), acc_z.spectrum())
    vk, mh = arms["VK"][0], arms["MH-VK"][0]
    exb_db = band_ratio_db(mh, vk, *EXB_BAND_HZ)
    cyc_db = float(to_db(band_power(vk, *cyc_band)) - to_db(band_power(mh, *cyc_band)))
    th = {"exb_db": 15.0, "cyclotron_db": 3.0, "cyclotron_tol_db": 1.0, **spec.thresholds}
    checks = {
        "exb_separation": _check(float(exb_db.min()) >= th["exb_db"],
                                 {"min_db": float(exb_db.min()), "median_db": float(np.median(exb_db))},
                                 f"MH-VK over VK >= {th['exb_db']} dB in every bin of 0-100 kHz"),
        "cyclotron_excess": _check(abs(cyc_db - th["cyclotron_db"]) <= th["cyclotron_tol_db"], cyc_db,
                                   f"VK over MH-VK = {th['cyclotron_db']} +/- {th['cyclotron_tol_db']} dB "
                                   "in the cyclotron band"),
    }
    res = vk.resolution
    zero_like = detect_peaks(arms["VK"][1], *_drumhead_band(ctx), prominence_db=spec.peak_prominence_db)
    mode_hz = ctx.drum.frequencies / (2 * math.pi)
    d = _nearest_distance(zero_like, mode_hz)
    exb_mask = vk.band(*EXB_BAND_HZ)
    cyc_mask = vk.band(*cyc_band)
    rows = [[f, vk.values[k], mh.values[k]] for k, f in enumerate(vk.frequencies) if exb_mask[k] or cyc_mask[k]]
    dmask = arms["VK"][1].band(*_drumhead_band(ctx))
    zrows = [[f, v] for f, v in zip(arms["VK"][1].frequencies[dmask], arms["VK"][1].values[dmask])]
    tables = {
        "psd_inplane": (["frequency_Hz", "psd_VK_m2_per_Hz", "psd_MHVK_m2_per_Hz"], rows),
        "psd_z_vk": (["frequency_Hz", "psd_m2_per_Hz"], zrows),
    }
    meta = {"t_perp_K": t, "cyclotron_band_Hz": list(cyc_band), "resolution_Hz": res,
            "vk_drumhead_peaks_on_modes_fraction": float(np.mean(d <= res)) if len(d) else 0.0,
            "vk_drumhead_peak_count": int(len(zero_like))}
    return StudyResult(spec.kind, tables, meta, checks)


def odf_grid(ctx: _Context, step_hz: float) -> np.ndarray:
    lo, hi = _drumhead_band(ctx)
    return 2 * math.pi * np.arange(math.floor(lo / step_hz) * step_hz, hi + step_hz, step_hz)


ODF_RELATIVE_PROMINENCE = 0.1


def odf_peaks(spec: Spectrum, f_min: float, f_max: float, smoothing_hz: float) -> np.ndarray:
    """ODF peak frequencies after averaging over one echo sidelobe period.

    A peak must rise 10% of the smoothed band's full range above its surroundings.
    """
    m = spec.band(f_min, f_max)
    sub = smooth(Spectrum(spec.frequencies[m], spec.values[m], spec.kind, spec.n_realizations, spec.axis),
                 smoothing_hz)
    prom = ODF_RELATIVE_PROMINENCE * float(np.ptp(sub.values))
    return detect_peaks(sub, prominence_db=prom, log=False)


def odf_scan_study(spec: StudySpec) -> StudyResult:
    ctx = _context(spec)
    temps = list(spec.temperatures)
    tau = 0.5 * (spec.t_total - spec.odf_t_pi)
    if spec.odf_f0 is None:
        f0, _ = calibrate_odf_force(ctx.drum, spec.t_par, ctx.cfg.ion_mass, tau, t_pi=spec.odf_t_pi,
                                    gamma=spec.odf_gamma, target=spec.odf_target)
    else:
        f0 = spec.odf_f0
    grid = odf_grid(ctx, spec.odf_step_hz)
    far = 2.0 * ctx.freqs.omega_par
    odf = OdfConfig(f0, np.append(grid, far), tau, spec.odf_t_pi, spec.odf_gamma)
    odf_spectra, psd_spectra = {}, {}
    for i, t in enumerate(temps):
        acc_odf, acc_z = OdfAccumulator(odf), PsdAccumulator("z")
        snaps = _snapshots(ctx, spec, t, spec.n_realizations, (10, i))
        for traj in _realizations(ctx, spec, snaps, t, (11, i)):
            acc_odf.add(traj)
            acc_z.add(traj)
        odf_spectra[t] = acc_odf.spectrum()
        psd_spectra[t] = acc_z.spectrum()
    res = psd_spectra[temps[0]].resolution
    checks, info = _spectral_shape_checks(
        ctx, temps, psd_spectra, lambda s, lo, hi: detect_peaks(s, lo, hi, prominence_db=spec.peak_prominence_db),
        "psd", res)
    c2, info2 = _spectral_shape_checks(
        ctx, temps, odf_spectra, lambda s, lo, hi: odf_peaks(s, lo, hi, 1.0 / tau), "odf", res)
    checks.update(c2)
    info.update(info2)
    baseline = odf.baseline
    far_vals = [float(odf_spectra[t].values[-1]) for t in temps]
    checks["odf_off_resonance_baseline"] = _check(
        all(abs(v - baseline) < 0.01 for v in far_vals), far_vals,
        f"bright fraction at mu = 2 w_par within 0.01 of the baseline {baseline:.6f}")
    rows = [[f] + [odf_spectra[t].values[k] for t in temps] for k, f in enumerate(odf_spectra[temps[0]].frequencies)
            if f < far / (2 * math.pi)]
    mask = psd_spectra[temps[0]].band(*_drumhead_band(ctx))
    prow = [[f] + [psd_spectra[t].values[mask][k] for t in temps]
            for k, f in enumerate(psd_spectra[temps[0]].frequencies[mask])]
    tables = {
        "odf": (["mu_Hz"] + [f"bright_T{t:g}K" for t in temps], rows),
        "psd_z": (["frequency_Hz"] + [f"psd_T{t:g}K_m2_per_Hz" for t in temps], prow),
    }
    meta = {"f0_N": f0, "tau_s": tau, "t_pi_s": spec.odf_t_pi, "gamma_per_s": spec.odf_gamma,
            "baseline": baseline, "calibration_target": spec.odf_target if spec.odf_f0 is None else None,
            "resolution_Hz": res, "n_realizations": spec.n_realizations, **info}
    return StudyResult(spec.kind, tables, meta, checks)


def sho_appendix_study(spec: StudySpec) -> StudyResult:
    cfg = spec.trap
    freqs = derive_frequencies(cfg)
    m = cfg.ion_mass
    k = m * freqs.omega_par**2
    t = spec.temperatures[0]
    rep = sho_kick_moment_study(k, m, t, spec.n_samples, substream(spec.rng_seed, 12))
    ref = rep["reference"]
    ind, kick = rep["independent"], rep["kick"]

    def within(est, target):
        return abs(est.mean - target) <= 3 * est.stderr

    ratio = kick["x2v2"].mean / ind["x2v2"].mean
    ratio_se = ratio * math.hypot(kick["x2v2"].stderr / kick["x2v2"].mean, ind["x2v2"].stderr / ind["x2v2"].mean)
    checks = {
        "independent_x2v2": _check(within(ind["x2v2"], ref["x2v2_independent"]), ind["x2v2"].mean,
                                   "independent sampling x^2 v^2 = (k_B T)^2 / (k m) within 3 SE"),
        "kick_x2v2": _check(within(kick["x2v2"], ref["x2v2_kick"]), kick["x2v2"].mean,
                            "kick sampling x^2 v^2 = 1.5 (k_B T)^2 / (k m) within 3 SE"),
        "ratio": _check(abs(ratio - 1.5) <= 3 * ratio_se, ratio, "kick / independent x^2 v^2 = 1.5 within 3 SE"),
        "second_moments": _check(all(within(r[q], ref[q]) for r in (ind, kick) for q in ("x2", "v2")),
                                 {q: [ind[q].mean, kick[q].mean] for q in ("x2", "v2")},
                                 "x^2 = k_B T / k and v^2 = k_B T / m within 3 SE for both schemes"),
    }
    rows = []
    for method, est in (("independent", ind), ("kick", kick)):
        for q in ("x2", "v2", "xv", "x2v2"):
            rows.append([method, q, est[q].mean, est[q].stderr])
    tables = {"moments": (["method", "moment", "mean", "stderr"], rows)}
    meta = {"k_N_per_m": k, "mass_kg": m, "temperature_K": t, "n_samples": spec.n_samples,
            "reference": ref, "kT_J": CONSTANTS.boltzmann * t}
    return StudyResult(spec.kind, tables, meta, checks)


STUDIES = {
    "snapshot_histogram": snapshot_histogram_study,
    "fluctuation_surface": fluctuation_surface_study,
    "support_correlation": support_correlation_study,
    "psd_broadening": psd_broadening_study,
    "vk_comparison": vk_comparison_study,
    "odf_scan": odf_scan_study,
    "sho_appendix": sho_appendix_study,
}


def run_study(spec: StudySpec) -> StudyResult:
    return STUDIES[spec.kind](spec)


def write_result(result: StudyResult, out_dir: str | Path, extra_metadata: dict | None = None) -> Path:
    """Write tables as CSV, metadata.json and summary.json under ``out_dir/<kind>``; no timestamps."""
    d = Path(out_dir) / result.kind
    d.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in result.tables.items():
        io.write_csv(d / f"{name}.csv", header, rows)
    meta = dict(result.metadata)
    meta.update(extra_metadata or {})
    io.write_json(d / "metadata.json", meta)
    io.write_json(d / "summary.json", {"study": result.kind, "passed": result.passed, "checks": result.checks})
    return d
