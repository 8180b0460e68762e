"""Power spectral densities and spin-echo ODF spectra of recorded trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks

from .errors import DurationMismatch, GridMismatch
from .linmodes import DrumheadModes
from .physcore import CONSTANTS

PSD_NORMALIZATION = "z~(w) = T^-1/2 int_0^T z(t) exp(-i w t) dt; one-sided, DC and Nyquist counted once"


@dataclass
class Spectrum:
    frequencies: np.ndarray  # Hz, strictly increasing
    values: np.ndarray
    kind: str  # "PSD" or "ODF"
    n_realizations: int
    axis: str  # "z" or "inplane"
    metadata: dict = field(default_factory=dict)

    def band(self, f_min: float, f_max: float, include_dc: bool = False) -> np.ndarray:
        """Boolean mask of bins with f_min <= f <= f_max."""
        mask = (self.frequencies >= f_min) & (self.frequencies <= f_max)
        if not include_dc:
            mask &= self.frequencies > 0
        return mask

    @property
    def resolution(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])


def _coordinates(traj, axis: str) -> list[np.ndarray]:
    if axis == "z":
        return [traj.positions[:, :, 2]]
    if axis == "inplane":
        return [traj.positions[:, :, 0], traj.positions[:, :, 1]]
    if axis in ("x", "y"):
        return [traj.positions[:, :, "xy".index(axis)]]
    raise ValueError(f"unknown axis {axis!r}")


class PsdAccumulator:
    """Running realization average of the one-sided PSD; feed trajectories one at a time."""

    def __init__(self, axis: str = "z"):
        self.axis = axis
        self.grid: tuple[int, float] | None = None
        self.total: np.ndarray | None = None
        self.count = 0
        self.freqs: np.ndarray | None = None

    def add(self, traj) -> None:
        times = np.asarray(traj.times)
        if len(times) < 3:
            raise GridMismatch("need at least three samples")
        dts = np.diff(times)
        dt = float(np.mean(dts))
        if np.max(np.abs(dts - dt)) > 1e-9 * dt:
            raise GridMismatch("trajectory is not uniformly sampled")
        grid = (len(times), dt)
        if self.grid is None:
            self.grid = grid
        elif grid[0] != self.grid[0] or abs(grid[1] - self.grid[1]) > 1e-9 * self.grid[1]:
            raise GridMismatch(f"sampling grid {grid} differs from {self.grid}")
        power = one_sided_psd(_coordinates(traj, self.axis), dt)
        self.total = power if self.total is None else self.total + power
        self.count += 1
        if self.freqs is None:
            m = len(times) - 1
            self.freqs = np.fft.rfftfreq(m, dt)

    def spectrum(self) -> Spectrum:
        if not self.count:
            raise ValueError("no trajectories accumulated")
        m, dt = self.grid[0] - 1, self.grid[1]
        return Spectrum(self.freqs.copy(), self.total / self.count, "PSD", self.count, self.axis,
                        {"normalization": PSD_NORMALIZATION, "duration_s": m * dt, "sample_interval_s": dt})


def one_sided_psd(coords: list[np.ndarray], dt: float) -> np.ndarray:
    """Ion-summed one-sided PSD (m^2/Hz) of (S, N) coordinate series sampled at ``dt``.

    The last sample closes the period [t_0, t_0 + T) and is dropped, so
    T = (S - 1) dt and the bins sit at k / T.
    """
    total = None
    for c in coords:
        c = np.asarray(c, dtype=float)[:-1]
        m = c.shape[0]
        duration = m * dt
        spec = np.fft.rfft(c, axis=0) * (dt / math.sqrt(duration))
        p = np.sum(np.abs(spec) ** 2, axis=1)
        # fold negative frequencies; DC and (even m) Nyquist have no partner
        upper = len(p) - 1 if m % 2 == 0 else len(p)
        p[1:upper] *= 2.0
        total = p if total is None else total + p
    return total


def psd(trajectories: Iterable, axis: str = "z") -> Spectrum:
    """Realization-averaged one-sided PSD; ``trajectories`` may be any iterable, consumed once."""
    acc = PsdAccumulator(axis)
    for traj in trajectories:
        acc.add(traj)
    return acc.spectrum()


def to_db(values) -> np.ndarray:
    return 10.0 * np.log10(np.asarray(values, dtype=float))


def band_power(spec: Spectrum, f_min: float, f_max: float) -> float:
    """Band-integrated PSD (sum of value * df over the band, DC excluded)."""
    mask = spec.band(f_min, f_max)
    return float(np.sum(spec.values[mask]) * spec.resolution)


def band_ratio_db(a: Spectrum, b: Spectrum, f_min: float, f_max: float) -> np.ndarray:
    """Per-bin 10 log10(a / b) over a band."""
    if a.values.shape != b.values.shape:
        raise GridMismatch("spectra are on different grids")
    mask = a.band(f_min, f_max)
    return to_db(a.values[mask]) - to_db(b.values[mask])


def detect_peaks(spec: Spectrum, f_min: float = 0.0, f_max: float = math.inf, *,
                 prominence_db: float = 3.0, log: bool = True) -> np.ndarray:
    """Frequencies (Hz) of local maxima standing ``prominence_db`` above their surroundings.

    For ODF spectra (``log=False``) the prominence is taken in bright-fraction
    units instead of dB.
    """
    mask = spec.band(f_min, f_max, include_dc=False)
    vals = spec.values[mask]
    freqs = spec.frequencies[mask]
    if log:
        vals = to_db(np.maximum(vals, np.finfo(float).tiny))
    idx, _ = find_peaks(vals, prominence=prominence_db)
    return freqs[idx]


def smooth(spec: Spectrum, width_hz: float) -> Spectrum:
    """Centred moving average over ``width_hz`` (edges use the nearest value).

    Averaging an ODF spectrum over one echo sidelobe period (1/tau) removes
    the ripple the spin-echo filter imprints on every mode.
    """
    df = float(np.median(np.diff(spec.frequencies)))
    n = max(1, int(round(width_hz / df)))
    vals = uniform_filter1d(np.asarray(spec.values, dtype=float), n, mode="nearest")
    return Spectrum(spec.frequencies, vals, spec.kind, spec.n_realizations, spec.axis,
                    {**spec.metadata, "smoothing_Hz": n * df})


# ODF spin-echo phase ---------------------------------------------------------


@dataclass(frozen=True)
class OdfConfig:
    """Spin-echo optical-dipole-force settings.

    ``mu_r`` holds the difference frequencies (rad/s) to evaluate; the
    drive arms are (0, tau) and (tau + t_pi, 2 tau + t_pi) from trajectory start.
    """

    f0: float
    mu_r: np.ndarray
    tau: float
    t_pi: float = 0.0
    gamma: float = 100.0

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu_r, dtype=float))
        object.__setattr__(self, "mu_r", mu)
        if not (self.f0 >= 0 and self.tau > 0 and self.t_pi >= 0 and self.gamma >= 0):
            raise ValueError("f0, t_pi, gamma must be >= 0 and tau > 0")
        if np.any(mu < 0) or not np.all(np.isfinite(mu)):
            raise ValueError("mu_r must be finite and >= 0")

    @property
    def duration(self) -> float:
        return 2.0 * self.tau + self.t_pi

    @property
    def baseline(self) -> float:
        """Bright fraction with no accumulated phase."""
        return 0.5 * (1.0 - math.exp(-2.0 * self.gamma * self.tau)) if math.isfinite(self.gamma) else 0.5


def trapezoid_fourier_weights(times: np.ndarray, a: float, b: float, mu: np.ndarray) -> np.ndarray:
    """Complex weights W (M, S) with sum_k W[m, k] f_k ~ int_a^b f(t) exp(i mu_m t) dt.

    The whole integrand f(t) exp(i mu t) is interpolated linearly between
    samples (trapezoid rule), with partial segments where a or b fall between
    samples. For an oversampled oscillation near resonance (mu close to its
    frequency) the integrand varies slowly and the rule has no sinc^2
    attenuation, unlike integrating only the interpolant of f exactly.
    """
    times = np.asarray(times, dtype=float)
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    w = np.zeros((len(mu), len(times)), dtype=complex)
    lo = np.maximum(times[:-1], a)
    hi = np.minimum(times[1:], b)
    k = np.nonzero(hi > lo)[0]
    if len(k) == 0:
        return w
    h = times[k + 1] - times[k]
    s0 = (lo[k] - times[k]) / h
    s1 = (hi[k] - times[k]) / h
    # int_{s0}^{s1} (1 - s) ds and int_{s0}^{s1} s ds, times the segment length
    right = h * (s1**2 - s0**2) / 2.0
    left = h * (s1 - s0) - right
    phase = np.exp(1j * np.outer(mu, times))
    w[:, k] += left * phase[:, k]
    w[:, k + 1] += right * phase[:, k + 1]
    return w


def echo_weights(times: np.ndarray, odf: OdfConfig) -> np.ndarray:
    """Real weights (M, S) for int g(t) f(t) cos(mu t) dt, t from the first sample."""
    t = np.asarray(times, dtype=float) - times[0]
    first = trapezoid_fourier_weights(t, 0.0, odf.tau, odf.mu_r)
    second = trapezoid_fourier_weights(t, odf.tau + odf.t_pi, odf.duration, odf.mu_r)
    return np.real(first - second)


def odf_phases(traj, odf: OdfConfig) -> np.ndarray:
    """Accumulated spin phase A_j (M, N) for every difference frequency and ion."""
    duration = float(traj.times[-1] - traj.times[0])
    if abs(duration - odf.duration) > 1e-9 * odf.duration + 1e-15:
        raise DurationMismatch(f"trajectory lasts {duration:.9e} s, ODF sequence needs {odf.duration:.9e} s")
    w = echo_weights(traj.times, odf)
    return (2.0 * odf.f0 / CONSTANTS.hbar) * (w @ traj.positions[:, :, 2])


def bright_probability(phases: np.ndarray, odf: OdfConfig) -> np.ndarray:
    decay = math.exp(-2.0 * odf.gamma * odf.tau) if math.isfinite(odf.gamma) else 0.0
    return 0.5 * (1.0 - decay * np.cos(phases))


class OdfAccumulator:
    """Running ion- and realization-averaged bright fraction; echo weights are built once per grid."""

    def __init__(self, odf: OdfConfig):
        order = np.argsort(odf.mu_r)
        self.odf = OdfConfig(odf.f0, odf.mu_r[order], odf.tau, odf.t_pi, odf.gamma)
        self._times: np.ndarray | None = None
        self._weights: np.ndarray | None = None
        self.total: np.ndarray | None = None
        self.count = 0

    def _weights_for(self, times: np.ndarray) -> np.ndarray:
        rel = np.asarray(times) - times[0]
        if self._times is None or len(rel) != len(self._times) or not np.allclose(rel, self._times, rtol=0,
                                                                                  atol=1e-15):
            self._times = rel
            self._weights = echo_weights(rel, self.odf)
        return self._weights

    def add(self, traj) -> None:
        duration = float(traj.times[-1] - traj.times[0])
        if abs(duration - self.odf.duration) > 1e-9 * self.odf.duration + 1e-15:
            raise DurationMismatch(f"trajectory lasts {duration:.9e} s, ODF sequence needs {self.odf.duration:.9e} s")
        w = self._weights_for(traj.times)
        phases = (2.0 * self.odf.f0 / CONSTANTS.hbar) * (w @ traj.positions[:, :, 2])
        p = bright_probability(phases, self.odf).mean(axis=1)
        self.total = p if self.total is None else self.total + p
        self.count += 1

    def spectrum(self) -> Spectrum:
        if not self.count:
            raise ValueError("no trajectories accumulated")
        odf = self.odf
        return Spectrum(odf.mu_r / (2 * math.pi), self.total / self.count, "ODF", self.count, "z",
                        {"f0_N": odf.f0, "tau_s": odf.tau, "t_pi_s": odf.t_pi, "gamma_per_s": odf.gamma,
                         "baseline": odf.baseline})


def odf_bright_fraction(trajectories: Iterable, odf: OdfConfig) -> np.ndarray:
    """Ion- and realization-averaged bright fraction for each mu_r (in the order given)."""
    acc = OdfAccumulator(odf)
    for traj in trajectories:
        acc.add(traj)
    if not acc.count:
        raise ValueError("no trajectories given")
    out = np.empty_like(acc.total)
    out[np.argsort(odf.mu_r)] = acc.total / acc.count
    return out


def odf_spectrum(trajectories: Iterable, odf: OdfConfig) -> Spectrum:
    """ODF spectrum over the configured difference frequencies (reported in Hz, ascending)."""
    acc = OdfAccumulator(odf)
    for traj in trajectories:
        acc.add(traj)
    return acc.spectrum()


def echo_response(omega: float, mu: np.ndarray, tau: float, t_pi: float = 0.0,
                  n_grid: int = 20001) -> np.ndarray:
    """|int g(t) exp(-i omega t) cos(mu t) dt| for a unit-amplitude oscillation at ``omega``."""
    duration = 2 * tau + t_pi
    t = np.linspace(0.0, duration, n_grid)
    odf = OdfConfig(0.0, mu, tau, t_pi, 0.0)
    w = echo_weights(t, odf)
    return np.abs(w @ np.exp(-1j * omega * t))


def calibrate_odf_force(modes: DrumheadModes, t_par: float, mass: float, tau: float, *,
                        t_pi: float = 0.0, gamma: float = 100.0, target: float = 0.4) -> tuple[float, float]:
    """Force F0 (N) putting the thermal c.m.-mode bright fraction at ``target`` on its strongest sideband.

    Only the c.m. mode is counted. Its spin phase is Gaussian with variance
    s^2, so the averaged bright fraction is (1 - e^{-2 Gamma tau} e^{-s^2/2}) / 2,
    which never exceeds 1/2. Returns (F0, mu_peak in rad/s).
    """
    decay = math.exp(-2.0 * gamma * tau)
    ratio = (1.0 - 2.0 * target) / decay
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"target bright fraction {target} is outside the reachable range")
    var_needed = -2.0 * math.log(ratio)
    w = float(modes.frequencies[0])
    n = modes.eigenvectors.shape[0]
    # coarse then fine search for the strongest sideband
    mu = w + np.linspace(-10.0, 10.0, 801) / tau
    resp = echo_response(w, mu, tau, t_pi)
    mu_pk = mu[np.argmax(resp)]
    mu = mu_pk + np.linspace(-0.05, 0.05, 201) / tau
    resp = echo_response(w, mu, tau, t_pi)
    i = int(np.argmax(resp))
    # per-ion c.m. displacement 2 (a cos wt + b sin wt) / sqrt(N), a, b ~ N(0, kT / (4 m w^2))
    s2 = CONSTANTS.boltzmann * t_par / (4.0 * mass * w**2)
    var_unit = (4.0 / n) * s2 * resp[i] ** 2 * (2.0 / CONSTANTS.hbar) ** 2
    return math.sqrt(var_needed / var_unit), float(mu[i])
