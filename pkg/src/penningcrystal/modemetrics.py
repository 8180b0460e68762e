"""Per-mode metrics: energy ratio, helicity, thermal displacement, entropy and support."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ImaginaryFrequency
from .linmodes import DrumheadModes, InPlaneModes, LinearizedModel
from .physcore import CONSTANTS, CharacteristicFrequencies


@dataclass(frozen=True)
class ModeMetrics:
    r_n: np.ndarray
    chi_n: np.ndarray
    msd_n: np.ndarray  # m^2 at ``temperature``
    entropy_n: np.ndarray  # bits
    support_n: np.ndarray
    temperature: float


def _select(modes: InPlaneModes, index):
    ur = modes.position_part
    w = modes.frequencies_scaled
    if index is None:
        return ur, w
    return ur[:, index], w[index]


def energy_ratio(modes: InPlaneModes, model: LinearizedModel, index=None) -> np.ndarray:
    """R_n = <u^r|K|u^r> / (m w^2 <u^r|u^r>), the time-averaged potential/kinetic ratio."""
    ur, w = _select(modes, index)
    pot = np.real(np.einsum("i...,ij,j...->...", ur.conj(), model.k_perp_scaled, ur))
    return pot / (w**2 * np.sum(np.abs(ur) ** 2, axis=0))


def energy_ratio_direct(modes: InPlaneModes, model: LinearizedModel, index=None) -> np.ndarray:
    """R_n from the velocity part directly: <u^r|K|u^r> / (m <u^v|u^v>)."""
    ur = modes.position_part if index is None else modes.position_part[:, index]
    uv = modes.velocity_part if index is None else modes.velocity_part[:, index]
    pot = np.real(np.einsum("i...,ij,j...->...", ur.conj(), model.k_perp_scaled, ur))
    return pot / np.sum(np.abs(uv) ** 2, axis=0)


def helicity(modes: InPlaneModes, model: LinearizedModel, index=None) -> np.ndarray:
    """chi_n = <u^r|(-iL)|u^r> / (w_c' <u^r|u^r>); +1 counterclockwise, -1 clockwise."""
    ur, _ = _select(modes, index)
    return helicity_of_vector(ur, model)


def helicity_of_vector(ur: np.ndarray, model: LinearizedModel) -> np.ndarray:
    """Helicity of arbitrary position vectors (columns) under the model's Lorentz matrix."""
    wcp = model.omega_c_prime_scaled
    mil = -1j * model.lorentz_scaled
    num = np.real(np.einsum("i...,ij,j...->...", ur.conj(), mil, ur))
    return num / (wcp * np.sum(np.abs(ur) ** 2, axis=0))


def cyclotron_ratio_approx(omega_n, omega_c_prime: float, omega_plus: float):
    """Linearized R_n in the cyclotron branch about the single-ion omega_plus."""
    if not omega_plus > 0:
        raise ValueError("omega_plus must be positive")
    return 1.0 - omega_c_prime / omega_plus + omega_c_prime / omega_plus**2 * (np.asarray(omega_n) - omega_plus)


def msd_formula(omega, r, temperature: float, mass: float):
    """2/(1+R) * k_B T / (m w^2) in m^2."""
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    return 2.0 / (1.0 + np.asarray(r)) * CONSTANTS.boltzmann * temperature / (mass * np.asarray(omega) ** 2)


def mode_msd(modes: InPlaneModes, model: LinearizedModel, temperature: float, index=None) -> np.ndarray:
    r = energy_ratio(modes, model, index)
    w = modes.frequencies if index is None else modes.frequencies[index]
    return msd_formula(w, r, temperature, model.mass)


def _entropy(p: np.ndarray, log) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * log(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=0)


def mode_entropy_support(modes: DrumheadModes | np.ndarray, base: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """Shannon entropy of |b_jn|^2 (in units of log ``base``) and support number base**H."""
    vecs = modes.eigenvectors if isinstance(modes, DrumheadModes) else np.asarray(modes)
    p = np.abs(vecs) ** 2
    if base == 2.0:
        h = _entropy(p, np.log2)
    else:
        h = _entropy(p, np.log) / math.log(base)
    return h, base**h


def cold_fluid_reference(freqs: CharacteristicFrequencies) -> tuple[float, float]:
    """Tilt and potato-chip drumhead frequencies of the cold-fluid theory (rad/s)."""
    wz2, wp2 = freqs.omega_par**2, freqs.omega_perp**2
    if wz2 < 1.75 * wp2:
        raise ImaginaryFrequency("omega_par^2 < 7 omega_perp^2 / 4: potato-chip mode is unstable")
    return math.sqrt(wz2 - wp2), math.sqrt(max(wz2 - 1.75 * wp2, 0.0))


def compute_metrics(model: LinearizedModel, inplane: InPlaneModes, drumhead: DrumheadModes,
                    temperature: float) -> ModeMetrics:
    h, s = mode_entropy_support(drumhead)
    return ModeMetrics(
        r_n=energy_ratio(inplane, model),
        chi_n=helicity(inplane, model),
        msd_n=mode_msd(inplane, model, temperature),
        entropy_n=h,
        support_n=s,
        temperature=temperature,
    )
