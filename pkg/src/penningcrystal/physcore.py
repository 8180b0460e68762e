"""Physical constants, trap description, crystal state and the rotating-frame forces.

Internally everything runs in scaled units: time in 1/omega_par, length in
l0 = (k_e e^2 / (m omega_par^2))^(1/3), energy in m omega_par^2 l0^2. In those
units the Coulomb prefactor is 1 and the trap enters only through four
dimensionless coefficients (see :class:`Scales`). Public functions in this
module take and return SI values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants as _sc

from . import _kernels
from .errors import CoincidentIons, UnstableTrap


@dataclass(frozen=True)
class PhysicalConstants:
    coulomb_constant: float = 1.0 / (4.0 * math.pi * _sc.epsilon_0)
    boltzmann: float = _sc.k
    hbar: float = _sc.hbar


CONSTANTS = PhysicalConstants()
ELEMENTARY_CHARGE = _sc.e
BE9_MASS = 9.012182 * _sc.atomic_mass
DEFAULT_MIN_SEPARATION = 1e-12  # m


@dataclass(frozen=True)
class TrapConfig:
    """Penning trap parameters.

    ``v0`` and ``vw`` follow the convention omega = sqrt(2 e V / m), so they
    carry units of V/m^2.
    """

    ion_mass: float
    ion_charge: float
    b_field: float
    v0: float
    vw: float
    omega_r: float
    n_ions: int

    def __post_init__(self):
        for name in ("ion_mass", "ion_charge", "b_field", "v0", "omega_r"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not (math.isfinite(self.vw) and self.vw >= 0):
            raise ValueError(f"vw must be >= 0, got {self.vw!r}")
        if int(self.n_ions) != self.n_ions or self.n_ions < 1:
            raise ValueError(f"n_ions must be a positive integer, got {self.n_ions!r}")

    @classmethod
    def from_frequencies(
        cls,
        *,
        omega_par: float,
        omega_r: float,
        omega_w: float,
        n_ions: int,
        omega_c: float | None = None,
        b_field: float | None = None,
        ion_mass: float = BE9_MASS,
        ion_charge: float = ELEMENTARY_CHARGE,
    ) -> "TrapConfig":
        """Build a config from angular frequencies (rad/s); voltages are back-derived."""
        if (omega_c is None) == (b_field is None):
            raise ValueError("give exactly one of omega_c or b_field")
        if b_field is None:
            b_field = omega_c * ion_mass / ion_charge
        return cls(
            ion_mass=ion_mass,
            ion_charge=ion_charge,
            b_field=b_field,
            v0=ion_mass * omega_par**2 / (2.0 * ion_charge),
            vw=ion_mass * omega_w**2 / (2.0 * ion_charge),
            omega_r=omega_r,
            n_ions=int(n_ions),
        )

    def with_ions(self, n_ions: int) -> "TrapConfig":
        return TrapConfig(self.ion_mass, self.ion_charge, self.b_field, self.v0, self.vw,
                          self.omega_r, int(n_ions))


@dataclass(frozen=True)
class CharacteristicFrequencies:
    omega_c: float
    omega_c_prime: float
    omega_par: float
    omega_perp: float
    omega_w: float

    @property
    def omega_plus(self) -> float:
        """Single-ion cyclotron frequency, ignoring the wall."""
        return 0.5 * (math.hypot(self.omega_c_prime, 2.0 * self.omega_perp) + self.omega_c_prime)

    @property
    def omega_minus(self) -> float:
        """Single-ion magnetron (ExB) frequency, ignoring the wall."""
        return 0.5 * (math.hypot(self.omega_c_prime, 2.0 * self.omega_perp) - self.omega_c_prime)

    def in_hz(self) -> dict[str, float]:
        return {k: v / (2 * math.pi) for k, v in self.__dict__.items()}


def derive_frequencies(cfg: TrapConfig) -> CharacteristicFrequencies:
    m, e = cfg.ion_mass, cfg.ion_charge
    omega_c = e * cfg.b_field / m
    omega_par = math.sqrt(2.0 * e * cfg.v0 / m)
    omega_w = math.sqrt(2.0 * e * cfg.vw / m)
    perp2 = omega_c * cfg.omega_r - cfg.omega_r**2 - 0.5 * omega_par**2
    if perp2 <= 0.0 or perp2 <= omega_w**2:
        raise UnstableTrap(
            f"omega_perp^2 = {perp2:.6g} rad^2/s^2 does not exceed omega_W^2 = {omega_w**2:.6g}; "
            "no planar confinement"
        )
    return CharacteristicFrequencies(
        omega_c=omega_c,
        omega_c_prime=omega_c - 2.0 * cfg.omega_r,
        omega_par=omega_par,
        omega_perp=math.sqrt(perp2),
        omega_w=omega_w,
    )


@dataclass(frozen=True)
class Scales:
    """Unit scales and the dimensionless equation-of-motion coefficients."""

    mass: float
    length: float
    time: float
    energy: float
    kx: float
    ky: float
    kz: float
    wcp: float

    @property
    def velocity(self) -> float:
        return self.length / self.time

    @property
    def omega(self) -> float:
        return 1.0 / self.time

    @property
    def coefficients(self) -> tuple[float, float, float, float]:
        return self.kx, self.ky, self.kz, self.wcp


def scales(cfg: TrapConfig, freqs: CharacteristicFrequencies) -> Scales:
    m, wz = cfg.ion_mass, freqs.omega_par
    length = (CONSTANTS.coulomb_constant * cfg.ion_charge**2 / (m * wz**2)) ** (1.0 / 3.0)
    perp2, w2 = freqs.omega_perp**2, freqs.omega_w**2
    return Scales(
        mass=m,
        length=length,
        time=1.0 / wz,
        energy=m * wz**2 * length**2,
        kx=(perp2 + w2) / wz**2,
        ky=(perp2 - w2) / wz**2,
        kz=1.0,
        wcp=freqs.omega_c_prime / wz,
    )


@dataclass
class CrystalState:
    """Rotating-frame positions (m) and velocities (m/s) of N ions."""

    positions: np.ndarray
    velocities: np.ndarray = None
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.array(self.positions, dtype=float, copy=True).reshape(-1, 3)
        if self.velocities is None:
            self.velocities = np.zeros_like(self.positions)
        else:
            self.velocities = np.array(self.velocities, dtype=float, copy=True).reshape(-1, 3)
        if self.positions.shape != self.velocities.shape:
            raise ValueError("positions and velocities must both be N x 3")
        if not (np.isfinite(self.positions).all() and np.isfinite(self.velocities).all()):
            raise ValueError("crystal state contains non-finite entries")

    @property
    def n_ions(self) -> int:
        return len(self.positions)

    def check_against(self, cfg: TrapConfig) -> None:
        if self.n_ions != cfg.n_ions:
            raise ValueError(f"state has {self.n_ions} ions, config expects {cfg.n_ions}")

    def scaled(self, sc: Scales) -> tuple[np.ndarray, np.ndarray]:
        return (np.ascontiguousarray(self.positions / sc.length),
                np.ascontiguousarray(self.velocities / sc.velocity))

    @classmethod
    def from_scaled(cls, pos, vel, sc: Scales, time: float = 0.0) -> "CrystalState":
        return cls(np.asarray(pos) * sc.length, np.asarray(vel) * sc.velocity, time)


def _guard_separation(min_r2_scaled: float, sc: Scales, min_separation: float) -> None:
    if math.sqrt(min_r2_scaled) * sc.length < min_separation:
        raise CoincidentIons(
            f"ions separated by {math.sqrt(min_r2_scaled) * sc.length:.3g} m "
            f"(minimum allowed {min_separation:.3g} m)"
        )


def total_potential_energy(state: CrystalState, cfg: TrapConfig, freqs: CharacteristicFrequencies,
                           *, min_separation: float = DEFAULT_MIN_SEPARATION) -> float:
    """Total rotating-frame potential energy Phi in joules."""
    state.check_against(cfg)
    sc = scales(cfg, freqs)
    pos, _ = state.scaled(sc)
    _guard_separation(_kernels.min_separation_sq(pos), sc, min_separation)
    return _kernels.potential_energy(pos, sc.kx, sc.ky, sc.kz) * sc.energy


def accelerations(state: CrystalState, cfg: TrapConfig, freqs: CharacteristicFrequencies,
                  *, min_separation: float = DEFAULT_MIN_SEPARATION) -> np.ndarray:
    """Rotating-frame accelerations (m/s^2), Lorentz terms included."""
    state.check_against(cfg)
    sc = scales(cfg, freqs)
    pos, vel = state.scaled(sc)
    out = np.empty_like(pos)
    min_r2 = _kernels.accelerations(pos, vel, sc.kx, sc.ky, sc.kz, sc.wcp, out)
    _guard_separation(min_r2, sc, min_separation)
    return out * (sc.length / sc.time**2)


def lorentz_acceleration(state: CrystalState, freqs: CharacteristicFrequencies) -> np.ndarray:
    """The velocity-dependent omega_c' part of the accelerations (m/s^2)."""
    v = state.velocities
    out = np.zeros_like(v)
    out[:, 0] = freqs.omega_c_prime * v[:, 1]
    out[:, 1] = -freqs.omega_c_prime * v[:, 0]
    return out


# Scaled-unit helpers shared by the equilibrium solver and the mode analysis.

def planar_energy_and_gradient(flat_xy: np.ndarray, kx: float, ky: float) -> tuple[float, np.ndarray]:
    """Energy and gradient of Phi restricted to z = 0; ``flat_xy`` is (x1, y1, x2, y2, ...)."""
    xy = flat_xy.reshape(-1, 2)
    pos = np.zeros((len(xy), 3))
    pos[:, :2] = xy
    energy = _kernels.potential_energy(pos, kx, ky, 0.0)
    acc = np.empty_like(pos)
    _kernels.accelerations(pos, np.zeros_like(pos), kx, ky, 0.0, 0.0, acc)
    return energy, -acc[:, :2].ravel()


def planar_stiffness(xy: np.ndarray, kx: float, ky: float) -> np.ndarray:
    """Analytic 2N x 2N Hessian of Phi in the plane, basis (x1, y1, ..., xN, yN)."""
    n = len(xy)
    d = xy[:, None, :] - xy[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    np.fill_diagonal(r2, np.inf)
    inv5 = r2 ** -2.5
    inv3 = r2 ** -1.5
    # Hessian of 1/r_jk with respect to r_j: (3 d d^T - r^2 I) / r^5
    blocks = 3.0 * d[:, :, :, None] * d[:, :, None, :] * inv5[:, :, None, None]
    blocks[:, :, 0, 0] -= inv3
    blocks[:, :, 1, 1] -= inv3
    k = -blocks
    diag = blocks.sum(axis=1)
    idx = np.arange(n)
    k[idx, idx] = diag
    k[idx, idx, 0, 0] += kx
    k[idx, idx, 1, 1] += ky
    return k.transpose(0, 2, 1, 3).reshape(2 * n, 2 * n)


def axial_stiffness(xy: np.ndarray, kz: float = 1.0) -> np.ndarray:
    """Analytic N x N Hessian of Phi along z for a planar configuration."""
    d = xy[:, None, :] - xy[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    np.fill_diagonal(r2, np.inf)
    inv3 = r2 ** -1.5
    k = inv3.copy()
    np.fill_diagonal(k, kz - inv3.sum(axis=1))
    return k
