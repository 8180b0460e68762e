"""Fixed-step RK4 integration of the full rotating-frame equations of motion."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NumericalBlowup, StepTooLarge
from .linmodes import DrumheadModes, InPlaneModes
from .physcore import (
    DEFAULT_MIN_SEPARATION,
    CharacteristicFrequencies,
    CrystalState,
    TrapConfig,
    _guard_separation,
    scales,
)
from .thermal import ModeAmplitudes, reconstruct_axial, reconstruct_inplane

STEPS_PER_CYCLOTRON = 100
MIN_STEPS_PER_CYCLOTRON = 40
NYQUIST_MARGIN = 1.2


@dataclass(frozen=True)
class IntegratorConfig:
    """RK4 settings.

    ``dt`` is the requested step. The step actually used is never larger:
    the step count is rounded up to a multiple of ``record_stride`` so the
    recorded grid spans ``t_total`` exactly.
    """

    dt: float
    t_total: float
    record_stride: int = 1
    energy_check_stride: int = 1
    allow_large_step: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_total >= self.dt:
            raise ValueError("t_total must be >= dt")
        if self.record_stride < 1 or self.energy_check_stride < 1:
            raise ValueError("strides must be >= 1")

    @property
    def n_steps(self) -> int:
        blocks = math.ceil(self.t_total / (self.dt * self.record_stride) * (1.0 - 1e-12))
        return max(1, blocks) * self.record_stride

    @property
    def step(self) -> float:
        return self.t_total / self.n_steps

    @classmethod
    def default(cls, freqs: CharacteristicFrequencies, t_total: float, **kw) -> "IntegratorConfig":
        """dt = 2 pi / (100 w_+); recorded every k steps with k the largest keeping Nyquist >= 1.2 f_+."""
        dt = 2.0 * math.pi / (STEPS_PER_CYCLOTRON * freqs.omega_plus)
        f_plus = freqs.omega_plus / (2.0 * math.pi)
        stride = max(1, int(1.0 / (2.0 * NYQUIST_MARGIN * f_plus * dt)))
        kw.setdefault("record_stride", stride)
        kw.setdefault("energy_check_stride", kw["record_stride"])
        return cls(dt=dt, t_total=t_total, **kw)


@dataclass
class Trajectory:
    times: np.ndarray  # (S,) s
    positions: np.ndarray  # (S, N, 3) m
    velocities: np.ndarray  # (S, N, 3) m/s
    energy_series: np.ndarray  # (E,) J
    energy_times: np.ndarray  # (E,) s
    dt: float
    record_stride: int
    energy_check_stride: int
    min_separation: float  # smallest pair distance seen during the run (m)

    @property
    def n_ions(self) -> int:
        return self.positions.shape[1]

    @property
    def sample_interval(self) -> float:
        return self.dt * self.record_stride

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def final_state(self) -> CrystalState:
        return CrystalState(self.positions[-1], self.velocities[-1], float(self.times[-1]))

    def energy_fluctuation(self) -> float:
        """max |H - H(0)| / |H(0)|."""
        h = self.energy_series
        return float(np.max(np.abs(h - h[0])) / abs(h[0]))

    def thermal_energy_fluctuation(self, v0: float) -> float:
        """max |H - H(0)| / (H(0) - V0), relative to the energy above the equilibrium ``v0`` (J)."""
        h = self.energy_series
        return float(np.max(np.abs(h - h[0])) / (h[0] - v0))


def check_step(dt: float, freqs: CharacteristicFrequencies, allow_large_step: bool = False) -> None:
    limit = 2.0 * math.pi / (MIN_STEPS_PER_CYCLOTRON * freqs.omega_plus)
    if dt > limit and not allow_large_step:
        raise StepTooLarge(f"dt = {dt:.3e} s exceeds 2 pi / (40 w_+) = {limit:.3e} s")


def integrate(initial: CrystalState, cfg: TrapConfig, freqs: CharacteristicFrequencies,
              integ: IntegratorConfig, *, min_separation: float = DEFAULT_MIN_SEPARATION) -> Trajectory:
    """Integrate the rotating-frame equations of motion with classic RK4."""
    initial.check_against(cfg)
    h_si = integ.step
    check_step(h_si, freqs, integ.allow_large_step)
    sc = scales(cfg, freqs)
    pos, vel = initial.scaled(sc)
    n_steps = integ.n_steps
    n_rec = n_steps // integ.record_stride + 1
    n_en = n_steps // integ.energy_check_stride + 1
    n = initial.n_ions
    if n_rec * n * 6 * 8 > 2**31:
        warnings.warn(f"trajectory will hold {n_rec} samples of {n} ions; consider a larger record_stride",
                      ResourceWarning, stacklevel=2)
    rec_pos = np.empty((n_rec, n, 3))
    rec_vel = np.empty((n_rec, n, 3))
    energies = np.empty(n_en)
    status, min_r2 = _kernels.rk4(pos, vel, sc.kx, sc.ky, sc.kz, sc.wcp, h_si / sc.time, n_steps,
                                  integ.record_stride, integ.energy_check_stride, rec_pos, rec_vel, energies)
    if status >= 0:
        raise NumericalBlowup(f"non-finite coordinates after step {status}")
    if n > 1:
        _guard_separation(min_r2, sc, min_separation)
    t0 = initial.time
    return Trajectory(
        times=t0 + np.arange(n_rec) * integ.record_stride * h_si,
        positions=rec_pos * sc.length,
        velocities=rec_vel * sc.velocity,
        energy_series=energies * sc.energy,
        energy_times=t0 + np.arange(n_en) * integ.energy_check_stride * h_si,
        dt=h_si,
        record_stride=integ.record_stride,
        energy_check_stride=integ.energy_check_stride,
        min_separation=math.sqrt(min_r2) * sc.length if n > 1 else math.inf,
    )


def total_energy(state: CrystalState, cfg: TrapConfig, freqs: CharacteristicFrequencies) -> tuple[float, float, float]:
    """Rotating-frame kinetic, potential and total energy (J)."""
    state.check_against(cfg)
    sc = scales(cfg, freqs)
    pos, _ = state.scaled(sc)
    kinetic = 0.5 * cfg.ion_mass * float(np.sum(state.velocities**2))
    potential = _kernels.potential_energy(pos, sc.kx, sc.ky, sc.kz) * sc.energy
    return kinetic, potential, kinetic + potential


def harmonic_evolve(modes: InPlaneModes | DrumheadModes, amplitudes: ModeAmplitudes, t: float) -> CrystalState:
    """Deviation from equilibrium at time ``t`` predicted by the linearized dynamics.

    In-plane amplitudes give (dx, dy, 0) and (vx, vy, 0); axial ones give
    (0, 0, dz) and (0, 0, vz).
    """
    if amplitudes.kind == "inplane":
        r, v = reconstruct_inplane(amplitudes, modes, t)
        n = len(r)
        pos = np.zeros((n, 3))
        vel = np.zeros((n, 3))
        pos[:, :2], vel[:, :2] = r, v
    else:
        z, vz = reconstruct_axial(amplitudes, modes, t)
        n = len(z)
        pos = np.zeros((n, 3))
        vel = np.zeros((n, 3))
        pos[:, 2], vel[:, 2] = z, vz
    return CrystalState(pos, vel, t)
