"""Thermal initial conditions: velocity kicks, Metropolis snapshots and mode amplitudes."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .equilibrium import EquilibriumConfiguration
from .errors import ZeroTemperatureWarning
from .linmodes import DrumheadModes, InPlaneModes
from .physcore import CONSTANTS, CharacteristicFrequencies, Scales, TrapConfig, scales

_ADAPT_BLOCK = 20  # scans between step-radius updates during burn-in
_SAMPLE_BLOCK = 100  # max scans per pre-drawn random block


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent PCG64 generator for the work item labelled ``key`` of a seeded ensemble."""
    key = tuple(int(k) for k in key) or (0,)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


@dataclass(frozen=True)
class SamplerConfig:
    t_perp: float = 1e-3
    t_par: float = 0.5e-3
    mh_scans: int = 1000
    mh_burn_in_scans: int = 1000
    mh_step_radius: float | str = "adaptive"
    snapshot_stride: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        if not (self.t_perp >= 0 and self.t_par >= 0):
            raise ValueError("temperatures must be >= 0")
        if self.mh_scans < 1 or self.snapshot_stride < 1 or self.mh_burn_in_scans < 0:
            raise ValueError("mh_scans and snapshot_stride must be >= 1, burn-in >= 0")
        if isinstance(self.mh_step_radius, str):
            if self.mh_step_radius != "adaptive":
                raise ValueError("mh_step_radius must be a length in metres or 'adaptive'")
        elif not self.mh_step_radius > 0:
            raise ValueError("mh_step_radius must be positive")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ValueError("rng_seed must fit in 64 bits")


@dataclass
class SnapshotEnsemble:
    snapshots: np.ndarray  # (S, N, 2) metres
    acceptance_rate: float
    mean_delta_phi_per_ion: float  # J, averaged over retained snapshots
    step_radius: float  # m, frozen value used while sampling
    t_perp: float
    scans: int
    stride: int
    seed: int
    delta_phi_per_ion: np.ndarray = field(default=None, repr=False)  # J, per snapshot

    def __len__(self) -> int:
        return len(self.snapshots)


@dataclass(frozen=True)
class ModeAmplitudes:
    """Complex mode amplitudes.

    In-plane amplitudes are in sqrt(scaled energy) under the mode set's
    <u|E|u> = 1 normalization; axial amplitudes are in metres.
    """

    amplitudes: np.ndarray
    kind: str  # "inplane" or "axial"
    energy_unit: float = 1.0  # J per scaled energy unit (in-plane only)

    def mode_energies(self, modes: InPlaneModes | DrumheadModes, mass: float | None = None) -> np.ndarray:
        """Energy in each mode (J)."""
        a2 = np.abs(self.amplitudes) ** 2
        if self.kind == "inplane":
            return a2 * modes.energy_norms * self.energy_unit
        if mass is None:
            raise ValueError("axial mode energies need the ion mass")
        return 2.0 * mass * modes.frequencies**2 * a2


def metropolis_accept(delta_energy, beta: float, uniform) -> np.ndarray:
    """Acceptance rule used by the chain: downhill always, uphill with prob. exp(-beta dE)."""
    delta_energy = np.asarray(delta_energy, dtype=float)
    with np.errstate(over="ignore"):
        return (delta_energy <= 0.0) | (np.asarray(uniform) < np.exp(-beta * delta_energy))


def discrete_chain(energies, beta: float, n_steps: int, rng: np.random.Generator, start: int = 0) -> np.ndarray:
    """Visit counts of a Metropolis chain on a finite state set with uniform symmetric proposals."""
    energies = np.asarray(energies, dtype=float)
    k = len(energies)
    if k < 2:
        raise ValueError("need at least two states")
    hops = rng.integers(1, k, size=n_steps)
    uniforms = rng.random(n_steps)
    counts = np.zeros(k, dtype=np.int64)
    state = start
    for hop, u in zip(hops, uniforms):
        proposal = (state + hop) % k
        if metropolis_accept(energies[proposal] - energies[state], beta, u):
            state = proposal
        counts[state] += 1
    return counts


def sample_velocity_kicks(n_ions: int, temperature: float, rng: np.random.Generator, mass: float) -> np.ndarray:
    """N x 2 in-plane velocities (m/s), each component N(0, k_B T / m)."""
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    sigma = math.sqrt(CONSTANTS.boltzmann * temperature / mass)
    return rng.normal(0.0, 1.0, size=(n_ions, 2)) * sigma


def _to_phase_vector(velocities, displacements, sc: Scales) -> np.ndarray:
    v = np.asarray(velocities, dtype=float)[:, :2].ravel() / sc.velocity
    if displacements is None:
        r = np.zeros_like(v)
    else:
        r = np.asarray(displacements, dtype=float)[:, :2].ravel() / sc.length
    return np.concatenate([r, v])


def project_mode_amplitudes(velocities: np.ndarray, modes: InPlaneModes, k_perp_scaled: np.ndarray | None = None,
                            displacements: np.ndarray | None = None) -> ModeAmplitudes:
    """Expand an in-plane phase-space vector onto the normal modes.

    ``velocities`` (and optional ``displacements`` from equilibrium) are N x 2
    or N x 3 arrays in SI. With no displacement the amplitude reduces to
    i m w_n <u_n^r|v> / <u_n|E|u_n>; otherwise the full E-projection
    <u_n|E|q> / <u_n|E|u_n> is used, which needs ``k_perp_scaled``.
    """
    sc = modes.scales
    q = _to_phase_vector(velocities, displacements, sc)
    n2 = 2 * modes.n_ions
    if displacements is None:
        proj = 1j * modes.frequencies_scaled * (modes.position_part.conj().T @ q[n2:])
    else:
        if k_perp_scaled is None:
            raise ValueError("displacements need the planar stiffness matrix")
        eq_ = np.concatenate([k_perp_scaled @ q[:n2], q[n2:]])
        proj = modes.eigenvectors.conj().T @ eq_
    return ModeAmplitudes(proj / modes.energy_norms, "inplane", sc.energy)


def reconstruct_inplane(amplitudes: ModeAmplitudes, modes: InPlaneModes, t: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Displacements (N x 2, m) and velocities (N x 2, m/s) from 2 Re sum A_n u_n e^{-i w_n t}."""
    sc = modes.scales
    phase = np.exp(-1j * modes.frequencies * t)
    q = 2.0 * np.real(modes.eigenvectors @ (amplitudes.amplitudes * phase))
    n2 = 2 * modes.n_ions
    return q[:n2].reshape(-1, 2) * sc.length, q[n2:].reshape(-1, 2) * sc.velocity


def sample_axial_thermal(modes: DrumheadModes, temperature: float, rng: np.random.Generator,
                         mass: float, *, return_amplitudes: bool = False):
    """Axial positions and velocities with mean energy k_B T in each drumhead mode.

    Each complex amplitude has independent Gaussian real and imaginary parts
    with variance k_B T / (4 m w_n^2); z = 2 Re(A) b_n, v_z = 2 w_n Im(A) b_n.
    """
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    w = modes.frequencies
    sigma = np.sqrt(CONSTANTS.boltzmann * temperature / (4.0 * mass * w**2))
    draws = rng.normal(0.0, 1.0, size=(2, len(w)))
    amps = sigma * (draws[0] + 1j * draws[1])
    z = modes.eigenvectors @ (2.0 * amps.real)
    vz = modes.eigenvectors @ (2.0 * w * amps.imag)
    if return_amplitudes:
        return z, vz, ModeAmplitudes(amps, "axial")
    return z, vz


def project_axial_amplitudes(z: np.ndarray, vz: np.ndarray, modes: DrumheadModes) -> ModeAmplitudes:
    """Inverse of the axial assembly: A_n = (<b_n|z> + i <b_n|v_z> / w_n) / 2."""
    bz = modes.eigenvectors.T @ np.asarray(z, dtype=float)
    bv = modes.eigenvectors.T @ np.asarray(vz, dtype=float)
    return ModeAmplitudes(0.5 * (bz + 1j * bv / modes.frequencies), "axial")


def reconstruct_axial(amplitudes: ModeAmplitudes, modes: DrumheadModes, t: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    a = amplitudes.amplitudes * np.exp(-1j * modes.frequencies * t)
    return modes.eigenvectors @ (2.0 * a.real), modes.eigenvectors @ (2.0 * modes.frequencies * a.imag)


def _disc_offsets(rng: np.random.Generator, n_scans: int, n_ions: int) -> np.ndarray:
    r = np.sqrt(rng.random((n_scans, n_ions)))
    phi = 2.0 * math.pi * rng.random((n_scans, n_ions))
    return np.ascontiguousarray(np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1))


def _run_scans(xy, sc, beta, step, n_scans, rng):
    offsets = _disc_offsets(rng, n_scans, len(xy))
    uniforms = rng.random((n_scans, len(xy)))
    return _kernels.mh_scans(xy, sc.kx, sc.ky, beta, step, offsets, uniforms)


def mh_sample_inplane(eq: EquilibriumConfiguration, cfg: TrapConfig, freqs: CharacteristicFrequencies,
                      sampler: SamplerConfig, *, rng: np.random.Generator | None = None) -> SnapshotEnsemble:
    """Metropolis snapshots of the in-plane configuration at T_perp (z held at 0).

    A scan proposes a uniform displacement within a disc for every ion in
    turn. With ``mh_step_radius='adaptive'`` the radius is tuned during
    burn-in toward 50 % acceptance and frozen before sampling. ``mh_scans``
    counts sampling scans after burn-in; a snapshot is kept every
    ``snapshot_stride`` of them.
    """
    sc = scales(cfg, freqs)
    n = eq.n_ions
    xy = np.ascontiguousarray(eq.positions / sc.length)
    v0 = _kernels.potential_energy(np.column_stack([xy, np.zeros(n)]), sc.kx, sc.ky, 0.0)
    if rng is None:
        rng = substream(sampler.rng_seed, 0)
    if sampler.t_perp == 0:
        warnings.warn("T_perp = 0: returning the equilibrium as the only snapshot", ZeroTemperatureWarning,
                      stacklevel=2)
        return SnapshotEnsemble(eq.positions[None].copy(), 0.0, 0.0, 0.0, 0.0, 0, sampler.snapshot_stride,
                                sampler.rng_seed, np.zeros(1))
    beta = sc.energy / (CONSTANTS.boltzmann * sampler.t_perp)
    adaptive = sampler.mh_step_radius == "adaptive"
    # harmonic estimate of the single-ion thermal spread as a starting radius
    step = (2.0 * math.sqrt(1.0 / (beta * max(sc.kx, sc.ky)))) if adaptive else sampler.mh_step_radius / sc.length

    done = 0
    while done < sampler.mh_burn_in_scans:
        block = min(_ADAPT_BLOCK, sampler.mh_burn_in_scans - done)
        acc, _ = _run_scans(xy, sc, beta, step, block, rng)
        if adaptive:
            step *= math.exp(acc / (block * n) - 0.5)
        done += block

    snaps, excess = [], []
    accepted = 0
    done = 0
    while done < sampler.mh_scans:
        block = min(sampler.snapshot_stride - done % sampler.snapshot_stride, _SAMPLE_BLOCK,
                    sampler.mh_scans - done)
        acc, _ = _run_scans(xy, sc, beta, step, block, rng)
        accepted += acc
        done += block
        if done % sampler.snapshot_stride == 0:
            snaps.append(xy.copy())
            phi = _kernels.potential_energy(np.column_stack([xy, np.zeros(n)]), sc.kx, sc.ky, 0.0)
            excess.append((phi - v0) * sc.energy / n)
    excess = np.array(excess)
    return SnapshotEnsemble(
        snapshots=np.array(snaps) * sc.length,
        acceptance_rate=accepted / (sampler.mh_scans * n),
        mean_delta_phi_per_ion=float(excess.mean()) if len(excess) else float("nan"),
        step_radius=step * sc.length,
        t_perp=sampler.t_perp,
        scans=sampler.mh_scans,
        stride=sampler.snapshot_stride,
        seed=sampler.rng_seed,
        delta_phi_per_ion=excess,
    )


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    stderr: float


def _moments(x: np.ndarray, v: np.ndarray) -> dict[str, MomentEstimate]:
    out = {}
    for name, s in (("x2", x * x), ("v2", v * v), ("xv", x * v), ("x2v2", x * x * v * v)):
        out[name] = MomentEstimate(float(s.mean()), float(s.std(ddof=1) / math.sqrt(len(s))))
    return out


def sho_kick_moment_study(k: float, m: float, temperature: float, n_samples: int,
                          rng: np.random.Generator) -> dict[str, dict[str, MomentEstimate]]:
    """Moments of a 1-D oscillator under two thermal initialization schemes.

    ``independent``: x and v drawn from their Boltzmann marginals.
    ``kick``: x = 0 and a velocity kick at 2T, followed by evolution for a
    uniformly random phase. Both reproduce the second moments; the fourth
    moment x^2 v^2 differs by a factor 3/2.
    """
    if not (k > 0 and m > 0 and temperature > 0 and n_samples > 1):
        raise ValueError("k, m, temperature must be positive and n_samples > 1")
    kt = CONSTANTS.boltzmann * temperature
    omega = math.sqrt(k / m)
    x1 = rng.normal(0.0, math.sqrt(kt / k), n_samples)
    v1 = rng.normal(0.0, math.sqrt(kt / m), n_samples)
    v0 = rng.normal(0.0, math.sqrt(2.0 * kt / m), n_samples)
    phase = rng.uniform(0.0, 2.0 * math.pi, n_samples)
    x2 = v0 / omega * np.sin(phase)
    v2 = v0 * np.cos(phase)
    return {"independent": _moments(x1, v1), "kick": _moments(x2, v2),
            "reference": {"x2": kt / k, "v2": kt / m, "x2v2_independent": kt**2 / (k * m),
                          "x2v2_kick": 1.5 * kt**2 / (k * m)}}
