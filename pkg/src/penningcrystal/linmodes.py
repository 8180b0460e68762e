"""Linearized dynamics about a planar equilibrium: drumhead and in-plane modes.

Matrices are built and diagonalized in scaled units (mass 1, frequency
omega_par, length l0); SI views are exposed as properties. In-plane
eigenvectors are kept in scaled units and normalized so that
<u_n|E|u_n> = 1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .equilibrium import EquilibriumConfiguration
from .errors import FactorizationFailure, NotPositiveDefinite
from .physcore import CharacteristicFrequencies, Scales, TrapConfig, axial_stiffness, planar_stiffness, scales


@dataclass(frozen=True)
class LinearizedModel:
    k_par_scaled: np.ndarray  # N x N
    k_perp_scaled: np.ndarray  # 2N x 2N, basis (x1, y1, ..., xN, yN)
    lorentz_scaled: np.ndarray  # 2N x 2N antisymmetric
    scales: Scales
    equilibrium: EquilibriumConfiguration | None = None

    @property
    def n_ions(self) -> int:
        return self.k_par_scaled.shape[0]

    @property
    def mass(self) -> float:
        return self.scales.mass

    @property
    def stiffness_unit(self) -> float:
        return self.scales.mass / self.scales.time**2

    @property
    def k_par(self) -> np.ndarray:
        return self.k_par_scaled * self.stiffness_unit

    @property
    def k_perp(self) -> np.ndarray:
        return self.k_perp_scaled * self.stiffness_unit

    @property
    def lorentz(self) -> np.ndarray:
        return self.lorentz_scaled / self.scales.time

    @property
    def omega_c_prime_scaled(self) -> float:
        return self.scales.wcp

    def energy_matrix_scaled(self) -> np.ndarray:
        n2 = 2 * self.n_ions
        e = np.zeros((2 * n2, 2 * n2))
        e[:n2, :n2] = self.k_perp_scaled
        e[n2:, n2:] = np.eye(n2)
        return e

    @property
    def energy_matrix(self) -> np.ndarray:
        """diag(K_perp, m 1) in SI."""
        n2 = 2 * self.n_ions
        e = np.zeros((2 * n2, 2 * n2))
        e[:n2, :n2] = self.k_perp
        e[n2:, n2:] = self.mass * np.eye(n2)
        return e

    def dynamical_matrix_scaled(self) -> np.ndarray:
        n2 = 2 * self.n_ions
        d = np.zeros((2 * n2, 2 * n2))
        d[:n2, n2:] = np.eye(n2)
        d[n2:, :n2] = -self.k_perp_scaled
        d[n2:, n2:] = self.lorentz_scaled
        return d

    def hermitian_dynamical_matrix_scaled(self) -> np.ndarray:
        """D_H = i E D."""
        return 1j * (self.energy_matrix_scaled() @ self.dynamical_matrix_scaled())

    def without_lorentz(self) -> "LinearizedModel":
        return replace(self, lorentz_scaled=np.zeros_like(self.lorentz_scaled))


def lorentz_matrix(n_ions: int, wcp: float) -> np.ndarray:
    """Block-diagonal L with per-ion block [[0, w], [-w, 0]]."""
    block = np.array([[0.0, wcp], [-wcp, 0.0]])
    return np.kron(np.eye(n_ions), block)


def _is_positive_definite(k: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(k)
    except np.linalg.LinAlgError:
        return False
    return True


def build_linearized_model(eq: EquilibriumConfiguration, cfg: TrapConfig,
                           freqs: CharacteristicFrequencies) -> LinearizedModel:
    sc = scales(cfg, freqs)
    xy = eq.positions / sc.length
    k_perp = planar_stiffness(xy, sc.kx, sc.ky)
    k_par = axial_stiffness(xy, sc.kz)
    # symmetrize away round-off; the analytic forms are symmetric
    k_perp = 0.5 * (k_perp + k_perp.T)
    k_par = 0.5 * (k_par + k_par.T)
    for name, k in (("K_perp", k_perp), ("K_par", k_par)):
        if not _is_positive_definite(k):
            raise NotPositiveDefinite(f"{name} is not positive definite (saddle or unconverged equilibrium)")
    return LinearizedModel(k_par, k_perp, lorentz_matrix(len(xy), sc.wcp), sc, eq)


@dataclass(frozen=True)
class DrumheadModes:
    frequencies: np.ndarray  # rad/s, descending
    eigenvectors: np.ndarray  # columns b_n, orthonormal

    @property
    def n_modes(self) -> int:
        return len(self.frequencies)


def drumhead_frequencies_scaled(k_par_scaled: np.ndarray) -> np.ndarray:
    """Descending drumhead frequencies in units of omega_par (eigenvalues only)."""
    lam = np.linalg.eigvalsh(k_par_scaled)[::-1]
    return np.sqrt(np.clip(lam, 0.0, None))


def drumhead_modes(model: LinearizedModel) -> DrumheadModes:
    lam, vecs = np.linalg.eigh(model.k_par_scaled)
    order = np.argsort(lam)[::-1]
    lam, vecs = lam[order], vecs[:, order]
    # sign gauge: largest-magnitude element positive
    idx = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[idx, np.arange(vecs.shape[1])])
    return DrumheadModes(np.sqrt(lam) * model.scales.omega, vecs)


@dataclass(frozen=True)
class InPlaneModes:
    frequencies: np.ndarray  # rad/s, ascending, all > 0
    eigenvectors: np.ndarray  # (4N, 2N) complex, scaled units, <u|E|u> = 1
    branch: np.ndarray  # "ExB" for the lower N, "cyclotron" for the upper N
    energy_norms: np.ndarray
    scales: Scales

    @property
    def n_ions(self) -> int:
        return self.eigenvectors.shape[0] // 4

    @property
    def frequencies_scaled(self) -> np.ndarray:
        return self.frequencies * self.scales.time

    @property
    def position_part(self) -> np.ndarray:
        return self.eigenvectors[: 2 * self.n_ions]

    @property
    def velocity_part(self) -> np.ndarray:
        return self.eigenvectors[2 * self.n_ions:]

    def exb(self) -> slice:
        return slice(0, self.n_ions)

    def cyclotron(self) -> slice:
        return slice(self.n_ions, 2 * self.n_ions)


def inplane_modes(model: LinearizedModel, *, check_gap: bool = True) -> InPlaneModes:
    """Solve D_H u = omega E u through the Cholesky factor of E.

    With E = diag(C C^T, 1) the reduced Hermitian matrix is
    i [[0, C^T], [-C, L]], whose eigenvectors y give u = diag(C^-T, 1) y.
    """
    n = model.n_ions
    n2 = 2 * n
    k = model.k_perp_scaled
    try:
        c = np.linalg.cholesky(k)
    except np.linalg.LinAlgError as exc:
        raise FactorizationFailure("energy matrix is not positive definite") from exc
    m = np.zeros((2 * n2, 2 * n2), dtype=complex)
    m[:n2, n2:] = 1j * c.T
    m[n2:, :n2] = -1j * c
    m[n2:, n2:] = 1j * model.lorentz_scaled
    m = 0.5 * (m + m.conj().T)
    w, y = np.linalg.eigh(m)
    pos = w > 0
    w, y = w[pos], y[:, pos]
    if len(w) != n2:
        raise FactorizationFailure(f"expected {n2} positive frequencies, found {len(w)}")
    u = np.empty_like(y)
    u[:n2] = np.linalg.solve(c.T, y[:n2])
    u[n2:] = y[n2:]
    # phase gauge: largest |u^r| component real positive
    idx = np.argmax(np.abs(u[:n2]), axis=0)
    lead = u[idx, np.arange(n2)]
    u = u * (np.abs(lead) / lead)
    e = model.energy_matrix_scaled()
    norms = np.real(np.einsum("in,ij,jn->n", u.conj(), e, u))
    branch = np.array(["ExB"] * n + ["cyclotron"] * n)
    if check_gap and n > 1:
        bandwidth = w[n - 1] - w[0]
        gap = w[n] - w[n - 1]
        if gap <= 10 * bandwidth:
            warnings.warn(f"in-plane spectral gap {gap:.3g} is not > 10x the ExB bandwidth {bandwidth:.3g}; "
                          "branch labels by index may be unreliable", RuntimeWarning, stacklevel=2)
    return InPlaneModes(w / model.scales.time, u, branch, norms, model.scales)


def inplane_diagnostics(modes: InPlaneModes, model: LinearizedModel) -> dict[str, float]:
    """Worst eigen-residual, worst normalized E-overlap and worst u^v = -i w u^r mismatch."""
    e = model.energy_matrix_scaled()
    dh = model.hermitian_dynamical_matrix_scaled()
    u = modes.eigenvectors
    w = modes.frequencies_scaled
    eu = e @ u
    resid = np.linalg.norm(dh @ u - eu * w, axis=0) / np.linalg.norm(eu, axis=0)
    gram = u.conj().T @ eu
    d = np.sqrt(np.abs(np.diag(gram)))
    overlap = np.abs(gram) / np.outer(d, d)
    np.fill_diagonal(overlap, 0.0)
    ur, uv = modes.position_part, modes.velocity_part
    vel = np.linalg.norm(uv + 1j * w * ur, axis=0) / np.linalg.norm(uv, axis=0)
    return {
        "max_residual": float(resid.max()),
        "max_e_overlap": float(overlap.max()) if len(w) > 1 else 0.0,
        "max_velocity_relation": float(vel.max()),
    }


def snapshot_drumhead_frequencies(snapshots: np.ndarray, cfg: TrapConfig,
                                  freqs: CharacteristicFrequencies) -> np.ndarray:
    """Descending drumhead frequencies (rad/s) of K_par evaluated at each (N x 2) snapshot.

    Snapshots are generally not equilibria; K_par is still well defined and
    its eigenvalues give the instantaneous axial mode frequencies.
    """
    sc = scales(cfg, freqs)
    snaps = np.asarray(snapshots, dtype=float)
    if snaps.ndim == 2:
        snaps = snaps[None]
    out = np.empty(snaps.shape[:2])
    for i, xy in enumerate(snaps):
        out[i] = drumhead_frequencies_scaled(axial_stiffness(xy / sc.length, sc.kz))
    return out * sc.omega
