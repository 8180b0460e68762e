"""File formats: CSV/JSON for tables and metadata, npz for arrays."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from .equilibrium import EquilibriumConfiguration
from .linmodes import DrumheadModes, InPlaneModes
from .modemetrics import ModeMetrics
from .spectra import Spectrum
from .thermal import SnapshotEnsemble


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def content_hash(obj) -> str:
    """sha256 of the canonical JSON encoding."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text())


def write_csv(path: str | Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return rows[0], np.array(rows[1:], dtype=float)


def save_equilibrium(path: str | Path, eq: EquilibriumConfiguration) -> None:
    """CSV of x, y (m) with a JSON sidecar holding energy, residual and seed."""
    path = Path(path)
    write_csv(path, ["x_m", "y_m"], eq.positions)
    write_json(path.with_suffix(".json"), {
        "n_ions": eq.n_ions, "energy_v0_J": eq.energy_v0, "gradient_norm_N": eq.gradient_norm,
        "gradient_norm_scaled": eq.gradient_norm_scaled, "tolerance": eq.tolerance,
        "iterations": eq.iterations, "seed_descriptor": eq.seed_descriptor,
    })


def load_equilibrium(path: str | Path) -> EquilibriumConfiguration:
    path = Path(path)
    _, xy = read_csv(path)
    meta = read_json(path.with_suffix(".json"))
    return EquilibriumConfiguration(
        positions=xy.reshape(-1, 2), energy_v0=meta["energy_v0_J"], gradient_norm=meta["gradient_norm_N"],
        seed_descriptor=meta["seed_descriptor"], tolerance=meta["tolerance"],
        gradient_norm_scaled=meta["gradient_norm_scaled"], iterations=meta["iterations"],
    )


def save_modes(stem: str | Path, inplane: InPlaneModes, drumhead: DrumheadModes,
               metrics: ModeMetrics | None = None) -> None:
    """``stem``.json with frequencies, branches and metrics; ``stem``.npz with eigenvectors."""
    stem = Path(stem)
    doc = {
        "inplane": {"frequencies_rad_s": inplane.frequencies, "branch": inplane.branch,
                    "energy_norms": inplane.energy_norms, "eigenvector_units": "scaled (l0, l0 w_par)",
                    "length_scale_m": inplane.scales.length, "time_scale_s": inplane.scales.time},
        "drumhead": {"frequencies_rad_s": drumhead.frequencies},
    }
    if metrics is not None:
        doc["inplane"].update(r_n=metrics.r_n, chi_n=metrics.chi_n, msd_n_m2=metrics.msd_n,
                              temperature_K=metrics.temperature)
        doc["drumhead"].update(entropy_bits=metrics.entropy_n, support=metrics.support_n)
    write_json(stem.with_suffix(".json"), doc)
    np.savez_compressed(stem.with_suffix(".npz"), inplane=inplane.eigenvectors, drumhead=drumhead.eigenvectors)


def save_snapshots(path: str | Path, ens: SnapshotEnsemble) -> None:
    header = {"t_perp_K": ens.t_perp, "scans": ens.scans, "stride": ens.stride, "seed": ens.seed,
              "acceptance_rate": ens.acceptance_rate, "step_radius_m": ens.step_radius,
              "mean_delta_phi_per_ion_J": ens.mean_delta_phi_per_ion}
    np.savez_compressed(path, snapshots=ens.snapshots, delta_phi_per_ion=ens.delta_phi_per_ion,
                        header=np.array(canonical_json(header)))


def load_snapshots(path: str | Path) -> tuple[np.ndarray, dict]:
    with np.load(path) as data:
        return data["snapshots"], json.loads(str(data["header"]))


def save_trajectory(path: str | Path, traj, metadata: dict | None = None) -> None:
    """npz arrays plus a JSON sidecar with dt, strides and caller metadata (seeds, config hash)."""
    path = Path(path)
    np.savez_compressed(path, times=traj.times, positions=traj.positions, velocities=traj.velocities,
                        energy_series=traj.energy_series, energy_times=traj.energy_times)
    side = {"dt_s": traj.dt, "record_stride": traj.record_stride,
            "energy_check_stride": traj.energy_check_stride, "min_separation_m": traj.min_separation}
    side.update(metadata or {})
    write_json(path.with_suffix(".json"), side)


def save_spectrum(path: str | Path, spec: Spectrum, metadata: dict | None = None) -> None:
    path = Path(path)
    label = "psd_m2_per_Hz" if spec.kind == "PSD" else "bright_fraction"
    write_csv(path, ["frequency_Hz", label], zip(spec.frequencies, spec.values))
    meta = {"kind": spec.kind, "axis": spec.axis, "n_realizations": spec.n_realizations}
    meta.update(spec.metadata)
    meta.update(metadata or {})
    write_json(path.with_suffix(".json"), meta)
