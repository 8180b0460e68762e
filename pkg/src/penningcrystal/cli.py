"""Command-line front end: config parsing, study dispatch and artifact output.

Exit codes
----------
0  study finished and every acceptance check passed
1  study finished but at least one check failed
2  usage error (bad flags, unknown study)
3  config file could not be parsed
4  config failed validation (including an unstable trap)
5  physics or numerical failure while running
6  output could not be written
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import re
import sys
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import scipy.constants as _sc

from . import KERNEL_BACKEND, __version__, io
from .errors import ConfigParseError, ConfigValidationError, PenningError, UnstableTrap
from .physcore import TrapConfig, derive_frequencies
from .studies import PRESETS, STUDY_KINDS, StudySpec, preset_spec, run_study, write_result

log = logging.getLogger("penningcrystal")

ENV_PREFIX = "PENNINGCRYSTAL_"
DEFAULT_CONFIG = "nist-table1.cfg"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_PHYSICS = 5
EXIT_IO = 6


def _data_file(name: str) -> Path:
    return Path(str(resources.files("penningcrystal") / "data" / name))


def load_schema() -> dict:
    return json.loads(_data_file("config_schema.json").read_text())


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration: the coerced sections plus the trap they describe."""

    sections: dict
    trap: TrapConfig
    source: str

    @property
    def run(self) -> dict:
        return self.sections.get("run", {})


def _key_line(text: str, section: str, key: str) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return i
    return None


def _coerce(value: str, kind: str | None):
    if kind == "integer":
        f = float(value)
        if not f.is_integer():
            raise ValueError(f"expected an integer, got {value!r}")
        return int(f)
    if kind == "number":
        f = float(value)
        if not math.isfinite(f):
            raise ValueError(f"expected a finite number, got {value!r}")
        return f
    if kind == "array":
        return [float(v) for v in value.replace(",", " ").split()]
    return value


def parse_config_text(text: str, source: str = "<string>") -> dict:
    """INI text -> dict of typed sections, using the schema to pick each key's type.

    Unknown sections and keys are kept as strings so validation can name them.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigParseError(f"{source}: {exc}") from exc
    props = load_schema()["properties"]
    out = {}
    for section in cp.sections():
        types = props.get(section, {}).get("properties", {})
        sec = {}
        for key, raw in cp.items(section):
            kind = types.get(key, {}).get("type")
            try:
                sec[key] = _coerce(raw.strip(), kind)
            except ValueError as exc:
                line = _key_line(text, section, key)
                where = f"{source}:{line}" if line else source
                raise ConfigParseError(f"{where}: [{section}] {key}: {exc}") from exc
        out[section] = sec
    return out


def trap_from_sections(sections: dict, n_ions: int = 1) -> TrapConfig:
    t = sections["trap"]
    mass = t.get("ion_mass_amu", 9.012182) * _sc.atomic_mass
    tp = 2.0 * math.pi
    kw = {"b_field": t["b_field_t"]} if "b_field_t" in t else {"omega_c": tp * t["f_cyclotron_hz"]}
    return TrapConfig.from_frequencies(omega_par=tp * t["f_par_hz"], omega_r=tp * t["f_rot_hz"],
                                       omega_w=tp * t["f_wall_hz"], n_ions=t.get("n_ions", n_ions),
                                       ion_mass=mass, **kw)


def validate_sections(sections: dict, source: str = "<string>") -> RunConfig:
    """Schema check, then a physics check that the trap confines the crystal."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(sections), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors:
            path = "/".join(str(p) for p in e.absolute_path) or "<root>"
            msgs.append(f"{path}: {e.message}")
        raise ConfigValidationError(f"{source}: " + "; ".join(msgs))
    try:
        trap = trap_from_sections(sections)
        derive_frequencies(trap)
    except UnstableTrap as exc:
        raise ConfigValidationError(f"{source}: UnstableTrap: {exc}") from exc
    except ValueError as exc:
        raise ConfigValidationError(f"{source}: trap: {exc}") from exc
    return RunConfig(sections, trap, source)


def resolve_config_path(path: str | None) -> Path:
    """A filesystem path, or the name of a config shipped with the package."""
    if path is None:
        return _data_file(DEFAULT_CONFIG)
    p = Path(path)
    if p.exists():
        return p
    for name in (path, f"{path}.cfg"):
        shipped = _data_file(name)
        if shipped.is_file():
            return shipped
    raise ConfigParseError(f"config file not found: {path}")


def parse_config(path: str | Path | None) -> RunConfig:
    p = resolve_config_path(None if path is None else str(path))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigParseError(f"{p}: {exc}") from exc
    return validate_sections(parse_config_text(text, str(p)), str(p))


def build_spec(rc: RunConfig, study: str, preset: str, seed: int, threads: int) -> StudySpec:
    """Preset for ``study`` with every value present in the config layered on top."""
    s = rc.sections
    over: dict = {"threads": threads}
    sampler, integ, odf, st = (s.get(k, {}) for k in ("sampler", "integrator", "odf", "study"))
    for key, field in (("t_par_k", "t_par"), ("n_snapshots", "n_snapshots"),
                       ("snapshot_stride", "snapshot_stride"), ("burn_in_scans", "burn_in_scans")):
        if key in sampler:
            over[field] = sampler[key]
    for key, field in (("t_total_s", "t_total"), ("record_stride", "record_stride")):
        if key in integ:
            over[field] = integ[key]
    for key, field in (("f0_n", "odf_f0"), ("target", "odf_target"), ("gamma_per_s", "odf_gamma"),
                       ("t_pi_s", "odf_t_pi"), ("step_hz", "odf_step_hz")):
        if key in odf:
            over[field] = odf[key]
    for key, field in (("n_realizations", "n_realizations"), ("n_samples", "n_samples"),
                       ("bin_width_hz", "bin_width_hz"), ("peak_prominence_db", "peak_prominence_db")):
        if key in st:
            over[field] = st[key]
    if "temperatures_k" in st:
        over["temperatures"] = tuple(st["temperatures_k"])
    spec = preset_spec(study, preset, rc.trap, rng_seed=seed, **over)
    if "n_ions" in s["trap"]:
        spec = replace(spec, trap=rc.trap.with_ions(s["trap"]["n_ions"]))
    return spec


def _env(name: str):
    v = os.environ.get(ENV_PREFIX + name.upper())
    return v if v not in (None, "") else None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="penningcrystal",
        description="Run a Penning-trap ion-crystal study and write CSV/JSON artifacts.",
        epilog=f"Every flag can also be set through an environment variable {ENV_PREFIX}<FLAG>, "
               "e.g. PENNINGCRYSTAL_SEED=7. Flags win over the environment, which wins over the [run] section.",
    )
    p.add_argument("--config", help=f"INI config path or shipped name (default: {DEFAULT_CONFIG})")
    p.add_argument("--study", help="one of: " + ", ".join(STUDY_KINDS))
    p.add_argument("--preset", help="ci (small, minutes) or paper (N = 120, hours)")
    p.add_argument("--seed", help="non-negative integer; drawn from OS entropy and recorded if absent")
    p.add_argument("--out", help="output directory (one sub-directory per study)")
    p.add_argument("--threads", help="worker threads (default: available cores)")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _pick(args, rc: RunConfig | None, name: str):
    v = getattr(args, name)
    if v is None:
        v = _env(name)
    if v is None and rc is not None:
        v = rc.run.get(name)
    return v


def _as_int(parser, name: str, value, minimum: int) -> int:
    try:
        i = int(value)
    except (TypeError, ValueError):
        parser.error(f"--{name} must be an integer, got {value!r}")
    if i < minimum:
        parser.error(f"--{name} must be >= {minimum}")
    return i


def _failure(out: Path | None, study: str | None, code: int, exc: BaseException) -> int:
    log.error("%s: %s", type(exc).__name__, exc)
    if out is not None and study is not None:
        try:
            d = out / study
            d.mkdir(parents=True, exist_ok=True)
            io.write_json(d / "error.json", {"study": study, "exit_code": code, "error": type(exc).__name__,
                                             "message": str(exc)})
        except OSError:
            pass
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    config = args.config if args.config is not None else _env("config")
    try:
        rc = parse_config(config)
    except ConfigParseError as exc:
        return _failure(None, None, EXIT_PARSE, exc)
    except ConfigValidationError as exc:
        return _failure(None, None, EXIT_VALIDATION, exc)

    study = _pick(args, rc, "study")
    if study is None:
        parser.error("no study given (use --study or PENNINGCRYSTAL_STUDY)")
    if study not in STUDY_KINDS:
        parser.error(f"unknown study {study!r}; choose from {', '.join(STUDY_KINDS)}")
    preset = _pick(args, rc, "preset") or "ci"
    if preset not in PRESETS:
        parser.error(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    seed_value = _pick(args, rc, "seed")
    if seed_value is None:
        seed = int(np.random.SeedSequence().entropy % 2**63)
        seed_source = "generated"
    else:
        seed = _as_int(parser, "seed", seed_value, 0)
        seed_source = "configured"
    threads_value = _pick(args, rc, "threads")
    if threads_value is None:
        threads = os.cpu_count() or 1
    else:
        threads = _as_int(parser, "threads", threads_value, 1)
    out = Path(_pick(args, rc, "out") or "penningcrystal-out")

    try:
        spec = build_spec(rc, study, preset, seed, threads)
    except ValueError as exc:
        return _failure(out, study, EXIT_VALIDATION, ConfigValidationError(str(exc)))
    resolved = {"config": rc.sections, "config_source": Path(rc.source).name, "study": study,
                "preset": preset, "seed": seed, "seed_source": seed_source}
    log.info("study %s, preset %s, N = %d, seed %d (%s), %d thread(s), kernels: %s",
             study, preset, spec.trap.n_ions, seed, seed_source, threads, KERNEL_BACKEND)
    try:
        result = run_study(spec)
    except PenningError as exc:
        return _failure(out, study, EXIT_PHYSICS, exc)
    describe = spec.describe()
    describe.pop("threads")
    meta = {"run": resolved, "study_spec": describe, "config_hash": io.content_hash(resolved),
            "package_version": __version__, "kernel_backend": KERNEL_BACKEND}
    try:
        d = write_result(result, out, meta)
    except OSError as exc:
        return _failure(None, None, EXIT_IO, exc)
    for name, c in result.checks.items():
        log.info("%s %s: %s", "PASS" if c["passed"] else "FAIL", name, c["requirement"])
    log.info("outputs in %s", d)
    return EXIT_OK if result.passed else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
