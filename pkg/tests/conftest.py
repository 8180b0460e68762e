import math
import os
from functools import lru_cache

import pytest
from hypothesis import HealthCheck, settings

from penningcrystal.equilibrium import crystal_equilibrium
from penningcrystal.linmodes import build_linearized_model, drumhead_modes, inplane_modes
from penningcrystal.physcore import TrapConfig, derive_frequencies

TWO_PI = 2 * math.pi

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def nist_trap(n_ions: int = 1, omega_w: float = TWO_PI * 68e3) -> TrapConfig:
    return TrapConfig.from_frequencies(omega_par=TWO_PI * 1.59e6, omega_r=TWO_PI * 180e3,
                                       omega_w=omega_w, n_ions=n_ions, b_field=4.4588)


class Crystal:
    def __init__(self, n, omega_w=TWO_PI * 68e3):
        self.cfg = nist_trap(n, omega_w)
        self.freqs = derive_frequencies(self.cfg)
        self.eq = crystal_equilibrium(self.cfg, self.freqs)
        self.model = build_linearized_model(self.eq, self.cfg, self.freqs)
        self.drum = drumhead_modes(self.model)
        self._inplane = None

    @property
    def inplane(self):
        if self._inplane is None:
            self._inplane = inplane_modes(self.model)
        return self._inplane


def no_wall_single_ion():
    """Frequencies, linear model and in-plane modes of one ion with the wall switched off."""
    cfg = nist_trap(1, omega_w=0.0)
    freqs = derive_frequencies(cfg)
    model = build_linearized_model(crystal_equilibrium(cfg, freqs), cfg, freqs)
    return freqs, model, inplane_modes(model)


@lru_cache(maxsize=None)
def crystal(n: int, omega_w: float = TWO_PI * 68e3) -> Crystal:
    return Crystal(n, omega_w)


@pytest.fixture(scope="session")
def trap1():
    return nist_trap(1)


@pytest.fixture(scope="session")
def freqs1(trap1):
    return derive_frequencies(trap1)


def paper_enabled() -> bool:
    return os.environ.get("PENNINGCRYSTAL_PAPER", "") not in ("", "0")


def pytest_collection_modifyitems(config, items):
    if paper_enabled():
        return
    skip = pytest.mark.skip(reason="full-size preset run; set PENNINGCRYSTAL_PAPER=1")
    for item in items:
        if "paper" in item.keywords:
            item.add_marker(skip)


_VERDICTS: dict = {}


@pytest.fixture
def verdict():
    """Record an acceptance verdict; the session summary prints one line per criterion."""
    def record(criterion: int, passed: bool, detail: str) -> bool:
        line = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _VERDICTS.setdefault(criterion, []).append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_VERDICTS):
        for line in _VERDICTS[criterion]:
            terminalreporter.write_line(line)
