import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import nist_trap
from penningcrystal import io
from penningcrystal.studies import (
    PRESETS,
    STUDY_KINDS,
    StudyResult,
    StudySpec,
    fit_power_law,
    preset_spec,
    run_study,
    well_resolved_modes,
    write_result,
)


@pytest.mark.parametrize("kind", STUDY_KINDS)
def test_presets_scale_with_name(kind):
    ci = preset_spec(kind, "ci", nist_trap(1))
    paper = preset_spec(kind, "paper", nist_trap(1))
    assert ci.preset == "ci" and paper.preset == "paper"
    if kind != "sho_appendix":
        assert paper.trap.n_ions == 120
        assert ci.trap.n_ions <= 32
    assert set(PRESETS) == {"ci", "paper"}


def test_preset_details():
    trap = nist_trap(1)
    assert preset_spec("psd_broadening", "ci", trap).temperatures == (0.0, 1e-3, 10e-3)
    assert preset_spec("support_correlation", "ci", trap).temperatures == (200e-6,)
    grid = preset_spec("fluctuation_surface", "paper", trap).temperatures
    assert len(grid) == 50 and grid[0] == pytest.approx(0.2e-3) and grid[-1] == pytest.approx(10e-3)
    vk = preset_spec("vk_comparison", "paper", trap)
    assert vk.thresholds == {"exb_db": 15.0, "cyclotron_db": 3.0, "cyclotron_tol_db": 1.0}
    assert preset_spec("odf_scan", "ci", trap).record_stride == 20
    assert preset_spec("sho_appendix", "ci", trap).n_samples == 10**6


def test_preset_overrides_and_errors():
    spec = preset_spec("odf_scan", "ci", nist_trap(1), rng_seed=5, n_realizations=2)
    assert spec.n_realizations == 2 and spec.rng_seed == 5
    with pytest.raises(ValueError):
        preset_spec("odf_scan", "huge", nist_trap(1))
    with pytest.raises(ValueError):
        preset_spec("everything", "ci", nist_trap(1))


@pytest.mark.parametrize("kw", [{"kind": "nope"}, {"temperatures": ()}, {"temperatures": (-1.0,)},
                                {"n_snapshots": 1}, {"n_realizations": 0}, {"threads": 0}])
def test_study_spec_validation(kw):
    base = {"kind": "psd_broadening", "trap": nist_trap(3)}
    base.update(kw)
    with pytest.raises(ValueError):
        StudySpec(**base)


def test_describe_is_json_serializable():
    d = preset_spec("fluctuation_surface", "ci", nist_trap(1)).describe()
    json.dumps(d)
    assert d["trap"]["n_ions"] == 32 and len(d["temperatures"]) == 25


def test_well_resolved_modes_by_hand():
    ref = np.array([100.0, 90.0, 80.0, 75.0, 74.0])
    sigma = np.array([0.1, 1.0, 2.0, 3.0, 0.1])
    # gaps: mode 1 -> 10, mode 2 -> 5, mode 3 -> 1 (< 6)
    np.testing.assert_array_equal(well_resolved_modes(ref, sigma), [1, 2])
    np.testing.assert_array_equal(well_resolved_modes(ref, sigma, factor=100.0), [])


@given(p=st.floats(0.1, 2.0), a=st.floats(1e-3, 1e3))
def test_fit_power_law_recovers_exact_law(p, a):
    x = np.linspace(0.2e-3, 10e-3, 25)
    p_fit, a_fit = fit_power_law(x, a * x**p)
    assert p_fit == pytest.approx(p, rel=1e-9)
    assert a_fit == pytest.approx(a, rel=1e-7)


def test_sho_appendix_study_is_deterministic_and_passes():
    spec = preset_spec("sho_appendix", "ci", nist_trap(1), rng_seed=3, n_samples=50_000)
    a, b = run_study(spec), run_study(spec)
    assert a.passed
    assert io.content_hash(a.tables) == io.content_hash(b.tables)
    ratio = a.checks["ratio"]["value"]
    assert abs(ratio - 1.5) < 0.1


def test_write_result_layout(tmp_path):
    result = StudyResult("psd_broadening", {"t": (["a", "b"], [[1, 2.5], [3, 4.0]])}, {"x": 1},
                         {"c": {"passed": False, "value": 1.0, "requirement": "r"}})
    d = write_result(result, tmp_path, {"seed": 9})
    assert d == tmp_path / "psd_broadening"
    assert (d / "t.csv").read_text().splitlines()[0] == "a,b"
    assert json.loads((d / "metadata.json").read_text()) == {"x": 1, "seed": 9}
    summary = json.loads((d / "summary.json").read_text())
    assert summary["passed"] is False and summary["study"] == "psd_broadening"


def test_small_snapshot_histogram_run():
    spec = preset_spec("snapshot_histogram", "ci", nist_trap(1), rng_seed=1, n_snapshots=20,
                       temperatures=(0.0, 1e-3), threads=2)
    spec = StudySpec(**{**spec.__dict__, "trap": nist_trap(8)})
    r = run_study(spec)
    assert r.checks["cm_frequency_std"]["passed"]
    assert r.checks["low_T_concentration"]["passed"]
    header, rows = r.tables["histogram"]
    assert header == ["bin_center_Hz", "count_T0K", "count_T0.001K"]
    assert sum(row[1] for row in rows) == 20 * 8
    assert r.metadata["isolated_modes"][0] == 8
    ref = dict(r.tables["reference"][1])
    assert ref[1] == pytest.approx(1.59e6, rel=1e-9)
    assert math.isfinite(sum(row[2] for row in rows))
