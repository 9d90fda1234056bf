import csv
import json

import numpy as np
import pytest

from qhydro import scenario as sm
from qhydro.errors import ValidationError


def small_doc(**over):
    doc = {
        "name": "tiny",
        "grid": {"dim": 1, "n": 128, "length": 20.0},
        "state": {"family": "harmonic", "n": 0},
        "potential": {"kind": "harmonic", "omega": 1.0},
        "diagnostics": ["norm", "quantum_potential", "roundtrip"],
    }
    doc.update(over)
    return doc


def test_bundled_scenarios_validate():
    names = sm.bundled_names()
    assert "ho-ground-check" in names and len(names) >= 8
    for name in names:
        sm.load(name)


def test_defaults_are_reported_and_filled():
    doc = {"name": "d", "grid": {"dim": 1, "n": 64, "length": 20.0}, "state": {"family": "harmonic"}}
    defaulted = sm.validate_document(doc)
    assert "constants.hbar" in defaulted and "seed" in defaulted and "evolution" in defaulted
    r = sm.resolve(doc)
    assert r["constants"]["hbar"] == 1.0 and r["constants"]["C0"] == "auto"
    assert r["potential"] == {"kind": "free"} and r["evolution"] is None
    assert r["diagnostics"] == sm.DEFAULT_DIAGNOSTICS


@pytest.mark.parametrize("bad", [
    {"sweep": {"parameter": "temperature", "values": [1.0]}},
    {"grid": {"dim": 1, "n": "many", "length": 20.0}},
    {"grid": {"dim": 4, "n": 64, "length": 20.0}},
    {"constants": {"hbar": -1.0}},
    {"state": {"family": "gaussian"}},
    {"diagnostics": ["norm", "bogus"]},
    {"checks": [{"metric": "results.norm.norm"}]},
])
def test_schema_rejects(bad):
    with pytest.raises(ValidationError):
        sm.validate_document(small_doc(**bad))


def test_level_sets_need_2d():
    with pytest.raises(ValidationError):
        sm.validate_document(small_doc(diagnostics=["level_sets"]))


def test_missing_source():
    with pytest.raises(FileNotFoundError):
        sm.load_document("/nonexistent/scenario.json")


def test_invalid_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ValidationError):
        sm.load_document(p)


def test_resolve_metric_paths():
    rep = {"points": [{"results": {"a": {"b": 1.0}}}, {"results": {"a": {"b": 2.0}}}], "sweep": {"fit": {"slope": 1.0}}}
    assert sm.resolve_metric(rep, "points.*.results.a.b") == [1.0, 2.0]
    assert sm.resolve_metric(rep, "points.1.results.a.b") == [2.0]
    assert sm.resolve_metric(rep, "sweep.fit.slope") == [1.0]
    with pytest.raises(ValidationError):
        sm.resolve_metric(rep, "sweep.fit.nope")
    with pytest.raises(ValidationError):
        sm.resolve_metric(rep, "sweep.*")


def test_evaluate_checks():
    rep = {"r": {"x": 0.5, "flag": True, "none": None}}
    out = sm.evaluate_checks(rep, [
        {"metric": "r.x", "max": 1.0}, {"metric": "r.x", "min": 0.6},
        {"metric": "r.flag", "equals": True}, {"metric": "r.none", "max": 1.0},
    ])
    assert [c["passed"] for c in out] == [True, False, True, False]


def test_loglog_fit_exact_power():
    x = [0.5, 1.0, 2.0, 4.0]
    fit = sm.loglog_fit(x, [3.0 * v ** 1.7 for v in x])
    assert fit["slope"] == pytest.approx(1.7, abs=1e-12)
    assert fit["strictly_increasing"] is True
    assert sm.loglog_fit(x, [1.0, None, 2.0, 3.0])["slope"] is None


def test_apply_override():
    s = sm.resolve(small_doc(sweep={"parameter": "omega", "values": [2.0]}))
    o = sm.apply_override(s, "omega", 2.0)
    assert o["potential"]["omega"] == 2.0 and o["state"]["omega"] == 2.0 and "sweep" not in o
    assert sm.apply_override(s, "n", 2.0)["state"]["n"] == 2
    assert sm.apply_override(s, "hbar", 3)["constants"]["hbar"] == 3.0
    with pytest.raises(ValidationError):
        sm.apply_override(s, "dt", 1e-3)


def test_output_root_precedence(monkeypatch, tmp_path):
    monkeypatch.setenv(sm.OUTPUT_ROOT_ENV, str(tmp_path / "env"))
    assert sm.output_root(None) == tmp_path / "env"
    assert sm.output_root(str(tmp_path / "cli")) == tmp_path / "cli"
    monkeypatch.delenv(sm.OUTPUT_ROOT_ENV)
    assert str(sm.output_root(None)) == sm.DEFAULT_OUTPUT_ROOT


def test_run_single_writes_report(tmp_path):
    s = sm.resolve(small_doc(checks=[{"metric": "results.roundtrip.error", "max": 1e-10}]))
    report, out = sm.run_scenario(s, tmp_path, check=True)
    on_disk = json.loads((out / "report.json").read_text())
    assert on_disk["results"]["norm"]["norm"] == pytest.approx(1.0, abs=1e-12)
    assert on_disk["checks"][0]["passed"]
    timing = json.loads((out / "timing.json").read_text())
    assert timing["kernel_backend"] in ("compiled", "python")
    # U + V = E for the ground state
    assert report["results"]["quantum_potential"]["max_abs_U_plus_V_minus_E"] < 1e-8


def test_check_failure_raises_after_writing(tmp_path):
    s = sm.resolve(small_doc(checks=[{"metric": "results.norm.norm", "max": 0.5}]))
    with pytest.raises(sm.CheckFailed) as info:
        sm.run_scenario(s, tmp_path, check=True)
    assert info.value.failures[0]["metric"] == "results.norm.norm"
    assert (tmp_path / "tiny" / "report.json").exists()


def test_timeseries_csv(tmp_path):
    s = sm.resolve(small_doc(evolution={"dt": 1e-3, "steps": 40, "stride": 10, "method": "exact"},
                             diagnostics=["norm", "euler_residual"]))
    _, out = sm.run_scenario(s, tmp_path)
    with (out / "timeseries.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "dsdt_norm", "euler_residual", "continuity_residual", "eta_fit"]
    assert len(rows) > 2
    assert all(np.isfinite(float(v)) for v in rows[1])


def test_sweep_csv_and_fit(tmp_path):
    doc = {
        "name": "mini-scan",
        "grid": {"dim": 2, "n": 32, "length": 12.566370614359172},
        "state": {"family": "viscous", "modes": [{"amplitude": 0.1, "k": [1, 0]}], "factor": 0.05},
        "diagnostics": ["viscosity_fit"],
        "sweep": {"parameter": "hbar", "values": [2.0, 1.0], "fit": {"y": "viscosity_fit.eta"}},
    }
    report, out = sm.run_scenario(sm.resolve(doc), tmp_path)
    assert report["sweep"]["values"] == [1.0, 2.0]
    assert report["sweep"]["fit"]["slope"] == pytest.approx(1.0, abs=1e-6)
    with (out / "sweep.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:2] == ["hbar", "eta_fit"]
    assert [r[0] for r in rows[1:]] == ["1.0", "2.0"]
    assert (out / "points" / "hbar=1.0" / "report.json").exists()


def test_sweep_parallel_matches_serial(tmp_path):
    doc = sm.resolve({
        "name": "par", "grid": {"dim": 1, "n": 128, "length": 20.0},
        "state": {"family": "harmonic"}, "potential": {"kind": "harmonic"},
        "sweep": {"parameter": "n", "values": [0, 1, 2]},
    })
    a, _ = sm.run_scenario(doc, tmp_path / "a", jobs=1)
    b, _ = sm.run_scenario(doc, tmp_path / "b", jobs=2)
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_vortex_state_rejected_in_roundtrip(tmp_path):
    doc = sm.resolve({
        "name": "vx", "grid": {"dim": 2, "n": 64, "length": 16.0},
        "state": {"family": "vortex", "sigma": 1.5}, "diagnostics": ["roundtrip", "curl"],
    })
    report, _ = sm.run_scenario(doc, tmp_path)
    assert report["results"]["roundtrip"]["rejected"] is True


def test_state_file_family(tmp_path):
    from qhydro import fieldio
    from qhydro.fields import Grid
    from qhydro.schrodinger import harmonic_eigenstate

    g = Grid.cube(1, 128, 20.0)
    header = fieldio.write_field(tmp_path / "psi", harmonic_eigenstate(g, 1, 1.0).psi, g)
    doc = sm.resolve(small_doc(state={"family": "file", "path": str(header)}, grid={"dim": 1, "n": 128, "length": 20.0}))
    report, _ = sm.run_scenario(doc, tmp_path / "out")
    assert report["results"]["quantum_potential"]["max_abs_U_plus_V_minus_E"] < 1e-6
