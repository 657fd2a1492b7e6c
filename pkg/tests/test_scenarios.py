import csv
import dataclasses
import io
import json

import numpy as np
import pytest

from carnotlab import scenarios as S
from carnotlab.config import ConfigError
from carnotlab.scenarios import Report, builtin, emit_report, render_csv, render_json, run_scenario


@pytest.fixture(scope="module")
def heat_report():
    return run_scenario(builtin("euclid-heat-1d"))


def test_heat_report(heat_report):
    rows = {c["check"]: c for c in heat_report.checks}
    assert rows["oracle"]["status"] == "pass" and rows["oracle"]["measured"] < 1e-2
    assert heat_report.passed
    assert heat_report.provenance["config_sha256"] == builtin("euclid-heat-1d").config_hash()
    assert heat_report.provenance["grid"]["nx"] == [64]


def test_every_requested_check_once(heat_report):
    requested = builtin("euclid-heat-1d").analysis["checks"]
    assert [c["check"] for c in heat_report.checks] == requested


def test_heisenberg_obstacle_report():
    r = run_scenario(builtin("heisenberg-obstacle-c2"))
    rows = {c["check"]: c for c in r.checks}
    assert rows["complementarity"]["status"] == "pass"
    assert rows["decay-"]["measured"] == pytest.approx(2.0, abs=0.25)


def test_deterministic_reports(tmp_path):
    s = builtin("heisenberg-smoke")
    a, b = run_scenario(s), run_scenario(s)
    emit_report(a, "all", tmp_path / "a")
    emit_report(b, "all", tmp_path / "b")
    for name in ("checks.csv", "decay.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_solver_failure_marks_dependent_checks_skipped():
    s = builtin("heisenberg-smoke")
    s = dataclasses.replace(s, solver=dict(s.solver, max_iter=2))
    r = run_scenario(s)
    rows = {c["check"]: c for c in r.checks}
    assert rows["complementarity"]["status"] == "skipped"
    assert rows["hormander"]["status"] == "pass"
    assert "error" in r.diagnostics["solver"] and r.diagnostics["solver"]["level"] == 1
    assert not r.passed


def test_check_exception_recorded_without_abort(monkeypatch):
    def boom(ctx, rep):
        raise RuntimeError("synthetic")

    monkeypatch.setitem(S.CHECK_FNS, "hormander", boom)
    r = run_scenario(builtin("heisenberg-smoke"))
    rows = {c["check"]: c for c in r.checks}
    assert rows["hormander"]["status"] == "fail" and "synthetic" in rows["hormander"]["note"]
    assert rows["volume"]["status"] == "pass"


def test_nt_zero_precondition():
    s = builtin("euclid-heat-1d")
    with pytest.raises(ConfigError, match=r"grid\.nt"):
        run_scenario(dataclasses.replace(s, grid=dict(s.grid, nt=0)))


def test_header_only_csv():
    r = Report("empty")
    assert render_csv(r, "checks") == "scenario_id,check,status,measured,bound\n"
    assert render_csv(r, "decay") == "scenario_id,kind,k,s_k,gamma_target,gamma_fitted,c_envelope\n"


def test_decay_rows_and_format_consistency():
    r = Report("synthetic")
    for k in range(5):
        r.decay.append({"kind": "past", "k": k, "s_k": 2.0 ** -k, "gamma_target": 1.0,
                        "gamma_fitted": 0.987654321, "c_envelope": 1.0})
    rows = list(csv.DictReader(io.StringIO(render_csv(r, "decay"))))
    assert len(rows) == 5
    summary = json.loads(render_json(r))
    assert {float(row["gamma_fitted"]) for row in rows} == {d["gamma_fitted"] for d in summary["decay"]}


def test_json_handles_infinity():
    r = Report("x")
    r.add("gap", "pass", float("inf"), float("-inf"))
    doc = json.loads(render_json(r))
    assert doc["checks"][0]["measured"] == "inf"


def test_emit_report_formats(tmp_path, heat_report):
    assert [p.name for p in emit_report(heat_report, "csv", tmp_path)] == ["decay.csv", "checks.csv"]
    assert [p.name for p in emit_report(heat_report, "json", tmp_path / "j")] == ["summary.json"]
    with pytest.raises(ValueError):
        emit_report(heat_report, "xml", tmp_path)


def test_free_boundary_base_subgrid():
    # u - phi = (x - a)_+^2 with a between nodes; the sqrt extrapolation recovers a exactly
    from carnotlab.calculus import ScalarField
    from carnotlab.metrics import Box
    from carnotlab.solver import GridFunction, build_grid

    a = 0.3217
    grid = build_grid(Box((-1.0,), (1.0,), 0.0, 1.0), 65, 8)
    phi = ScalarField(lambda x, t: -x[..., 0] ** 2 + 0 * t)
    x, t = grid.node_coords()
    vals = phi(x, t) + np.maximum(np.abs(x[..., 0]) - a, 0.0) ** 2
    base = S.free_boundary_base(GridFunction(grid, vals), phi)
    assert base.x[0] == pytest.approx(a, abs=1e-12)
    assert base.t == 1.0


def test_builtin_unknown():
    with pytest.raises(ConfigError, match="euclid-heat-1d"):
        builtin("nope")
