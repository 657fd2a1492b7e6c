import json

from carnotlab.cli import main
from carnotlab.config import render
from carnotlab.scenarios import builtin, builtin_ids


def test_list(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    assert all(sid in out for sid in builtin_ids())


def test_run_builtin(tmp_path, capsys):
    assert main(["run", "heisenberg-smoke", "--out", str(tmp_path), "--workers", "2"]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["passed"] and summary["scenario_id"] == "heisenberg-smoke"
    assert capsys.readouterr().out.startswith("scenario_id,check,status")


def test_run_config_file_with_seed(tmp_path):
    path = tmp_path / "heat.toml"
    path.write_text(render(builtin("euclid-heat-1d")))
    assert main(["run", str(path), "--out", str(tmp_path / "o"), "--format", "json", "--seed", "5"]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["provenance"]["seed"] == 5
    assert not (tmp_path / "o" / "checks.csv").exists()


def test_failing_check_exits_2(tmp_path):
    s = builtin("euclid-heat-1d")
    doc = render(s).replace("oracle_tol = 0.01", "oracle_tol = 1e-09")
    path = tmp_path / "strict.toml"
    path.write_text(doc)
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 2


def test_usage_and_parse_errors(tmp_path, capsys):
    assert main([]) == 1
    assert main(["run"]) == 1
    assert main(["run", "no-such-scenario"]) == 1
    bad = tmp_path / "bad.toml"
    bad.write_text("[group\n")
    assert main(["validate", str(bad)]) == 1
    assert "line" in capsys.readouterr().err
    assert main(["run", "heisenberg-smoke", "--workers", "0"]) == 1
    assert main(["validate", str(tmp_path / "missing.toml")]) == 1


def test_validate_and_show(tmp_path, capsys):
    path = tmp_path / "h.toml"
    assert main(["show", "euclid-obstacle-c2"]) == 0
    path.write_text(capsys.readouterr().out)
    assert main(["validate", str(path)]) == 0
    assert builtin("euclid-obstacle-c2").config_hash() in capsys.readouterr().out
