import json
import subprocess
import sys

import pytest

from wnrecovery import cli

QUICK = {"planners": [{"name": "base", "kind": "base"},
                      {"name": "tea", "kind": "tea", "h": 2, "alpha": 2, "action_cap": 5}],
         "num_scenarios": 2, "resources": [3], "master_seed": 5}


@pytest.fixture()
def quick_cfg(tmp_path):
    path = tmp_path / "quick.json"
    path.write_text(json.dumps(QUICK))
    return str(path)


def test_scenario_dump(capsys):
    assert cli.main(["scenario", "--scenarios", "2", "--seed", "4"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["master_seed"] == 4 and len(doc["scenarios"]) == 2
    assert set(doc["scenarios"][0]) >= {"scenario_id", "damage", "served_population"}


def test_plan_trace(capsys, quick_cfg):
    assert cli.main(["plan", "--config", quick_cfg, "--planners", "tea", "--scenario-id", "1"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# planner=tea scenario=1 M=3 seed=5")
    assert "stage   0" in out


def test_batch_writes_outputs(tmp_path, quick_cfg, capsys):
    out = tmp_path / "run"
    assert cli.main(["batch", "--config", quick_cfg, "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"curves.csv", "mean_curves.csv", "summary.json"}


def test_batch_multiple_resources(tmp_path, quick_cfg, capsys):
    out = tmp_path / "run"
    assert cli.main(["batch", "--config", quick_cfg, "--out", str(out), "--resources", "2,3",
                     "--planners", "base", "--scenarios", "1"]) == 0
    assert (out / "M2" / "summary.json").exists() and (out / "M3" / "curves.csv").exists()


def test_missing_config_is_config_error(tmp_path, capsys):
    assert cli.main(["scenario", "--config", str(tmp_path / "nope.json")]) == 2
    assert "config error" in capsys.readouterr().err


def test_unknown_planner(capsys, quick_cfg):
    assert cli.main(["plan", "--config", quick_cfg, "--planners", "zzz"]) == 2


def test_infeasible_budget_is_config_error(tmp_path, capsys):
    doc = dict(QUICK, planners=[{"name": "o", "kind": "ocba", "B": 3, "action_cap": 5}])
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    assert cli.main(["batch", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "minimum feasible" in capsys.readouterr().err


def test_runtime_failure(monkeypatch, tmp_path, quick_cfg, capsys):
    def boom(*a, **k):
        raise RuntimeError("disk on fire")
    monkeypatch.setattr(cli, "run_batch", boom)
    assert cli.main(["batch", "--config", quick_cfg, "--out", str(tmp_path)]) == 3
    assert "disk on fire" in capsys.readouterr().err


def test_batch_requires_out():
    with pytest.raises(SystemExit) as exc:
        cli.main(["batch"])
    assert exc.value.code == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "wnrecovery", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("scenario", "plan", "batch", "oracle-check"):
        assert cmd in proc.stdout
