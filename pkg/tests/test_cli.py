import json
import os

import numpy as np
import pytest

from sms_adaptive import cli
from sms_adaptive import scenario as scn
from sms_adaptive import telemetry as tm


@pytest.fixture(scope="module")
def reduced_file(tmp_path_factory):
    path = str(tmp_path_factory.mktemp("cfg") / "reduced.json")
    assert cli.main(["paper-scenario", "--emit", path, "--reduced"]) == 0
    return path


@pytest.fixture(scope="module")
def short_run(tmp_path_factory, reduced_file):
    out = str(tmp_path_factory.mktemp("run"))
    code = cli.main(["run", "--scenario", reduced_file, "--out", out, "--duration", "1.0", "--quiet",
                     "--truth-diagnostics"])
    return code, out


def test_scenario_emit_round_trips(tmp_path):
    path = str(tmp_path / "paper.json")
    assert cli.main(["paper-scenario", "--emit", path]) == 0
    assert scn.load(path) == json.loads(json.dumps(scn.paper_config()))


def test_run_writes_telemetry_and_summary(short_run):
    code, out = short_run
    assert code == 0
    header, data = tm.read_csv(os.path.join(out, "telemetry.csv"))
    assert data.shape[0] == 101
    with open(os.path.join(out, "summary.json")) as fh:
        summary = json.load(fh)
    assert summary["run"]["projection_held"]
    assert summary["duration_s"] == pytest.approx(1.0)
    assert np.all(np.isfinite(tm.col(header, data, "V")))


def test_summarize_recomputes_from_csv(short_run, tmp_path, capsys):
    _, out = short_run
    target = str(tmp_path / "s.json")
    assert cli.main(["summarize", "--telemetry", os.path.join(out, "telemetry.csv"), "--out", target]) == 0
    with open(target) as fh:
        recomputed = json.load(fh)
    with open(os.path.join(out, "summary.json")) as fh:
        original = json.load(fh)
    for key in ("asymptotic_norms", "limsup_norms", "lambda_hat_final", "min_eig_over_time"):
        assert recomputed[key] == pytest.approx(original[key], rel=1e-8)
    assert "asymptotic_norms" in capsys.readouterr().out


def test_report_writes_figures(short_run, reduced_file, tmp_path, capsys):
    _, out = short_run
    fig_dir = str(tmp_path / "figs")
    assert cli.main(["report", "--telemetry", os.path.join(out, "telemetry.csv"), "--scenario", reduced_file,
                     "--out", fig_dir]) == 0
    names = sorted(os.listdir(fig_dir))
    assert names == ["base_errors.png", "ee_eigenvalues.png", "ee_parameters.png", "efficiencies.png",
                     "joint_errors.png"]
    assert all(os.path.getsize(os.path.join(fig_dir, n)) > 0 for n in names)


def test_sweep_runs_grid(reduced_file, tmp_path):
    grid = str(tmp_path / "grid.json")
    with open(grid, "w") as fh:
        json.dump({"controller.K_p": [0.2, 0.4], "duration_s": [0.2]}, fh)
    out = str(tmp_path / "sweep")
    assert cli.main(["sweep", "--scenario", reduced_file, "--grid", grid, "--jobs", "2", "--out", out]) == 0
    with open(os.path.join(out, "sweep.json")) as fh:
        rows = json.load(fh)
    assert [r["point"]["controller.K_p"] for r in rows] == [0.2, 0.4]
    assert all(r["ok"] for r in rows)
    assert all(os.path.exists(os.path.join(r["dir"], "telemetry.csv")) for r in rows)


def test_grid_points_and_set_path():
    pts = list(cli.grid_points({"b": [1, 2], "a": ["x"]}))
    assert pts == [{"a": "x", "b": 1}, {"a": "x", "b": 2}]
    cfg = {"a": {"b": [0, 0]}}
    cli.set_path(cfg, "a.b.1", 5)
    assert cfg == {"a": {"b": [0, 5]}}


def test_overrides_keep_schedule_valid():
    base = scn.paper_config()
    cfg = cli.apply_overrides(base, ideal_actuators=True, duration=50.0, dt=2e-3, seed=3)
    assert cfg["faults"] == base["faults"] and cfg["duration_s"] == base["duration_s"]
    assert cfg["actuators"]["mode"] == "ideal"
    assert cfg["integrator"]["dt_s"] == 2e-3 and cfg["seed"] == 3
    scn.validate(cfg)
    assert cli.apply_overrides(base, duration=300.0)["duration_s"] == 300.0


def test_short_builtin_run(tmp_path):
    out = str(tmp_path / "p")
    assert cli.main(["run", "--scenario", "paper", "--out", out, "--duration", "0.05", "--quiet"]) == 0
    _, data = tm.read_csv(os.path.join(out, "telemetry.csv"))
    assert data.shape[0] == 6


def test_config_error_exit_code(tmp_path, capsys):
    cfg = scn.reduced_config()
    cfg["schema_version"] = 999
    path = str(tmp_path / "bad.json")
    with open(path, "w") as fh:
        json.dump(cfg, fh)
    assert cli.main(["run", "--scenario", path, "--out", str(tmp_path / "o"), "--quiet"]) == 2
    assert "config error" in capsys.readouterr().err
