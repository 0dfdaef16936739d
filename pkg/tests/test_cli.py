import json

import pytest

from contextual_ro.cli import run
from contextual_ro.energy import fixture_path
from contextual_ro.model import FirstStage, ScenarioSet, TwoStageProblem, save_problem
from test_oracle import running_example


@pytest.fixture
def problem(tmp_path):
    path = tmp_path / "p.json"
    save_problem(running_example(), path)
    return str(path)


def call(capsys, *argv):
    code = run([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def error_of(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


def test_gamma0_of_point_outside_segment(capsys, problem, tmp_path):
    ctx = tmp_path / "x.json"
    ctx.write_text("[1.5]")
    code, out, _ = call(capsys, "gamma0", "--problem", problem, "--context", ctx, "--norm", "inf")
    assert code == 0
    assert json.loads(out) == 0.5


def test_missing_file_is_reported_as_json(capsys, tmp_path):
    code, out, err = call(capsys, "gamma0", "--problem", tmp_path / "nope.json", "--x", "1")
    assert code == 1 and out == ""
    doc = error_of(err)
    assert doc["error"] == "not_found" and "nope.json" in doc["path"]


def test_malformed_json_is_an_input_error(capsys, tmp_path):
    bad = tmp_path / "p.json"
    bad.write_text("{not json")
    code, _, err = call(capsys, "gamma0", "--problem", bad, "--x", "1")
    assert code == 1 and error_of(err)["error"] == "input_error"


def test_bad_flag_is_an_input_error(capsys, problem):
    code, _, err = call(capsys, "solve", "--problem", problem, "--x", "0.5", "--master", "hybrid")
    assert code == 1 and error_of(err)["error"] == "input_error"


def test_empty_set_query(capsys, problem):
    code, _, err = call(capsys, "solve", "--problem", problem, "--x", "1.5", "--gamma", "0.2")
    assert code == 1 and error_of(err)["error"] == "empty_set"


@pytest.mark.parametrize("method", ["p", "d", "brute"])
def test_oracle_methods(capsys, problem, tmp_path, method):
    z = tmp_path / "z.json"
    z.write_text('{"z": [2.0]}')
    code, out, _ = call(capsys, "oracle", "--method", method, "--problem", problem, "--x", "0.5",
                        "--gamma", "0.5", "--z", z)
    assert code == 0
    assert json.loads(out)["value"] == pytest.approx(8.0, abs=1e-6)


def test_warm_and_cold_solves_agree(capsys, problem, tmp_path):
    pool = tmp_path / "pool.json"
    code, cold, _ = call(capsys, "solve", "--problem", problem, "--x", "0.5", "--gamma", "0.5",
                         "--save-pool", pool)
    assert code == 0 and pool.exists()
    code, warm, _ = call(capsys, "solve", "--problem", problem, "--x", "0.5", "--gamma", "0.5",
                         "--warm", pool)
    assert code == 0
    assert json.loads(cold)["objective"] == json.loads(warm)["objective"]
    assert json.loads(warm)["oracle_calls"] <= json.loads(cold)["oracle_calls"]


def test_classical_pool_cannot_be_saved(capsys, problem, tmp_path):
    code, _, err = call(capsys, "solve", "--problem", problem, "--x", "0.5", "--master", "classical",
                        "--save-pool", tmp_path / "pool.json")
    assert code == 1 and "contextual" in error_of(err)["message"]


def test_infeasible_first_stage_exits_2(capsys, tmp_path):
    p = running_example()
    bad = TwoStageProblem(p.c, FirstStage(A_in=[[1.0]], b_in=[-1.0], lb=[0.0], ub=[10.0]), p.q, p.W,
                          p.scenarios, T=p.T)
    save_problem(bad, tmp_path / "bad.json")
    code, out, _ = call(capsys, "solve", "--problem", tmp_path / "bad.json", "--x", "0.5")
    assert code == 2 and json.loads(out)["status"] == "infeasible"


def test_iteration_cap_exits_3(capsys, problem):
    code, out, _ = call(capsys, "solve", "--problem", problem, "--x", "0.5", "--gamma", "0.5",
                        "--max-iterations", "1")
    assert code == 3 and json.loads(out)["status"] == "iteration_limit"


def test_objective_uncertainty_solve(capsys, tmp_path):
    sc = ScenarioSet(x=[[0.0], [1.0]], q=[[1.0], [3.0]])
    p = TwoStageProblem(c=[0.0], Z=FirstStage(lb=[0.0], ub=[0.0]), q=None, W=[[1.0]], scenarios=sc,
                        kind="objective_q", T=[[0.0]], h=[4.0])
    save_problem(p, tmp_path / "q.json")
    code, out, _ = call(capsys, "solve", "--problem", tmp_path / "q.json", "--x", "0.5", "--gamma", "0")
    assert code == 0 and json.loads(out)["objective"] == pytest.approx(8.0, abs=1e-7)


def test_config_supplies_flags_and_command_line_wins(capsys, problem, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"problem": problem, "x": "1.5", "gamma": 2.0}))
    code, out, _ = call(capsys, "--config", cfg, "ranges")
    assert code == 0 and json.loads(out)["lo"] == [0.0]
    code, out, _ = call(capsys, "--config", cfg, "ranges", "--gamma", "0.5")
    doc = json.loads(out)
    assert doc["lo"] == [10.0] and doc["singleton"]


def test_config_rejects_unknown_keys(capsys, problem, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"problem": problem, "colour": "blue"}))
    code, _, err = call(capsys, "--config", cfg, "gamma0", "--x", "1")
    assert code == 1 and "colour" in error_of(err)["message"]


def test_outputs_are_deterministic(capsys, problem):
    args = ("solve", "--problem", problem, "--x", "0.25", "--delta", "0.1")
    assert call(capsys, *args)[1] == call(capsys, *args)[1]


def test_energy_pipeline(capsys, tmp_path):
    net = fixture_path("three_bus")
    hist = tmp_path / "h.csv"
    assert call(capsys, "energy", "history", "--network", net, "--hours", 60, "--seed", 4, "--out", hist)[0] == 0
    out = tmp_path / "run"
    code, summary, _ = call(capsys, "energy", "run", "--network", net, "--history", hist, "--window", 48,
                            "--horizon", 3, "--out", out)
    assert code == 0
    summary = json.loads(summary)
    assert summary["periods"] == 3 and 0.0 <= summary["lolp"] <= 1.0
    for name in ("schedules.json", "pool.json", "network.json", "report.json", "report.csv", "realized.csv"):
        assert (out / name).exists()
    code, rep, _ = call(capsys, "energy", "eval", "--schedules", out, "--realized", out / "realized.csv",
                        "--out", tmp_path / "again.json")
    assert code == 0
    assert (tmp_path / "again.json").read_text() == (out / "report.json").read_text()
    assert (tmp_path / "again.csv").exists()


def test_energy_eval_checks_lengths(capsys, tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    (out / "network.json").write_text(fixture_path("single_bus").read_text())
    sched = {"t": 0, "p": [900.0], "r_up": [0.0], "r_dn": [0.0], "f": [], "beta": [0.0], "alpha": 0.0,
             "objective": 27000.0, "gamma": None, "gamma0": 0.0, "iterations": 1, "oracle_calls": 1}
    (out / "schedules.json").write_text(json.dumps([sched, sched]))
    (tmp_path / "r.csv").write_text("w\n100\n")
    code, _, err = call(capsys, "energy", "eval", "--schedules", out, "--realized", tmp_path / "r.csv")
    assert code == 1 and "realized_y" in error_of(err)["message"]
    (tmp_path / "r.csv").write_text("w\n100\n100\n")
    code, out_text, _ = call(capsys, "energy", "eval", "--schedules", out, "--realized", tmp_path / "r.csv")
    assert code == 0 and json.loads(out_text)["lolp"] == 0.0
