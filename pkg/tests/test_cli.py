import json

import numpy as np
import pytest

from adaptrep.cli import main
from adaptrep.env import load_env, sample_dataset, sample_target_task
from adaptrep.io import read_json, write_json
from adaptrep.metrics import excess_risk_quadratic
from adaptrep.source import load_solution


def test_gen_env_is_byte_identical(tmp_path):
    for name in ("a.json", "b.json"):
        assert main(["run", "gen-env", "--d", "6", "--T", "8", "--delta0", "0.3", "--seed", "3",
                     "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    assert main(["run", "gen-env", "--d", "6", "--T", "12", "--delta0", "0.2", "--seed", "1",
                 "--out", str(d / "env.json")]) == 0
    assert main(["run", "train-source", "--env", str(d / "env.json"), "--restarts", "2",
                 "--max-iter", "200", "--out", str(d / "sol.json")]) == 0
    return d


def test_train_source_orthonormal(pipeline):
    sol = load_solution(pipeline / "sol.json")
    assert np.linalg.norm(sol.B0.T @ sol.B0 - np.eye(2)) <= 1e-8
    assert sol.objective_tag == "adaptrep"


def test_ignore_rep_then_eval_matches_closed_form(pipeline, capsys):
    ft = pipeline / "ft.json"
    assert main(["run", "finetune", "--env", str(pipeline / "env.json"), "--mode", "ignore_rep",
                 "--n-T", "20", "--seed", "7", "--out", str(ft)]) == 0
    capsys.readouterr()
    assert main(["run", "eval", "--env", str(pipeline / "env.json"), "--finetune", str(ft),
                 "--n-mc", "2000", "--json"]) == 0
    report = json.loads(capsys.readouterr().out)
    env = load_env(pipeline / "env.json")
    task = sample_target_task(env, 7)
    ds = sample_dataset(env, task, 20, 7)
    oracle = excess_risk_quadratic(np.linalg.pinv(ds.X) @ ds.y, task.theta_star, env.Sigma)
    assert abs(report["excess_risk"] - oracle) <= 1e-8


def test_full_adapt_with_trace(pipeline, tmp_path):
    trace = tmp_path / "trace.csv"
    assert main(["run", "finetune", "--env", str(pipeline / "env.json"),
                 "--solution", str(pipeline / "sol.json"), "--T-pgd", "50",
                 "--trace-csv", str(trace), "--out", str(tmp_path / "ft.json")]) == 0
    lines = trace.read_text().splitlines()
    assert lines[0] == "iteration,loss,param_norm" and len(lines) == 52
    doc = read_json(tmp_path / "ft.json", kind="finetune_result")
    assert doc["best_index"] == int(np.argmin(doc["losses"]))


def test_hardcase_limit_stage(tmp_path, capsys):
    assert main(["run", "hardcase-limit", "--d", "10", "--k", "2", "--eps", "0.05",
                 "--n-mc", "2000", "--json", "--out", str(tmp_path / "lim.json")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["sine_to_Ek"] <= 0.1


def test_missing_input_file(tmp_path, capsys):
    assert main(["run", "train-source", "--env", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "s.json")]) == 2
    assert "error" in capsys.readouterr().err


def test_schema_mismatch(tmp_path, pipeline):
    doc = json.loads((pipeline / "env.json").read_text())
    doc["schema"] = "adaptrep/0"
    (tmp_path / "old.json").write_text(json.dumps(doc))
    assert main(["run", "train-source", "--env", str(tmp_path / "old.json"),
                 "--out", str(tmp_path / "s.json")]) == 2
    write_json(tmp_path / "metrics.json", {"a": 1}, kind="metrics")
    assert main(["run", "train-source", "--env", str(tmp_path / "metrics.json"),
                 "--out", str(tmp_path / "s.json")]) == 2


def test_out_required():
    assert main(["run", "gen-env"]) == 2


def test_validate_report_and_fault_injection(capsys):
    assert main(["validate", "--json"]) == 0
    report = json.loads(capsys.readouterr().out)
    names = {r["name"] for r in report}
    assert {"pgd_certificate", "regularizer_equivalence", "relu_lift_identity",
            "antisymmetric_init_linear", "feature_gradients"} <= names
    assert all(r["passed"] for r in report)
    assert main(["validate", "--perturb-eta", "10"]) != 0
    assert "pgd_certificate" in capsys.readouterr().out


def test_reproduce_json(tmp_path, capsys):
    cfg = {"n_T_grid": [8], "T": 12, "replications": 5, "M": 3, "inner_replications": 2,
           "restarts": 2, "pgd_iters": 100, "source_max_iter": 60, "n_S_multiplier": 3}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert main(["reproduce", "--config", str(tmp_path / "cfg.json"), "--out",
                 str(tmp_path / "res"), "--seed", "2", "--json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["errors"] == [] and len(out["summary"]) == 3
    assert json.loads((tmp_path / "res" / "config.json").read_text())["seed"] == 2
