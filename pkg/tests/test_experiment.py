import csv
import json

import numpy as np
import pytest

import adaptrep.experiment as experiment
from adaptrep.experiment import (ExperimentConfig, read_records, reproduce_separation, run_cell,
                                 summarize_records)

TINY = dict(n_T_grid=[8], T=12, replications=5, M=3, inner_replications=2, restarts=2,
            pgd_iters=100, source_max_iter=60, n_S_multiplier=3)


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(n_T_grid=[16, 32], seed=4, methods=["adaptrep"])
    cfg.to_json(tmp_path / "c.json")
    back = ExperimentConfig.from_json(tmp_path / "c.json")
    assert back == cfg and back.config_hash() == cfg.config_hash()


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig(n_T_grid=[0])
    with pytest.raises(ValueError):
        ExperimentConfig(methods=[])
    with pytest.raises(ValueError):
        ExperimentConfig(methods=["maml"])
    (tmp_path / "bad.json").write_text(json.dumps({"grid": [1]}))
    with pytest.raises(ValueError):
        ExperimentConfig.from_json(tmp_path / "bad.json")


def test_scale_floor():
    cfg = ExperimentConfig().scaled(0.05)
    assert (cfg.T, cfg.replications, cfg.M) == (50, 50, 10)
    assert ExperimentConfig().scaled(1e-6).T == 10


def test_hash_ignores_output_location():
    a = ExperimentConfig(out_dir="a", n_jobs=1)
    b = ExperimentConfig(out_dir="b", n_jobs=3)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != ExperimentConfig(seed=1).config_hash()


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    cfg = ExperimentConfig(**TINY)
    return cfg, out, reproduce_separation(cfg, out)


def test_emits_all_files(tiny_run):
    cfg, out, records = tiny_run
    for name in ("records.csv", "sine.csv", "risk.csv", "sine.svg", "risk.svg", "config.json"):
        assert (out / name).exists()
    assert len(records) == 3 * cfg.replications
    assert len({r.config_hash for r in records}) == 1
    assert all(not r.error for r in records)


def test_records_csv_format(tiny_run):
    _, out, records = tiny_run
    raw = (out / "records.csv").read_bytes()
    assert b"\r\n" not in raw
    header = raw.decode("utf-8").splitlines()[0].split(",")
    assert header == ["method", "d", "n_T", "replication", "excess_risk", "sine_dist",
                      "wall_time_ms", "seed", "config_hash", "error"]
    back = read_records(out / "records.csv")
    assert [r.excess_risk for r in back] == [r.excess_risk for r in records]


def test_sine_table_marks_one_selection_per_method(tiny_run):
    _, out, _ = tiny_run
    rows = list(csv.DictReader(open(out / "sine.csv")))
    for method in ("adaptrep", "frozenrep"):
        sel = [r for r in rows if r["method"] == method]
        assert len(sel) == 2 and sum(int(r["selected"]) for r in sel) == 1


def test_svg_embeds_data(tiny_run):
    _, out, _ = tiny_run
    text = (out / "risk.svg").read_text()
    assert "<!-- data: " in text and "adaptrep" in text


def test_summary(tiny_run):
    _, _, records = tiny_run
    summary = summarize_records(records)
    assert {r["method"] for r in summary} == {"adaptrep", "frozenrep", "ols_baseline"}
    for row in summary:
        assert row["q25"] <= row["median"] <= row["q75"] and row["n"] == 5


def test_deterministic(tiny_run, tmp_path):
    cfg, out, _ = tiny_run
    reproduce_separation(cfg, tmp_path)

    def strip(path):
        rows = list(csv.reader(open(path)))
        i = rows[0].index("wall_time_ms")
        return [r[:i] + r[i + 1:] for r in rows]

    assert strip(out / "records.csv") == strip(tmp_path / "records.csv")
    assert (out / "sine.csv").read_bytes() == (tmp_path / "sine.csv").read_bytes()


def test_failure_is_recorded_and_run_continues(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(experiment, "frozenrep_source", boom)
    records, _ = run_cell(ExperimentConfig(**TINY), 8)
    failed = [r for r in records if r.error]
    assert len(failed) == 1 and failed[0].method == "frozenrep"
    assert "solver exploded" in failed[0].error
    assert sum(r.method == "adaptrep" for r in records) == 5
    assert sum(r.method == "ols_baseline" for r in records) == 5


def test_train_loss_selection():
    cfg = ExperimentConfig(**{**TINY, "methods": ["frozenrep"]}, selection="train_loss")
    _, sine_rows = run_cell(cfg, 8)
    losses = [r[6] for r in sine_rows]
    chosen = [r[8] for r in sine_rows]
    assert chosen[int(np.argmin(losses))] == 1
