import json

import numpy as np
import pytest

from blossom.cli import main
from blossom.controller import Phase, StepRecord, StopReason
from blossom.harness import (
    ConfigError,
    ExperimentConfig,
    read_trace,
    run_experiment,
    summarize,
    survival_table,
    write_summary,
    write_trace,
)

QUICK = {"acq_budget": 300, "min_scan_budget": 300, "n_restarts": 1, "n_draws": 100, "n_support": 20}


def fake_run(tmp_path, name, regret, steps, objective="toy", tag="blossom-0.01"):
    trace = [
        StepRecord(i + 1, Phase.RANDOM_INIT if i < 2 else Phase.BAYES, np.array([0.1 * i]), 1.0 / (i + 1), np.array([0.1 * i]), 1.0 / (i + 1))
        for i in range(steps)
    ]
    write_trace(tmp_path / f"{name}.csv", trace, 1)
    meta = {"objective": objective, "tag": tag, "trace_file": f"{name}.csv", "regret": regret}
    (tmp_path / f"{name}.json").write_text(json.dumps(meta))


def test_trace_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    trace = []
    best = np.inf
    best_x = None
    for i, phase in enumerate([Phase.RANDOM_INIT, Phase.BAYES, Phase.GRR, Phase.LOCAL]):
        x = rng.uniform(size=3)
        y = float(rng.normal())
        if y < best:
            best, best_x = y, x
        trace.append(
            StepRecord(i + 1, phase, x, y, best_x.copy(), best, region_radius=None if i < 2 else 0.1 / 3,
                       regret_estimate=None if i < 2 else np.pi * 1e-7, jitter=1e-12 if i else 0.0, wall_time_s=i / 7)
        )
    write_trace(tmp_path / "t.csv", trace, 3)
    back = read_trace(tmp_path / "t.csv")
    assert len(back) == len(trace)
    for a, b in zip(trace, back):
        assert a.iteration == b.iteration and a.phase == b.phase
        assert np.array_equal(a.x, b.x) and np.array_equal(a.incumbent_x, b.incumbent_x)
        assert (a.y, a.incumbent_y, a.region_radius, a.regret_estimate, a.jitter, a.wall_time_s) == (
            b.y, b.incumbent_y, b.region_radius, b.regret_estimate, b.jitter, b.wall_time_s)


def test_summary_arithmetic(tmp_path):
    fake_run(tmp_path, "a", 1e-4, 50)
    (row,) = summarize(tmp_path)
    assert row.mean_step_regret_product == pytest.approx(5e-3)
    fake_run(tmp_path, "b", 0.0, 10, objective="pair")
    fake_run(tmp_path, "c", 1.0, 20, objective="pair")
    rows = {r.objective: r for r in summarize(tmp_path)}
    assert rows["pair"].mean_step_regret_product == pytest.approx(10.0)
    assert rows["pair"].mean_regret == pytest.approx(0.5) and rows["pair"].mean_steps == 15
    steps, table = survival_table(tmp_path)
    assert steps[0] == 0 and all(col[0] == 1.0 for col in table.values())
    assert table["pair/blossom-0.01"][15] == 0.5


def test_summary_files_and_empty_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        summarize(tmp_path)
    fake_run(tmp_path, "a", 1e-4, 50)
    out = tmp_path / "out" / "summary.csv"
    write_summary(summarize(tmp_path), out, tmp_path)
    text = out.with_suffix(".txt").read_text()
    for block in ("Regret", "Steps", "Steps x regret"):
        assert block in text
    assert (tmp_path / "out" / "summary_survival.csv").exists()


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig("branin", seeds=[])
    with pytest.raises(ConfigError):
        ExperimentConfig("branin", seeds=[1, 1])
    with pytest.raises(ConfigError):
        ExperimentConfig("nope")
    with pytest.raises(ConfigError):
        ExperimentConfig("pkg:fn")
    with pytest.raises(ConfigError):
        ExperimentConfig("branin", blossom={"not_a_field": 1})


def test_three_seeds_give_three_traces_and_one_row(tmp_path):
    cfg = ExperimentConfig(
        "tests.fixtures.external:shifted_bowl", algorithm="ei-pi", stop_param=1e-3, seeds=[0, 1, 2],
        max_iterations=12, output_dir=tmp_path, lower=[0, 0], upper=[1, 1], known_minimum=0.0, blossom=QUICK,
    )
    results = run_experiment(cfg)
    assert len(results) == 3
    assert len(list(tmp_path.glob("*.csv"))) == 3
    assert len(summarize(tmp_path)) == 1
    for res in results:
        assert res.terminated_reason in (StopReason.EXTERNAL_STOP, StopReason.MAX_ITERATIONS)


def test_failed_runs_are_recorded(tmp_path):
    cfg = ExperimentConfig("tests.fixtures.external:broken", seeds=[0, 1], output_dir=tmp_path,
                           lower=[0], upper=[1], max_iterations=5)
    results = run_experiment(cfg)
    assert all(r.terminated_reason == StopReason.ERROR for r in results)
    meta = json.loads(next(tmp_path.glob("*.json")).read_text())
    assert meta["terminated_reason"] == "Error" and "always fails" in meta["message"]


def test_cli_exit_codes_and_config_override(tmp_path, capsys):
    assert main(["run", "--objective", "nope", "--out", str(tmp_path)]) == 1
    assert main(["run", "--objective", "branin", "--max-iter", "3", "--out", str(tmp_path)]) == 1
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({
        "objective": "tests.fixtures.external:broken", "lower": [0], "upper": [1],
        "seeds": "0,1", "max_iter": 99, "out": str(tmp_path / "x"), "n_restarts": 1,
    }))
    assert main(["run", "--config", str(config), "--max-iter", "4"]) == 2
    meta = json.loads(next((tmp_path / "x").glob("*.json")).read_text())
    assert meta["blossom_config"]["max_iterations"] == 4
    assert meta["blossom_config"]["n_restarts"] == 1
    config.write_text(json.dumps({"objective": "branin", "bogus": 1}))
    assert main(["run", "--config", str(config)]) == 1


def test_cli_run_and_summarize(tmp_path, capsys):
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"lower": [0, 0], "upper": [1, 1], "known_minimum": 0.0, **QUICK}))
    code = main(["run", "--objective", "tests.fixtures.external:shifted_bowl", "--algorithm", "blossom",
                 "--stop", "0.01", "--seeds", "0", "--max-iter", "10", "--out", str(tmp_path / "r"), "--config", str(config)])
    assert code == 0
    assert main(["summarize", "--in", str(tmp_path / "r"), "--out", str(tmp_path / "s.csv")]) == 0
    assert "Steps x regret" in capsys.readouterr().out
    assert main(["summarize", "--in", str(tmp_path / "empty"), "--out", str(tmp_path / "s2.csv")]) == 1
