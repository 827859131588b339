import numpy as np
import pytest

from blossom.controller import (
    BlossomConfig,
    Phase,
    StepRecord,
    StopReason,
    posterior_minimum,
    run,
    trace_violations,
)
from blossom.gp import Domain, GpModel
from blossom.kernels import KernelFamily, KernelSpec


FAST = dict(bayes_acquisition="ei", acq_budget=500, min_scan_budget=500, n_restarts=2)


def test_posterior_minimum_single_negative_observation():
    dom = Domain.cube(-1.0, 1.0, 2)
    z = np.array([0.3, -0.2])
    model = GpModel(z[None, :], np.array([-1.0]), dom, KernelSpec(KernelFamily.MATERN52, 1.0, (0.4, 0.4)))
    assert np.allclose(posterior_minimum(model, seed=0), z, atol=1e-6)


def test_posterior_minimum_tie_is_seed_deterministic():
    dom = Domain.cube(-1.0, 1.0, 1)
    X = np.array([[-0.5], [0.5]])
    model = GpModel(X, np.array([-1.0, -1.0]), dom, KernelSpec(KernelFamily.MATERN52, 1.0, (0.2,)))
    a = posterior_minimum(model, seed=3)
    assert np.array_equal(a, posterior_minimum(model, seed=3))
    assert abs(abs(a[0]) - 0.5) < 1e-3


def test_posterior_minimum_of_dense_bowl(square, bowl_model):
    assert np.linalg.norm(posterior_minimum(bowl_model, seed=0)) < 1e-2


def test_convex_bowl_run():
    cfg = BlossomConfig(target_global_regret=1e-4, seed=0)
    res = run(lambda x: 0.5 * x @ x, Domain.cube(-1.0, 1.0, 2), cfg)
    phases = [r.phase for r in res.trace]
    assert res.terminated_reason == StopReason.LOCAL_CONVERGED
    assert res.recommended_y <= 1e-8
    assert any(p in (Phase.BAYES, Phase.GRR) for p in phases)
    first_local = phases.index(Phase.LOCAL)
    assert all(p == Phase.LOCAL for p in phases[first_local:])
    assert trace_violations(res.trace, cfg.target_global_regret) == []
    assert res.total_evals == len(res.trace)


def test_budget_equal_to_initial_design():
    cfg = BlossomConfig(n_init=5, max_iterations=5, **FAST)
    res = run(lambda x: float(np.sum(x)), Domain.cube(0.0, 1.0, 2), cfg)
    assert res.terminated_reason == StopReason.MAX_ITERATIONS
    assert res.total_evals == 5
    best = min(res.trace, key=lambda r: r.y)
    assert np.array_equal(res.recommendation, best.x)
    assert res.recommended_y == best.y


def test_runs_are_reproducible():
    cfg = BlossomConfig(max_iterations=14, seed=11, **FAST)

    def f(x):
        return np.sin(3 * x[0]) + (x[1] - 0.2) ** 2

    a = run(f, Domain.cube(-1.0, 1.0, 2), cfg)
    b = run(f, Domain.cube(-1.0, 1.0, 2), cfg)
    assert [(r.phase, r.y, r.regret_estimate) for r in a.trace] == [(r.phase, r.y, r.regret_estimate) for r in b.trace]
    assert all(np.array_equal(r.x, s.x) for r, s in zip(a.trace, b.trace))


def test_objective_failure_keeps_partial_trace():
    calls = []

    def f(x):
        calls.append(x)
        if len(calls) > 7:
            raise RuntimeError("simulator crashed")
        return float(x @ x)

    res = run(f, Domain.cube(-1.0, 1.0, 2), BlossomConfig(max_iterations=20, **FAST))
    assert res.terminated_reason == StopReason.ERROR
    assert len(res.trace) == 7
    assert "simulator crashed" in res.message


def test_hook_stops_before_evaluating():
    seen = []

    def hook(step):
        seen.append(step)
        return step.iteration == 8

    res = run(lambda x: float(x @ x), Domain.cube(-1.0, 1.0, 2), BlossomConfig(switching=False, **FAST), hook)
    assert res.terminated_reason == StopReason.EXTERNAL_STOP
    assert res.total_evals == 7
    assert [s.phase for s in seen] == [Phase.BAYES, Phase.BAYES]


def test_config_validation():
    dom = Domain.cube(0.0, 1.0, 2)
    with pytest.raises(ValueError):
        run(lambda x: 0.0, dom, BlossomConfig(target_global_regret=0.0))
    with pytest.raises(ValueError):
        run(lambda x: 0.0, dom, BlossomConfig(max_iterations=3))
    with pytest.raises(ValueError):
        run(lambda x: 0.0, dom, BlossomConfig(bayes_acquisition="ucb"))


def record(i, phase, y, inc, regret=None):
    return StepRecord(i, phase, np.zeros(1), y, np.zeros(1), inc, regret_estimate=regret)


def test_violation_checker_flags_bad_traces():
    good = [
        record(1, Phase.RANDOM_INIT, 2.0, 2.0),
        record(2, Phase.BAYES, 1.0, 1.0),
        record(3, Phase.LOCAL, 0.5, 0.5, regret=1e-3),
    ]
    assert trace_violations(good, 1e-2) == []
    assert trace_violations(good, 1e-4)
    back = good + [record(4, Phase.BAYES, 0.4, 0.4)]
    assert any("illegal" in v for v in trace_violations(back, 1e-2))
    worse = [record(1, Phase.RANDOM_INIT, 2.0, 2.0), record(2, Phase.BAYES, 3.0, 3.0)]
    assert any("incumbent" in v for v in trace_violations(worse, 1e-2))
