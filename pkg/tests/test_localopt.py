import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import rosen

from blossom.gp import Domain
from blossom.localopt import RescaledProblem, bfgs_minimize, build_rescaling

from conftest import fitted


def test_identity_and_diagonal_transforms():
    p = RescaledProblem.from_hessian(np.eye(2), np.zeros(2))
    assert np.array_equal(p.transform, np.eye(2))
    p = RescaledProblem.from_hessian(np.diag([4.0, 1.0]), np.zeros(2))
    assert np.allclose(p.transform, np.diag([2.0, 1.0]))
    x = np.array([0.3, -0.7])
    z = p.to_z(x)
    assert 0.5 * (4 * x[0] ** 2 + x[1] ** 2) == pytest.approx(0.5 * z @ z)
    assert np.allclose(p.to_x(z), x)


def test_indefinite_hessian_falls_back_to_identity():
    p = RescaledProblem.from_hessian(np.diag([1.0, -1.0]), np.zeros(2))
    assert p.is_identity_fallback
    assert np.array_equal(p.transform, np.eye(2))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 5))
def test_change_of_variables_gives_identity_hessian(seed, d):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(d, d))
    H = A @ A.T + 0.1 * np.eye(d)
    p = RescaledProblem.from_hessian(H, np.zeros(d))
    assert np.linalg.norm(p.transform @ p.inverse - np.eye(d)) <= 1e-10
    # Hessian of x(z)^T H x(z) / 2 in z is T^-T H T^-1
    Hz = p.inverse.T @ H @ p.inverse
    assert np.allclose(Hz, np.eye(d), atol=1e-8)


def test_build_rescaling_from_model(bowl_model):
    p = build_rescaling(bowl_model, np.zeros(2))
    assert not p.is_identity_fallback
    assert np.allclose(p.transform.T @ p.transform, p.hessian_estimate)
    assert build_rescaling(bowl_model, np.array([1.0, -1.0])).is_identity_fallback


def test_rescaled_quadratic_converges_in_few_line_searches():
    H = np.diag([4.0, 1.0])
    dom = Domain.cube(-3.0, 3.0, 2)
    res = bfgs_minimize(lambda x: 0.5 * x @ H @ x, RescaledProblem.from_hessian(H, np.zeros(2), dom), np.array([1.0, 2.0]))
    assert res.converged and res.grad_norm < 1e-6
    assert res.n_line_searches <= 3


@pytest.mark.parametrize("d", [2, 3, 4])
def test_quadratic_with_model_hessian_needs_at_most_d_plus_2_line_searches(d):
    rng = np.random.default_rng(d)
    A = rng.normal(size=(d, d))
    H = A @ A.T + np.eye(d)
    H_model = H * (1 + 0.05 * rng.uniform(-1, 1, (d, d)))
    H_model = 0.5 * (H_model + H_model.T)
    dom = Domain.cube(-10.0, 10.0, d)
    x0 = rng.uniform(-1, 1, d)
    res = bfgs_minimize(lambda x: 0.5 * x @ H @ x, RescaledProblem.from_hessian(H_model, np.zeros(d), dom), x0)
    assert res.converged
    assert res.n_line_searches <= d + 2


def test_rosenbrock_in_the_unit_box():
    dom = Domain.cube(0.0, 1.0, 2)
    u0 = (np.array([-1.2, 1.0]) + 2) / 4
    res = bfgs_minimize(lambda u: rosen(4 * u - 2), RescaledProblem.identity(u0, dom), u0, max_evals=2000)
    assert res.n_evals <= 2000
    assert np.linalg.norm(4 * res.x_final - 2 - 1.0) < 1e-4


def test_zero_budget_returns_start():
    x0 = np.array([0.2, 0.3])
    res = bfgs_minimize(lambda x: x @ x, RescaledProblem.identity(x0), x0, max_evals=0)
    assert np.array_equal(res.x_final, x0) and not res.converged and res.n_evals == 0


def test_non_finite_objective_aborts():
    res = bfgs_minimize(lambda x: np.nan, RescaledProblem.identity(np.zeros(2)), np.zeros(2))
    assert not res.converged and res.message.startswith("aborted")


def bumpy(seen):
    def f(x):
        v = (x[0] - 0.3) ** 2 + 3 * (x[1] + 0.2) ** 4 + np.sin(2 * x[0])
        seen.append(v)
        return v

    return f


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-0.9, 0.9), min_size=2, max_size=2), st.integers(5, 300))
def test_eval_accounting_and_monotone_progress(x0, budget):
    seen = []
    x0 = np.array(x0)
    res = bfgs_minimize(bumpy(seen), RescaledProblem.identity(x0, Domain.cube(-1.0, 1.0, 2)), x0, max_evals=budget)
    assert res.n_evals == len(seen) <= budget
    assert res.n_evals == 1 + res.n_line_search_evals + res.n_gradient_evals
    assert res.y_final <= seen[0]


def test_interior_gradients_cost_two_evaluations_per_dimension():
    seen = []
    x0 = np.array([0.1, 0.4])
    res = bfgs_minimize(bumpy(seen), RescaledProblem.identity(x0), x0)
    assert res.converged
    assert res.n_evals == 1 + res.n_line_search_evals + 4 * res.n_gradients


def test_bound_constrained_minimum_freezes_blocked_dimension():
    dom = Domain.cube(0.0, 1.0, 2)
    res = bfgs_minimize(lambda x: (x[0] + 2) ** 2 + (x[1] - 0.5) ** 2, RescaledProblem.identity(np.zeros(2), dom), np.array([0.5, 0.2]))
    assert res.converged
    assert np.allclose(res.x_final, [0.0, 0.5], atol=1e-6)
