"""Bayesian optimization that switches to regret reduction and local search once a convex basin is found."""

from .acquisitions import (
    AcquisitionContext,
    expected_improvement,
    global_regret_reduction,
    maximize_acquisition,
    pes_discrete,
    probability_of_improvement,
)
from .controller import BlossomConfig, Phase, RunResult, StepRecord, StopReason, posterior_minimum, run
from .convexity import ConvexRegion, PdTestConfig, pd_sphere_radius, pd_test_point
from .gp import Domain, GpModel, fit_hyperparameters, fit_model, infer_hessian, posterior_joint
from .kernels import KernelFamily, KernelSpec, kernel_derivative, kernel_matrix
from .localopt import RescaledProblem, bfgs_minimize, build_rescaling
from .objectives import Benchmark, draw_gp_objective, log_transform, make_benchmark
from .regret import build_support, estimate_global_regret, inner_stats

__all__ = [
    "AcquisitionContext",
    "Benchmark",
    "BlossomConfig",
    "ConvexRegion",
    "Domain",
    "GpModel",
    "KernelFamily",
    "KernelSpec",
    "PdTestConfig",
    "Phase",
    "RescaledProblem",
    "RunResult",
    "StepRecord",
    "StopReason",
    "bfgs_minimize",
    "build_rescaling",
    "build_support",
    "draw_gp_objective",
    "estimate_global_regret",
    "expected_improvement",
    "fit_hyperparameters",
    "fit_model",
    "global_regret_reduction",
    "infer_hessian",
    "inner_stats",
    "kernel_derivative",
    "kernel_matrix",
    "log_transform",
    "make_benchmark",
    "maximize_acquisition",
    "pd_sphere_radius",
    "pd_test_point",
    "pes_discrete",
    "posterior_joint",
    "posterior_minimum",
    "probability_of_improvement",
    "run",
]
