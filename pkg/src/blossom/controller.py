"""The optimization loop that switches between acquisition strategies.

Each iteration refits the GP, locates the posterior-mean minimizer ``x_min``
and tests its Hessian for positive definiteness. Without a convex region the
Bayes-phase acquisition (discrete PES or EI) proposes the next point. With
one, the global regret outside the region is estimated: above the target the
next point maximizes the regret-reduction acquisition outside the region;
at or below it, rescaled BFGS takes over from ``x_min`` and the run ends when
it converges.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .acquisitions import (
    AcquisitionContext,
    NoFeasibleProposalError,
    Proposal,
    expected_improvement,
    global_regret_reduction,
    maximize_acquisition,
    pes_discrete,
)
from .convexity import ConvexRegion, PdTestConfig, pd_sphere_radius, pd_test_point
from .gp import Domain, GpModel, fit_hyperparameters
from .kernels import KernelFamily
from .localopt import bfgs_minimize, build_rescaling
from .regret import build_support, estimate_global_regret

log = logging.getLogger(__name__)


class Phase(str, enum.Enum):
    RANDOM_INIT = "RandomInit"
    BAYES = "BayesAcq"
    GRR = "GlobalRegretReduction"
    LOCAL = "LocalExploit"
    TERMINATED = "Terminated"


class StopReason(str, enum.Enum):
    REGRET_TARGET_MET = "RegretTargetMet"
    MAX_ITERATIONS = "MaxIterations"
    LOCAL_CONVERGED = "LocalConverged"
    EXTERNAL_STOP = "ExternalStop"
    ERROR = "Error"


# flowchart edges: after every refit the loop may land in any proposing phase
LEGAL_TRANSITIONS = {
    Phase.RANDOM_INIT: {Phase.RANDOM_INIT, Phase.BAYES, Phase.GRR, Phase.LOCAL},
    Phase.BAYES: {Phase.BAYES, Phase.GRR, Phase.LOCAL},
    Phase.GRR: {Phase.BAYES, Phase.GRR, Phase.LOCAL},
    Phase.LOCAL: {Phase.LOCAL},
}


@dataclass
class BlossomConfig:
    """Run settings. ``max_iterations`` caps objective evaluations of every kind.

    ``switching=False`` disables the convexity test, so every post-initialization
    step uses ``bayes_acquisition``; stopping baselines run this way.
    """

    target_global_regret: float = 1e-2
    n_init: int | None = None
    pd_epsilon: float = 0.01
    n_u: int = 20
    h_r: float = 1e-3
    n_draws: int = 400
    n_support: int = 100
    bayes_acquisition: str = "pes"
    max_iterations: int = 200
    grad_tol: float = 1e-6
    seed: int = 0
    switching: bool = True
    kernel_family: str = "matern52"
    n_restarts: int = 4
    acq_budget: int | None = None
    pes_budget: int | None = None
    pes_paths: int = 200
    pes_fantasies: int = 7
    polish_starts: int = 5
    min_scan_budget: int | None = None

    def resolved_n_init(self, dim):
        return 2 * (dim + 1) if self.n_init is None else int(self.n_init)

    def validate(self, dim):
        if not self.target_global_regret > 0:
            raise ValueError("target_global_regret must be positive")
        if self.bayes_acquisition not in ("pes", "ei"):
            raise ValueError("bayes_acquisition must be 'pes' or 'ei'")
        n_init = self.resolved_n_init(dim)
        if n_init < 2:
            raise ValueError("n_init must be at least 2")
        if self.max_iterations < n_init:
            raise ValueError("max_iterations must be at least n_init")
        for name in ("pd_epsilon", "n_u", "h_r", "n_draws", "n_support", "grad_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        KernelFamily(self.kernel_family)
        PdTestConfig(self.pd_epsilon)


@dataclass
class StepRecord:
    iteration: int
    phase: Phase
    x: np.ndarray
    y: float
    incumbent_x: np.ndarray
    incumbent_y: float
    region_radius: float | None = None
    regret_estimate: float | None = None
    jitter: float = 0.0
    wall_time_s: float = 0.0


@dataclass
class RunResult:
    recommendation: np.ndarray
    recommended_y: float
    trace: list
    terminated_reason: StopReason
    total_evals: int
    n_bayes_iterations: int = 0
    message: str = ""
    diagnostics: dict = field(default_factory=dict)


@dataclass
class PendingStep:
    """What the loop is about to evaluate; handed to the stop hook."""

    iteration: int
    phase: Phase
    proposal: Proposal
    model: GpModel
    context: AcquisitionContext


def _seed(base, *keys):
    return int(np.random.SeedSequence([int(base) & 0xFFFFFFFF, *keys]).generate_state(1)[0])


def posterior_minimum(model: GpModel, domain: Domain | None = None, budget: int | None = None, seed: int = 0):
    """Minimizer of the posterior mean.

    Latin-hypercube scan plus the observed inputs, then L-BFGS-B with the
    analytic mean gradient from the five lowest distinct candidates. Ties keep
    the earliest candidate.
    """
    domain = model.domain if domain is None else domain
    d = domain.dim
    budget = 1000 * d if budget is None else int(budget)
    rng = np.random.default_rng(seed)
    cands = domain.from_unit(2.0 * qmc.LatinHypercube(d, seed=rng).random(max(budget, 1)) - 1.0)
    if model.n:
        cands = np.vstack([model.X, cands])
    vals = model.predict(cands)[0]
    order = np.argsort(vals, kind="stable")
    best_x, best_v = cands[order[0]].copy(), float(vals[order[0]])

    def fun(x):
        m, g = model.predict_mean_grad(x[None, :])
        return float(m[0]), g[0]

    bounds = list(zip(domain.lower, domain.upper))
    starts = []
    for i in order:
        if all(np.any(cands[i] != s) for s in starts):
            starts.append(cands[i])
        if len(starts) == 5:
            break
    for x0 in starts:
        res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds, options={"gtol": 1e-10, "ftol": 1e-15})
        x = domain.clip(res.x)
        v = float(model.predict(x[None, :])[0][0])
        if v < best_v:
            best_x, best_v = x, v
    return best_x


def _unique_rows(X, y):
    _, idx = np.unique(X, axis=0, return_index=True)
    idx = np.sort(idx)
    return X[idx], y[idx]


class _Run:
    def __init__(self, objective, domain, cfg, hook):
        self.objective = objective
        self.domain = domain
        self.cfg = cfg
        self.hook = hook
        self.trace = []
        self.t0 = time.perf_counter()
        self.best_x = None
        self.best_y = np.inf

    @property
    def evals(self):
        return len(self.trace)

    def evaluate(self, x, phase, radius=None, regret=None, jitter=0.0):
        x = self.domain.clip(np.asarray(x, dtype=float))
        y = float(self.objective(x))
        if not np.isfinite(y):
            raise FloatingPointError(f"objective returned {y} at {x.tolist()}")
        if y < self.best_y:
            self.best_x, self.best_y = x.copy(), y
        self.trace.append(
            StepRecord(
                iteration=self.evals + 1,
                phase=phase,
                x=x.copy(),
                y=y,
                incumbent_x=self.best_x.copy(),
                incumbent_y=self.best_y,
                region_radius=radius,
                regret_estimate=regret,
                jitter=jitter,
                wall_time_s=time.perf_counter() - self.t0,
            )
        )
        return y


def run(objective, domain: Domain, cfg: BlossomConfig | None = None, hook=None) -> RunResult:
    """Optimize ``objective`` over ``domain``.

    Parameters
    ----------
    objective : callable
        Deterministic ``f(x) -> float`` for ``x`` of shape ``(d,)``.
    hook : callable, optional
        Called with a :class:`PendingStep` before every post-initialization
        evaluation outside the local phase; returning True ends the run with
        ``ExternalStop`` without evaluating the proposal.
    """
    cfg = BlossomConfig() if cfg is None else cfg
    d = domain.dim
    cfg.validate(d)
    state = _Run(objective, domain, cfg, hook)
    pd_cfg = PdTestConfig(cfg.pd_epsilon)
    family = KernelFamily(cfg.kernel_family)
    n_init = cfg.resolved_n_init(d)
    n_bayes = 0
    recommendation = None
    reason = StopReason.MAX_ITERATIONS
    message = ""

    try:
        lhs = qmc.LatinHypercube(d, seed=np.random.default_rng(_seed(cfg.seed, 0)))
        for x in domain.lower + lhs.random(n_init) * domain.width:
            state.evaluate(x, Phase.RANDOM_INIT)
        kernel = None
        it = 0
        while True:
            if state.evals >= cfg.max_iterations:
                reason = StopReason.MAX_ITERATIONS
                break
            it += 1
            X, y = _unique_rows(np.array([r.x for r in state.trace]), np.array([r.y for r in state.trace]))
            kernel = fit_hyperparameters(X, y, domain, _seed(cfg.seed, it, 1), family, cfg.n_restarts, kernel)
            model = GpModel(X, y, domain, kernel)
            ctx = AcquisitionContext(model, domain, incumbent_best=state.best_y)
            region, estimate = None, None
            if cfg.switching:
                x_min = posterior_minimum(model, domain, cfg.min_scan_budget, _seed(cfg.seed, it, 2))
                if pd_test_point(model, x_min, domain, pd_cfg, _seed(cfg.seed, it, 3)):
                    region = pd_sphere_radius(model, x_min, domain, cfg.n_u, cfg.h_r, pd_cfg, _seed(cfg.seed, it, 4))
                    if region.radius > 0:
                        estimate = estimate_global_regret(
                            model, region, domain, cfg.n_draws, cfg.n_support, _seed(cfg.seed, it, 5)
                        )
                if estimate is not None and estimate.value <= cfg.target_global_regret:
                    reason, recommendation, message = _local_phase(state, model, x_min, region, estimate.value)
                    break
            radius = None if region is None else region.radius
            regret = None if estimate is None else estimate.value
            proposal = None
            phase = Phase.BAYES
            if estimate is not None:
                ctx.region = region
                ctx.expected_inner_min = estimate.mu_i
                ctx.inner_sd = estimate.sigma_i
                try:
                    proposal = maximize_acquisition(
                        global_regret_reduction,
                        ctx,
                        exclude=region,
                        budget=cfg.acq_budget,
                        seed=_seed(cfg.seed, it, 6),
                        polish_starts=cfg.polish_starts,
                    )
                    phase = Phase.GRR
                except NoFeasibleProposalError:
                    log.info("iteration %d: region excludes every candidate; using Bayes phase", it)
            if proposal is None:
                proposal = _bayes_proposal(ctx, cfg, it)
            if state.hook is not None and state.hook(PendingStep(state.evals + 1, phase, proposal, model, ctx)):
                reason = StopReason.EXTERNAL_STOP
                break
            state.evaluate(proposal.x, phase, radius, regret, model.jitter)
            n_bayes += 1
    except Exception as exc:  # a failed run still returns its partial trace
        log.exception("run failed")
        reason = StopReason.ERROR
        message = f"{type(exc).__name__}: {exc}"

    if recommendation is None:
        if state.best_x is None:
            recommendation, rec_y = domain.center.copy(), np.nan
        else:
            recommendation, rec_y = state.best_x.copy(), state.best_y
    else:
        recommendation, rec_y = recommendation
    return RunResult(
        recommendation=recommendation,
        recommended_y=float(rec_y),
        trace=state.trace,
        terminated_reason=reason,
        total_evals=state.evals,
        n_bayes_iterations=pre_local_evals(state.trace),
        message=message,
        diagnostics={"proposing_iterations": n_bayes},
    )


def pre_local_evals(trace):
    """Evaluations made before the local phase."""
    return sum(1 for r in trace if r.phase != Phase.LOCAL)


def trace_violations(trace, target_global_regret):
    """Broken loop invariants in a trace, as human-readable strings (empty if none).

    Checks phase transitions against :data:`LEGAL_TRANSITIONS`, that the local
    phase is a single suffix whose first record carries a regret estimate at
    or below the target, and that the incumbent never gets worse.
    """
    problems = []
    prev = None
    best = np.inf
    for r in trace:
        if prev is None and r.phase != Phase.RANDOM_INIT:
            problems.append(f"step {r.iteration}: trace starts in {r.phase.value}")
        if prev is not None and r.phase not in LEGAL_TRANSITIONS[prev.phase]:
            problems.append(f"step {r.iteration}: illegal transition {prev.phase.value} -> {r.phase.value}")
        if r.phase == Phase.LOCAL and (prev is None or prev.phase != Phase.LOCAL):
            if r.regret_estimate is None or not r.regret_estimate <= target_global_regret:
                problems.append(f"step {r.iteration}: local phase entered without a regret estimate <= target")
        best = min(best, r.y)
        if r.incumbent_y != best:
            problems.append(f"step {r.iteration}: incumbent_y {r.incumbent_y} is not the running minimum {best}")
        prev = r
    return problems


def _bayes_proposal(ctx, cfg, it):
    seed = _seed(cfg.seed, it, 7)
    if cfg.bayes_acquisition == "ei":
        return maximize_acquisition(
            expected_improvement, ctx, budget=cfg.acq_budget, seed=seed, polish_starts=cfg.polish_starts
        )
    support = build_support(ctx.model, None, ctx.domain, cfg.n_support, _seed(cfg.seed, it, 8))
    ctx.support = support.points

    def pes(c, X):
        return pes_discrete(c, X, cfg.pes_paths, cfg.pes_fantasies, _seed(cfg.seed, it, 9))

    budget = 500 * ctx.domain.dim if cfg.pes_budget is None else cfg.pes_budget
    return maximize_acquisition(pes, ctx, budget=budget, seed=seed, polish_starts=cfg.polish_starts)


def _local_phase(state: _Run, model: GpModel, x_min, region: ConvexRegion, regret: float):
    cfg = state.cfg
    problem = build_rescaling(model, x_min, state.domain)
    remaining = cfg.max_iterations - state.evals
    first = [True]

    def recorded(x):
        tagged = first[0]
        first[0] = False
        return state.evaluate(
            x,
            Phase.LOCAL,
            radius=region.radius if tagged else None,
            regret=regret if tagged else None,
            jitter=model.jitter,
        )

    result = bfgs_minimize(recorded, problem, x_min, grad_tol=cfg.grad_tol, max_evals=remaining)
    if result.message.startswith("aborted"):
        raise FloatingPointError(result.message)
    if result.converged:
        reason = StopReason.LOCAL_CONVERGED
    elif state.evals >= cfg.max_iterations:
        reason = StopReason.MAX_ITERATIONS
    else:
        reason = StopReason.REGRET_TARGET_MET
    if not np.isfinite(result.y_final):
        return reason, None, result.message
    return reason, (result.x_final.copy(), result.y_final), result.message
