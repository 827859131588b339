"""BFGS in coordinates where the GP's expected Hessian is the identity."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .gp import Domain, GpModel, infer_hessian

log = logging.getLogger(__name__)

ARMIJO_C1 = 1e-4
WOLFE_C2 = 0.9
MAX_LINE_SEARCH_TRIALS = 30


@dataclass
class RescaledProblem:
    """Affine change of variables ``z = T (x - origin)``.

    With ``H = C C^T`` on the active dimensions, ``T = C^T`` turns the
    quadratic model ``x^T H x / 2`` into ``z^T z / 2``. Dimensions without a
    Hessian estimate keep unit scaling.
    """

    transform: np.ndarray
    inverse: np.ndarray
    origin: np.ndarray
    hessian_estimate: np.ndarray
    active_dims: tuple
    domain: Domain | None = None
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def from_hessian(cls, H, origin, domain=None, active_dims=None):
        origin = np.asarray(origin, dtype=float)
        d = origin.size
        active = tuple(range(d)) if active_dims is None else tuple(active_dims)
        H = np.atleast_2d(np.asarray(H, dtype=float))
        T = np.eye(d)
        diagnostics = {}
        try:
            C = np.linalg.cholesky(0.5 * (H + H.T))
            T[np.ix_(active, active)] = C.T
        except np.linalg.LinAlgError:
            diagnostics["fallback"] = "hessian mean not positive definite; identity transform"
            log.info(diagnostics["fallback"])
        return cls(T, np.linalg.inv(T), origin, H, active, domain, diagnostics)

    @classmethod
    def identity(cls, origin, domain=None):
        origin = np.asarray(origin, dtype=float)
        return cls.from_hessian(np.eye(origin.size), origin, domain)

    @property
    def is_identity_fallback(self):
        return "fallback" in self.diagnostics

    def to_z(self, x):
        return self.transform @ (np.asarray(x, dtype=float) - self.origin)

    def to_x(self, z):
        return self.origin + self.inverse @ np.asarray(z, dtype=float)


@dataclass
class LocalResult:
    x_final: np.ndarray
    y_final: float
    n_evals: int
    grad_norm: float
    converged: bool
    n_line_searches: int = 0
    n_gradients: int = 0
    n_line_search_evals: int = 0
    n_gradient_evals: int = 0
    message: str = ""


def build_rescaling(model: GpModel, x_hat, domain: Domain | None = None) -> RescaledProblem:
    """Rescaling from the Cholesky factor of the GP Hessian mean at ``x_hat``."""
    domain = model.domain if domain is None else domain
    x_hat = np.asarray(x_hat, dtype=float)
    try:
        belief = infer_hessian(model, x_hat, domain)
    except ValueError:
        problem = RescaledProblem.identity(x_hat, domain)
        problem.diagnostics["fallback"] = "no interior dimensions; identity transform"
        return problem
    return RescaledProblem.from_hessian(belief.mean, x_hat, domain, belief.active_dims)


class _BudgetExhausted(Exception):
    pass


class _NonFinite(Exception):
    pass


def bfgs_minimize(
    objective,
    problem: RescaledProblem,
    x0,
    grad_tol: float = 1e-6,
    max_evals: int = 1000,
    fd_step: float = 1e-6,
    y0: float | None = None,
) -> LocalResult:
    """Minimize ``objective`` by BFGS in the rescaled coordinates.

    Gradients are central finite differences of step ``fd_step`` along each
    rescaled axis (one-sided where a probe would leave the domain). The line
    search enforces the weak Wolfe conditions by bisection/expansion. Iterates
    are clamped to the domain and dimensions pinned at a bound by an outward
    gradient are frozen for the step.

    Parameters
    ----------
    objective : callable
        ``f(x) -> float`` in original coordinates.
    y0 : float, optional
        Known ``f(x0)``; saves one evaluation.

    Returns
    -------
    LocalResult
        ``n_evals`` is the start evaluation (unless ``y0`` was given) plus
        ``n_line_search_evals`` plus ``n_gradient_evals``; the latter is
        ``2 d`` per gradient when no probe touches the boundary.
    """
    T, Tinv = problem.transform, problem.inverse
    domain = problem.domain
    d = T.shape[0]
    x = np.asarray(x0, dtype=float).copy()
    if domain is not None:
        x = domain.clip(x)
    counts = {"evals": 0, "ls": 0, "grad": 0}

    def f(xv, kind=None):
        if counts["evals"] >= max_evals:
            raise _BudgetExhausted
        counts["evals"] += 1
        if kind:
            counts[kind] += 1
        v = float(objective(xv))
        if not np.isfinite(v):
            raise _NonFinite(f"objective returned {v} at {xv.tolist()}")
        return v

    def inside(xv):
        return domain is None or domain.contains(xv)

    def project(xv):
        return xv if domain is None else domain.clip(xv)

    def gradient(xv, fv):
        g = np.empty(d)
        for j in range(d):
            e = Tinv[:, j] * fd_step
            xp, xm = xv + e, xv - e
            ip, im = inside(xp), inside(xm)
            if ip and im:
                g[j] = (f(xp, "grad") - f(xm, "grad")) / (2 * fd_step)
            elif ip:
                g[j] = (f(xp, "grad") - fv) / fd_step
            elif im:
                g[j] = (fv - f(xm, "grad")) / fd_step
            else:
                g[j] = 0.0
        return g

    def free_mask(xv, gz):
        if domain is None:
            return np.ones(d, dtype=bool)
        gx = T.T @ gz
        at_lo = xv <= domain.lower
        at_hi = xv >= domain.upper
        return ~((at_lo & (gx > 0)) | (at_hi & (gx < 0)))

    def projected(xv, gz):
        free = free_mask(xv, gz)
        gx = (T.T @ gz) * free
        return np.linalg.solve(T.T, gx), free

    n_ls = n_grad = 0
    grad_norm = np.inf
    fx = y0
    message = ""
    converged = False
    try:
        if fx is None:
            fx = f(x)
        gz = gradient(x, fx)
        n_grad += 1
        B = np.eye(d)
        while True:
            gp, free = projected(x, gz)
            grad_norm = float(np.linalg.norm(gp))
            if grad_norm < grad_tol:
                converged = True
                message = "gradient tolerance met"
                break
            px = Tinv @ (-B @ gp)
            px[~free] = 0.0
            if gz @ (T @ px) >= 0:
                B = np.eye(d)
                px = -(Tinv @ gp)
                px[~free] = 0.0
            lo, hi, alpha = 0.0, np.inf, 1.0
            accepted = None
            fallback = None
            for _ in range(MAX_LINE_SEARCH_TRIALS):
                xt = project(x + alpha * px)
                s = T @ (xt - x)
                decrease = gz @ s
                if decrease >= 0 or not np.any(s):
                    hi = alpha
                else:
                    ft = f(xt, "ls")
                    if ft > fx + ARMIJO_C1 * decrease:
                        hi = alpha
                    else:
                        gt = gradient(xt, ft)
                        n_grad += 1
                        fallback = (xt, ft, gt, s)
                        if gt @ s >= WOLFE_C2 * decrease:
                            accepted = fallback
                            break
                        lo = alpha
                alpha = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * lo
            n_ls += 1
            if accepted is None:
                accepted = fallback
            if accepted is None:
                message = "line search failed to decrease the objective"
                break
            xt, ft, gt, s = accepted
            gpt, _ = projected(xt, gt)
            yv = gpt - gp
            sy = s @ yv
            if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
                rho = 1.0 / sy
                V = np.eye(d) - rho * np.outer(s, yv)
                B = V @ B @ V.T + rho * np.outer(s, s)
            x, fx, gz = xt, ft, gt
    except _BudgetExhausted:
        message = "evaluation budget exhausted"
    except _NonFinite as exc:
        message = f"aborted: {exc}"
        log.warning(message)
    return LocalResult(
        x_final=x,
        y_final=float(fx) if fx is not None else np.nan,
        n_evals=counts["evals"],
        grad_norm=grad_norm,
        converged=converged,
        n_line_searches=n_ls,
        n_gradients=n_grad,
        n_line_search_evals=counts["ls"],
        n_gradient_evals=counts["grad"],
        message=message,
    )
