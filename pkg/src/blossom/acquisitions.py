"""Acquisition functions and their inner maximizer.

All acquisitions take an :class:`AcquisitionContext` and either a single
point ``(d,)`` (returning a float) or a batch ``(m, d)`` (returning ``(m,)``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.optimize import minimize
from scipy.special import ndtr
from scipy.stats import qmc

from ._linalg import jittered_cholesky
from .convexity import ConvexRegion
from .gp import Domain, GpModel
from .kernels import kernel_matrix

# variance below this fraction of the prior variance counts as zero
ZERO_VARIANCE = 1e-12


class NoFeasibleProposalError(RuntimeError):
    pass


@dataclass
class AcquisitionContext:
    model: GpModel | None
    domain: Domain
    incumbent_best: float = np.nan
    region: ConvexRegion | None = None
    expected_inner_min: float | None = None
    inner_sd: float | None = None
    support: np.ndarray | None = None
    cache: dict = field(default_factory=dict, repr=False)


@dataclass
class Proposal:
    x: np.ndarray
    value: float
    excluded_region_applied: bool = False


def _batched(fn):
    def wrapper(ctx, X, *args, **kwargs):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        out = fn(ctx, np.atleast_2d(X), *args, **kwargs)
        return float(out[0]) if single else out

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def improvement(target, mu, sigma):
    """``(target - mu) Phi(z) + sigma phi(z)`` with ``z = (target - mu) / sigma``.

    Tends to ``max(target - mu, 0)`` as ``sigma -> 0``.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    gap = target - mu
    pos = sigma > 0
    safe = np.where(pos, sigma, 1.0)
    with np.errstate(over="ignore"):
        z = gap / safe
        val = gap * ndtr(z) + safe * np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
    return np.maximum(np.where(pos, val, np.maximum(gap, 0.0)), 0.0)


def _mean_sd(ctx, X):
    mu, var = ctx.model.predict(X)
    floor = ZERO_VARIANCE * ctx.model.unit_kernel.variance * ctx.model.y_scale ** 2
    sd = np.where(var > floor, np.sqrt(var), 0.0)
    return mu, sd


@_batched
def expected_improvement(ctx, X):
    """Expected improvement over ``ctx.incumbent_best``."""
    mu, sd = _mean_sd(ctx, X)
    return improvement(ctx.incumbent_best, mu, sd)


@_batched
def global_regret_reduction(ctx, X):
    """Expected improvement over the expected minimum inside the convex region."""
    if ctx.expected_inner_min is None:
        raise ValueError("global_regret_reduction needs ctx.expected_inner_min")
    mu, sd = _mean_sd(ctx, X)
    return improvement(ctx.expected_inner_min, mu, sd)


@_batched
def probability_of_improvement(ctx, X):
    mu, sd = _mean_sd(ctx, X)
    gap = ctx.incumbent_best - mu
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(sd > 0, ndtr(gap / np.where(sd > 0, sd, 1.0)), (gap > 0).astype(float))


def _entropy(counts):
    p = counts / counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        return -np.sum(np.where(p > 0, p * np.log(p), 0.0), axis=-1)


class DiscretePes:
    """Information gain about the argmin over a fixed support set.

    Sample paths over the support are drawn once. For a candidate ``x`` each
    path is extended to ``x`` consistently, then conditioned on every
    Gauss-Hermite fantasy value at ``x`` by the pathwise update
    ``f_S + c(S, x) / v(x) * (y - f(x))``. The acquisition is the entropy of
    the argmin histogram minus its expected value after the fantasy.
    """

    def __init__(self, model: GpModel, support, n_paths=200, n_fantasies=7, seed=0):
        self.model = model
        self.support = np.atleast_2d(np.asarray(support, dtype=float))
        rng = np.random.default_rng(seed)
        mean_s, cov_s = model.predict(self.support, full_cov=True)
        self._Ls, _ = jittered_cholesky(cov_s, relative=True)
        m = len(self.support)
        self._z = rng.standard_normal((n_paths, m))
        self._xi = rng.standard_normal(n_paths)
        self.paths = mean_s + self._z @ self._Ls.T
        nodes, weights = np.polynomial.hermite.hermgauss(n_fantasies)
        self._nodes = nodes
        self._weights = weights / np.sqrt(np.pi)
        counts = np.bincount(np.argmin(self.paths, axis=1), minlength=m)
        self.prior_entropy = float(_entropy(counts.astype(float)))
        self._Su = model.domain.to_unit(self.support)
        self._VS = model._solve_lower(kernel_matrix(model.unit_kernel, model._Xu, self._Su)) if model.n else None

    def _cross_cov(self, X):
        model = self.model
        Xu = model.domain.to_unit(X)
        c = kernel_matrix(model.unit_kernel, self._Su, Xu)
        if model.n:
            VX = model._solve_lower(kernel_matrix(model.unit_kernel, model._Xu, Xu))
            c = c - self._VS.T @ VX
        return c * model.y_scale ** 2

    def __call__(self, X):
        X = np.atleast_2d(X)
        m = len(self.support)
        out = np.zeros(len(X))
        if m < 2:
            return out
        model = self.model
        mu_x, var_x = model.predict(X)
        floor = ZERO_VARIANCE * model.unit_kernel.variance * model.y_scale ** 2
        c = self._cross_cov(X)
        A = la.solve_triangular(self._Ls, c, lower=True, check_finite=False)
        resid = np.sqrt(np.maximum(var_x - np.sum(A * A, axis=0), 0.0))
        f_x = mu_x + self._z @ A + np.outer(self._xi, resid)
        nf = len(self._nodes)
        offsets = (np.arange(nf) * m)[:, None]
        for b in np.flatnonzero(var_x > floor):
            y = mu_x[b] + np.sqrt(2.0 * var_x[b]) * self._nodes
            gain = c[:, b] / var_x[b]
            cond = self.paths[None, :, :] + (y[:, None] - f_x[None, :, b])[:, :, None] * gain
            idx = np.argmin(cond, axis=2) + offsets
            counts = np.bincount(idx.ravel(), minlength=nf * m).reshape(nf, m).astype(float)
            out[b] = self.prior_entropy - float(self._weights @ _entropy(counts))
        return out


@_batched
def pes_discrete(ctx, X, n_paths=200, n_fantasies=7, seed=0):
    """Discretized predictive-entropy acquisition over ``ctx.support``."""
    if ctx.support is None:
        raise ValueError("pes_discrete needs ctx.support")
    key = ("pes", n_paths, n_fantasies, seed)
    pes = ctx.cache.get(key)
    if pes is None:
        pes = ctx.cache[key] = DiscretePes(ctx.model, ctx.support, n_paths, n_fantasies, seed)
    return pes(X)


def maximize_acquisition(
    f,
    ctx: AcquisitionContext,
    exclude: ConvexRegion | None = None,
    budget: int | None = None,
    seed: int = 0,
    polish_starts: int = 5,
    polish_maxfev: int | None = None,
) -> Proposal:
    """Latin-hypercube scan of ``f`` followed by bounded Nelder-Mead polish.

    ``budget`` is the number of scanned points (default ``2000 * d``); one
    polish start is allowed per 100 scanned points, up to ``polish_starts``.
    Candidates inside ``exclude`` (if it has positive radius) are discarded,
    in the scan and during polish.
    """
    domain = ctx.domain
    d = domain.dim
    budget = 2000 * d if budget is None else int(budget)
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    X = domain.from_unit(2.0 * qmc.LatinHypercube(d, seed=rng).random(budget) - 1.0)
    excl = exclude if exclude is not None and exclude.radius > 0 else None
    if excl is not None:
        X = X[~excl.contains(X)]
        if not len(X):
            raise NoFeasibleProposalError("no feasible proposal: exclusion region covers every candidate")
    vals = np.asarray(f(ctx, X), dtype=float)
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    order = np.argsort(-vals, kind="stable")
    best_val = vals[order[0]]
    tied = np.flatnonzero(vals == best_val)
    if len(tied) > 1 and ctx.model is not None:
        # lowest posterior mean among ties, then scan order
        best_i = tied[int(np.argmin(ctx.model.predict(X[tied])[0]))]
        order = np.concatenate([[best_i], order[order != best_i]])
    best_x = X[order[0]].copy()

    n_polish = min(polish_starts, budget // 100, len(X))
    maxfev = polish_maxfev or 100 * d

    def neg(u):
        x = domain.from_unit(np.clip(u, -1.0, 1.0))
        if excl is not None and excl.contains(x)[0]:
            return np.inf
        v = float(f(ctx, x[None, :])[0])
        return -v if np.isfinite(v) else np.inf

    for i in order[:n_polish]:
        u0 = domain.to_unit(X[i])
        step = np.where(u0 + 0.05 > 1.0, -0.05, 0.05)
        simplex = np.vstack([u0] + [u0 + step * e for e in np.eye(d)])
        res = minimize(
            neg,
            u0,
            method="Nelder-Mead",
            bounds=[(-1.0, 1.0)] * d,
            options={"maxfev": maxfev, "initial_simplex": simplex, "xatol": 1e-7, "fatol": 1e-14},
        )
        if np.isfinite(res.fun) and -res.fun > best_val:
            best_val = -float(res.fun)
            best_x = domain.from_unit(np.clip(res.x, -1.0, 1.0))
    return Proposal(domain.clip(best_x), float(best_val), excl is not None)
