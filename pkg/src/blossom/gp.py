"""Noiseless Gaussian-process regression with joint derivative inference.

Inputs are mapped to ``[-1, 1]^d`` and outputs standardized before any
kernel algebra; every public quantity (means, covariances, derivatives,
kernel scales) is reported in the caller's original units.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as la
from scipy.optimize import minimize

from ._linalg import JITTER_LADDER, jittered_cholesky, sample_gaussian
from .kernels import (
    KernelFamily,
    KernelSpec,
    kernel_block,
    kernel_lengthscale_grads,
    kernel_matrix,
)

log = logging.getLogger(__name__)

# log-normal hyperprior widths (log space) and search box, in normalized units
PRIOR_LOG_SD = 1.0
LOG_LENGTHSCALE_BOUNDS = (np.log(1e-2), np.log(1e2))
LOG_OUTPUT_SCALE_BOUNDS = (np.log(1e-2), np.log(1e2))
FIT_LADDER = tuple(j for j in JITTER_LADDER if j >= 1e-10)


@dataclass(frozen=True, eq=False)
class Domain:
    """Axis-aligned box ``lower <= x <= upper``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size < 1:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if not np.all(lo < hi):
            raise ValueError(f"need lower < upper in every dimension: {lo} vs {hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, lo, hi, dim):
        return cls(np.full(dim, float(lo)), np.full(dim, float(hi)))

    @property
    def dim(self):
        return self.lower.size

    @property
    def width(self):
        return self.upper - self.lower

    @property
    def center(self):
        return 0.5 * (self.upper + self.lower)

    @property
    def half_width(self):
        return 0.5 * self.width

    @property
    def scale(self):
        """Geometric-mean half width; converts normalized lengths to original ones."""
        return float(np.exp(np.mean(np.log(self.half_width))))

    def to_unit(self, x):
        return (np.asarray(x, dtype=float) - self.center) / self.half_width

    def from_unit(self, u):
        return self.center + np.asarray(u, dtype=float) * self.half_width

    def clip(self, x):
        return np.clip(x, self.lower, self.upper)

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def interior_dims(self, x):
        x = np.asarray(x, dtype=float)
        return tuple(int(k) for k in np.flatnonzero((x > self.lower) & (x < self.upper)))

    def farthest_corner_distance(self, x):
        x = np.asarray(x, dtype=float)
        gap = np.maximum(np.abs(x - self.lower), np.abs(self.upper - x))
        return float(np.linalg.norm(gap))

    def __repr__(self):
        return f"Domain(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


@dataclass(frozen=True)
class Observation:
    x: np.ndarray
    y: float


@dataclass(frozen=True)
class DerivativeSpec:
    point: np.ndarray
    multi_index: tuple

    @classmethod
    def value(cls, point):
        point = np.asarray(point, dtype=float)
        return cls(point, (0,) * point.size)


@dataclass
class GaussianBelief:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def sd(self):
        return np.sqrt(np.maximum(np.diag(self.covariance), 0.0))


@dataclass
class HessianBelief:
    """Gaussian belief over the upper triangle of the Hessian on ``active_dims``."""

    mean: np.ndarray
    covariance: np.ndarray
    active_dims: tuple
    entries: tuple

    @property
    def triangle_mean(self):
        return np.array([self.mean[i, j] for i, j in self.entries])

    def sample(self, n, rng):
        """``n`` symmetric Hessian samples, shape ``(n, d', d')``."""
        tri = sample_gaussian(self.triangle_mean, self.covariance, n, rng)
        return triangle_to_matrix(tri, self.entries, len(self.active_dims))


def triangle_to_matrix(tri, entries, dim):
    tri = np.atleast_2d(tri)
    H = np.zeros((tri.shape[0], dim, dim))
    for c, (i, j) in enumerate(entries):
        H[:, i, j] = tri[:, c]
        H[:, j, i] = tri[:, c]
    return H


class GpModel:
    """Trained GP surrogate; immutable once constructed.

    Parameters
    ----------
    X : (n, d) array_like
        Observed inputs in original units.
    y : (n,) array_like
        Noiseless observed values.
    domain : Domain
    kernel : KernelSpec
        Hyperparameters in original units.
    """

    def __init__(self, X, y, domain: Domain, kernel: KernelSpec):
        X = np.asarray(X, dtype=float).reshape(-1, domain.dim)
        y = np.asarray(y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y lengths differ")
        self.domain = domain
        self.kernel = kernel
        self.X = X
        self.y = y
        self.y_offset, self.y_scale = _output_normalization(y)
        self.unit_kernel = _to_unit_kernel(kernel, domain, self.y_scale)
        self._Xu = domain.to_unit(X)
        self._yu = (y - self.y_offset) / self.y_scale
        K = kernel_matrix(self.unit_kernel, self._Xu) if len(y) else np.zeros((0, 0))
        self.factor, self.jitter = jittered_cholesky(K)
        self._alpha = la.cho_solve((self.factor, True), self._yu) if len(y) else np.zeros(0)

    @property
    def n(self):
        return self.y.size

    @property
    def data(self):
        return [Observation(x.copy(), float(v)) for x, v in zip(self.X, self.y)]

    def _solve_lower(self, B):
        return la.solve_triangular(self.factor, B, lower=True, check_finite=False)

    def predict(self, X, full_cov=False):
        """Posterior mean and variance (or full covariance) of function values."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Xu = self.domain.to_unit(X)
        var0 = self.unit_kernel.variance
        if self.n == 0:
            mean = np.zeros(len(Xu))
            cov = kernel_matrix(self.unit_kernel, Xu) if full_cov else np.full(len(Xu), var0)
        else:
            Ks = kernel_matrix(self.unit_kernel, Xu, self._Xu)
            mean = Ks @ self._alpha
            V = self._solve_lower(Ks.T)
            if full_cov:
                cov = kernel_matrix(self.unit_kernel, Xu) - V.T @ V
                cov = 0.5 * (cov + cov.T)
            else:
                cov = np.maximum(var0 - np.sum(V * V, axis=0), 0.0)
        mean = self.y_offset + self.y_scale * mean
        return mean, cov * self.y_scale ** 2

    def predict_mean_grad(self, X):
        """Posterior mean and its gradient in original units, shapes (n,), (n, d)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Xu = self.domain.to_unit(X)
        d = self.domain.dim
        if self.n == 0:
            return np.full(len(X), self.y_offset), np.zeros((len(X), d))
        mean = kernel_matrix(self.unit_kernel, Xu, self._Xu) @ self._alpha
        grad = np.empty((len(X), d))
        for k in range(d):
            e = [0] * d
            e[k] = 1
            grad[:, k] = kernel_block(self.unit_kernel, Xu, self._Xu, e, None) @ self._alpha
        return self.y_offset + self.y_scale * mean, grad * self.y_scale / self.domain.half_width

    def _query_scale(self, multi_index):
        return self.y_scale / np.prod(self.domain.half_width ** np.asarray(multi_index))

    def posterior_joint(self, queries: Sequence[DerivativeSpec]) -> GaussianBelief:
        if not queries:
            raise ValueError("posterior_joint needs at least one query")
        d = self.domain.dim
        pts = np.array([self.domain.to_unit(q.point) for q in queries]).reshape(-1, d)
        idx = [tuple(int(v) for v in q.multi_index) for q in queries]
        groups = {}
        for i, ia in enumerate(idx):
            groups.setdefault(ia, []).append(i)
        m = len(queries)
        Kqx = np.zeros((m, self.n))
        Kqq = np.zeros((m, m))
        for ia, rows in groups.items():
            if self.n:
                Kqx[rows] = kernel_block(self.unit_kernel, pts[rows], self._Xu, ia, None)
            for ib, cols in groups.items():
                Kqq[np.ix_(rows, cols)] = kernel_block(self.unit_kernel, pts[rows], pts[cols], ia, ib)
        if self.n:
            mean = Kqx @ self._alpha
            V = self._solve_lower(Kqx.T)
            cov = Kqq - V.T @ V
        else:
            mean, cov = np.zeros(m), Kqq
        cov = 0.5 * (cov + cov.T)
        s = np.array([self._query_scale(ia) for ia in idx])
        mean = s * mean + np.array([self.y_offset if sum(ia) == 0 else 0.0 for ia in idx])
        return GaussianBelief(mean, cov * np.outer(s, s))


def _output_normalization(y):
    if y.size >= 2:
        sd = float(np.std(y))
        return float(np.mean(y)), (sd if sd > 0 else 1.0)
    return 0.0, 1.0


def _to_unit_kernel(kernel, domain, y_scale):
    return KernelSpec(
        kernel.family,
        kernel.output_scale / y_scale,
        tuple(np.asarray(kernel.lengthscales) / domain.half_width),
    )


def _from_unit_params(family, log_params, domain, y_scale, diagnostics=()):
    return KernelSpec(
        family,
        float(np.exp(log_params[0])) * y_scale,
        tuple(np.exp(log_params[1:]) * domain.half_width),
        diagnostics=diagnostics,
    )


def _prior_mean(d):
    # output scale median = observed sd (1 after standardizing); lengthscale
    # median = a quarter of the domain width (0.5 on [-1, 1])
    return np.concatenate([[0.0], np.full(d, np.log(0.5))])


def _neg_log_posterior(theta, family, Xu, yu, prior_mu):
    d = Xu.shape[1]
    spec = KernelSpec(family, np.exp(theta[0]), tuple(np.exp(theta[1:])))
    K, dK_dl = kernel_lengthscale_grads(spec, Xu)
    try:
        L, _ = jittered_cholesky(K, ladder=FIT_LADDER)
    except la.LinAlgError:
        return 1e25, np.zeros_like(theta)
    alpha = la.cho_solve((L, True), yu)
    n = len(yu)
    nll = 0.5 * yu @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * n * np.log(2 * np.pi)
    W = la.cho_solve((L, True), np.eye(n)) - np.outer(alpha, alpha)
    grad = np.empty(d + 1)
    grad[0] = 0.5 * np.sum(W * (2.0 * K))
    for k in range(d):
        grad[k + 1] = 0.5 * np.sum(W * dK_dl[k])
    z = (theta - prior_mu) / PRIOR_LOG_SD
    nll += 0.5 * z @ z
    grad += z / PRIOR_LOG_SD
    return nll, grad


def fit_hyperparameters(
    X,
    y,
    domain: Domain,
    seed: int = 0,
    family=KernelFamily.MATERN52,
    n_restarts: int = 4,
    init: KernelSpec | None = None,
) -> KernelSpec:
    """MAP-II kernel hyperparameters under log-normal hyperpriors.

    Multi-start L-BFGS-B on the log marginal likelihood plus log prior in
    normalized units. The first start is ``init`` (if given, e.g. the previous
    iteration's fit) or the prior mode; the rest are prior draws.

    Degenerate data (all ``y`` equal) returns the prior mode with
    ``"degenerate-data"`` in ``diagnostics``.
    """
    family = KernelFamily(family)
    X = np.asarray(X, dtype=float).reshape(-1, domain.dim)
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(y) < 2:
        raise ValueError("fit_hyperparameters needs at least two observations")
    if len(np.unique(X, axis=0)) < len(X):
        raise ValueError("observation inputs must be distinct")
    d = domain.dim
    prior_mu = _prior_mean(d)
    y_offset, y_scale = _output_normalization(y)
    if np.ptp(y) == 0.0:
        log.info("all observations equal; returning prior-mode hyperparameters")
        return _from_unit_params(family, prior_mu, domain, y_scale, ("degenerate-data",))
    Xu = domain.to_unit(X)
    yu = (y - y_offset) / y_scale
    bounds = [LOG_OUTPUT_SCALE_BOUNDS] + [LOG_LENGTHSCALE_BOUNDS] * d
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    rng = np.random.default_rng(seed)
    if init is not None:
        u = _to_unit_kernel(init, domain, y_scale)
        first = np.log(np.concatenate([[u.output_scale], u.lengthscales]))
    else:
        first = prior_mu
    starts = [np.clip(first, lo, hi)]
    for _ in range(max(n_restarts, 1) - 1):
        starts.append(np.clip(prior_mu + PRIOR_LOG_SD * rng.standard_normal(d + 1), lo, hi))

    best = None
    for x0 in starts:
        res = minimize(
            _neg_log_posterior,
            x0,
            args=(family, Xu, yu, prior_mu),
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": 200},
        )
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        return _from_unit_params(family, prior_mu, domain, y_scale, ("fit-failed",))
    return _from_unit_params(family, best.x, domain, y_scale)


def fit_model(X, y, domain, seed=0, family=KernelFamily.MATERN52, n_restarts=4, init=None):
    """Fit hyperparameters and return the trained :class:`GpModel`."""
    kernel = fit_hyperparameters(X, y, domain, seed, family, n_restarts, init)
    return GpModel(X, y, domain, kernel)


def posterior_joint(model: GpModel, queries: Sequence[DerivativeSpec]) -> GaussianBelief:
    """Exact joint posterior over function values and derivatives."""
    return model.posterior_joint(queries)


def infer_hessian(model: GpModel, x, domain: Domain | None = None) -> HessianBelief:
    """Joint belief over the Hessian at ``x`` restricted to interior dimensions."""
    domain = model.domain if domain is None else domain
    x = np.asarray(x, dtype=float)
    active = domain.interior_dims(x)
    if not active:
        raise ValueError("no interior dimensions")
    d = domain.dim
    entries, queries = [], []
    for a, i in enumerate(active):
        for b in range(a, len(active)):
            j = active[b]
            mi = [0] * d
            mi[i] += 1
            mi[j] += 1
            entries.append((a, b))
            queries.append(DerivativeSpec(x, tuple(mi)))
    belief = model.posterior_joint(queries)
    mean = triangle_to_matrix(belief.mean, entries, len(active))[0]
    return HessianBelief(mean, belief.covariance, active, tuple(entries))


def draw_posterior(model: GpModel, points, n_draws: int, seed: int) -> np.ndarray:
    """Joint posterior sample paths of the latent function, ``(n_draws, n_points)``."""
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    mean, cov = model.predict(np.atleast_2d(points), full_cov=True)
    return sample_gaussian(mean, cov, n_draws, np.random.default_rng(seed))
