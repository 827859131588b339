"""Benchmark functions, the log transform, and lazily sampled GP paths."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg as la
from scipy.optimize import minimize
from scipy.stats import qmc

from .gp import Domain
from .kernels import KernelSpec, kernel_matrix


def _vectorized(fn):
    """Let a function of an ``(m, d)`` array also take a single ``(d,)`` point."""

    @functools.wraps(fn)
    def wrapper(x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return float(fn(x[None, :])[0])
        return fn(x)

    return wrapper


@_vectorized
def branin(X):
    x1, x2 = X[:, 0], X[:, 1]
    b = 5.1 / (4 * np.pi**2)
    c = 5 / np.pi
    t = 1 / (8 * np.pi)
    return (x2 - b * x1**2 + c * x1 - 6) ** 2 + 10 * (1 - t) * np.cos(x1) + 10


@_vectorized
def camel3(X):
    x1, x2 = X[:, 0], X[:, 1]
    return 2 * x1**2 - 1.05 * x1**4 + x1**6 / 6 + x1 * x2 + x2**2


@_vectorized
def camel6(X):
    x1, x2 = X[:, 0], X[:, 1]
    return (4 - 2.1 * x1**2 + x1**4 / 3) * x1**2 + x1 * x2 + (-4 + 4 * x2**2) * x2**2


_H_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_H3_A = np.array([[3.0, 10, 30], [0.1, 10, 35], [3.0, 10, 30], [0.1, 10, 35]])
_H3_P = 1e-4 * np.array([[3689, 1170, 2673], [4699, 4387, 7470], [1091, 8732, 5547], [381, 5743, 8828]])
_H6_A = np.array(
    [
        [10, 3, 17, 3.5, 1.7, 8],
        [0.05, 10, 17, 0.1, 8, 14],
        [3, 3.5, 1.7, 10, 17, 8],
        [17, 8, 0.05, 10, 0.1, 14],
    ]
)
_H6_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ]
)


def _hartmann(A, P):
    @_vectorized
    def f(X):
        inner = np.sum(A[None] * (X[:, None, :] - P[None]) ** 2, axis=2)
        return -np.exp(-inner) @ _H_ALPHA

    return f


hartmann3 = _hartmann(_H3_A, _H3_P)
hartmann4 = _hartmann(_H6_A[:, :4], _H6_P[:, :4])
hartmann6 = _hartmann(_H6_A, _H6_P)

_DEFINITIONS = {
    "branin": (branin, [-5.0, 0.0], [10.0, 15.0]),
    "camel3": (camel3, [-5.0, -5.0], [5.0, 5.0]),
    "camel6": (camel6, [-3.0, -2.0], [3.0, 2.0]),
    "hartmann3": (hartmann3, [0.0] * 3, [1.0] * 3),
    "hartmann4": (hartmann4, [0.0] * 4, [1.0] * 4),
    "hartmann6": (hartmann6, [0.0] * 6, [1.0] * 6),
}
BENCHMARKS = tuple(_DEFINITIONS)


@dataclass
class Benchmark:
    name: str
    dimension: int
    domain: Domain
    evaluate: Callable
    known_minimum: float | None = None
    known_minimizers: list = field(default_factory=list)
    log_transformed: bool = False

    def __call__(self, x):
        return self.evaluate(x)


def global_minimum(f, domain: Domain, n_scan: int = 2**14, n_polish: int = 20, seed: int = 0):
    """Quasi-random scan followed by bounded polish of the best scan points.

    Returns the lowest value found and the distinct polished points whose
    values are within ``1e-6`` of it.
    """
    m = int(np.ceil(np.log2(max(n_scan, 2))))
    X = domain.lower + qmc.Sobol(domain.dim, seed=seed).random_base2(m) * domain.width
    vals = f(X)
    bounds = list(zip(domain.lower, domain.upper))
    found = []
    for i in np.argsort(vals)[:n_polish]:
        res = minimize(
            f, X[i], method="L-BFGS-B", bounds=bounds, options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 1000}
        )
        res = minimize(
            f, res.x, method="Nelder-Mead", bounds=bounds, options={"xatol": 1e-10, "fatol": 1e-15, "maxfev": 4000}
        )
        found.append((float(min(res.fun, f(res.x))), domain.clip(res.x)))
    best = min(min(v for v, _ in found), float(vals.min()))
    minimizers = []
    for v, x in sorted(found, key=lambda t: t[0]):
        if v - best <= 1e-6 and all(np.linalg.norm(x - m) > 1e-3 * np.linalg.norm(domain.width) for m in minimizers):
            minimizers.append(x)
    return best, minimizers


@functools.lru_cache(maxsize=None)
def _oracle(name):
    f, lo, hi = _DEFINITIONS[name]
    return global_minimum(f, Domain(np.array(lo), np.array(hi)))


def make_benchmark(name: str) -> Benchmark:
    """Standard benchmark with its minimum located numerically (cached per process)."""
    key = name.lower().replace("-", "").replace("_", "")
    if key not in _DEFINITIONS:
        raise ValueError(f"unknown benchmark {name!r}; supported: {', '.join(BENCHMARKS)}")
    f, lo, hi = _DEFINITIONS[key]
    y_star, minimizers = _oracle(key)
    domain = Domain(np.array(lo), np.array(hi))
    return Benchmark(key, domain.dim, domain, f, y_star, [m.copy() for m in minimizers])


def log_transform(b: Benchmark) -> Benchmark:
    """``y' = log(y - y* + 1)``, with transformed minimum 0 at the same points."""
    if b.known_minimum is None:
        raise ValueError(f"benchmark {b.name!r} has no known minimum to transform with")
    f, y_star = b.evaluate, b.known_minimum

    def evaluate(x):
        return np.log1p(np.asarray(f(x)) - y_star) if np.ndim(x) > 1 else float(np.log1p(f(x) - y_star))

    return replace(b, evaluate=evaluate, known_minimum=0.0, log_transformed=True)


class GpDrawObjective:
    """A zero-mean GP sample path, extended point by point on demand.

    Each new point is drawn from the path's conditional distribution given all
    points already stored, and the incremental Cholesky factor is extended.
    When the conditional variance falls below ``variance_floor`` times the
    prior variance, the conditional mean is returned and cached without
    extending the factor. Stored points therefore never crowd closer than
    about ``sqrt(variance_floor)`` lengthscales, which keeps the factor well
    conditioned; between them the path is the smooth conditional mean, so
    finite differences at small steps are not swamped by round-off.

    Values depend on query order, but for a fixed seed and query sequence they
    are reproducible, and repeated queries return the cached value.
    """

    def __init__(self, kernel: KernelSpec, domain: Domain, seed: int = 0, variance_floor: float = 1e-6):
        if kernel.dim != domain.dim:
            raise ValueError("kernel and domain dimensions differ")
        self.kernel = kernel
        self.domain = domain
        self.seed = seed
        self.variance_floor = variance_floor
        self._rng = np.random.default_rng(seed)
        self._X = np.empty((0, domain.dim))
        self._L = np.empty((0, 0))
        self._w = np.empty(0)
        self._cache = {}

    @property
    def interpolation_grid(self):
        """Every queried point with its value."""
        pts = np.array([np.frombuffer(k) for k in self._cache]).reshape(-1, self.domain.dim)
        return pts, np.fromiter(self._cache.values(), float, len(self._cache))

    def _value(self, x):
        key = x.tobytes()
        if key in self._cache:
            return self._cache[key]
        prior = self.kernel.variance
        if len(self._X):
            k = kernel_matrix(self.kernel, self._X, x[None, :])[:, 0]
            a = la.solve_triangular(self._L, k, lower=True, check_finite=False)
            mean = float(a @ self._w)
            var = prior - float(a @ a)
        else:
            a = np.empty(0)
            mean, var = 0.0, prior
        if var > self.variance_floor * prior:
            z = self._rng.standard_normal()
            sd = np.sqrt(var)
            n = len(self._X)
            L = np.zeros((n + 1, n + 1))
            L[:n, :n] = self._L
            L[n, :n] = a
            L[n, n] = sd
            self._L = L
            self._X = np.vstack([self._X, x])
            self._w = np.append(self._w, z)
            value = mean + sd * z
        else:
            value = mean
        self._cache[key] = value
        return value

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self._value(x.copy())
        return np.array([self._value(row.copy()) for row in x])

    def oracle_minimum(self, n_scan: int | None = None, n_polish: int = 5, seed: int = 0):
        """Lowest value of the path: scan, queried points, and polished scan minima.

        The default scan spacing is about a quarter lengthscale per axis, rounded
        up to a power of two points.
        """
        d = self.domain.dim
        if n_scan is None:
            per_axis = np.ceil(4 * self.domain.width / np.asarray(self.kernel.lengthscales)) + 1
            n_scan = int(min(np.prod(per_axis), 4096))
        m = int(np.ceil(np.log2(max(n_scan, 2))))
        X = self.domain.lower + qmc.Sobol(d, seed=seed).random_base2(m) * self.domain.width
        vals = self(X)
        starts = list(X[np.argsort(vals)[:n_polish]])
        pts, pvals = self.interpolation_grid
        starts += list(pts[np.argsort(pvals)[:n_polish]])
        bounds = list(zip(self.domain.lower, self.domain.upper))
        for x0 in starts:
            minimize(
                self,
                x0,
                method="Nelder-Mead",
                bounds=bounds,
                options={"xatol": 1e-9, "fatol": 1e-14, "maxfev": 400 * d},
            )
        pts, pvals = self.interpolation_grid
        i = int(np.argmin(pvals))
        return float(pvals[i]), pts[i].copy()


def draw_gp_objective(kernel: KernelSpec, domain: Domain, seed: int = 0) -> GpDrawObjective:
    return GpDrawObjective(kernel, domain, seed)
