"""Stationary kernels and their mixed derivatives up to order (2, 2).

Both kernels are radial in the lengthscale-scaled lag: with
``tau = a - b`` and ``u = sum_k (tau_k / l_k)**2`` the kernel is
``s**2 * f(u)``. Every partial derivative in ``tau`` of order at most four is
a sum over partitions of the differentiated coordinates into singletons and
same-coordinate pairs (``u`` is quadratic, so larger blocks vanish):

    d^m g / d tau_S = s**2 * sum_P f^{(|P|)}(u) * prod_{k in singles} 2 tau_k / l_k**2
                                                 * prod_{pairs} 2 / l_k**2

Derivatives in ``b`` pick up a factor ``-1`` each. Singleton factors are
written as ``2 r n_k / l_k`` with the unit direction ``n = tau / (l r)`` so
that the Matern 5/2 third and fourth radial derivatives, which diverge at
``r = 0``, only ever appear multiplied by the powers of ``r`` that cancel the
divergence.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

SQRT5 = np.sqrt(5.0)


class KernelFamily(str, enum.Enum):
    MATERN52 = "matern52"
    SQUARED_EXPONENTIAL = "se"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family, output scale and per-dimension lengthscales."""

    family: KernelFamily
    output_scale: float
    lengthscales: tuple
    diagnostics: tuple = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "output_scale", float(self.output_scale))
        vals = (self.output_scale,) + ls
        if not ls or not all(np.isfinite(v) and v > 0 for v in vals):
            raise ValueError(f"kernel scales must be positive and finite: {vals}")

    @property
    def dim(self):
        return len(self.lengthscales)

    @property
    def variance(self):
        return self.output_scale ** 2


def _as_index(ia, d):
    if ia is None or (np.isscalar(ia) and ia == 0):
        return (0,) * d
    ia = tuple(int(v) for v in ia)
    if len(ia) != d:
        raise ValueError(f"multi-index {ia} does not match dimension {d}")
    if any(v < 0 for v in ia) or sum(ia) > 2:
        raise ValueError(f"multi-index {ia} must be non-negative with total order <= 2")
    return ia


@lru_cache(maxsize=None)
def _partition_terms(counts):
    """Partition terms for the combined multi-index ``counts`` on the lag.

    Returns a tuple of ``(coefficient, m, singles, pairs)`` where ``m`` is the
    number of blocks and ``singles``/``pairs`` list coordinates.
    """
    labels = tuple(k for k, c in enumerate(counts) for _ in range(c))
    acc = {}

    def recurse(rest, singles, pairs):
        if not rest:
            key = (len(singles) + len(pairs), tuple(sorted(singles)), tuple(sorted(pairs)))
            acc[key] = acc.get(key, 0) + 1
            return
        first, others = rest[0], rest[1:]
        recurse(others, singles + (first,), pairs)
        for j, lab in enumerate(others):
            if lab == first:
                recurse(others[:j] + others[j + 1:], singles, pairs + (first,))

    recurse(labels, (), ())
    return tuple((c,) + key for key, c in sorted(acc.items()))


def _radial(family, r, m, s):
    """``f^{(m)}(u) * r**s`` as a function of the scaled distance ``r``."""
    if family is KernelFamily.SQUARED_EXPONENTIAL:
        return (-0.5) ** m * np.exp(-0.5 * r * r) * r ** s
    q = SQRT5 * r
    e = np.exp(-q)
    if m == 0:
        return (1.0 + q + q * q / 3.0) * e * r ** s
    if m == 1:
        return -(5.0 / 6.0) * (1.0 + q) * e * r ** s
    if m == 2:
        return (25.0 / 12.0) * e * r ** s
    if m == 3:
        # f''' = -(125/24) e^{-q} / q, only ever needed with s >= 2
        return -(125.0 / 24.0) / SQRT5 * e * r ** (s - 1)
    if m == 4:
        # f'''' = (625/48) e^{-q} (1 + q) / q^3, only ever needed with s == 4
        return (625.0 / 48.0) / (5.0 * SQRT5) * e * (1.0 + q) * r ** (s - 3)
    raise ValueError(f"radial derivative order {m} not supported")


def _scaled_lag(spec, A, B):
    ls = np.asarray(spec.lengthscales)
    t = (A[:, None, :] - B[None, :, :]) / ls
    r = np.sqrt(np.sum(t * t, axis=-1))
    with np.errstate(invalid="ignore", divide="ignore"):
        n = np.where(r[..., None] > 0.0, t / r[..., None], 0.0)
    return r, n


def kernel_block(spec, A, B, ia=None, ib=None):
    """Matrix of ``d^{ia}_a d^{ib}_b k(a, b)`` over point sets ``A`` and ``B``.

    Parameters
    ----------
    spec : KernelSpec
    A : (na, d) array_like
    B : (nb, d) array_like
    ia, ib : sequence of int or None
        Multi-indices of the derivative taken with respect to the first and
        second argument; ``None`` means no derivative.

    Returns
    -------
    (na, nb) ndarray
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    d = spec.dim
    ia, ib = _as_index(ia, d), _as_index(ib, d)
    r, n = _scaled_lag(spec, A, B)
    return _block_from_lag(spec, r, n, ia, ib)


def _block_from_lag(spec, r, n, ia, ib):
    ls = spec.lengthscales
    counts = tuple(x + y for x, y in zip(ia, ib))
    sign = -1.0 if sum(ib) % 2 else 1.0
    out = np.zeros(r.shape)
    radial = {}
    for coef, m, singles, pairs in _partition_terms(counts):
        s = len(singles)
        key = (m, s)
        if key not in radial:
            radial[key] = _radial(spec.family, r, m, s)
        term = radial[key]
        factor = float(coef)
        for k in pairs:
            factor *= 2.0 / ls[k] ** 2
        if singles:
            prod = n[..., singles[0]] * (2.0 / ls[singles[0]])
            for k in singles[1:]:
                prod = prod * (n[..., k] * (2.0 / ls[k]))
            term = term * prod
        out = out + factor * term
    return sign * spec.variance * out


def kernel_derivative(spec, a, b, ia=None, ib=None):
    """Scalar ``d^{ia}_a d^{ib}_b k(a, b)``."""
    return float(kernel_block(spec, np.atleast_1d(a)[None, :], np.atleast_1d(b)[None, :], ia, ib)[0, 0])


def kernel_matrix(spec, A, B=None):
    """Plain covariance matrix ``k(A, B)`` (no derivatives)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    ls = np.asarray(spec.lengthscales)
    t = (A[:, None, :] - B[None, :, :]) / ls
    r = np.sqrt(np.sum(t * t, axis=-1))
    return spec.variance * _radial(spec.family, r, 0, 0)


def kernel_lengthscale_grads(spec, A):
    """Kernel matrix on ``A`` and its derivatives w.r.t. each log-lengthscale."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    ls = np.asarray(spec.lengthscales)
    t = (A[:, None, :] - A[None, :, :]) / ls
    t2 = t * t
    r = np.sqrt(np.sum(t2, axis=-1))
    K = spec.variance * _radial(spec.family, r, 0, 0)
    df = spec.variance * _radial(spec.family, r, 1, 0)
    # du/dlog l_k = -2 (tau_k / l_k)^2
    grads = [-2.0 * df * t2[..., k] for k in range(spec.dim)]
    return K, grads
