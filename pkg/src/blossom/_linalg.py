"""Jittered Cholesky factorization and Gaussian sampling helpers."""

from __future__ import annotations

import numpy as np
import scipy.linalg as la

# 0, then 1e-20 rising by decades up to the 1e-2 ceiling.
JITTER_LADDER = (0.0,) + tuple(10.0 ** k for k in range(-20, -1))


class JitterExhaustedError(la.LinAlgError):
    """Cholesky failed on every rung of the jitter ladder."""


def jittered_cholesky(A, ladder=JITTER_LADDER, relative=False):
    """Lower Cholesky factor of ``A + jitter * I`` with the smallest working jitter.

    Parameters
    ----------
    A : (n, n) ndarray
        Symmetric matrix.
    ladder : sequence of float
        Jitter values tried in order.
    relative : bool
        If true, each rung is multiplied by the largest diagonal entry of ``A``.

    Returns
    -------
    L : (n, n) ndarray
    jitter : float
        The jitter actually added to the diagonal.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    scale = float(np.max(np.diag(A))) if relative else 1.0
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    for rung in ladder:
        jitter = rung * scale
        try:
            L = la.cholesky(A + jitter * np.eye(n), lower=True, check_finite=False)
        except la.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return L, jitter
    diag = np.diag(A)
    try:
        eig = np.linalg.eigvalsh(0.5 * (A + A.T))
        cond = f"min eig {eig[0]:.3e}, max eig {eig[-1]:.3e}"
    except np.linalg.LinAlgError:
        cond = "eigendecomposition failed"
    raise JitterExhaustedError(
        f"Cholesky failed up to jitter {ladder[-1] * scale:.1e} "
        f"(n={n}, diag range [{diag.min():.3e}, {diag.max():.3e}], {cond})"
    )


def sample_gaussian(mean, cov, n, rng):
    """Draw ``n`` rows from N(mean, cov), factorizing cov with the jitter ladder."""
    mean = np.asarray(mean, dtype=float)
    m = mean.shape[0]
    if m == 0:
        return np.zeros((n, 0))
    if float(np.max(np.diag(cov))) <= 0.0:
        return np.tile(mean, (n, 1))
    L, _ = jittered_cholesky(cov, relative=True)
    z = rng.standard_normal((n, m))
    return mean + z @ L.T
