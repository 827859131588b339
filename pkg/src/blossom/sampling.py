"""Samplers for unnormalized densities on a box."""

from __future__ import annotations

import numpy as np


def slice_sample(log_density, x0, lower, upper, n, rng, burn=5, thin=1, max_shrink=200):
    """Hyperrectangle slice sampling with shrinkage, restricted to a box.

    The initial bracket is the whole box, so no stepping out is needed.

    Parameters
    ----------
    log_density : callable
        Maps a ``(d,)`` point to the log of the unnormalized density.
    x0 : (d,) array_like
        Starting state; must have finite log density.
    lower, upper : (d,) array_like
        Box bounds.
    n : int
        Number of samples returned.
    burn, thin : int
        Discarded initial transitions and transitions per kept sample.

    Returns
    -------
    (n, d) ndarray
    """
    x = np.asarray(x0, dtype=float).copy()
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    lx = log_density(x)
    if not np.isfinite(lx):
        raise ValueError("slice sampler started at a point of zero density")
    out = np.empty((n, x.size))
    kept = 0
    step = 0
    while kept < n:
        level = lx + np.log(rng.uniform())
        lo, hi = lower.copy(), upper.copy()
        for _ in range(max_shrink):
            cand = lo + rng.uniform(size=x.size) * (hi - lo)
            lc = log_density(cand)
            if lc > level:
                x, lx = cand, lc
                break
            below = cand < x
            lo = np.where(below, cand, lo)
            hi = np.where(below, hi, cand)
        step += 1
        if step > burn and (step - burn) % thin == 0:
            out[kept] = x
            kept += 1
    return out


def rejection_sample(density, lower, upper, n, rng, reject=None, max_proposals=100_000, batch=1024):
    """Rejection sampling from an unnormalized density with uniform proposals.

    The envelope is the largest density seen so far, starting from a pilot
    batch, so it is exact whenever the pilot batch hits the density's maximum
    and slightly biased toward low-density regions otherwise.

    Parameters
    ----------
    density : callable
        Maps an ``(m, d)`` array to ``(m,)`` non-negative values.
    reject : callable, optional
        Maps ``(m, d)`` to a boolean mask of proposals that are never accepted.

    Returns
    -------
    samples : (n, d) ndarray
    fell_back : bool
        True if the proposal cap was hit and the remainder was filled with
        uniform (non-rejected where possible) points.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d = lower.size
    accepted = []
    total = 0
    envelope = 0.0
    while len(accepted) < n and total < max_proposals:
        m = min(batch, max_proposals - total)
        prop = lower + rng.uniform(size=(m, d)) * (upper - lower)
        total += m
        keep = np.ones(m, dtype=bool) if reject is None else ~reject(prop)
        prop = prop[keep]
        if not len(prop):
            continue
        dens = np.maximum(np.asarray(density(prop), dtype=float), 0.0)
        envelope = max(envelope, float(dens.max()))
        if envelope <= 0.0:
            continue
        u = rng.uniform(size=len(prop))
        accepted.extend(prop[u * envelope < dens])
    if len(accepted) >= n:
        return np.array(accepted[:n]), False
    fill = []
    tries = 0
    while len(accepted) + len(fill) < n:
        prop = lower + rng.uniform(size=(batch, d)) * (upper - lower)
        tries += 1
        if reject is not None and tries <= 100:
            prop = prop[~reject(prop)]
        fill.extend(prop)
    samples = np.array(list(accepted) + fill[: n - len(accepted)]).reshape(n, d)
    return samples, True
