"""Monte-Carlo estimate of the global regret outside a convex region.

The region's minimum ``y_i`` is fitted by a normal distribution from joint
posterior draws over the support points inside the region; the outside
minimum ``y_o`` is kept as raw per-draw samples. The estimate is the average
over draws of the closed-form ``E[max(y_i - y_o, 0)]`` for normal ``y_i``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .convexity import ConvexRegion
from .gp import Domain, GpModel, draw_posterior
from .sampling import rejection_sample, slice_sample

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-12
LCB_WEIGHT = 2.0


class Origin(str, enum.Enum):
    """How a support point was drawn; ``SupportSet.origin`` stores the values."""

    MINIMIZER = "MinimizerSampled"
    VARIANCE = "VarianceSampled"


@dataclass
class SupportSet:
    points: np.ndarray
    inner_mask: np.ndarray
    origin: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def inner(self):
        return self.points[self.inner_mask]

    @property
    def outer(self):
        return self.points[~self.inner_mask]


@dataclass
class RegretEstimate:
    value: float
    mu_i: float
    sigma_i: float
    n_draws: int
    outer_samples: np.ndarray
    support: SupportSet | None = None
    draws: np.ndarray | None = None


def _normal_pdf(z):
    return np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)


def expected_shortfall(mu, sigma, y_o):
    """``E[max(Z - y_o, 0)]`` for ``Z ~ N(mu, sigma**2)``, elementwise in ``y_o``."""
    sigma = max(float(sigma), SIGMA_FLOOR)
    gap = mu - np.asarray(y_o, dtype=float)
    z = gap / sigma
    return np.maximum(gap * ndtr(z) + sigma * _normal_pdf(z), 0.0)


def regret_from_samples(mu_i, sigma_i, y_o):
    """Average of :func:`expected_shortfall` over the outer-minimum samples."""
    y_o = np.asarray(y_o, dtype=float)
    if y_o.size == 0:
        return 0.0
    return float(np.mean(expected_shortfall(mu_i, sigma_i, y_o)))


def lcb_log_density(model: GpModel, weight=LCB_WEIGHT):
    """Log of ``exp(-LCB)`` in standardized output units."""

    def logp(x):
        mean, var = model.predict(x[None, :])
        mu = (mean[0] - model.y_offset) / model.y_scale
        sd = np.sqrt(var[0]) / model.y_scale
        return -(mu - weight * sd)

    return logp


def _covers_domain(region, domain):
    return region is not None and region.radius >= domain.farthest_corner_distance(region.center)


def build_support(
    model: GpModel,
    region: ConvexRegion | None,
    domain: Domain | None = None,
    n_support: int = 100,
    seed: int = 0,
) -> SupportSet:
    """Support points: half slice-sampled from ``exp(-LCB)``, half variance-weighted.

    The minimizer chain starts at the region center (or the best observation
    when there is no region), and that start is kept as the first sample. The
    variance-weighted half is drawn outside the region.
    """
    domain = model.domain if domain is None else domain
    if n_support < 4 or n_support % 2:
        raise ValueError("n_support must be even and at least 4")
    rng = np.random.default_rng(seed)
    half = n_support // 2
    if region is not None:
        start = np.asarray(region.center, dtype=float)
    elif model.n:
        start = model.X[np.argmin(model.y)]
    else:
        start = domain.center
    chain = slice_sample(lcb_log_density(model), start, domain.lower, domain.upper, half - 1, rng)
    minimizer_pts = np.vstack([start[None, :], chain])

    has_region = region is not None and region.radius > 0
    reject = region.contains if has_region and not _covers_domain(region, domain) else None
    scale = model.y_scale ** 2

    def variance(X):
        return model.predict(X)[1] / scale

    variance_pts, fell_back = rejection_sample(
        variance, domain.lower, domain.upper, n_support - half, rng, reject=reject
    )
    if fell_back:
        log.warning("variance rejection sampling hit the proposal cap; filled uniformly")
    points = np.vstack([minimizer_pts, variance_pts])
    inner = region.contains(points) if has_region else np.zeros(len(points), dtype=bool)
    origin = np.array([Origin.MINIMIZER.value] * half + [Origin.VARIANCE.value] * (n_support - half))
    return SupportSet(points, inner, origin, {"rejection_fallback": fell_back})


def inner_stats(support: SupportSet, draws):
    """Maximum-likelihood normal fit to the per-draw minimum over inner points."""
    if not np.any(support.inner_mask):
        raise ValueError("undefined inner minimum: no support point inside the region")
    y_i = np.asarray(draws)[:, support.inner_mask].min(axis=1)
    mu = float(np.mean(y_i))
    sigma = float(np.sqrt(np.mean((y_i - mu) ** 2)))
    return mu, max(sigma, SIGMA_FLOOR)


def estimate_global_regret(
    model: GpModel,
    region: ConvexRegion,
    domain: Domain | None = None,
    n_draws: int = 400,
    n_support: int = 100,
    seed: int = 0,
) -> RegretEstimate:
    """Expected positive gap between the region's minimum and the outside minimum."""
    domain = model.domain if domain is None else domain
    if n_draws < 100:
        raise ValueError("n_draws must be at least 100")
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFF).spawn(2)
    support = build_support(model, region, domain, n_support, int(ss[0].generate_state(1)[0]))
    draws = draw_posterior(model, support.points, n_draws, int(ss[1].generate_state(1)[0]))
    mu_i, sigma_i = inner_stats(support, draws)
    outer = ~support.inner_mask
    y_o = draws[:, outer].min(axis=1) if np.any(outer) else np.zeros(0)
    value = regret_from_samples(mu_i, sigma_i, y_o)
    return RegretEstimate(value, mu_i, sigma_i, n_draws, y_o, support, draws)
