"""Probabilistic positive-definiteness test and convex-sphere radius search."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from .gp import Domain, GpModel, HessianBelief, infer_hessian

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PdTestConfig:
    """Tolerance ``epsilon``; the test draws ``n = round(1/epsilon - 2)`` Hessians."""

    epsilon: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 0.5)")
        if self.n_samples < 1:
            raise ValueError("epsilon too large: fewer than one Hessian sample")

    @property
    def n_samples(self):
        return int(round(1.0 / self.epsilon - 2.0))


@dataclass
class ConvexRegion:
    center: np.ndarray
    radius: float
    directions_tested: int = 0
    resolution: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def contains(self, X):
        """Boolean mask: Euclidean distance to ``center`` at most ``radius``."""
        X = np.atleast_2d(X)
        return np.linalg.norm(X - self.center, axis=1) <= self.radius


def point_seed(seed, x):
    """Deterministic per-point seed from a global seed and the point's bytes."""
    digest = hashlib.blake2b(np.asarray(x, dtype=float).tobytes(), digest_size=8).digest()
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int.from_bytes(digest, "little")])


def count_positive_definite(samples):
    """Number of matrices in the stack that admit a real Cholesky factor."""
    try:
        np.linalg.cholesky(samples)
        return len(samples)
    except np.linalg.LinAlgError:
        pass
    count = 0
    for h in samples:
        try:
            np.linalg.cholesky(h)
            count += 1
        except np.linalg.LinAlgError:
            pass
    return count


def pd_test_belief(belief: HessianBelief, cfg: PdTestConfig, rng) -> bool:
    n = cfg.n_samples
    count = count_positive_definite(belief.sample(n, rng))
    # posterior mean of the Bernoulli rate under a uniform prior
    p = (count + 1) / (n + 2)
    return p >= 1.0 - cfg.epsilon - 1e-12


def pd_test_point(model: GpModel, x, domain: Domain | None = None, cfg=PdTestConfig(), seed=0) -> bool:
    """Whether the Hessian at ``x`` is positive definite with probability ``1 - epsilon``.

    Hessian samples are seeded from ``(seed, x)`` so repeated tests of the
    same point agree.
    """
    domain = model.domain if domain is None else domain
    try:
        belief = infer_hessian(model, x, domain)
    except ValueError:
        log.info("PD test at %s: no interior dimensions", np.asarray(x).tolist())
        return False
    return pd_test_belief(belief, cfg, np.random.default_rng(point_seed(seed, x)))


def random_unit_vector(rng, dim, active=None):
    """Uniform direction from a normalized standard-normal draw, zero off ``active``."""
    active = range(dim) if active is None else active
    v = np.zeros(dim)
    while True:
        v[list(active)] = rng.standard_normal(len(active))
        norm = np.linalg.norm(v)
        if norm > 0:
            return v / norm


def _exit_distance(center, u, domain):
    """Distance along ``u`` from ``center`` to the box boundary."""
    with np.errstate(divide="ignore", invalid="ignore"):
        to_hi = np.where(u > 0, (domain.upper - center) / u, np.inf)
        to_lo = np.where(u < 0, (domain.lower - center) / u, np.inf)
    return float(np.min(np.minimum(to_hi, to_lo)))


def pd_sphere_radius(
    model: GpModel,
    center,
    domain: Domain | None = None,
    n_u: int = 20,
    h_r: float = 1e-3,
    cfg=PdTestConfig(),
    seed: int = 0,
) -> ConvexRegion:
    """Radius of the sphere about ``center`` within which the PD test passes.

    ``h_r`` is the binary-search resolution in normalized units (a fraction of
    the geometric-mean half width); the returned radius is in original units.
    The first direction searches below the distance to the farthest domain
    corner; each later direction tests the current estimate and re-runs the
    search below it only on failure. Rays that leave the domain before the
    current radius are tested only up to the boundary.
    """
    domain = model.domain if domain is None else domain
    center = np.asarray(center, dtype=float)
    res = h_r * domain.scale

    def test(x):
        return pd_test_point(model, domain.clip(x), domain, cfg, seed)

    region = ConvexRegion(center.copy(), 0.0, 0, res, {"history": []})
    if not test(center):
        return region
    active = domain.interior_dims(center)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 7919]))
    r_hat = domain.farthest_corner_distance(center)
    history = region.diagnostics["history"]
    for _ in range(n_u):
        u = random_unit_vector(rng, domain.dim, active)
        limit = min(r_hat, _exit_distance(center, u, domain))
        if test(center + limit * u):
            history.append((u, r_hat, None))
            continue
        lo, hi = 0.0, limit
        while hi - lo > res:
            mid = 0.5 * (lo + hi)
            if test(center + mid * u):
                lo = mid
            else:
                hi = mid
        history.append((u, lo, hi))
        r_hat = min(r_hat, lo)
        if r_hat <= 0.0:
            break
    region.directions_tested = len(history)
    region.radius = float(r_hat)
    return region
