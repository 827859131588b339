import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import qmc

from blossom.acquisitions import (
    AcquisitionContext,
    DiscretePes,
    NoFeasibleProposalError,
    expected_improvement,
    global_regret_reduction,
    improvement,
    maximize_acquisition,
    pes_discrete,
)
from blossom.convexity import ConvexRegion
from blossom.gp import Domain, GpModel
from blossom.kernels import KernelFamily, KernelSpec

PHI0 = 0.3989422804014327


@pytest.mark.parametrize(
    "target, mu, sigma, expected",
    [
        (0.0, 0.0, 1.0, PHI0),
        (0.0, 1.0, 0.0, 0.0),
        (0.0, -2.0, 0.0, 2.0),
        (0.0, 5.0, 1e-300, 0.0),
        # 1 * Phi(2) + 0.5 * phi(2), evaluated with scipy.stats.norm
        (0.0, -1.0, 0.5, 1.0042453513084149),
    ],
)
def test_improvement_closed_form(target, mu, sigma, expected):
    assert float(improvement(target, mu, sigma)) == pytest.approx(expected, abs=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(1e-3, 3), st.floats(0, 3))
def test_improvement_nonnegative_and_increasing_in_sigma(gap, sigma, extra):
    a = float(improvement(gap, 0.0, sigma))
    b = float(improvement(gap, 0.0, sigma + extra))
    assert 0.0 <= a <= b + 1e-12


@pytest.fixture(scope="module")
def model():
    dom = Domain(np.array([0.0]), np.array([1.0]))
    X = np.array([[0.1], [0.35], [0.5], [0.65], [0.9]])
    return GpModel(X, np.array([1.0, -1.0, 0.6, -1.0, 1.0]), dom, KernelSpec(KernelFamily.MATERN52, 1.0, (0.12,)))


def test_grr_equals_ei_at_the_incumbent(model):
    X = np.linspace(0, 1, 11)[:, None]
    ctx = AcquisitionContext(model, model.domain, incumbent_best=-1.0, expected_inner_min=-1.0)
    assert np.array_equal(expected_improvement(ctx, X), global_regret_reduction(ctx, X))
    with pytest.raises(ValueError):
        global_regret_reduction(AcquisitionContext(model, model.domain), X)


def test_pes_zero_at_observations_and_singleton_support(model):
    support = np.linspace(0, 1, 30)[:, None]
    for seed in range(5):
        assert DiscretePes(model, support, seed=seed)(model.X[:1])[0] <= 1e-6
    assert DiscretePes(model, support[:1])(np.array([[0.2]]))[0] == 0.0


def test_pes_prefers_an_uncertain_basin_over_a_known_point(model):
    ctx = AcquisitionContext(model, model.domain, support=np.linspace(0, 1, 40)[:, None])
    at_basin = pes_discrete(ctx, np.array([0.42]), seed=0)
    at_data = pes_discrete(ctx, np.array([0.35]), seed=0)
    assert at_basin > at_data


def neg_distance(z):
    return lambda ctx, X: -np.linalg.norm(X - z, axis=1)


def test_maximizer_finds_unimodal_peak():
    dom = Domain.cube(-1.0, 1.0, 2)
    z = np.array([0.3, -0.4])
    ctx = AcquisitionContext(None, dom)
    p = maximize_acquisition(neg_distance(z), ctx, seed=0)
    assert np.linalg.norm(p.x - z) < 1e-2
    assert not p.excluded_region_applied


def test_maximizer_respects_exclusion():
    dom = Domain.cube(-1.0, 1.0, 2)
    z = np.array([0.3, -0.4])
    region = ConvexRegion(z, 0.2)
    p = maximize_acquisition(neg_distance(z), AcquisitionContext(None, dom), exclude=region, seed=1)
    assert p.excluded_region_applied
    assert np.linalg.norm(p.x - z) > 0.2
    assert np.linalg.norm(p.x - z) == pytest.approx(0.2, abs=0.02)


def test_maximizer_degenerate_budget_and_full_exclusion():
    dom = Domain.cube(-1.0, 1.0, 2)
    ctx = AcquisitionContext(None, dom)
    p = maximize_acquisition(neg_distance(np.zeros(2)), ctx, budget=1, seed=0)
    assert dom.contains(p.x)
    with pytest.raises(NoFeasibleProposalError):
        maximize_acquisition(neg_distance(np.zeros(2)), ctx, exclude=ConvexRegion(np.zeros(2), 3.0), budget=50)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_proposals_stay_in_domain_and_outside_region(seed):
    dom = Domain(np.array([-5.0, 0.0]), np.array([10.0, 15.0]))
    rng = np.random.default_rng(seed)
    z = dom.lower + rng.uniform(size=2) * dom.width
    region = ConvexRegion(z, float(rng.uniform(0.5, 3.0)))
    p = maximize_acquisition(neg_distance(z), AcquisitionContext(None, dom), exclude=region, budget=200, seed=seed)
    assert dom.contains(p.x)
    assert not region.contains(p.x)[0]


def test_ties_broken_by_lowest_posterior_mean(model):
    ctx = AcquisitionContext(model, model.domain)
    p = maximize_acquisition(lambda c, X: np.zeros(len(X)), ctx, budget=99, seed=0)
    scan = model.domain.from_unit(2.0 * qmc.LatinHypercube(1, seed=np.random.default_rng(0)).random(99) - 1.0)
    assert model.predict(p.x[None, :])[0][0] == pytest.approx(model.predict(scan)[0].min())
