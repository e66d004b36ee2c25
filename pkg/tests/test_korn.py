import math

import numpy as np
import pytest
from scipy import special

from fkorn.domains import BallDomain, EpigraphDomain, HypothesisUnmet, halfspace, profile_with_lipschitz
from fkorn.fields import catalog_field, random_bump_field
from fkorn.korn import (
    ball_scaling_check,
    epigraph_korn_check,
    j_bound_check,
    j_integrand,
    korn_record,
    max_ratio_search,
    straightening_bound_check,
)
from fkorn.quadrature import PairSamplingPlan
from fkorn.seminorms import SeminormParams

UNIT_BALL = BallDomain((0.0, 0.0), 1.0)


def flat_j(t, s, p):
    """Closed form of the J integral over the upper half-plane for the zero profile."""
    beta = (2 + (s + 1) * p) / 2
    line = math.sqrt(math.pi) * special.gamma(beta - 0.5) / special.gamma(beta)
    return t ** (-s * p) * line * special.beta(p + 1, s * p)


@pytest.mark.parametrize("s,p,frozen", [(0.4, 2.0, 0.6807269514014296), (0.6, 3.0, 0.07090905743764893)])
def test_flat_j_closed_form_frozen(s, p, frozen):
    assert flat_j(1.0, s, p) == pytest.approx(frozen, rel=1e-14)


@pytest.mark.parametrize("s,p", [(0.4, 2.0), (0.6, 3.0)])
def test_j_bound_on_flat_boundary(s, p):
    params = SeminormParams(s, p)
    rep = j_bound_check(halfspace(2), params, seed=1)
    assert rep.converged
    for t, v, se in zip(rep.distances, rep.values, rep.std_errors):
        assert abs(v - flat_j(t, s, p)) < 4 * se
    assert rep.slope == pytest.approx(-s * p, abs=0.1)


def test_j_integrand_vanishes_on_boundary():
    dom = halfspace(2)
    g = j_integrand(dom, np.array([0.0, 0.1]), SeminormParams(0.4, 2.0))
    assert np.all(g(np.array([[0.3, 0.0], [-1.0, 0.0]])) == 0.0)


def test_j_bound_on_curved_boundary():
    dom = EpigraphDomain(2, profile_with_lipschitz("sine", 0.3))
    rep = j_bound_check(dom, SeminormParams(0.4, 2.0), base_point=[0.2], seed=2)
    assert rep.slope == pytest.approx(-0.8, abs=0.1)
    assert math.isfinite(rep.sup_product)


def test_korn_record_for_catalog_field():
    rec = korn_record(catalog_field("radial2d"), UNIT_BALL, SeminormParams(0.5, 2.0),
                      PairSamplingPlan(budget=40_000), seed=0, n_lp=40_000)
    assert rec.w_p >= rec.x_p > 0
    assert rec.ratio == pytest.approx(rec.w_p / (rec.x_p + rec.lp_p))


def test_korn_record_rejects_zero_field():
    with pytest.raises(ValueError):
        korn_record(catalog_field("zero"), UNIT_BALL, SeminormParams(0.5, 2.0), PairSamplingPlan(budget=2000))


def test_scaling_identities():
    rows = ball_scaling_check(catalog_field("random2d"), SeminormParams(0.4, 2.0), radii=(0.5, 2.0),
                              x0=(0.3, -0.1), plan=PairSamplingPlan(budget=50_000), seed=4, n_lp=50_000)
    assert all(row.identities_hold() for row in rows)
    ratios = [row.ratio for row in rows]
    assert max(ratios) / min(ratios) < 1.05


def test_ratio_search_trace_is_monotone():
    rep = max_ratio_search(UNIT_BALL, SeminormParams(0.5, 2.0), budget=5000, restarts=1, max_iter=15,
                           n_lp=5000, seed=3)
    assert np.all(np.diff(rep.trace) >= 0)
    assert rep.max_ratio >= rep.initial_ratio
    assert rep.iterations == len(rep.trace)
    assert rep.status in {"ok", "max_iter_reached"}


def test_epigraph_korn_ratio():
    dom = EpigraphDomain(2, profile_with_lipschitz("windowed_sine", 0.3))
    u = random_bump_field(2, 2, seed=5, center=(0.0, 0.6))
    est = epigraph_korn_check(u, dom, SeminormParams(0.4, 2.0), PairSamplingPlan(budget=50_000), seed=0)
    assert est.value >= 1.0 and est.std_error < 0.1 * est.value


def test_epigraph_korn_hypotheses():
    dom = EpigraphDomain(2, profile_with_lipschitz("sine", 0.3))
    with pytest.raises(HypothesisUnmet):
        epigraph_korn_check(catalog_field("random2d"), dom, SeminormParams(0.5, 2.0))
    steep = EpigraphDomain(2, profile_with_lipschitz("sine", 0.65))
    with pytest.raises(HypothesisUnmet):
        epigraph_korn_check(catalog_field("random2d"), steep, SeminormParams(0.4, 2.0))


def test_straightening_flat_is_neutral():
    out = straightening_bound_check(catalog_field("random2d"), halfspace(2), SeminormParams(0.4, 2.0),
                                    PairSamplingPlan(budget=50_000), seed=1)
    assert out["lipschitz_M"] == 0.0
    assert out["ratio"] == pytest.approx(1.0, rel=0.05)


def test_straightening_curved_ratio_is_finite():
    dom = EpigraphDomain(2, profile_with_lipschitz("sine", 0.5))
    out = straightening_bound_check(catalog_field("random2d"), dom, SeminormParams(0.4, 2.0),
                                    PairSamplingPlan(budget=50_000), seed=1)
    assert 0 < out["ratio"] < math.inf
