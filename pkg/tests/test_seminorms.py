import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fkorn.domains import BallDomain, BoxDomain, HypothesisUnmet, WholeSpace
from fkorn.fields import BumpAtom, BumpField, SmoothField, bump, catalog_field, random_bump_field
from fkorn.quadrature import PairSamplingPlan, draw_pairs
from fkorn.seminorms import (
    SeminormParams,
    crn_dominance,
    dense_seminorm_oracle,
    hardy_weighted_p,
    lp_norm_p,
    seminorm_estimates,
    w_integrand,
    w_seminorm_p,
    x_integrand,
    x_seminorm_p,
)

UNIT_BALL = BallDomain((0.0, 0.0), 1.0)


def linear_field(A, b=(0.0, 0.0)):
    A, b = np.asarray(A, dtype=float), np.asarray(b, dtype=float)
    return SmoothField(lambda X: X @ A.T + b, 2, np.zeros(2), math.inf)


def test_params_validation():
    with pytest.raises(ValueError):
        SeminormParams(1.0, 2.0)
    with pytest.raises(ValueError):
        SeminormParams(0.5, 1.0)
    with pytest.raises(HypothesisUnmet):
        SeminormParams(0.5, 2.0).require_sp_not_one()
    SeminormParams(0.4, 2.0).require_sp_not_one()


def test_identity_field_integrands_coincide():
    u = linear_field(np.eye(2))
    params = SeminormParams(0.3, 2.5)
    x, y, _ = draw_pairs(UNIT_BALL, UNIT_BALL, 5000, seed=1)
    np.testing.assert_allclose(x_integrand(u, params)(x, y), w_integrand(u, params)(x, y), rtol=1e-12)


def test_skew_affine_field_has_zero_x_integrand():
    u = linear_field([[0.0, 2.0], [-2.0, 0.0]], b=(0.3, -1.0))
    params = SeminormParams(0.5, 2.0)
    x, y, _ = draw_pairs(UNIT_BALL, UNIT_BALL, 20_000, seed=2)
    vals = x_integrand(u, params)(x, y)
    w_vals = w_integrand(u, params)(x, y)
    assert np.max(np.abs(vals) / w_vals) < 1e-14
    oracle = dense_seminorm_oracle(u, UNIT_BALL, params, 12)
    assert oracle["x"].value < 1e-24 * oracle["w"].value


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), s=st.floats(0.1, 0.9), p=st.floats(1.5, 4.0))
def test_projected_integrand_dominated_by_full_difference(seed, s, p):
    u = random_bump_field(2, 2, seed)
    xv, wv, _ = crn_dominance(u, UNIT_BALL, SeminormParams(s, p), n_pairs=4000, seed=seed)
    assert np.all(xv <= wv * (1 + 1e-12))


@pytest.mark.parametrize("s,p", [(0.25, 3.0), (0.5, 2.0)])
def test_monte_carlo_matches_extrapolated_oracle(s, p):
    params = SeminormParams(s, p)
    u = catalog_field("random2d")
    oracle = dense_seminorm_oracle(u, UNIT_BALL, params, 20, extrapolate=True)
    mc = seminorm_estimates(u, UNIT_BALL, params, PairSamplingPlan(budget=200_000), seed=1)
    for k in ("x", "w"):
        tol = max(0.02 * abs(oracle[k].value), 3 * math.hypot(oracle[k].std_error, mc[k].std_error))
        assert abs(mc[k].value - oracle[k].value) <= tol


def test_zero_field_is_exactly_zero():
    u = catalog_field("zero")
    params = SeminormParams(0.5, 2.0)
    est = seminorm_estimates(u, UNIT_BALL, params, PairSamplingPlan(budget=2000), seed=0)
    assert est["x"].value == 0.0 and est["w"].value == 0.0
    assert lp_norm_p(u, UNIT_BALL, 2.0).value == 0.0


def test_whole_space_includes_exterior_interaction():
    u = catalog_field("bump2d")
    params = SeminormParams(0.4, 2.0)
    plan = PairSamplingPlan(budget=100_000)
    inside = w_seminorm_p(u, BallDomain((0.0, 0.0), 0.8), params, plan, seed=3)
    whole = w_seminorm_p(u, WholeSpace(2), params, plan, seed=3)
    assert whole.value > inside.value + 3 * math.hypot(whole.std_error, inside.std_error)


def test_seminorms_scale_as_p_th_power():
    u = catalog_field("random2d")
    params = SeminormParams(0.6, 3.0)
    plan = PairSamplingPlan(budget=20_000)
    a = x_seminorm_p(u, UNIT_BALL, params, plan, seed=5)
    b = x_seminorm_p(2.0 * u, UNIT_BALL, params, plan, seed=5)
    assert b.value == pytest.approx(8.0 * a.value, rel=1e-12)


@pytest.mark.parametrize("s,p", [(0.3, 2.0), (0.7, 3.0)])
def test_hardy_weighted_integral(s, p):
    center, radius = np.array([0.0, 1.0]), 0.5
    g = BumpField([BumpAtom(tuple(center), radius, (1.0, 0.0))])

    def integrand(x2, x1):
        return bump(np.array([x1, x2]), center, radius) ** p / x2 ** (s * p)

    exact, _ = integrate.dblquad(integrand, -radius, radius, 1 - radius, 1 + radius, epsabs=1e-12)
    est = hardy_weighted_p(g, SeminormParams(s, p), n_samples=400_000, seed=6)
    assert abs(est.value - exact) < 4 * est.std_error


def test_hardy_rejects_field_touching_boundary():
    with pytest.raises(ValueError):
        hardy_weighted_p(catalog_field("bump2d"), SeminormParams(0.3, 2.0), n_samples=100)


def test_dense_oracle_on_box():
    u = catalog_field("radial2d")
    box = BoxDomain((-0.8, -0.8), (0.8, 0.8))
    params = SeminormParams(0.3, 2.0)
    oracle = dense_seminorm_oracle(u, box, params, 16, which=("w",))
    assert set(oracle) == {"w"} and oracle["w"].value > 0
