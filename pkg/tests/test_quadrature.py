import math

import numpy as np
import pytest

from fkorn.domains import BallDomain, BoxDomain, WholeSpace
from fkorn.quadrature import (
    Estimate,
    NonFiniteIntegrand,
    PairSamplingPlan,
    dense_oracle,
    draw_pairs,
    estimate_double_integral,
    estimate_double_integrals,
    estimate_point_integral,
    estimate_tail_integral,
    extrapolated_oracle,
    richardson,
)

UNIT_BALL = BallDomain((0.0, 0.0), 1.0)
UNIT_SQUARE = BoxDomain((0.0, 0.0), (1.0, 1.0))


def ones(x, y):
    return np.ones(len(x))


def test_constant_integrand_over_ball_pair():
    est = estimate_double_integral(ones, UNIT_BALL, UNIT_BALL, PairSamplingPlan(budget=200_000), seed=4)
    assert abs(est.value - math.pi**2) < 3 * est.std_error
    assert est.std_error < 0.01 * math.pi**2


@pytest.mark.parametrize("n", [8, 16, 31])
def test_dense_oracle_constant_skips_only_the_diagonal(n):
    # the n^2 diagonal cell pairs are skipped, so the sum is 1 - n^2 h^4
    est = dense_oracle(ones, UNIT_SQUARE, UNIT_SQUARE, n)
    assert est.value == pytest.approx(1.0 - 1.0 / n**2, abs=1e-12)
    assert est.std_error == 0.0


def test_dense_oracle_fractional_boundary_cells():
    est = dense_oracle(lambda x, y: np.ones(len(x)), UNIT_BALL, BoxDomain((-1.0, -1.0), (1.0, 1.0)), 40)
    assert est.value == pytest.approx(4 * math.pi, rel=2e-3)


@pytest.mark.parametrize("sp", [0.8, 1.8])
def test_tail_integral_closed_form(sp):
    ball = BallDomain((0.3, 0.0), 0.5)
    est = estimate_tail_integral(lambda y: np.ones(len(y)), ball, sp, PairSamplingPlan(budget=100_000), seed=2)
    exact = 2 * math.pi * ball.radius ** (-sp) / sp
    assert abs(est.value - exact) < 4 * est.std_error


def test_annulus_point_integral_is_exact():
    est = estimate_point_integral(lambda y: np.ones(len(y)), (0.0, 0.0), UNIT_BALL,
                                  PairSamplingPlan(budget=50_000), seed=3, r_inner=0.2, r_outer=1.0)
    assert est.value == pytest.approx(math.pi * (1 - 0.04), rel=1e-12)


def test_richardson_removes_leading_term():
    order, C, exact = 1.3, 0.7, 2.5
    coarse, fine = exact + C * 0.1**order, exact + C * 0.05**order
    assert richardson(coarse, fine, 2.0, order) == pytest.approx(exact, rel=1e-13)


def test_extrapolated_oracle_on_smooth_kernel():
    g = lambda x, y: np.sum((x - y) ** 2, axis=1)  # noqa: E731
    ext, coarse, fine = extrapolated_oracle(g, UNIT_SQUARE, UNIT_SQUARE, 10, order=2.0)
    # exact value of the mean squared distance times area^2 is 1/3
    assert abs(ext.value - 1 / 3) < abs(fine.value - 1 / 3)
    assert ext.value == pytest.approx(1 / 3, rel=1e-4)


def test_thread_count_does_not_change_result():
    g = lambda x, y: np.exp(-np.sum((x - y) ** 2, axis=1)) / np.linalg.norm(x - y, axis=1)  # noqa: E731
    plan = PairSamplingPlan(budget=60_000, block_size=1024)
    a = estimate_double_integral(g, UNIT_BALL, UNIT_BALL, plan, seed=9)
    b = estimate_double_integral(g, UNIT_BALL, UNIT_BALL, plan.replace(threads=4), seed=9)
    assert a == b


def test_seed_controls_the_stream():
    plan = PairSamplingPlan(budget=20_000)
    g = lambda x, y: np.linalg.norm(x - y, axis=1)  # noqa: E731
    a = estimate_double_integral(g, UNIT_BALL, UNIT_BALL, plan, seed=1)
    assert a == estimate_double_integral(g, UNIT_BALL, UNIT_BALL, plan, seed=1)
    assert a.value != estimate_double_integral(g, UNIT_BALL, UNIT_BALL, plan, seed=2).value


def test_common_pairs_for_several_integrands():
    gs = {"a": ones, "b": lambda x, y: 2.0 * np.ones(len(x))}
    out = estimate_double_integrals(gs, UNIT_BALL, UNIT_BALL, PairSamplingPlan(budget=20_000), seed=0)
    assert out["b"].value == pytest.approx(2 * out["a"].value, rel=1e-12)


def test_unbounded_second_domain_needs_tail_exponent():
    with pytest.raises(ValueError):
        estimate_double_integral(ones, UNIT_BALL, WholeSpace(2), PairSamplingPlan(budget=1000), seed=0)


def test_nonfinite_integrand_reports_pair():
    g = lambda x, y: np.full(len(x), np.nan)  # noqa: E731
    with pytest.raises(NonFiniteIntegrand) as info:
        estimate_double_integral(g, UNIT_BALL, UNIT_BALL, PairSamplingPlan(budget=1000), seed=0)
    assert len(info.value.pair[0]) == 2


def test_draw_pairs_weights_are_unbiased():
    x, y, w = draw_pairs(UNIT_BALL, UNIT_BALL, 200_000, seed=5)
    assert np.all(UNIT_BALL.contains(x)) and np.all(UNIT_BALL.contains(y))
    assert w.sum() == pytest.approx(math.pi**2, rel=0.03)


def test_plan_and_estimate_validation():
    with pytest.raises(ValueError):
        PairSamplingPlan(budget=0)
    with pytest.raises(ValueError):
        PairSamplingPlan(radii=(1.0, 2.0))
    with pytest.raises(ValueError):
        Estimate(math.inf, 0.0, 1, 0)
    assert Estimate(2.0, 0.5, 10, 1).scaled(-3).std_error == 1.5
