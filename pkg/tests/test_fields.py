import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fkorn.domains import BallDomain, EpigraphDomain, RigidMotion, WholeSpace, make_profile
from fkorn.fields import (
    CATALOG,
    BumpAtom,
    BumpField,
    CutoffFunction,
    SmoothField,
    bump,
    catalog_field,
    f_eta_map,
    projected_difference,
    random_bump_field,
    rescale,
    rigid_transform,
    straighten_field,
    truncate,
    zero_extend,
)
from fkorn.seminorms import lp_norm_p


def linear_field(A):
    A = np.asarray(A, dtype=float)
    return SmoothField(lambda X: X @ A.T, A.shape[0], np.zeros(A.shape[0]), math.inf)


def test_identity_field_projected_difference_is_distance():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(2, 500, 3))
    np.testing.assert_allclose(projected_difference(linear_field(np.eye(3)), x, y),
                               np.linalg.norm(x - y, axis=1), rtol=1e-12)


def test_skew_field_projected_difference_vanishes():
    W = np.array([[0.0, -1.0], [1.0, 0.0]])
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(2, 500, 2))
    np.testing.assert_allclose(projected_difference(linear_field(W), x, y), 0.0, atol=1e-13)


def test_projected_difference_rejects_diagonal():
    with pytest.raises(ValueError):
        projected_difference(linear_field(np.eye(2)), np.ones(2), np.ones(2))


@pytest.mark.parametrize("name", CATALOG)
def test_catalog_support(name):
    u = catalog_field(name)
    c, r = u.support
    assert np.linalg.norm(c) + r <= 0.8 + 1e-12
    assert u.vanishes_outside_support(2000)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), d=st.sampled_from([2, 3]), n_atoms=st.integers(1, 4))
def test_bump_field_jacobian_matches_differences(seed, d, n_atoms):
    u = random_bump_field(d, n_atoms, seed)
    c, r = u.support
    x = c + 0.9 * r * np.random.default_rng(seed).uniform(-1, 1, (30, d)) / math.sqrt(d)
    np.testing.assert_allclose(u.jacobian(x), u.jacobian(x, h=1e-6), atol=1e-6)


def test_bump_field_json_round_trip():
    u = random_bump_field(2, 3, seed=11)
    v = BumpField.from_json(u.to_json())
    x = np.random.default_rng(2).normal(size=(100, 2))
    np.testing.assert_array_equal(u(x), v(x))


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_lp_norm_against_radial_quadrature(p):
    u = catalog_field("bump2d")
    amp = math.hypot(1.0, 0.5)
    radial, _ = integrate.quad(lambda r: bump(np.array([r, 0.0]), np.zeros(2), 0.8) ** p * r, 0, 0.8)
    exact = amp**p * 2 * math.pi * radial
    est = lp_norm_p(u, WholeSpace(2), p, n_samples=400_000, seed=3)
    assert abs(est.value - exact) < 4 * est.std_error


def test_cutoff_profile_and_gradient_bound():
    ball = BallDomain((0.5, -0.2), 0.8)
    psi = CutoffFunction(ball)
    c = np.asarray(ball.center)
    rho = np.linspace(0, 0.6, 6001)
    x = c + rho[:, None] * np.array([1.0, 0.0])
    vals = psi(x)
    assert np.all(vals[rho <= psi.inner] == 1.0)
    assert np.all(vals[rho >= psi.outer] == 0.0)
    assert np.all((0 <= vals) & (vals <= 1))
    g = np.linalg.norm(psi.gradient(x), axis=1)
    assert g.max() <= psi.gradient_constant / ball.radius * (1 + 1e-12)
    assert g.max() == pytest.approx(psi.gradient_constant / ball.radius, rel=1e-3)
    fd = np.gradient(vals, rho)
    np.testing.assert_allclose(-fd[1:-1], g[1:-1], atol=2e-3)


def test_truncate_vanishes_outside_half_ball():
    u = catalog_field("random2d")
    psi = CutoffFunction(BallDomain((0.1, 0.0), 1.0))
    v = truncate(u, psi)
    x = np.random.default_rng(4).uniform(-1, 1, (2000, 2))
    outside = np.linalg.norm(x - psi.center, axis=1) >= 0.5
    assert np.all(v(x[outside]) == 0)


def test_rescale_definition():
    u = catalog_field("random2d")
    x0, r, s = np.array([0.1, -0.2]), 0.5, 0.4
    v = rescale(u, x0, r, s)
    x = np.random.default_rng(5).uniform(-1, 1, (100, 2))
    np.testing.assert_allclose(v(x), u(x0 + r * x) / r**s)
    np.testing.assert_allclose(v.jacobian(x), v.jacobian(x, h=1e-6), atol=1e-5)
    assert v.vanishes_outside_support()


def test_straighten_field_definition():
    dom = EpigraphDomain(2, make_profile("affine", slope=0.2))
    u = catalog_field("bump2d")
    v = straighten_field(u, dom)
    x = np.random.default_rng(6).uniform(-1, 1, (100, 2))
    shifted = x.copy()
    shifted[:, 1] += 0.2 * x[:, 0]
    np.testing.assert_array_equal(v(x), u(shifted))
    assert v.vanishes_outside_support()


@pytest.mark.parametrize("eta", [0.3, 1.0, 2.5])
def test_f_eta_map_is_linear(eta):
    u, w = catalog_field("random2d"), catalog_field("skew2d")
    x = np.random.default_rng(7).uniform(-2, 2, (200, 2))
    lhs = f_eta_map(2.0 * u + (-3.0) * w, eta)(x)
    rhs = 2.0 * f_eta_map(u, eta)(x) - 3.0 * f_eta_map(w, eta)(x)
    np.testing.assert_allclose(lhs, rhs, atol=1e-14)
    assert f_eta_map(u, eta).vanishes_outside_support()


def test_rigid_transform_preserves_projected_difference():
    u = catalog_field("random2d")
    T = RigidMotion.random(2, np.random.default_rng(8))
    v = rigid_transform(u, T)
    rng = np.random.default_rng(9)
    x, y = rng.uniform(-1, 1, (2, 300, 2))
    np.testing.assert_allclose(projected_difference(v, T(x), T(y)), projected_difference(u, x, y), atol=1e-13)


def test_zero_extend_checks_separation():
    u = BumpField([BumpAtom((0.0, 0.0), 0.2, (1.0, -1.0))])
    inner = BallDomain((0.0, 0.0), 0.5)
    outer = BallDomain((0.0, 0.0), 2.0)
    v = zero_extend(u, inner, outer, beta=0.05)
    x = np.random.default_rng(10).uniform(-1, 1, (500, 2))
    np.testing.assert_array_equal(v(x), u(x) * inner.contains(x)[:, None])
    with pytest.raises(ValueError):
        zero_extend(u, inner, outer, beta=1.0)
