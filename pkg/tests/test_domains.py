from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fkorn.domains import (
    BallDomain,
    BoxDomain,
    EpigraphDomain,
    HypothesisUnmet,
    RigidMotion,
    WholeSpace,
    domain_from_json,
    domain_to_json,
    geometric_bound,
    geometric_inequality_check,
    halfspace,
    make_profile,
    phi_eta,
    phi_eta_inverse,
    profile_with_lipschitz,
    sample_epigraph,
    straighten,
    unstraighten,
)

PROFILES = [
    make_profile("sine", amplitude=0.3, frequency=1.0),
    make_profile("windowed_sine", amplitude=0.3, width=2.0),
    make_profile("ridge", height=0.2, width=0.7),
]


def _fd_det(fn, x, h=1e-6):
    d = x.size
    J = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        J[:, j] = (fn(x + e) - fn(x - e)) / (2 * h)
    return np.linalg.det(J)


def test_flat_reflection_examples():
    flat = halfspace(2)
    np.testing.assert_array_equal(phi_eta(flat, 1.0, np.array([0.3, -0.7])), [0.3, 0.7])
    np.testing.assert_array_equal(phi_eta_inverse(flat, 2.0, np.array([0.0, 1.0])), [0.0, -0.5])


def test_straighten_hand_value():
    dom = EpigraphDomain(2, make_profile("affine", slope=0.2))
    np.testing.assert_allclose(straighten(dom, np.array([1.0, 1.5])), [1.0, 1.3], atol=1e-15)


def test_straighten_flat_is_identity():
    x = np.array([[0.4, 0.2], [-1.0, 3.0]])
    np.testing.assert_array_equal(straighten(halfspace(2), x), x)


@pytest.mark.parametrize("eta", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("profile", PROFILES, ids=lambda p: p.name)
def test_phi_jacobian_determinant(eta, profile):
    dom = EpigraphDomain(2, profile)
    rng = np.random.default_rng(7)
    pts = sample_epigraph(dom, 20, rng, below=True)
    for x in pts:
        det = _fd_det(lambda z: phi_eta(dom, eta, z), x)
        assert abs(det + eta) < 1e-6


@pytest.mark.parametrize("profile", PROFILES, ids=lambda p: p.name)
def test_unstraighten_has_unit_jacobian(profile):
    dom = EpigraphDomain(2, profile)
    rng = np.random.default_rng(1)
    for x in rng.uniform(-2, 2, (10, 2)):
        assert abs(abs(_fd_det(lambda z: unstraighten(dom, z), x)) - 1.0) < 1e-6


def test_phi_round_trip_and_sides():
    dom = EpigraphDomain(2, make_profile("windowed_sine", amplitude=0.3, width=2.0))
    rng = np.random.default_rng(3)
    etas = 10 ** rng.uniform(-1, 1, 1000)
    below = sample_epigraph(dom, 1000, rng, below=True)
    for eta, x in zip(etas, below):
        z = phi_eta(dom, eta, x)
        assert dom.contains(z[None])[0]
        np.testing.assert_allclose(phi_eta_inverse(dom, eta, z), x, atol=1e-12)
    above = sample_epigraph(dom, 1000, rng)
    for eta, z in zip(etas, above):
        x = phi_eta_inverse(dom, eta, z)
        assert dom.below(x[None])[0]
        np.testing.assert_allclose(phi_eta(dom, eta, x), z, atol=1e-12)


def test_phi_rejects_wrong_side_and_bad_eta():
    flat = halfspace(2)
    with pytest.raises(ValueError):
        phi_eta(flat, 1.0, np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        phi_eta_inverse(flat, 1.0, np.array([0.0, -1.0]))
    with pytest.raises(ValueError):
        phi_eta(flat, 0.0, np.array([0.0, -1.0]))


@settings(max_examples=40, deadline=None)
@given(
    name=st.sampled_from(["affine", "sine", "windowed_sine", "ridge"]),
    M=st.floats(0.01, 0.59),
)
def test_certified_lipschitz_bound(name, M):
    prof = profile_with_lipschitz(name, M)
    assert prof.lipschitz == pytest.approx(M, rel=1e-12)
    t = np.linspace(-10, 10, 20001)[:, None]
    assert np.max(np.abs(prof.grad(t))) <= M * (1 + 1e-12)
    # the stored gradient is the derivative of the stored value
    fd = np.gradient(prof(t), t[:, 0])
    np.testing.assert_allclose(fd[1:-1], prof.grad(t)[1:-1, 0], atol=1e-5)


def test_geometric_bound_minimum_is_nine_over_25():
    # exact arithmetic: at eta = 1 the bound with C = 2 equals 9/25
    c, eta = Fraction(2), Fraction(1)
    assert (c**2 - eta**2) * (c**2 - 1) / (c**2 + eta) ** 2 == Fraction(9, 25)
    etas = np.logspace(-2, 2, 1001)
    vals = np.array([geometric_bound(e, 2 * max(1.0, e)) for e in etas])
    assert np.all(vals >= 9 / 25 - 1e-15)


@pytest.mark.parametrize("eta", [0.5, 1.0, 2.0])
def test_geometric_inequality_flat_and_near_threshold(eta):
    for dom in [halfspace(2), EpigraphDomain(2, profile_with_lipschitz("sine", 0.59))]:
        rep = geometric_inequality_check(dom, eta, 2 * max(1.0, eta), 20_000, seed=5)
        assert rep.violations == 0
        assert rep.worst_ratio <= 1.0


def test_geometric_inequality_preconditions():
    dom = EpigraphDomain(2, profile_with_lipschitz("sine", 0.7))
    with pytest.raises(HypothesisUnmet):
        geometric_inequality_check(dom, 1.0, 2.0, 100, seed=0)
    with pytest.raises(HypothesisUnmet):
        geometric_inequality_check(halfspace(2), 2.0, 2.0, 100, seed=0)


@pytest.mark.parametrize(
    "dom",
    [
        BallDomain((0.0, 1.0), 2.0),
        BoxDomain((0.0, 0.0), (1.0, 2.0)),
        WholeSpace(3),
        halfspace(2),
        EpigraphDomain(2, make_profile("ridge", height=0.1, width=0.5)),
    ],
    ids=lambda d: type(d).__name__,
)
def test_domain_json_round_trip(dom):
    back = domain_from_json(domain_to_json(dom))
    assert domain_to_json(back) == domain_to_json(dom)
    x = np.random.default_rng(0).normal(size=(200, back.d if hasattr(back, "d") else 2))
    np.testing.assert_array_equal(back.contains(x), dom.contains(x))


def test_rigid_motion_inverse():
    T = RigidMotion.random(3, np.random.default_rng(2))
    x = np.random.default_rng(3).normal(size=(50, 3))
    np.testing.assert_allclose(T.inverse(T(x)), x, atol=1e-12)
    with pytest.raises(ValueError):
        RigidMotion(np.array([[1.0, 0.1], [0.0, 1.0]]), np.zeros(2))
