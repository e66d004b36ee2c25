"""Computational domains and the coordinate maps between an epigraph and its complement.

Three kinds of domain are supported: balls, half-spaces and epigraphs
``D = {(x', x_d) : x_d > f(x')}`` of a globally Lipschitz profile ``f``.
Boxes and the whole space are also provided because the quadrature layer
needs them.  Every domain answers ``contains`` on an ``(n, d)`` array and
reports a bounding ball (``None`` when unbounded).

Profiles come from a small registry; each carries an analytically certified
Lipschitz bound, which is what the smallness condition ``M < 3/5`` is tested
against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "HypothesisUnmet",
    "Profile",
    "make_profile",
    "profile_with_lipschitz",
    "M0",
    "PROFILES",
    "EpigraphDomain",
    "BallDomain",
    "BoxDomain",
    "WholeSpace",
    "RigidMotion",
    "halfspace",
    "phi_eta",
    "phi_eta_inverse",
    "straighten",
    "unstraighten",
    "sample_epigraph",
    "GeometricReport",
    "geometric_bound",
    "geometric_inequality_check",
    "domain_to_json",
    "domain_from_json",
    "ball_volume",
    "sphere_area",
]

M0 = 3.0 / 5.0


class HypothesisUnmet(ValueError):
    """Raised when the inputs fall outside the regime where an inequality is claimed."""


def ball_volume(d: int, r: float = 1.0) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * r**d


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


# --------------------------------------------------------------------------
# profiles


@dataclass(frozen=True)
class Profile:
    """A boundary profile ``f: R^{d-1} -> R`` with a certified Lipschitz bound."""

    name: str
    params: tuple[tuple[str, float], ...]
    value: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    grad: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    lipschitz: float = 0.0

    def __call__(self, xp):
        xp = np.asarray(xp, dtype=float)
        if xp.ndim == 1:
            return self.value(xp[None, :])[0]
        return self.value(xp)

    def to_json(self) -> dict:
        return {"name": self.name, "params": dict(self.params)}


def _zero():
    return (
        lambda xp: np.zeros(xp.shape[0]),
        lambda xp: np.zeros_like(xp),
        0.0,
    )


def _affine(slope=0.0, width=None):
    # width=None gives the exact affine profile; otherwise slope*w*tanh(t/w).
    if width is None:
        return (
            lambda xp: slope * xp[:, 0],
            lambda xp: np.concatenate(
                [np.full((xp.shape[0], 1), slope), np.zeros((xp.shape[0], xp.shape[1] - 1))], axis=1
            ),
            abs(slope),
        )

    def value(xp):
        return slope * width * np.tanh(xp[:, 0] / width)

    def grad(xp):
        g = np.zeros_like(xp)
        g[:, 0] = slope / np.cosh(xp[:, 0] / width) ** 2
        return g

    return value, grad, abs(slope)


def _sine(amplitude=0.3, frequency=1.0):
    def value(xp):
        return amplitude * np.sin(frequency * xp[:, 0])

    def grad(xp):
        g = np.zeros_like(xp)
        g[:, 0] = amplitude * frequency * np.cos(frequency * xp[:, 0])
        return g

    return value, grad, abs(amplitude * frequency)


def _sech2(z):
    e = np.exp(-2.0 * np.abs(z))
    return 4.0 * e / (1.0 + e) ** 2


def _windowed_sine(amplitude=0.3, width=2.0):
    # a*sin(t)*sech^2(t/w); |d/dt sech^2(t/w)| <= 4/(3*sqrt(3)*w)
    def value(xp):
        t = xp[:, 0]
        return amplitude * np.sin(t) * _sech2(t / width)

    def grad(xp):
        t = xp[:, 0]
        sech2 = _sech2(t / width)
        g = np.zeros_like(xp)
        g[:, 0] = amplitude * (
            np.cos(t) * sech2 - np.sin(t) * 2.0 * sech2 * np.tanh(t / width) / width
        )
        return g

    return value, grad, abs(amplitude) * (1.0 + 4.0 / (3.0 * math.sqrt(3.0) * width))


def _ridge(height=0.3, width=1.0):
    # Gaussian ridge; max |f'| = h/w * exp(-1/2)
    def value(xp):
        return height * np.exp(-np.sum(xp**2, axis=1) / (2 * width**2))

    def grad(xp):
        return (
            -height
            * np.exp(-np.sum(xp**2, axis=1) / (2 * width**2))[:, None]
            * xp
            / width**2
        )

    return value, grad, abs(height) / width * math.exp(-0.5)


PROFILES: dict[str, Callable] = {
    "zero": _zero,
    "affine": _affine,
    "sine": _sine,
    "windowed_sine": _windowed_sine,
    "ridge": _ridge,
}


def make_profile(name: str, **params) -> Profile:
    """Build a registered profile, e.g. ``make_profile("sine", amplitude=0.59)``."""
    try:
        factory = PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
    value, grad, lip = factory(**params)
    key = tuple(sorted((k, v) for k, v in params.items()))
    return Profile(name, key, value, grad, float(lip))


def profile_with_lipschitz(name: str, M: float) -> Profile:
    """A registered profile shape scaled so that its certified Lipschitz bound equals ``M``."""
    if M < 0:
        raise ValueError("Lipschitz constant must be nonnegative")
    if name == "zero" or M == 0:
        return make_profile("zero")
    if name == "affine":
        return make_profile("affine", slope=M)
    if name == "sine":
        return make_profile("sine", amplitude=M, frequency=1.0)
    if name == "windowed_sine":
        w = 2.0
        return make_profile("windowed_sine", amplitude=M / (1.0 + 4.0 / (3.0 * math.sqrt(3.0) * w)), width=w)
    if name == "ridge":
        return make_profile("ridge", height=M * math.exp(0.5), width=1.0)
    raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")


# --------------------------------------------------------------------------
# domains


def _as_points(x, d):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d:
        raise ValueError(f"expected points with {d} coordinates, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class EpigraphDomain:
    """The open region above the graph of ``profile``."""

    d: int
    profile: Profile

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("epigraphs need d >= 2")

    @property
    def lipschitz_M(self) -> float:
        return self.profile.lipschitz

    kind = "epigraph"

    def height(self, x):
        """Signed height ``x_d - f(x')`` above the boundary."""
        x = _as_points(x, self.d)
        return x[..., -1] - self.profile(x[..., :-1])

    def contains(self, x):
        return self.height(x) > 0

    def below(self, x):
        """Membership in the lower region D_- (strictly below the graph)."""
        return self.height(x) < 0

    def bounding_ball(self):
        return None

    def bounding_box(self):
        return None


def halfspace(d: int = 2) -> EpigraphDomain:
    """The upper half-space ``{x_d > 0}`` as the epigraph of the zero profile."""
    return EpigraphDomain(d, make_profile("zero"))


@dataclass(frozen=True)
class BallDomain:
    center: tuple[float, ...]
    radius: float

    kind = "ball"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def volume(self) -> float:
        return ball_volume(self.d, self.radius)

    def contains(self, x):
        x = _as_points(x, self.d)
        return np.sum((x - np.asarray(self.center)) ** 2, axis=-1) < self.radius**2

    def half(self) -> "BallDomain":
        return BallDomain(self.center, self.radius / 2)

    def bounding_ball(self):
        return np.asarray(self.center), self.radius

    def bounding_box(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class BoxDomain:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    kind = "box"

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != len(self.hi) or any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ValueError("box needs lo < hi componentwise")

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def contains(self, x):
        x = _as_points(x, self.d)
        return np.all((x > np.asarray(self.lo)) & (x < np.asarray(self.hi)), axis=-1)

    def bounding_ball(self):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return (lo + hi) / 2, float(np.linalg.norm(hi - lo) / 2)

    def bounding_box(self):
        return np.asarray(self.lo), np.asarray(self.hi)


@dataclass(frozen=True)
class WholeSpace:
    d: int = 2

    kind = "whole"

    def contains(self, x):
        x = _as_points(x, self.d)
        return np.ones(x.shape[:-1], dtype=bool)

    def bounding_ball(self):
        return None

    def bounding_box(self):
        return None


@dataclass(frozen=True)
class RigidMotion:
    """``T(x) = R x + t`` with ``R`` orthogonal."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if R.shape != (t.size, t.size):
            raise ValueError("rotation must be d x d with d = len(translation)")
        if not np.allclose(R @ R.T, np.eye(t.size), atol=1e-12, rtol=0):
            raise ValueError("rotation is not orthogonal to 1e-12")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def random(cls, d: int, rng: np.random.Generator, scale: float = 1.0) -> "RigidMotion":
        q, r = np.linalg.qr(rng.standard_normal((d, d)))
        q = q * np.sign(np.diag(r))
        return cls(q, scale * rng.standard_normal(d))

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.rotation.T + self.translation

    def inverse(self, x):
        return (np.asarray(x, dtype=float) - self.translation) @ self.rotation


# --------------------------------------------------------------------------
# coordinate maps


def _check_eta(eta):
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")


def phi_eta(dom: EpigraphDomain, eta: float, x):
    """Map D_- onto D: ``(x', f(x') + eta (f(x') - x_d))``."""
    _check_eta(eta)
    x = _as_points(x, dom.d)
    fx = dom.profile(x[..., :-1])
    if np.any(x[..., -1] >= fx):
        raise ValueError("phi_eta expects points strictly below the graph (in D_-)")
    out = np.array(x, copy=True)
    out[..., -1] = fx + eta * (fx - x[..., -1])
    return out


def phi_eta_inverse(dom: EpigraphDomain, eta: float, x):
    """Map D onto D_-: ``(x', f(x') + (f(x') - x_d) / eta)``."""
    _check_eta(eta)
    x = _as_points(x, dom.d)
    fx = dom.profile(x[..., :-1])
    if np.any(x[..., -1] <= fx):
        raise ValueError("phi_eta_inverse expects points strictly above the graph (in D)")
    out = np.array(x, copy=True)
    out[..., -1] = fx + (fx - x[..., -1]) / eta
    return out


def straighten(dom: EpigraphDomain, x):
    """Flatten the boundary: ``(x', x_d - f(x'))`` maps D onto the upper half-space."""
    x = _as_points(x, dom.d)
    fx = dom.profile(x[..., :-1])
    if np.any(x[..., -1] <= fx):
        raise ValueError("straighten expects points of D")
    out = np.array(x, copy=True)
    out[..., -1] = x[..., -1] - fx
    return out


def unstraighten(dom: EpigraphDomain, x):
    x = _as_points(x, dom.d)
    out = np.array(x, copy=True)
    out[..., -1] = x[..., -1] + dom.profile(x[..., :-1])
    return out


def sample_epigraph(
    dom: EpigraphDomain,
    n: int,
    rng: np.random.Generator,
    half_width: float = 2.0,
    scale: float = 1.0,
    offsets: str = "exponential",
    below: bool = False,
):
    """Points of D (or D_- with ``below=True``) by construction.

    ``x'`` is uniform in ``[-half_width, half_width]^{d-1}``; the distance to
    the graph is Exp(scale) or Uniform(0, scale).
    """
    xp = rng.uniform(-half_width, half_width, size=(n, dom.d - 1))
    if offsets == "exponential":
        t = rng.exponential(scale, size=n)
    elif offsets == "uniform":
        t = rng.uniform(0, scale, size=n)
    else:
        raise ValueError(f"unknown offset law {offsets!r}")
    t = np.maximum(t, np.finfo(float).tiny)
    fx = dom.profile(xp)
    xd = fx - t if below else fx + t
    return np.concatenate([xp, xd[:, None]], axis=1)


# --------------------------------------------------------------------------
# comparison inequality |z - y| <= C |phi_eta^{-1}(z) - y|


def geometric_bound(eta: float, c_eta: float) -> float:
    """Largest admissible ``M^2`` for the comparison inequality with constant ``c_eta``."""
    c2 = c_eta * c_eta
    return (c2 - eta * eta) * (c2 - 1.0) / (c2 + eta) ** 2


@dataclass(frozen=True)
class GeometricReport:
    eta: float
    c_eta: float
    lipschitz_M: float
    n_samples: int
    seed: int
    violations: int
    worst_ratio: float


def geometric_inequality_check(
    dom: EpigraphDomain, eta: float, c_eta: float, n_samples: int, seed: int
) -> GeometricReport:
    """Sample pairs ``z, y`` in D and count failures of ``|z-y| <= C |phi^{-1}(z) - y|``.

    ``worst_ratio`` is the largest ``|z-y| / (C |phi^{-1}(z) - y|)``; a
    violation is a ratio above ``1 + 1e-12``.  Raises :class:`HypothesisUnmet`
    when ``C <= max(1, eta)`` or ``M^2`` exceeds :func:`geometric_bound`.
    """
    _check_eta(eta)
    if not c_eta > max(1.0, eta):
        raise HypothesisUnmet(f"need C_eta > max(1, eta); got C_eta={c_eta}, eta={eta}")
    M = dom.lipschitz_M
    if M * M > geometric_bound(eta, c_eta):
        raise HypothesisUnmet(
            f"M^2 = {M * M:.6g} exceeds the admissible bound {geometric_bound(eta, c_eta):.6g}"
        )
    rng = np.random.default_rng(seed)
    worst = 0.0
    violations = 0
    done = 0
    while done < n_samples:
        m = min(50_000, n_samples - done)
        # mix length scales so that near-boundary, near-diagonal pairs are exercised
        scale = 10.0 ** rng.uniform(-3, 0.5, size=(m, 1))
        z = sample_epigraph(dom, m, rng, half_width=4.0, scale=1.0)
        z[:, -1] = dom.profile(z[:, :-1]) + scale[:, 0] * rng.exponential(1.0, m)
        yp = z[:, :-1] + scale * rng.standard_normal((m, dom.d - 1))
        y = np.concatenate(
            [yp, (dom.profile(yp) + scale[:, 0] * rng.exponential(1.0, m))[:, None]], axis=1
        )
        lhs = np.linalg.norm(z - y, axis=1)
        rhs = c_eta * np.linalg.norm(phi_eta_inverse(dom, eta, z) - y, axis=1)
        ratio = lhs / rhs
        worst = max(worst, float(ratio.max()))
        violations += int(np.count_nonzero(ratio > 1.0 + 1e-12))
        done += m
    return GeometricReport(eta, c_eta, M, n_samples, seed, violations, worst)


# --------------------------------------------------------------------------
# JSON


def domain_to_json(dom) -> dict:
    if isinstance(dom, BallDomain):
        return {"kind": "ball", "center": list(dom.center), "radius": dom.radius}
    if isinstance(dom, BoxDomain):
        return {"kind": "box", "lo": list(dom.lo), "hi": list(dom.hi)}
    if isinstance(dom, WholeSpace):
        return {"kind": "whole", "d": dom.d}
    if isinstance(dom, EpigraphDomain):
        if dom.profile.name == "zero":
            return {"kind": "halfspace", "d": dom.d}
        return {"kind": "epigraph", "d": dom.d, "profile": dom.profile.to_json()}
    raise TypeError(f"cannot serialize {type(dom).__name__}")


def domain_from_json(obj: dict):
    kind = obj.get("kind")
    if kind == "ball":
        return BallDomain(tuple(obj["center"]), float(obj["radius"]))
    if kind == "box":
        return BoxDomain(tuple(obj["lo"]), tuple(obj["hi"]))
    if kind == "whole":
        return WholeSpace(int(obj.get("d", 2)))
    if kind == "halfspace":
        return halfspace(int(obj.get("d", 2)))
    if kind == "epigraph":
        prof = obj["profile"]
        return EpigraphDomain(int(obj.get("d", 2)), make_profile(prof["name"], **prof.get("params", {})))
    raise ValueError(f"unknown domain kind {kind!r}")
