"""Vector fields and the transforms applied to them.

Fields are evaluators, not samples: a :class:`SmoothField` wraps a
vectorized function ``(n, d) -> (n, d)`` together with a ball outside which
it vanishes identically.  Discretization happens only in the quadrature and
the solver.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .domains import BallDomain, EpigraphDomain

__all__ = [
    "SmoothField",
    "BumpAtom",
    "BumpField",
    "CutoffFunction",
    "projected_difference",
    "bump",
    "straighten_field",
    "f_eta_map",
    "truncate",
    "zero_extend",
    "rescale",
    "rigid_transform",
    "enclosing_ball",
    "catalog_field",
    "CATALOG",
    "random_bump_field",
]


def enclosing_ball(balls):
    """A ball containing every ``(center, radius)`` in ``balls`` (not minimal)."""
    balls = [(np.asarray(c, dtype=float), float(r)) for c, r in balls]
    if any(not math.isfinite(r) for _, r in balls):
        return balls[0][0], math.inf
    lo = np.min([c - r for c, r in balls], axis=0)
    hi = np.max([c + r for c, r in balls], axis=0)
    center = (lo + hi) / 2
    return center, max(float(np.linalg.norm(c - center)) + r for c, r in balls)


class SmoothField:
    """A vector field ``R^d -> R^d`` that vanishes outside ``B(support_center, support_radius)``.

    ``evaluator`` maps ``(n, d)`` arrays to ``(n, d)`` arrays.  An optional
    ``jacobian`` maps ``(n, d)`` to ``(n, d, d)`` with ``J[k, i, j] = du_i/dx_j``.
    Single points of shape ``(d,)`` are accepted everywhere.
    """

    def __init__(
        self,
        evaluator: Callable[[np.ndarray], np.ndarray],
        d: int,
        support_center,
        support_radius: float,
        jacobian: Callable[[np.ndarray], np.ndarray] | None = None,
        name: str | None = None,
    ):
        self._eval = evaluator
        self.d = int(d)
        self.support_center = np.asarray(support_center, dtype=float)
        self.support_radius = float(support_radius)
        self._jac = jacobian
        self.name = name

    @property
    def support(self):
        return self.support_center, self.support_radius

    @property
    def has_jacobian(self) -> bool:
        return self._jac is not None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self._eval(x[None, :])[0]
        return self._eval(x)

    def jacobian(self, x, h: float | None = None):
        """Analytic Jacobian if available, else central differences with ``h = 1e-5 (1 + |x|)``."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if self._jac is not None and h is None:
            J = self._jac(X)
        else:
            J = np.empty((X.shape[0], self.d, self.d))
            step = (1e-5 * (1 + np.linalg.norm(X, axis=1)))[:, None] if h is None else h
            for j in range(self.d):
                e = np.zeros(self.d)
                e[j] = 1.0
                J[:, :, j] = (self._eval(X + step * e) - self._eval(X - step * e)) / (2 * step)
        return J[0] if single else J

    def vanishes_outside_support(self, n: int = 1000, seed: int = 0) -> bool:
        if not math.isfinite(self.support_radius):
            return True
        rng = np.random.default_rng(seed)
        dirs = rng.standard_normal((n, self.d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        rad = self.support_radius * (1 + rng.exponential(1.0, size=(n, 1)))
        return bool(np.all(self(self.support_center + rad * dirs) == 0.0))

    # linear structure -------------------------------------------------

    def __add__(self, other: "SmoothField") -> "SmoothField":
        c, r = enclosing_ball([self.support, other.support])
        jac = None
        if self._jac is not None and other._jac is not None:
            jac = lambda X: self._jac(X) + other._jac(X)  # noqa: E731
        return SmoothField(lambda X: self._eval(X) + other._eval(X), self.d, c, r, jac)

    def __sub__(self, other: "SmoothField") -> "SmoothField":
        return self + (-1.0) * other

    def __mul__(self, a: float) -> "SmoothField":
        a = float(a)
        jac = None if self._jac is None else (lambda X: a * self._jac(X))
        return SmoothField(lambda X: a * self._eval(X), self.d, self.support_center, self.support_radius, jac)

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self


def projected_difference(u, x, y):
    """``(u(x) - u(y)) . (x - y) / |x - y|`` for paired rows of ``x`` and ``y``.

    ``u`` is any callable field; ``x`` and ``y`` are points or ``(n, d)``
    arrays.  Coincident points are rejected.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = x - y
    dist = np.linalg.norm(r, axis=-1)
    if np.any(dist == 0):
        raise ValueError("projected difference is undefined on the diagonal x = y")
    return np.sum((u(x) - u(y)) * r, axis=-1) / dist


# --------------------------------------------------------------------------
# bump fields


def bump(x, center, radius):
    """Standard mollifier ``exp(-1 / (1 - |x-c|^2 / rho^2))``, zero outside the ball."""
    t = np.sum((np.asarray(x) - center) ** 2, axis=-1) / radius**2
    out = np.zeros_like(t)
    inside = t < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside]))
    return out


def _bump_and_grad(X, center, radius):
    diff = X - center
    t = np.sum(diff**2, axis=1) / radius**2
    b = np.zeros_like(t)
    db = np.zeros_like(X)
    inside = t < 1
    ti = t[inside]
    b[inside] = np.exp(-1.0 / (1.0 - ti))
    db[inside] = (-b[inside] / (1.0 - ti) ** 2 * 2.0 / radius**2)[:, None] * diff[inside]
    return b, db, diff


@dataclass(frozen=True)
class BumpAtom:
    """``(a + A (x - c)) * bump(x; c, rho)``."""

    center: tuple[float, ...]
    radius: float
    amplitude: tuple[float, ...]
    matrix: tuple[tuple[float, ...], ...] | None = None

    def to_json(self) -> dict:
        out = {"center": list(self.center), "radius": self.radius, "amplitude": list(self.amplitude)}
        if self.matrix is not None:
            out["matrix"] = [list(row) for row in self.matrix]
        return out

    @classmethod
    def from_json(cls, obj) -> "BumpAtom":
        mat = obj.get("matrix")
        return cls(
            tuple(float(v) for v in obj["center"]),
            float(obj["radius"]),
            tuple(float(v) for v in obj["amplitude"]),
            None if mat is None else tuple(tuple(float(v) for v in row) for row in mat),
        )


class BumpField(SmoothField):
    """Superposition of bump atoms; smooth with support in the union of atom balls."""

    def __init__(self, atoms: Sequence[BumpAtom], name: str | None = None):
        if not atoms:
            raise ValueError("a bump field needs at least one atom")
        self.atoms = tuple(atoms)
        d = len(atoms[0].center)
        self._c = [np.asarray(a.center, dtype=float) for a in atoms]
        self._a = [np.asarray(a.amplitude, dtype=float) for a in atoms]
        self._A = [None if a.matrix is None else np.asarray(a.matrix, dtype=float) for a in atoms]
        c, r = enclosing_ball([(a.center, a.radius) for a in atoms])
        super().__init__(self._evaluate, d, c, r, self._jacobian, name)

    def _evaluate(self, X):
        out = np.zeros_like(X)
        for atom, c, a, A in zip(self.atoms, self._c, self._a, self._A):
            b = bump(X, c, atom.radius)
            out += b[:, None] * a
            if A is not None:
                out += b[:, None] * ((X - c) @ A.T)
        return out

    def _jacobian(self, X):
        J = np.zeros((X.shape[0], self.d, self.d))
        for atom, c, a, A in zip(self.atoms, self._c, self._a, self._A):
            b, db, diff = _bump_and_grad(X, c, atom.radius)
            J += a[None, :, None] * db[:, None, :]
            if A is not None:
                J += b[:, None, None] * A[None]
                J += (diff @ A.T)[:, :, None] * db[:, None, :]
        return J

    def to_json(self) -> str:
        return json.dumps([a.to_json() for a in self.atoms], sort_keys=True)

    @classmethod
    def from_json(cls, text) -> "BumpField":
        data = json.loads(text) if isinstance(text, str) else text
        return cls([BumpAtom.from_json(o) for o in data])


def random_bump_field(d: int, n_atoms: int, seed: int, center=None, spread: float = 0.3,
                      radius: tuple[float, float] = (0.3, 0.6), with_matrix: bool = True,
                      name: str | None = None) -> BumpField:
    """Seeded superposition of ``n_atoms`` atoms around ``center``."""
    rng = np.random.default_rng(seed)
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    atoms = []
    for _ in range(n_atoms):
        c = center + spread * rng.uniform(-1, 1, d)
        mat = tuple(map(tuple, rng.standard_normal((d, d)))) if with_matrix else None
        atoms.append(BumpAtom(tuple(c), float(rng.uniform(*radius)), tuple(rng.standard_normal(d)), mat))
    return BumpField(atoms, name=name)


def _rotation_generator(d):
    W = np.zeros((d, d))
    W[0, 1], W[1, 0] = -1.0, 1.0
    return W


def catalog_field(name: str, d: int = 2) -> SmoothField:
    """Standard test fields, all supported in ``B(0, 0.8)``.

    ``radial2d``: ``x b(x)`` (gradient-like); ``skew2d``: ``W x b(x)`` with
    ``W`` a rotation generator; ``bump2d``: constant direction times a bump;
    ``random2d``: seeded three-atom superposition; ``zero``.
    """
    origin = (0.0,) * d
    if name == "zero":
        return SmoothField(lambda X: np.zeros_like(X), d, np.zeros(d), 0.0,
                           lambda X: np.zeros((X.shape[0], d, d)), name="zero")
    if name == "radial2d":
        atom = BumpAtom(origin, 0.8, (0.0,) * d, tuple(map(tuple, np.eye(d))))
    elif name == "skew2d":
        atom = BumpAtom(origin, 0.8, (0.0,) * d, tuple(map(tuple, _rotation_generator(d))))
    elif name == "bump2d":
        atom = BumpAtom(origin, 0.8, (1.0,) + (0.5,) * (d - 1), None)
    elif name == "random2d":
        return random_bump_field(d, 3, seed=20240917, spread=0.25, radius=(0.35, 0.55), name=name)
    else:
        raise ValueError(f"unknown catalog field {name!r}; choose from {CATALOG}")
    return BumpField([atom], name=name)


CATALOG = ("radial2d", "skew2d", "bump2d", "random2d")


# --------------------------------------------------------------------------
# cutoff


class CutoffFunction:
    """Radial cutoff equal to 1 on ``B(x0, plateau * r/2)`` and 0 outside ``B(x0, r/2)``.

    The transition is the quintic smoothstep, so ``|grad psi| <= C(d)/r``
    with ``C(d) = 15 / (4 (1 - plateau))`` (attained at mid-transition).
    """

    def __init__(self, ball: BallDomain, plateau: float = 0.5):
        if not 0 <= plateau < 1:
            raise ValueError("plateau fraction must lie in [0, 1)")
        self.ball = ball
        self.plateau = float(plateau)
        self.center = np.asarray(ball.center)
        self.inner = plateau * ball.radius / 2
        self.outer = ball.radius / 2
        self.gradient_constant = 15.0 / (4.0 * (1.0 - plateau))

    @property
    def support(self):
        return self.center, self.outer

    def _tau(self, rho):
        return np.clip((rho - self.inner) / (self.outer - self.inner), 0.0, 1.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        rho = np.linalg.norm(x - self.center, axis=-1)
        t = self._tau(rho)
        return 1.0 - t**3 * (10 - 15 * t + 6 * t * t)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        diff = x - self.center
        rho = np.linalg.norm(diff, axis=-1)
        t = self._tau(rho)
        dS = 30 * t * t * (1 - t) ** 2 / (self.outer - self.inner)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(rho[..., None] > 0, diff / rho[..., None], 0.0)
        return -dS[..., None] * unit

    def w1inf_norm(self) -> float:
        """``||psi||_inf + ||grad psi||_inf`` (exact for this profile)."""
        return 1.0 + self.gradient_constant / self.ball.radius


# --------------------------------------------------------------------------
# transforms


def straighten_field(u: SmoothField, dom: EpigraphDomain) -> SmoothField:
    """``v(x', x_d) = u(x', f(x') + x_d)``: pull ``u`` back to the half-space."""

    def ev(X):
        Y = np.array(X, copy=True)
        Y[:, -1] += dom.profile(X[:, :-1])
        return u(Y)

    c, r = u.support
    if math.isfinite(r):
        c_new = np.array(c, copy=True)
        c_new[-1] -= dom.profile(c[:-1])
        r_new = r * (1 + dom.lipschitz_M)
    else:
        c_new, r_new = c, r
    return SmoothField(ev, u.d, c_new, r_new, name=None if u.name is None else f"straight({u.name})")


def f_eta_map(w: SmoothField, eta: float) -> SmoothField:
    """``x -> (w'(x', x_d) / eta, w_d(x', eta x_d))``; linear in ``w``."""
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")

    def ev(X):
        out = w(X) / eta
        Y = np.array(X, copy=True)
        Y[:, -1] *= eta
        out[:, -1] = w(Y)[:, -1]
        return out

    c, r = w.support
    c2 = np.array(c, copy=True)
    c2[-1] /= eta
    cb, rb = enclosing_ball([(c, r), (c2, r * max(1.0, 1.0 / eta))])
    return SmoothField(ev, w.d, cb, rb)


def truncate(u: SmoothField, psi: CutoffFunction) -> SmoothField:
    """Pointwise product ``psi u``."""
    (c1, r1), (c2, r2) = u.support, psi.support
    c, r = (c1, r1) if r1 <= r2 else (c2, r2)
    return SmoothField(lambda X: psi(X)[:, None] * u(X), u.d, c, r)


def zero_extend(u: SmoothField, inner, outer, beta: float, n_check: int = 20_000, seed: int = 0) -> SmoothField:
    """Extend ``u`` from ``inner`` by zero to ``outer``.

    ``beta`` is the caller's claimed separation between ``supp u`` and
    ``outer \\ inner``.  It is checked by sampling: points where ``u != 0``
    and points of ``outer \\ inner`` closer than ``beta`` cause a
    ``ValueError``.
    """
    if not beta > 0:
        raise ValueError("separation beta must be positive")
    c, r = u.support
    rng = np.random.default_rng(seed)
    pts = c + (r + beta) * _uniform_ball(rng, n_check, u.d)
    val = np.linalg.norm(u(pts), axis=1)
    supp = pts[(val > 0) & inner.contains(pts)]
    ext = pts[outer.contains(pts) & ~inner.contains(pts)]
    if len(supp) and len(ext):
        dist, _ = cKDTree(supp).query(ext, k=1)
        if np.min(dist) < beta:
            raise ValueError(
                f"sampled exterior point at distance {np.min(dist):.3g} < beta={beta} from supp u"
            )

    def ev(X):
        return u(X) * (inner.contains(X) & outer.contains(X))[:, None]

    return SmoothField(ev, u.d, c, r)


def rescale(u: SmoothField, x0, r: float, s: float) -> SmoothField:
    """``v(x) = u(x0 + r x) / r^s``; maps a field on ``B_r(x0)`` to one on ``B_1(0)``."""
    if not r > 0:
        raise ValueError("scale r must be positive")
    x0 = np.asarray(x0, dtype=float)
    c, R = u.support
    jac = None
    if u.has_jacobian:
        jac = lambda X: u.jacobian(x0 + r * X) * (r / r**s)  # noqa: E731
    return SmoothField(lambda X: u(x0 + r * X) / r**s, u.d, (c - x0) / r, R / r, jac)


def rigid_transform(u: SmoothField, T) -> SmoothField:
    """``R u(T^{-1} x)`` for a rigid motion ``T(x) = R x + t``."""
    c, r = u.support
    return SmoothField(lambda X: u(T.inverse(X)) @ T.rotation.T, u.d, T(c), r)


def _uniform_ball(rng, n, d):
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.uniform(0, 1, (n, 1)) ** (1.0 / d)
