"""Two-reflection extension of a vector field from an epigraph to the whole space.

Below the graph the tangential components are combined from the reflections
``u(Phi_lambda x)`` and ``u(Phi_mu x)`` with weights ``(k, l)``, the normal
component with weights ``(m, n)``.  The weights solve

    k + l = 1,   m + n = 1,   lambda k = -m,   mu l = -n,

which makes the extension continuous across the graph and keeps the
projected difference under control.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domains import M0, EpigraphDomain, HypothesisUnmet, WholeSpace, phi_eta
from .fields import SmoothField, enclosing_ball
from .quadrature import PairSamplingPlan
from .seminorms import SeminormParams, lp_norm_p, seminorm_estimates

__all__ = [
    "DegenerateParameters",
    "ReflectionConstants",
    "solve_constants",
    "reflect_component",
    "extend",
    "ExtensionReport",
    "extension_bound_check",
    "boundary_trace_errors",
]


class DegenerateParameters(ValueError):
    """The reflection system is singular (``lambda == mu``)."""


@dataclass(frozen=True)
class ReflectionConstants:
    lam: float
    mu: float
    k: float
    l: float  # noqa: E741
    m: float
    n: float

    def residuals(self) -> np.ndarray:
        return np.array([
            self.k + self.l - 1.0,
            self.m + self.n - 1.0,
            self.lam * self.k + self.m,
            self.mu * self.l + self.n,
        ])

    def to_json(self) -> dict:
        return {"lambda": self.lam, "mu": self.mu, "k": self.k, "l": self.l, "m": self.m, "n": self.n}


def solve_constants(lam: float = 1.0, mu: float = 2.0) -> ReflectionConstants:
    """Unique solution of the 4x4 reflection system for ``lam != mu``."""
    if not (lam > 0 and mu > 0):
        raise ValueError(f"lambda and mu must be positive, got {lam}, {mu}")
    if lam == mu:
        raise DegenerateParameters(f"lambda = mu = {lam}: the reflection constants are not determined")
    # unknowns (k, l, m, n)
    A = np.array([
        [1.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 1.0],
        [lam, 0.0, 1.0, 0.0],
        [0.0, mu, 0.0, 1.0],
    ])
    b = np.array([1.0, 1.0, 0.0, 0.0])
    k, l, m, n = np.linalg.solve(A, b)  # noqa: E741
    return ReflectionConstants(float(lam), float(mu), float(k), float(l), float(m), float(n))


def reflect_component(u, dom: EpigraphDomain, eta: float, j: int, x):
    """``u_j(x', f(x') + eta (f(x') - x_d))`` for ``x`` strictly below the graph."""
    return u(phi_eta(dom, eta, x))[..., j]


def _reflected_support(c, r, dom: EpigraphDomain, eta: float):
    """A ball containing ``Phi_eta^{-1}(B(c, r) cap D)``."""
    M = dom.lipschitz_M
    fc = float(dom.profile(np.asarray(c[:-1])[None, :])[0])
    top = max(0.0, c[-1] - fc + r * (1 + M))
    lo, hi = fc - M * r - top / eta, fc + M * r
    center = np.array(c, copy=True)
    center[-1] = (lo + hi) / 2
    return center, math.hypot(r, (hi - lo) / 2)


def extend(u: SmoothField, dom: EpigraphDomain, constants: ReflectionConstants) -> SmoothField:
    """The extension ``E(u)``: ``u`` on the closure of D, reflections below it."""
    lam, mu = constants.lam, constants.mu
    tangential = np.array([constants.k, constants.l])
    normal = np.array([constants.m, constants.n])

    def ev(X):
        out = np.zeros_like(X)
        h = dom.height(X)
        above = h >= 0
        if np.any(above):
            out[above] = u(X[above])
        if np.any(~above):
            Z = X[~above]
            fz = Z[:, -1] + (-h[~above])  # f(x') recovered from the height
            ZL = np.array(Z, copy=True)
            ZM = np.array(Z, copy=True)
            ZL[:, -1] = fz + lam * (fz - Z[:, -1])
            ZM[:, -1] = fz + mu * (fz - Z[:, -1])
            uL, uM = u(ZL), u(ZM)
            E = tangential[0] * uL + tangential[1] * uM
            E[:, -1] = normal[0] * uL[:, -1] + normal[1] * uM[:, -1]
            out[~above] = E
        return out

    c, r = u.support
    if math.isfinite(r):
        cb, rb = enclosing_ball([(c, r), _reflected_support(c, r, dom, lam), _reflected_support(c, r, dom, mu)])
    else:
        cb, rb = c, r
    return SmoothField(ev, u.d, cb, rb, name=None if u.name is None else f"E({u.name})")


def boundary_trace_errors(u: SmoothField, dom: EpigraphDomain, constants: ReflectionConstants,
                          offsets=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6), n_points: int = 200, seed: int = 0):
    """Max over boundary points of ``|E(u)(x', f(x') - t) - u(x', f(x'))|`` for each offset ``t``."""
    rng = np.random.default_rng(seed)
    c, r = u.support
    xp = c[:-1] + r * rng.uniform(-1, 1, (n_points, u.d - 1))
    trace = np.concatenate([xp, dom.profile(xp)[:, None]], axis=1)
    Eu = extend(u, dom, constants)
    ref = u(trace)
    errs = []
    for t in offsets:
        below = np.array(trace, copy=True)
        below[:, -1] -= t
        errs.append(float(np.max(np.linalg.norm(Eu(below) - ref, axis=1))))
    return np.array(offsets, dtype=float), np.array(errs)


@dataclass(frozen=True)
class ExtensionReport:
    lipschitz_M: float
    constants: ReflectionConstants
    lhs_x: float
    lhs_lp: float
    rhs_x: float
    rhs_w: float
    rhs_lp: float
    ratio: float
    ratio_std_error: float
    budget: int
    seed: int

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "constants"}
        out["constants"] = self.constants.to_json()
        return out


def extension_bound_check(u: SmoothField, dom: EpigraphDomain, constants: ReflectionConstants,
                          params: SeminormParams, plan: PairSamplingPlan | None = None,
                          seed: int = 0, n_lp: int = 200_000) -> ExtensionReport:
    """Empirical ratio for the extension bound, in p-th power form.

    ``LHS = [Eu]_X^p + ||Eu||_p^p`` over the whole space and
    ``RHS = [u]_X^p + ||u||_p^p + M^p (|u|_W^p + ||u||_p^p)`` over D.
    """
    M = dom.lipschitz_M
    if M >= M0:
        raise HypothesisUnmet(f"Lipschitz constant {M} is not below {M0}")
    plan = plan or PairSamplingPlan()
    p = params.p
    Eu = extend(u, dom, constants)
    whole = WholeSpace(u.d)
    lx = seminorm_estimates(Eu, whole, params, plan, seed, which=("x",))["x"]
    ll = lp_norm_p(Eu, whole, p, n_lp, seed)
    rd = seminorm_estimates(u, dom, params, plan, seed + 1)
    rl = lp_norm_p(u, dom, p, n_lp, seed + 1)
    lhs = lx.value + ll.value
    rhs = rd["x"].value + rl.value + M**p * (rd["w"].value + rl.value)
    if rhs <= 0:
        raise ValueError("the field vanishes on D; the ratio is undefined")
    ratio = lhs / rhs
    lhs_se = math.hypot(lx.std_error, ll.std_error)
    rhs_se = math.sqrt(rd["x"].std_error ** 2 + (1 + M**p) ** 2 * rl.std_error**2 + (M**p * rd["w"].std_error) ** 2)
    se = ratio * math.hypot(lhs_se / lhs if lhs else 0.0, rhs_se / rhs)
    return ExtensionReport(M, constants, lx.value, ll.value, rd["x"].value, rd["w"].value, rl.value,
                           ratio, se, plan.budget, seed)
