"""Projected-difference and Gagliardo seminorms, L^p norms and the Hardy-weighted integral.

Everything is returned as a p-th power; roots are taken only when reports
are assembled.  For a field vanishing outside its support ball ``S`` the
double integral over ``Omega x Omega`` is rewritten as

    int_{Omega cap S} int_{Omega} g(x, y) (1 + [y not in S]) dy dx,

which is exact for symmetric integrands that vanish when both points lie
outside ``S``.  This keeps ``x`` on a bounded set even for unbounded
domains.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domains import HypothesisUnmet, ball_volume
from .quadrature import (
    Estimate,
    PairSamplingPlan,
    dense_oracle,
    extrapolated_oracle,
    draw_pairs,
    estimate_double_integrals,
    stream,
    _uniform_ball,
)

__all__ = [
    "SeminormParams",
    "x_integrand",
    "w_integrand",
    "seminorm_estimates",
    "x_seminorm_p",
    "w_seminorm_p",
    "lp_norm_p",
    "hardy_weighted_p",
    "dense_seminorm_oracle",
    "crn_dominance",
]


@dataclass(frozen=True)
class SeminormParams:
    s: float
    p: float

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")

    @property
    def sp(self) -> float:
        return self.s * self.p

    def require_sp_not_one(self):
        if abs(self.sp - 1.0) <= 1e-9:
            raise HypothesisUnmet(f"sp = {self.sp} but the inequality requires sp != 1")


class _PairKernel:
    """Seminorm integrand ``g(x, y)``; ``from_values`` reuses cached field values."""

    def __init__(self, u, params: SeminormParams):
        self.field = u
        self.p = params.p
        self.sp = params.sp

    def __call__(self, x, y):
        return self.from_values(x, y, self.field(x), self.field(y))


class _XKernel(_PairKernel):
    def from_values(self, x, y, ux, uy):
        r = x - y
        dist = np.linalg.norm(r, axis=1)
        proj = np.sum((ux - uy) * r, axis=1) / dist
        return np.abs(proj) ** self.p / dist ** (x.shape[1] + self.sp)


def _norm(v):
    # rescaled so that tiny differences do not underflow when squared
    m = np.max(np.abs(v), axis=1)
    safe = np.where(m > 0, m, 1.0)
    return m * np.linalg.norm(v / safe[:, None], axis=1)


class _WKernel(_PairKernel):
    def from_values(self, x, y, ux, uy):
        dist = np.linalg.norm(x - y, axis=1)
        return _norm(ux - uy) ** self.p / dist ** (x.shape[1] + self.sp)


def x_integrand(u, params: SeminormParams):
    """``|(u(x)-u(y)) . (x-y)/|x-y||^p / |x-y|^{d+sp}``."""
    return _XKernel(u, params)


def w_integrand(u, params: SeminormParams):
    """``|u(x)-u(y)|^p / |x-y|^{d+sp}``."""
    return _WKernel(u, params)


def _doubled(g, center, radius):
    r2 = radius * radius

    def h(x, y):
        outside = np.sum((y - center) ** 2, axis=1) >= r2
        return g(x, y) * (1.0 + outside)

    return h


def seminorm_estimates(u, omega, params: SeminormParams, plan: PairSamplingPlan | None = None,
                       seed: int = 0, which=("x", "w")) -> dict[str, Estimate]:
    """X and/or W seminorm p-th powers of ``u`` over ``omega`` on common random pairs."""
    plan = plan or PairSamplingPlan()
    if omega.bounding_ball() is None and plan.tail_exponent is None:
        plan = plan.replace(tail_exponent=params.sp)
    c, r = u.support
    makers = {"x": x_integrand, "w": w_integrand}
    gs = {k: _doubled(makers[k](u, params), c, r) for k in which}
    return estimate_double_integrals(gs, omega, omega, plan, seed, x_ball=(c, r))


def x_seminorm_p(u, omega, params, plan=None, seed=0) -> Estimate:
    """``[u]_X^p`` over ``omega``."""
    return seminorm_estimates(u, omega, params, plan, seed, which=("x",))["x"]


def w_seminorm_p(u, omega, params, plan=None, seed=0) -> Estimate:
    """``|u|_W^p`` over ``omega``."""
    return seminorm_estimates(u, omega, params, plan, seed, which=("w",))["w"]


def lp_norm_p(u, omega, p: float, n_samples: int = 100_000, seed: int = 0) -> Estimate:
    """``int_omega |u|^p`` by uniform sampling of the support ball."""
    c, r = u.support
    if r == 0:
        return Estimate(0.0, 0.0, 0, seed)
    rng = stream(seed, 11)
    x = c + r * _uniform_ball(rng, n_samples, u.d)
    vals = ball_volume(u.d, r) * omega.contains(x) * np.linalg.norm(u(x), axis=1) ** p
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_samples)), n_samples, seed)


def hardy_weighted_p(g, params: SeminormParams, n_samples: int = 100_000, seed: int = 0) -> Estimate:
    """``int_{x_d > 0} |g(x)|^p / x_d^{sp} dx`` for ``g`` supported in the open half-space.

    Rejects fields that are nonzero within ``1e-6`` of ``{x_d = 0}``
    (checked on a dense sample of that slab over the support footprint).
    """
    c, r = g.support
    if r == 0:
        return Estimate(0.0, 0.0, 0, seed)
    rng = stream(seed, 13)
    d = g.d
    slab = np.empty((20_000, d))
    slab[:, :-1] = c[:-1] + r * rng.uniform(-1, 1, (20_000, d - 1))
    slab[:, -1] = rng.uniform(0, 1e-6, 20_000)
    if np.any(np.linalg.norm(g(slab), axis=1) > 0):
        raise ValueError("field support touches {x_d = 0}; the Hardy weight is not integrable there")
    x = c + r * _uniform_ball(rng, n_samples, d)
    up = x[:, -1] > 0
    vals = np.zeros(n_samples)
    xu = x[up]
    vals[up] = np.linalg.norm(g(xu), axis=1) ** params.p / xu[:, -1] ** params.sp
    vals *= ball_volume(d, r)
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_samples)), n_samples, seed)


def dense_seminorm_oracle(u, omega, params: SeminormParams, n_per_axis: int,
                          which=("x", "w"), extrapolate: bool = False):
    """Brute-force midpoint sums of the seminorms over ``omega x omega``.

    With ``extrapolate`` the grids ``n`` and ``2n`` are combined by
    Richardson extrapolation with the diagonal order ``min(p(1-s), 2)``.
    Returns a dict keyed like ``which``.
    """
    makers = {"x": x_integrand, "w": w_integrand}
    gs = {k: makers[k](u, params) for k in which}
    if not extrapolate:
        return dense_oracle(gs, omega, omega, n_per_axis)
    order = min(params.p * (1.0 - params.s), 2.0)
    return extrapolated_oracle(gs, omega, omega, n_per_axis, order)[0]


def crn_dominance(u, omega, params: SeminormParams, n_pairs: int = 100_000, seed: int = 0):
    """Per-sample comparison of the X and W integrands on one pair stream.

    Returns ``(x_values, w_values, weights)``; ``x_values <= w_values`` must
    hold sample by sample (Cauchy-Schwarz).
    """
    c, r = u.support
    plan = PairSamplingPlan(tail_exponent=params.sp if omega.bounding_ball() is None else None)
    x, y, w = draw_pairs(omega, omega, n_pairs, seed, plan, x_ball=(c, r))
    return x_integrand(u, params)(x, y), w_integrand(u, params)(x, y), w
