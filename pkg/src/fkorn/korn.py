"""Empirical checks of the fractional Korn inequality and its supporting estimates.

Every check returns ratios of p-th powers.  A Korn ratio
``|u|_W^p / ([u]_X^p + ||u||_p^p)`` evaluated on finitely many fields is a
lower bound for the (unknown) best constant; nothing here certifies an
upper bound.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .domains import M0, EpigraphDomain, HypothesisUnmet, domain_to_json, halfspace
from .fields import BumpAtom, BumpField, SmoothField, straighten_field
from .quadrature import Estimate, PairSamplingPlan, estimate_point_integral
from .seminorms import SeminormParams, lp_norm_p, seminorm_estimates

__all__ = [
    "KornRecord",
    "KornReport",
    "korn_record",
    "korn_ratio",
    "max_ratio_search",
    "epigraph_korn_check",
    "straightening_bound_check",
    "ScalingRow",
    "ball_scaling_check",
    "JBoundReport",
    "j_integrand",
    "j_bound_check",
]


@dataclass(frozen=True)
class KornRecord:
    field_id: str
    x_p: float
    w_p: float
    lp_p: float
    ratio: float


@dataclass
class KornReport:
    domain: dict
    s: float
    p: float
    records: list[KornRecord]
    max_ratio: float
    trace: list[float] = field(default_factory=list)
    iterations: int = 0
    seed: int = 0
    status: str = "ok"
    initial_ratio: float | None = None

    def to_json(self) -> dict:
        return asdict(self)


def korn_record(u: SmoothField, omega, params: SeminormParams, plan: PairSamplingPlan | None = None,
                seed: int = 0, n_lp: int = 100_000, field_id: str | None = None) -> KornRecord:
    est = seminorm_estimates(u, omega, params, plan, seed)
    lp = lp_norm_p(u, omega, params.p, n_lp, seed)
    den = est["x"].value + lp.value
    if not den > 0:
        raise ValueError("the field vanishes on the domain; the Korn ratio is undefined")
    return KornRecord(field_id or u.name or "field", est["x"].value, est["w"].value, lp.value,
                      est["w"].value / den)


def korn_ratio(u: SmoothField, omega, params: SeminormParams, plan: PairSamplingPlan | None = None,
               seed: int = 0) -> float:
    """``|u|_W^p / ([u]_X^p + ||u||_p^p)`` on common random pairs."""
    return korn_record(u, omega, params, plan, seed).ratio


# --------------------------------------------------------------------------
# search over bump fields


def _decode(theta, d, n_atoms, center, radius):
    """Unconstrained vector -> atoms with centers in the domain ball and bounded radii."""
    per = 1 + 2 * d + d * d
    atoms = []
    for a in range(n_atoms):
        t = theta[a * per:(a + 1) * per]
        c = center + radius * np.tanh(t[:d])
        rad = radius * (0.15 + 0.85 / (1 + math.exp(-t[d])))
        amp = t[d + 1:2 * d + 1]
        mat = t[2 * d + 1:].reshape(d, d)
        atoms.append(BumpAtom(tuple(c), float(rad), tuple(amp), tuple(map(tuple, mat))))
    return atoms


def max_ratio_search(omega, params: SeminormParams, n_atoms: int = 1, budget: int = 20_000,
                     seed: int = 0, restarts: int = 5, max_iter: int = 200,
                     n_lp: int = 20_000) -> KornReport:
    """Nelder-Mead restarts maximizing the Korn ratio over bump-atom parameters.

    All evaluations share one pair stream (fixed seed), so the objective is a
    deterministic function of the parameters.  ``trace`` is the best ratio
    seen after each evaluation.
    """
    d = len(omega.center)
    per = 1 + 2 * d + d * d
    dim = per * n_atoms
    if dim > 40:
        raise ValueError(f"family dimension {dim} exceeds 40")
    center, radius = np.asarray(omega.center, float), float(omega.radius)
    plan = PairSamplingPlan(budget=budget)
    rng = np.random.default_rng(seed)
    trace: list[float] = []
    best = {"ratio": -math.inf, "theta": None}
    evals = 0

    def objective(theta):
        nonlocal evals
        evals += 1
        u = BumpField(_decode(theta, d, n_atoms, center, radius))
        try:
            r = korn_ratio_fast(u)
        except ValueError:
            r = 0.0
        if r > best["ratio"]:
            best.update(ratio=r, theta=np.array(theta))
        trace.append(best["ratio"])
        return -r

    def korn_ratio_fast(u):
        est = seminorm_estimates(u, omega, params, plan, seed)
        lp = lp_norm_p(u, omega, params.p, n_lp, seed)
        den = est["x"].value + lp.value
        if not den > 0:
            raise ValueError("zero field")
        return est["w"].value / den

    initial = None
    status = "ok"
    for _ in range(restarts):
        theta0 = rng.normal(0.0, 1.0, dim)
        r0 = -objective(theta0)
        initial = r0 if initial is None else initial
        res = minimize(objective, theta0, method="Nelder-Mead",
                       options={"maxiter": max_iter, "xatol": 1e-4, "fatol": 1e-6})
        if not res.success:
            status = "max_iter_reached"
    atoms = _decode(best["theta"], d, n_atoms, center, radius)
    u = BumpField(atoms, name="search_best")
    rec = korn_record(u, omega, params, plan, seed, n_lp, field_id="search_best")
    return KornReport(domain_to_json(omega), params.s, params.p, [rec], max(rec.ratio, best["ratio"]),
                      trace, evals, seed, status, initial)


# --------------------------------------------------------------------------
# epigraphs


def _require_small_M(dom: EpigraphDomain):
    if dom.lipschitz_M >= M0:
        raise HypothesisUnmet(f"Lipschitz constant {dom.lipschitz_M} is not below {M0}")


def epigraph_korn_check(u: SmoothField, dom: EpigraphDomain, params: SeminormParams,
                        plan: PairSamplingPlan | None = None, seed: int = 0) -> Estimate:
    """``|u|_W^p / [u]_X^p`` over an epigraph (no lower-order term).

    The returned estimate carries a delta-method standard error.
    """
    params.require_sp_not_one()
    _require_small_M(dom)
    est = seminorm_estimates(u, dom, params, plan, seed)
    x, w = est["x"], est["w"]
    if not x.value > 0:
        raise ValueError("[u]_X vanishes on the domain; the ratio is undefined")
    r = w.value / x.value
    se = r * math.hypot(w.std_error / w.value if w.value else 0.0, x.std_error / x.value)
    return Estimate(r, se, x.n_samples, seed)


def straightening_bound_check(u: SmoothField, dom: EpigraphDomain, params: SeminormParams,
                              plan: PairSamplingPlan | None = None, seed: int = 0) -> dict:
    """``[v]_X^p`` on the half-space against ``[u]_X^p + M^p |u|_W^p`` on D, ``v = u(x', f(x') + x_d)``."""
    _require_small_M(dom)
    v = straighten_field(u, dom)
    lhs = seminorm_estimates(v, halfspace(u.d), params, plan, seed, which=("x",))["x"]
    rhs = seminorm_estimates(u, dom, params, plan, seed)
    M = dom.lipschitz_M
    den = rhs["x"].value + M**params.p * rhs["w"].value
    if not den > 0:
        raise ValueError("the field vanishes on D; the ratio is undefined")
    return {
        "lipschitz_M": M,
        "v_x_p": lhs.value,
        "u_x_p": rhs["x"].value,
        "u_w_p": rhs["w"].value,
        "ratio": lhs.value / den,
    }


# --------------------------------------------------------------------------
# balls of radius r


@dataclass(frozen=True)
class ScalingRow:
    r: float
    x_u: float
    x_v_scaled: float
    x_sigma: float
    w_u: float
    w_v_scaled: float
    w_sigma: float
    lp_u: float
    lp_v_scaled: float
    lp_sigma: float
    ratio: float

    def identities_hold(self, k: float = 3.0) -> bool:
        return (abs(self.x_u - self.x_v_scaled) <= k * self.x_sigma
                and abs(self.w_u - self.w_v_scaled) <= k * self.w_sigma
                and abs(self.lp_u - self.lp_v_scaled) <= k * self.lp_sigma)


def ball_scaling_check(v: SmoothField, params: SeminormParams, radii=(0.5, 1.0, 2.0, 4.0), x0=None,
                       plan: PairSamplingPlan | None = None, seed: int = 0, n_lp: int = 100_000):
    """Transfer between ``B_r(x0)`` and ``B_1(0)`` for ``u(x) = r^s v((x - x0)/r)``.

    Checks ``[u]^p = r^d [v]^p`` for both seminorms and
    ``||u||_p^p = r^{d+sp} ||v||_p^p`` using independent streams for ``u``
    and ``v``, and reports ``|u|_W^p / ([u]_X^p + r^{-sp} ||u||_p^p)``,
    which should not depend on ``r``.
    """
    from .domains import BallDomain

    d, s, sp = v.d, params.s, params.sp
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    unit = BallDomain(tuple(np.zeros(d)), 1.0)
    ev = seminorm_estimates(v, unit, params, plan, seed)
    lv = lp_norm_p(v, unit, params.p, n_lp, seed)
    rows = []
    for i, r in enumerate(radii):
        c, R = v.support
        u = SmoothField(lambda X, r=r: r**s * v((X - x0) / r), d, x0 + r * c, r * R)
        ball = BallDomain(tuple(x0), float(r))
        eu = seminorm_estimates(u, ball, params, plan, seed + 1000 + i)
        lu = lp_norm_p(u, ball, params.p, n_lp, seed + 1000 + i)
        sx = math.hypot(eu["x"].std_error, r**d * ev["x"].std_error)
        sw = math.hypot(eu["w"].std_error, r**d * ev["w"].std_error)
        sl = math.hypot(lu.std_error, r ** (d + sp) * lv.std_error)
        ratio = eu["w"].value / (eu["x"].value + r**-sp * lu.value)
        rows.append(ScalingRow(r, eu["x"].value, r**d * ev["x"].value, sx, eu["w"].value,
                               r**d * ev["w"].value, sw, lu.value, r ** (d + sp) * lv.value, sl, ratio))
    return rows


# --------------------------------------------------------------------------
# boundary-distance bound for the J integral


def j_integrand(dom: EpigraphDomain, x, params: SeminormParams):
    """``y -> |y_d - f(x')|^p / (|x'-y'|^2 + (y_d - f(x') + x_d - f(x'))^2)^{(d+(s+1)p)/2}``."""
    x = np.asarray(x, dtype=float)
    d, p, s = x.size, params.p, params.s
    fx = float(dom.profile(x[None, :-1])[0])
    t = x[-1] - fx
    expo = (d + (s + 1) * p) / 2

    def g(y):
        a = y[:, -1] - fx
        return np.abs(a) ** p / (np.sum((y[:, :-1] - x[:-1]) ** 2, axis=1) + (a + t) ** 2) ** expo

    return g


@dataclass(frozen=True)
class JBoundReport:
    distances: tuple[float, ...]
    values: tuple[float, ...]
    std_errors: tuple[float, ...]
    products: tuple[float, ...]
    slope: float
    expected_slope: float
    sup_product: float
    converged: bool

    def to_json(self) -> dict:
        return asdict(self)


def j_bound_check(dom: EpigraphDomain, params: SeminormParams, base_point=None,
                  distances=(1e-1, 1e-2, 1e-3), plan: PairSamplingPlan | None = None,
                  seed: int = 0, rel_tol: float = 0.05) -> JBoundReport:
    """Integrate ``J(x)`` at points ``x = (x', f(x') + t)`` and fit ``log J`` against ``log t``.

    The kernel peaks at ``(x', f(x') - t)``, which lies below the graph at
    distance at least ``t / sqrt(1 + M^2)`` from D; shells start there.
    ``converged`` is False when any estimate has relative error above
    ``rel_tol``.
    """
    _require_small_M(dom)
    d = dom.d
    base = np.zeros(d - 1) if base_point is None else np.asarray(base_point, dtype=float)
    plan = (plan or PairSamplingPlan(budget=100_000)).replace(tail_exponent=params.sp)
    fx = float(dom.profile(base[None, :])[0])
    M = dom.lipschitz_M
    vals, ses = [], []
    for i, t in enumerate(distances):
        x = np.append(base, fx + t)
        center = np.append(base, fx - t)
        est = estimate_point_integral(j_integrand(dom, x, params), center, dom, plan, seed,
                                      r_inner=0.999 * t / math.sqrt(1 + M * M), tag=40 + i)
        vals.append(est.value)
        ses.append(est.std_error)
    t = np.asarray(distances, dtype=float)
    v = np.asarray(vals)
    slope = float(np.polyfit(np.log(t), np.log(v), 1)[0])
    prods = v * t**params.sp
    converged = bool(np.all(np.asarray(ses) <= rel_tol * v))
    return JBoundReport(tuple(map(float, t)), tuple(vals), tuple(ses), tuple(map(float, prods)), slope,
                        -params.sp, float(prods.max()), converged)
