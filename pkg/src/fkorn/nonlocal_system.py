"""Discrete nonlocal p-Laplace system for vector fields, solved by energy minimization.

The unknown is a nodal field on a regular grid over a box
containing the ball ``Omega``; nodes outside ``Omega`` are frozen at zero.
With ``w = h^d`` the discrete energy is

    E(U) = (1/p) sum_{i != j} w^2 A_ij |D_ij|^p / |x_i - x_j|^{d+sp} - sum_i w f_i . U_i,
    D_ij = (U_i - U_j) . (x_i - x_j) / |x_i - x_j|,

and its Euclidean gradient is the discrete weak form tested against nodal
indicator fields.  Only pairs with at least one free node enter.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .domains import BallDomain
from .fields import BumpAtom, BumpField, CutoffFunction, SmoothField, random_bump_field, truncate
from .quadrature import (
    Estimate,
    PairSamplingPlan,
    _uniform_ball,
    estimate_double_integrals,
    estimate_tail_integral,
    stream,
)
from .seminorms import SeminormParams, seminorm_estimates, w_integrand

__all__ = [
    "Coefficient",
    "NonlocalProblem",
    "GridSpec",
    "DiscreteField",
    "SolveReport",
    "LineSearchFailure",
    "force_field",
    "discretize",
    "energy",
    "energy_gradient",
    "solve",
    "dense_linear_solve",
    "weak_residual",
    "residual_panel",
    "caccioppoli_check",
    "poincare_sobolev_check",
    "dual_pair_diagnostic",
    "nu_density",
]


class LineSearchFailure(RuntimeError):
    """Backtracking could not decrease the energy along a descent direction."""


# --------------------------------------------------------------------------
# coefficients


def _mix64(k):
    """splitmix64 finalizer on uint64 arrays."""
    k = np.asarray(k, dtype=np.uint64)
    with np.errstate(over="ignore"):
        k = (k ^ (k >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        k = (k ^ (k >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        k = k ^ (k >> np.uint64(31))
    return k


@dataclass(frozen=True)
class Coefficient:
    """Symmetric measurable coefficient with ``1/Lambda <= A <= Lambda``.

    ``checkerboard``: ``Lambda^{+1}`` when the cell-index sums of ``x`` and
    ``y`` have equal parity, ``Lambda^{-1}`` otherwise.
    ``random``: ``Lambda^u`` with ``u`` in ``[-1, 1]`` hashed from the
    unordered pair of cells and the seed.
    """

    kind: str = "constant"
    Lambda: float = 1.0
    seed: int = 0
    cell: float = 0.25

    KINDS = ("constant", "checkerboard", "random")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown coefficient kind {self.kind!r}; choose from {self.KINDS}")
        if not self.Lambda >= 1.0:
            raise ValueError("ellipticity bound Lambda must be at least 1")
        if not self.cell > 0:
            raise ValueError("cell size must be positive")

    def _cells(self, x):
        return np.floor(np.asarray(x, dtype=float) / self.cell).astype(np.int64)

    def __call__(self, x, y):
        x = np.atleast_2d(x)
        y = np.atleast_2d(y)
        n = max(len(x), len(y))
        if self.kind == "constant":
            return np.full(n, self.Lambda)
        cx, cy = self._cells(x), self._cells(y)
        if self.kind == "checkerboard":
            same = (cx.sum(axis=1) - cy.sum(axis=1)) % 2 == 0
            return np.where(same, self.Lambda, 1.0 / self.Lambda)
        kx = _mix64(np.zeros(len(cx), dtype=np.uint64) + self._key(cx))
        ky = _mix64(np.zeros(len(cy), dtype=np.uint64) + self._key(cy))
        lo, hi = np.minimum(kx, ky), np.maximum(kx, ky)
        with np.errstate(over="ignore"):
            h = _mix64(lo * np.uint64(0x9E3779B97F4A7C15) + _mix64(hi + np.uint64(self.seed)))
        u = (h >> np.uint64(11)).astype(np.float64) / float(1 << 53) * 2.0 - 1.0
        return self.Lambda**u

    @staticmethod
    def _key(c):
        k = np.zeros(len(c), dtype=np.uint64)
        with np.errstate(over="ignore"):
            for j in range(c.shape[1]):
                k = _mix64(k + (c[:, j] + (1 << 31)).astype(np.uint64))
        return k

    def to_json(self) -> dict:
        return {"kind": self.kind, "Lambda": self.Lambda, "seed": self.seed, "cell": self.cell}


# --------------------------------------------------------------------------
# problem data


def force_field(name: str, omega: BallDomain) -> SmoothField:
    """Named forces: ``zero``, ``constant`` (on all of R^d) and ``bump`` (supported in Omega)."""
    d = omega.d
    c = np.asarray(omega.center, dtype=float)
    if name == "zero":
        return SmoothField(lambda X: np.zeros_like(X), d, c, 0.0, name="zero")
    if name == "constant":
        vec = np.array([1.0] + [0.5] * (d - 1))
        return SmoothField(lambda X: np.broadcast_to(vec, X.shape).copy(), d, c, math.inf, name="constant")
    if name == "bump":
        amp = (2.0,) + (-1.0,) * (d - 1)
        return BumpField([BumpAtom(tuple(c), 0.9 * omega.radius, amp, None)], name="bump")
    raise ValueError(f"unknown force {name!r}; choose from zero, constant, bump")


@dataclass(frozen=True)
class NonlocalProblem:
    d: int
    params: SeminormParams
    omega: BallDomain
    coefficient: Coefficient
    force: SmoothField
    force_name: str = ""

    def __post_init__(self):
        if self.params.p < 2:
            raise ValueError("the solver needs p >= 2")
        if not self.params.sp < self.d:
            raise ValueError("need sp < d")
        self.params.require_sp_not_one()
        if self.omega.d != self.d:
            raise ValueError("dimension mismatch between problem and domain")

    @property
    def p_prime(self) -> float:
        p = self.params.p
        return p / (p - 1.0)

    @property
    def p_prime_star(self) -> float:
        """Integrability exponent of the force, ``p' d / (d + p' s)``."""
        pp = self.p_prime
        return pp * self.d / (self.d + pp * self.params.s)


@dataclass(frozen=True)
class GridSpec:
    """``n`` nodes per axis spanning the box ``center +- (1 + margin) R`` (end points included)."""

    n: int = 17
    margin: float = 0.5

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("need at least 3 nodes per axis")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")


@dataclass
class DiscreteField:
    nodes: np.ndarray
    values: np.ndarray
    free: np.ndarray
    h: float
    shape: tuple[int, ...]
    lo: np.ndarray

    @property
    def weight(self) -> float:
        return self.h ** self.nodes.shape[1]

    @property
    def d(self) -> int:
        return self.nodes.shape[1]

    def copy(self, values=None) -> "DiscreteField":
        v = self.values.copy() if values is None else np.asarray(values, dtype=float)
        return DiscreteField(self.nodes, v, self.free, self.h, self.shape, self.lo)

    def as_field(self, support_radius: float | None = None) -> SmoothField:
        """Multilinear interpolant of the nodal values, zero beyond the outer nodes."""
        axes = [self.lo[i] + self.h * np.arange(self.shape[i]) for i in range(self.d)]
        grid_vals = self.values.reshape(*self.shape, self.d)
        interp = RegularGridInterpolator(axes, grid_vals, bounds_error=False, fill_value=0.0)
        free_nodes = self.nodes[self.free]
        if support_radius is None:
            c = free_nodes.mean(axis=0) if len(free_nodes) else self.nodes.mean(axis=0)
            rad = np.max(np.linalg.norm(free_nodes - c, axis=1)) if len(free_nodes) else 0.0
            support_radius = rad + self.h * math.sqrt(self.d)
        else:
            c = self.nodes.mean(axis=0)
        return SmoothField(lambda X: interp(X), self.d, c, support_radius, name="discrete")


def discretize(prob: NonlocalProblem, grid: GridSpec) -> DiscreteField:
    c = np.asarray(prob.omega.center, dtype=float)
    half = (1.0 + grid.margin) * prob.omega.radius
    lo = c - half
    h = 2 * half / (grid.n - 1)
    axes = [lo[i] + h * np.arange(grid.n) for i in range(prob.d)]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, prob.d)
    free = prob.omega.contains(nodes)
    return DiscreteField(nodes, np.zeros_like(nodes), free, h, (grid.n,) * prob.d, lo)


# --------------------------------------------------------------------------
# pair structure


@dataclass
class _Pairs:
    i: np.ndarray
    j: np.ndarray
    e: np.ndarray  # unit vectors x_i - x_j
    K: np.ndarray  # w^2 A_ij / |x_i - x_j|^{d+sp}


_PAIR_CACHE: dict = {}


def _pairs(U: DiscreteField, prob: NonlocalProblem) -> _Pairs:
    key = (id(U.nodes), id(U.free), id(prob))
    hit = _PAIR_CACHE.get(key)
    if hit is not None and hit[0] is U.nodes and hit[1] is prob:
        return hit[2]
    N = len(U.nodes)
    i, j = np.triu_indices(N, k=1)
    keep = U.free[i] | U.free[j]
    i, j = i[keep], j[keep]
    diff = U.nodes[i] - U.nodes[j]
    dist = np.linalg.norm(diff, axis=1)
    A = prob.coefficient(U.nodes[i], U.nodes[j])
    K = U.weight**2 * A / dist ** (prob.d + prob.params.sp)
    pr = _Pairs(i, j, diff / dist[:, None], K)
    if len(_PAIR_CACHE) > 8:
        _PAIR_CACHE.clear()
    _PAIR_CACHE[key] = (U.nodes, prob, pr)
    return pr


def _force_nodal(U: DiscreteField, prob: NonlocalProblem) -> np.ndarray:
    f = np.zeros_like(U.nodes)
    if np.any(U.free):
        f[U.free] = prob.force(U.nodes[U.free])
    return f


def energy(U: DiscreteField, prob: NonlocalProblem) -> float:
    """Discrete energy (each unordered pair counted twice, as in the ordered double sum)."""
    pr = _pairs(U, prob)
    V = U.values
    D = np.sum((V[pr.i] - V[pr.j]) * pr.e, axis=1)
    terms = pr.K * np.abs(D) ** prob.params.p
    bad = ~np.isfinite(terms)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise FloatingPointError(f"non-finite energy term at pair ({pr.i[k]}, {pr.j[k]})")
    f = _force_nodal(U, prob)
    return float(2.0 / prob.params.p * terms.sum() - U.weight * np.sum(f * V))


def energy_gradient(U: DiscreteField, prob: NonlocalProblem) -> np.ndarray:
    """Euclidean gradient of :func:`energy`; rows of frozen nodes are zero."""
    pr = _pairs(U, prob)
    V = U.values
    p = prob.params.p
    D = np.sum((V[pr.i] - V[pr.j]) * pr.e, axis=1)
    c = (2.0 * pr.K * np.abs(D) ** (p - 2) * D)[:, None] * pr.e
    G = np.zeros_like(V)
    np.add.at(G, pr.i, c)
    np.add.at(G, pr.j, -c)
    G -= U.weight * _force_nodal(U, prob)
    G[~U.free] = 0.0
    return G


# --------------------------------------------------------------------------
# solver


@dataclass
class SolveReport:
    energy: float
    energy_trace: list[float]
    grad_norm_trace: list[float]
    iterations: int
    status: str
    wall_time: float
    residuals: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "energy": self.energy,
            "energy_trace": list(self.energy_trace),
            "grad_norm_trace": list(self.grad_norm_trace),
            "iterations": self.iterations,
            "status": self.status,
            "wall_time": self.wall_time,
            "residuals": list(self.residuals),
        }


def solve(prob: NonlocalProblem, grid: GridSpec = GridSpec(), tol: float = 1e-10, max_iter: int = 2000,
          seed: int | None = None, init: DiscreteField | None = None, rtol: float = 1e-7):
    """Polak-Ribiere+ nonlinear CG with Armijo backtracking.

    Stops when the gradient norm is at most ``tol`` or at most
    ``rtol * ||w f||`` (the gradient norm at the zero field); the relative
    test keeps the stopping rule above the roundoff floor of the pair sums.
    The trial step along ``d`` is the secant Newton step
    ``-g.d / (d . (G(U + eps d) - G(U)) / eps)``, exact for ``p = 2``.
    ``seed`` (optional) starts from a random field on the free nodes;
    otherwise from zero.  Returns ``(U, SolveReport)``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    U = discretize(prob, grid) if init is None else init.copy()
    if seed is not None:
        rng = np.random.default_rng(seed)
        U.values[U.free] = rng.standard_normal((int(U.free.sum()), prob.d))
    U.values[~U.free] = 0.0
    E = energy(U, prob)
    G = energy_gradient(U, prob)
    gnorm = float(np.linalg.norm(G))
    e_trace, g_trace = [E], [gnorm]
    d = -G
    status = "converged"
    it = 0
    threshold = max(tol, rtol * U.weight * float(np.linalg.norm(_force_nodal(U, prob))))
    while gnorm > threshold:
        if it >= max_iter:
            status = "max_iter"
            break
        slope = float(np.sum(G * d))
        if not slope < 0:
            d = -G
            slope = -gnorm**2
        scale = max(float(np.max(np.abs(U.values))), 1e-3)
        eps = 1e-3 * scale / float(np.max(np.abs(d)))
        Gp = energy_gradient(U.copy(U.values + eps * d), prob)
        curv = float(np.sum(d * (Gp - G))) / eps
        alpha = -slope / curv if curv > 0 and math.isfinite(curv) else 1.0
        accepted = False
        for _ in range(60):
            trial = U.copy(U.values + alpha * d)
            Et = energy(trial, prob)
            if Et <= E + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if np.array_equal(d, -G):
                # at the roundoff floor no representable step lowers the energy
                if abs(slope) * 1e-8 < 1e-14 * (abs(E) + 1.0):
                    status = "stalled"
                    break
                raise LineSearchFailure(f"no decrease along steepest descent at iteration {it}")
            d = -G
            continue
        if Et > E:
            raise LineSearchFailure("accepted step increased the energy")
        if Et == E:
            status = "stalled"
            break
        G_new = energy_gradient(trial, prob)
        beta = max(0.0, float(np.sum(G_new * (G_new - G))) / max(gnorm**2, 1e-300))
        d = -G_new + beta * d
        U, E, G = trial, Et, G_new
        gnorm = float(np.linalg.norm(G))
        e_trace.append(E)
        g_trace.append(gnorm)
        it += 1
    report = SolveReport(E, e_trace, g_trace, it, status, time.perf_counter() - t0)
    return U, report


def dense_linear_solve(prob: NonlocalProblem, grid: GridSpec = GridSpec()) -> DiscreteField:
    """Direct solve of the ``p = 2`` normal equations by explicit pair-loop assembly."""
    if prob.params.p != 2:
        raise ValueError("the dense oracle is linear only for p = 2")
    U = discretize(prob, grid)
    d = prob.d
    idx = np.flatnonzero(U.free)
    pos = -np.ones(len(U.nodes), dtype=int)
    pos[idx] = np.arange(len(idx))
    nf = len(idx)
    H = np.zeros((nf * d, nf * d))
    w2 = U.weight**2
    kern = d + prob.params.sp
    for a_local, a in enumerate(idx):
        xa = U.nodes[a]
        diff = xa - U.nodes
        dist = np.linalg.norm(diff, axis=1)
        dist[a] = np.inf
        e = diff / dist[:, None]
        e[a] = 0.0
        A = prob.coefficient(np.broadcast_to(xa, U.nodes.shape), U.nodes)
        k = 2.0 * w2 * A / dist**kern
        k[a] = 0.0
        P = np.einsum("n,ni,nj->nij", k, e, e)
        sa = slice(a_local * d, (a_local + 1) * d)
        H[sa, sa] += P.sum(axis=0)
        # off-diagonal blocks; P[a] is zero so the diagonal block is untouched here
        H[sa, :] -= P[idx].transpose(1, 0, 2).reshape(d, nf * d)
    rhs = (U.weight * prob.force(U.nodes[idx])).reshape(-1)
    sol = np.linalg.solve(H, rhs)
    U.values[idx] = sol.reshape(nf, d)
    return U


# --------------------------------------------------------------------------
# weak form


def weak_residual(U: DiscreteField, phi, prob: NonlocalProblem, scaled: bool = False):
    """Discrete ``E_{p,A}(U, phi) - sum_i w f_i . phi_i`` over ordered pairs.

    ``phi`` is a callable field (sampled at the nodes) or an array of nodal
    values; frozen nodes are ignored.  With ``scaled=True`` the residual is
    divided by the sum of the absolute values of all terms.
    """
    Phi = phi(U.nodes) if callable(phi) else np.asarray(phi, dtype=float)
    Phi = np.where(U.free[:, None], Phi, 0.0)
    p = prob.params.p
    w = U.weight
    kern = prob.d + prob.params.sp
    total = 0.0
    size = 0.0
    V = U.values
    for a in range(len(U.nodes)):
        diff = U.nodes[a] - U.nodes
        dist = np.linalg.norm(diff, axis=1)
        others = dist > 0
        diff, dist = diff[others], dist[others]
        e = diff / dist[:, None]
        Du = np.sum((V[a] - V[others]) * e, axis=1)
        Dphi = np.sum((Phi[a] - Phi[others]) * e, axis=1)
        A = prob.coefficient(np.broadcast_to(U.nodes[a], diff.shape), U.nodes[others])
        terms = w * w * A * np.abs(Du) ** (p - 2) * Du * Dphi / dist**kern
        total += float(terms.sum())
        size += float(np.abs(terms).sum())
    f = _force_nodal(U, prob)
    pairing = w * f * Phi
    res = total - float(pairing.sum())
    size += float(np.abs(pairing).sum())
    if scaled:
        return res / size if size > 0 else 0.0
    return res


def residual_panel(prob: NonlocalProblem, n_fields: int = 10, seed: int = 0) -> list[SmoothField]:
    """Random bump test fields compactly supported inside Omega."""
    c = np.asarray(prob.omega.center, dtype=float)
    R = prob.omega.radius
    out = []
    for k in range(n_fields):
        u = random_bump_field(prob.d, 2, seed=seed * 1000 + k, center=c, spread=0.3 * R,
                              radius=(0.2 * R, 0.45 * R), name=f"phi{k}")
        out.append(u)
    return out


# --------------------------------------------------------------------------
# Caccioppoli and Poincare-Sobolev


def _mean_ball(g, ball: BallDomain, n: int, seed: int) -> Estimate:
    rng = stream(seed, 21)
    x = np.asarray(ball.center) + ball.radius * _uniform_ball(rng, n, ball.d)
    v = g(x)
    return Estimate(float(v.mean()), float(v.std(ddof=1) / math.sqrt(n)), n, seed)


def caccioppoli_check(U: DiscreteField, B: BallDomain, psi: CutoffFunction, prob: NonlocalProblem,
                      plan: PairSamplingPlan | None = None, seed: int = 0, n_mc: int = 200_000) -> dict:
    """LHS and the three right-hand pieces for the interpolated discrete solution.

    LHS: ``int_B int_B |psi u(x) - psi u(y)|^p / |x-y|^{d+sp}``;
    mass: ``r^{-sp} int_B |u|^p``;
    tail: ``int_{R^d \\ B} |u|^{p-1} / |x0 - y|^{d+sp} * int_B |u|``;
    force: ``r^{d + s p'} (avg_B |f|^{p'_*})^{p'/p'_*}``.
    """
    plan = plan or PairSamplingPlan()
    p, s, sp, d = prob.params.p, prob.params.s, prob.params.sp, prob.d
    r = B.radius
    u = U.as_field()
    pu = truncate(u, psi)
    lhs = seminorm_estimates(pu, B, prob.params, plan, seed, which=("w",))["w"]
    vol = B.volume
    mass_b = _mean_ball(lambda X: np.linalg.norm(u(X), axis=1) ** p, B, n_mc, seed)
    l1_b = _mean_ball(lambda X: np.linalg.norm(u(X), axis=1), B, n_mc, seed + 1)
    c, R = u.support
    tail = estimate_tail_integral(lambda Y: np.linalg.norm(u(Y), axis=1) ** (p - 1), B, sp,
                                  plan, seed + 2, support=(c, R))
    pps = prob.p_prime_star
    favg = _mean_ball(lambda X: np.linalg.norm(prob.force(X), axis=1) ** pps, B, n_mc, seed + 3)
    mass = r**-sp * vol * mass_b.value
    tail_term = tail.value * vol * l1_b.value
    force = r ** (d + s * prob.p_prime) * favg.value ** (prob.p_prime / pps)
    rhs = mass + tail_term + force
    pieces = {"mass": mass, "tail": tail_term, "force": force}
    if rhs > 0:
        ratio = lhs.value / rhs
    else:
        ratio = 0.0 if lhs.value == 0 else math.inf
    return {
        "ball": {"center": list(map(float, B.center)), "radius": r},
        "lhs": lhs.value,
        "lhs_std_error": lhs.std_error,
        "pieces": pieces,
        "rhs": rhs,
        "ratio": ratio,
        "finite": bool(all(math.isfinite(v) for v in pieces.values()) and math.isfinite(lhs.value)),
    }


def poincare_sobolev_check(v: SmoothField, B: BallDomain, t: float, q: float,
                           plan: PairSamplingPlan | None = None, seed: int = 0, n_mc: int = 200_000) -> dict:
    """``(avg_B |v / r^t|^{q*})^{1/q*}`` against ``(int_B avg_B |v(x)-v(y)|^q / |x-y|^{d+tq})^{1/q}``."""
    d = v.d
    if not 0 < t < 1 or q < 1:
        raise ValueError("need 0 < t < 1 and q >= 1")
    if t * q >= d:
        raise ValueError(f"need tq < d; got tq = {t * q}")
    qs = d * q / (d - t * q)
    r = B.radius
    lhs_avg = _mean_ball(lambda X: np.linalg.norm(v(X), axis=1) ** qs / r ** (t * qs), B, n_mc, seed)
    params = SimpleNamespace(s=t, p=q, sp=t * q)
    c, R = v.support
    plan = plan or PairSamplingPlan()
    if R == 0:
        w = Estimate(0.0, 0.0, 0, seed)
    else:
        w = estimate_double_integrals({"w": w_integrand(v, params)}, B, B, plan, seed)["w"]
    lhs = lhs_avg.value ** (1 / qs)
    rhs = (w.value / B.volume) ** (1 / q)
    degenerate = rhs == 0.0
    return {"q_star": qs, "lhs": lhs, "rhs": rhs, "ratio": None if degenerate else lhs / rhs,
            "degenerate": degenerate}


# --------------------------------------------------------------------------
# dual pair


def nu_density(x, y, d: int, eps: float, p: float):
    """Density ``|x - y|^{-(d - eps p)}`` of the off-diagonal measure."""
    return np.linalg.norm(np.asarray(x) - np.asarray(y), axis=-1) ** (eps * p - d)


class _DualKernel:
    """``U(x,y)^{p+delta} |x-y|^{-(d - eps p)}`` with ``U = |u(x)-u(y)| / |x-y|^{s+eps}``."""

    def __init__(self, u, s, p, eps, delta):
        self.u, self.s, self.p, self.eps, self.delta = u, s, p, eps, delta

    def __call__(self, x, y):
        dist = np.linalg.norm(x - y, axis=1)
        Uxy = np.linalg.norm(self.u(x) - self.u(y), axis=1) / dist ** (self.s + self.eps)
        return Uxy ** (self.p + self.delta) * nu_density(x, y, x.shape[1], self.eps, self.p)


def dual_pair_diagnostic(u: SmoothField, B: BallDomain, params: SeminormParams, eps: float,
                         deltas=(0.0, 0.05, 0.1, 0.2), plan: PairSamplingPlan | None = None,
                         seed: int = 0, k_sigma: float = 3.0) -> dict:
    """``||U||_{L^{p+delta}(B x B; nu)}^{p+delta}`` per ``delta``, with a budget-doubling stability test.

    A row is stable when the estimates at budget ``b`` and ``2b`` agree within
    ``k_sigma`` combined standard errors and the finer estimate has relative
    error below 5%.  ``order`` is the equivalent fractional order
    ``s + delta eps / (p + delta)``.
    """
    s, p = params.s, params.p
    if not 0 < eps < 1 - s:
        raise ValueError(f"need 0 < eps < 1 - s; got eps = {eps}")
    plan = plan or PairSamplingPlan()
    kernels = {f"{k}": _DualKernel(u, s, p, eps, dl) for k, dl in enumerate(deltas)}
    xb = (np.asarray(B.center, float), B.radius)
    coarse = estimate_double_integrals(kernels, B, B, plan, seed, x_ball=xb)
    fine = estimate_double_integrals(kernels, B, B, plan.replace(budget=2 * plan.budget), seed + 1, x_ball=xb)
    rows = []
    for k, dl in enumerate(deltas):
        a, b = coarse[f"{k}"], fine[f"{k}"]
        comb = math.hypot(a.std_error, b.std_error)
        stable = abs(a.value - b.value) <= k_sigma * comb and b.std_error <= 0.05 * abs(b.value) + 1e-300
        rows.append({
            "delta": dl,
            "exponent": p + dl,
            "order": s + dl * eps / (p + dl),
            "value": b.value,
            "std_error": b.std_error,
            "value_half_budget": a.value,
            "std_error_half_budget": a.std_error,
            "norm": b.value ** (1.0 / (p + dl)) if b.value > 0 else 0.0,
            "stable": bool(stable),
        })
    stable_d = [r["delta"] for r in rows if r["stable"]]
    return {"eps": eps, "s": s, "p": p, "rows": rows, "largest_stable_delta": max(stable_d) if stable_d else None}
