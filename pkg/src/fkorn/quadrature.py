"""Stratified Monte Carlo for singular double integrals, plus a dense brute-force oracle.

Pairs are written ``y = x + h``.  ``x`` is uniform in a ball covering the
first domain (membership enters as an indicator weight) and ``h`` is drawn
shell by shell: ``|h|`` in ``[r_{k+1}, r_k)`` uniformly in volume, with the
radii geometric (ratio 2 by default) down to a core radius ``1e-4 * diam``.
When the second domain is unbounded a final Pareto shell reaches to
infinity.  The excluded core is not sampled; its contribution is
extrapolated from the two innermost shells and reported as ``bias_estimate``.

Reproducibility: every shell is split into fixed-size blocks and each block
draws from its own Philox stream keyed by ``(seed, phase, shell, block)``.
Block results ``(count, mean, M2)`` are merged in block order, so the result
does not depend on how many threads evaluated the blocks.
"""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .domains import ball_volume, sphere_area

__all__ = [
    "Estimate",
    "PairSamplingPlan",
    "NonFiniteIntegrand",
    "estimate_double_integral",
    "estimate_double_integrals",
    "estimate_point_integral",
    "estimate_tail_integral",
    "dense_oracle",
    "extrapolated_oracle",
    "richardson",
    "draw_pairs",
    "stream",
]

MONTE_CARLO = "monte_carlo"
DENSE_ORACLE = "dense_oracle"


class NonFiniteIntegrand(FloatingPointError):
    def __init__(self, x, y, value):
        self.pair = (np.asarray(x).tolist(), None if y is None else np.asarray(y).tolist())
        super().__init__(f"non-finite integrand value {value!r} at pair {self.pair}")


@dataclass(frozen=True)
class Estimate:
    """An integral estimate; ``std_error`` is zero for the dense oracle."""

    value: float
    std_error: float
    n_samples: int
    seed: int | None
    method: str = MONTE_CARLO
    bias_estimate: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"estimate value must be finite, got {self.value}")
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")

    def scaled(self, a: float) -> "Estimate":
        return dataclasses.replace(
            self, value=a * self.value, std_error=abs(a) * self.std_error,
            bias_estimate=a * self.bias_estimate,
        )

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class PairSamplingPlan:
    """Shell layout and budget for :func:`estimate_double_integral`.

    ``radii`` overrides the automatic geometric layout (decreasing, all
    positive).  ``tail_exponent`` is the decay rate ``a`` of the Pareto tail
    shell ``rho^{-1-a}``; it must not exceed the true radial decay of the
    integrand (``sp`` for the seminorm kernels) for the variance to be finite.
    """

    budget: int = 200_000
    ratio: float = 2.0
    core_fraction: float = 1e-4
    radii: tuple[float, ...] | None = None
    pilot_fraction: float = 0.1
    block_size: int = 4096
    threads: int = 1
    tail_exponent: float | None = None
    min_per_shell: int = 64

    def __post_init__(self):
        if self.budget <= 0 or self.block_size <= 0 or self.threads <= 0:
            raise ValueError("budget, block_size and threads must be positive")
        if not self.ratio > 1:
            raise ValueError("shell ratio must exceed 1")
        if not 0 < self.core_fraction < 1:
            raise ValueError("core_fraction must lie in (0, 1)")
        if self.radii is not None:
            r = np.asarray(self.radii, dtype=float)
            if r.ndim != 1 or len(r) < 2 or np.any(r <= 0) or np.any(np.diff(r) >= 0):
                raise ValueError("radii must be a strictly decreasing sequence of positive numbers")

    def replace(self, **kw) -> "PairSamplingPlan":
        return dataclasses.replace(self, **kw)

    def shell_radii(self, outer: float, inner: float | None = None) -> np.ndarray:
        if self.radii is not None:
            return np.asarray(self.radii, dtype=float)
        inner = self.core_fraction * outer if inner is None else inner
        k = max(1, math.ceil(math.log(outer / inner) / math.log(self.ratio) - 1e-9))
        radii = outer * self.ratio ** -np.arange(k + 1, dtype=float)
        radii[-1] = inner
        return radii


def stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for one ``(seed, key...)`` work item."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


def _directions(rng, n, d):
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _uniform_ball(rng, n, d):
    return _directions(rng, n, d) * rng.uniform(0.0, 1.0, (n, 1)) ** (1.0 / d)


def _offsets(rng, n, d, r_in, r_out, tail_exponent):
    dirs = _directions(rng, n, d)
    area = sphere_area(d)
    if math.isinf(r_out):
        a = tail_exponent
        rho = r_in * (1.0 - rng.uniform(0.0, 1.0, n)) ** (-1.0 / a)
        weight = area * rho ** (d + a) / (a * r_in**a)
    else:
        rho = (r_in**d + rng.uniform(0.0, 1.0, n) * (r_out**d - r_in**d)) ** (1.0 / d)
        weight = np.full(n, area * (r_out**d - r_in**d) / d)
    return dirs * rho[:, None], weight


def _merge(a, b):
    """Chan et al. pairwise merge of ``(count, mean, M2)`` triples."""
    na, ma, va = a
    nb, mb, vb = b
    if na == 0:
        return b
    if nb == 0:
        return a
    n = na + nb
    delta = mb - ma
    return n, ma + delta * (nb / n), va + vb + delta**2 * (na * nb / n)


class _Stratified:
    """Shared engine: ``x`` from a sampler, ``h`` from a list of shells."""

    def __init__(self, evaluate, x_sampler, shells, d, m, plan, seed, tag):
        self.evaluate = evaluate  # (rng, x, wx, h, wh) -> (n, m) weighted values
        self.x_sampler = x_sampler
        self.shells = shells
        self.d = d
        self.m = m
        self.plan = plan
        self.seed = seed
        self.tag = tag

    def _block(self, task):
        phase, k, b, n = task
        rng = stream(self.seed, self.tag, phase, k, b)
        x, wx = self.x_sampler(rng, n)
        r_in, r_out = self.shells[k]
        h, wh = _offsets(rng, n, self.d, r_in, r_out, self.plan.tail_exponent)
        vals = self.evaluate(x, wx, h, wh)
        return n, vals.mean(axis=0), ((vals - vals.mean(axis=0)) ** 2).sum(axis=0)

    def _run(self, phase, counts):
        bs = self.plan.block_size
        tasks = []
        for k, n_k in enumerate(counts):
            for b, start in enumerate(range(0, n_k, bs)):
                tasks.append((phase, k, b, min(bs, n_k - start)))
        if self.plan.threads > 1:
            with ThreadPoolExecutor(self.plan.threads) as ex:
                results = list(ex.map(self._block, tasks))
        else:
            results = [self._block(t) for t in tasks]
        acc = [(0, np.zeros(self.m), np.zeros(self.m)) for _ in counts]
        for (phase_, k, _, _), res in zip(tasks, results):
            acc[k] = _merge(acc[k], res)
        return acc

    def run(self):
        K = len(self.shells)
        budget = self.plan.budget
        n_pilot = max(self.plan.min_per_shell, int(self.plan.pilot_fraction * budget / K))
        pilot = self._run(0, [n_pilot] * K)
        # Neyman allocation on a scale-free combination of the integrands
        scale = np.array([sum(abs(p[1][j]) for p in pilot) for j in range(self.m)])
        scale[scale == 0] = 1.0
        sig = np.array([
            math.sqrt(max(float(np.sum(p[2] / scale**2)) / max(p[0] - 1, 1), 0.0)) for p in pilot
        ])
        main = max(budget - n_pilot * K, self.plan.min_per_shell * K)
        if sig.sum() > 0:
            counts = np.maximum(self.plan.min_per_shell, np.round(main * sig / sig.sum())).astype(int)
        else:
            counts = np.full(K, max(self.plan.min_per_shell, main // K), dtype=int)
        acc = self._run(1, counts.tolist())
        out = []
        for j in range(self.m):
            shell_vals = [a[1][j] for a in acc]
            shell_vars = [a[2][j] / max(a[0] - 1, 1) / a[0] for a in acc]
            value = math.fsum(shell_vals)
            std = math.sqrt(math.fsum(shell_vars))
            out.append((value, std, int(counts.sum()), shell_vals))
        return out


def _core_bias(shell_vals, finite_shells):
    """Extrapolate the excluded core from the two innermost finite shells."""
    inner = [v for v, fin in zip(shell_vals, finite_shells) if fin]
    if len(inner) < 2:
        return 0.0
    last, prev = inner[-1], inner[-2]
    if prev != 0 and 0 < last / prev < 1:
        q = last / prev
        return float(last * q / (1 - q))
    return float(abs(last))


def _ball_of(domain, what):
    ball = domain.bounding_ball()
    if ball is None:
        raise ValueError(f"{what} must be bounded (or an explicit x_ball must be given)")
    return np.asarray(ball[0], dtype=float), float(ball[1])


def _make_shells(plan, outer, bounded, inner=None):
    radii = plan.shell_radii(outer, inner)
    shells = [(radii[i + 1], radii[i]) for i in range(len(radii) - 1)]
    if not bounded:
        if plan.tail_exponent is None or not plan.tail_exponent > 0:
            raise ValueError("an unbounded domain needs plan.tail_exponent > 0")
        shells.insert(0, (radii[0], math.inf))
    return shells


def _check_finite(vals, x, y):
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = np.argwhere(bad)[0][0]
        raise NonFiniteIntegrand(x[i], None if y is None else y[i], vals[bad][0])


def estimate_double_integrals(
    integrands: Mapping[str, Callable] | Callable,
    omega1,
    omega2,
    plan: PairSamplingPlan,
    seed: int,
    x_ball=None,
    tag: int = 0,
):
    """Estimate ``int_{omega1} int_{omega2} g(x, y) dy dx`` for several ``g`` on common pairs.

    ``integrands`` is a mapping ``name -> g`` (returns a dict of
    :class:`Estimate`) or a single callable returning an ``(n, m)`` array.
    ``x_ball = (center, radius)`` restricts where ``x`` is drawn; it must
    contain every ``x`` in ``omega1`` for which ``g(x, .)`` is nonzero.
    """
    if callable(integrands):
        names = None
        stacked = integrands
        m = None
    else:
        names = list(integrands)
        gs = [integrands[k] for k in names]
        stacked = lambda x, y: np.stack([g(x, y) for g in gs], axis=1)  # noqa: E731
        m = len(names)
    xc, xr = _ball_of(omega1, "omega1") if x_ball is None else (np.asarray(x_ball[0], float), float(x_ball[1]))
    d = xc.size
    if m is None:
        probe = np.asarray(stacked(xc[None, :] + 0.0, xc[None, :] + 1.0))
        m = 1 if probe.ndim == 1 else probe.shape[1]
    if xr == 0.0:
        zero = Estimate(0.0, 0.0, 0, seed)
        return zero if names is None and m == 1 else ({k: zero for k in names} if names else [zero] * m)
    vol = ball_volume(d, xr)
    ball2 = omega2.bounding_ball()
    if ball2 is None:
        outer, bounded = 2.0 * xr, False
    else:
        outer, bounded = float(np.linalg.norm(xc - ball2[0])) + xr + float(ball2[1]), True
    shells = _make_shells(plan, outer, bounded)

    def x_sampler(rng, n):
        x = xc + xr * _uniform_ball(rng, n, d)
        return x, vol * omega1.contains(x)

    def evaluate(x, wx, h, wh):
        y = x + h
        mask = (wx > 0) & omega2.contains(y)
        out = np.zeros((x.shape[0], m))
        if np.any(mask):
            v = np.asarray(stacked(x[mask], y[mask]), dtype=float).reshape(-1, m)
            _check_finite(v, x[mask], y[mask])
            out[mask] = v * (wx[mask] * wh[mask])[:, None]
        return out

    eng = _Stratified(evaluate, x_sampler, shells, d, m, plan, seed, tag)
    finite = [not math.isinf(s[1]) for s in shells]
    ests = [
        Estimate(v, sd, n, seed, MONTE_CARLO, _core_bias(sv, finite))
        for v, sd, n, sv in eng.run()
    ]
    if names is not None:
        return dict(zip(names, ests))
    return ests[0] if m == 1 else ests


def estimate_double_integral(g, omega1, omega2, plan: PairSamplingPlan, seed: int, x_ball=None) -> Estimate:
    """Single-integrand form of :func:`estimate_double_integrals`."""
    return estimate_double_integrals({"g": g}, omega1, omega2, plan, seed, x_ball)["g"]


def estimate_point_integral(
    g: Callable[[np.ndarray], np.ndarray],
    center,
    domain,
    plan: PairSamplingPlan,
    seed: int,
    r_inner: float,
    r_outer: float | None = None,
    tag: int = 1,
) -> Estimate:
    """``int_{domain, r_inner <= |y - center|} g(y) dy`` by shells around ``center``.

    ``r_outer=None`` appends a Pareto tail shell (``plan.tail_exponent``).
    """
    c = np.asarray(center, dtype=float)
    d = c.size
    if r_outer is not None and r_outer <= r_inner:
        return Estimate(0.0, 0.0, 0, seed)
    if r_outer is None:
        if plan.radii is not None:
            raise ValueError("explicit radii are not supported for point integrals")
        k = max(1, math.ceil(-math.log(plan.core_fraction) / math.log(plan.ratio)))
        radii = r_inner * plan.ratio ** np.arange(k, -1, -1, dtype=float)
        shells = [(radii[i + 1], radii[i]) for i in range(len(radii) - 1)]
        if plan.tail_exponent is None:
            raise ValueError("an unbounded point integral needs plan.tail_exponent")
        shells.insert(0, (radii[0], math.inf))
    else:
        shells = _make_shells(plan, r_outer, True, inner=r_inner)

    def x_sampler(rng, n):
        return np.broadcast_to(c, (n, d)), np.ones(n)

    def evaluate(x, wx, h, wh):
        y = x + h
        mask = domain.contains(y)
        out = np.zeros((x.shape[0], 1))
        if np.any(mask):
            v = np.asarray(g(y[mask]), dtype=float)
            _check_finite(v, y[mask], None)
            out[mask, 0] = v * wh[mask]
        return out

    eng = _Stratified(evaluate, x_sampler, shells, d, 1, plan, seed, tag)
    v, sd, n, _ = eng.run()[0]
    return Estimate(v, sd, n, seed)


def estimate_tail_integral(g, ball, sp: float, plan: PairSamplingPlan, seed: int, support=None) -> Estimate:
    """``int_{R^d \\ B} g(y) |x0 - y|^{-d-sp} dy`` for ``B = ball``.

    ``support = (center, radius)`` bounds where ``g`` can be nonzero and
    turns the tail into a finite-region integral; ``None`` integrates to
    infinity with a Pareto shell matched to the kernel.  An infinite support
    radius is rejected.
    """
    x0 = np.asarray(ball.center, dtype=float)
    d = x0.size

    def weighted(y):
        return g(y) * np.linalg.norm(y - x0, axis=1) ** (-d - sp)

    from .domains import WholeSpace

    if support is None:
        return estimate_point_integral(weighted, x0, WholeSpace(d), plan.replace(tail_exponent=sp), seed, ball.radius)
    c, r = support
    if not math.isfinite(r):
        raise ValueError("tail integral of a field with unbounded support")
    r_out = float(np.linalg.norm(np.asarray(c) - x0)) + float(r)
    return estimate_point_integral(weighted, x0, WholeSpace(d), plan, seed, ball.radius, r_out)


# --------------------------------------------------------------------------
# dense oracle


def _grid(domain, n, subcells=8):
    """Cell midpoints and cell measures; boundary cells carry their covered fraction."""
    box = domain.bounding_box()
    if box is None:
        raise ValueError("dense oracle needs bounded domains")
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    d = lo.size
    h = (hi - lo) / n
    axes = [lo[i] + h[i] * (np.arange(n) + 0.5) for i in range(d)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    sub = (np.arange(subcells) + 0.5) / subcells - 0.5
    offs = np.stack(np.meshgrid(*[sub * h[i] for i in range(d)], indexing="ij"), axis=-1).reshape(-1, d)
    frac = np.zeros(len(pts))
    for o in offs:
        frac += domain.contains(pts + o)
    frac /= len(offs)
    keep = frac > 0
    return pts[keep], float(np.prod(h)) * frac[keep]


def dense_oracle(
    g,
    omega1,
    omega2,
    n_per_axis: int,
    max_pairs: float = 6e7,
    chunk_pairs: int = 400_000,
):
    """Tensor-product midpoint double sum over cell pairs, skipping coincident cells.

    Each domain is gridded with ``n_per_axis`` cells per axis over its
    bounding box.  A cell is weighted by the fraction of it lying in the
    domain (8^d sub-point count), and the integrand is evaluated at cell
    midpoints.  The error is ``O(h^a)`` where ``a`` is the order of the
    diagonal singularity (``p(1-s)`` for the seminorms); see
    :func:`extrapolated_oracle`.

    ``g`` may be a mapping of integrands, in which case a dict is returned.
    Integrands exposing ``field`` and ``from_values(x, y, ux, uy)`` have the
    field cached on the grid.
    """
    if n_per_axis < 8:
        raise ValueError("n_per_axis must be at least 8")
    single = callable(g)
    gs = {"g": g} if single else dict(g)
    box = omega1.bounding_box()
    d = len(box[0]) if box is not None else None
    if d is not None and float(n_per_axis) ** (2 * d) > max_pairs:
        raise MemoryError(f"{n_per_axis}^{2 * d} pairs exceeds the cap {max_pairs:.3g}")
    x, wx = _grid(omega1, n_per_axis)
    y, wy = _grid(omega2, n_per_axis)
    if len(x) == 0 or len(y) == 0:
        out = {k: Estimate(0.0, 0.0, 0, None, DENSE_ORACLE) for k in gs}
        return out["g"] if single else out
    fields = {getattr(fn, "field", None) for fn in gs.values()}
    cached = len(fields) == 1 and None not in fields and all(hasattr(fn, "from_values") for fn in gs.values())
    if cached:
        u = fields.pop()
        ux, uy = u(x), u(y)
    tol = 1e-9 * float(np.min(np.subtract(*omega1.bounding_box()[::-1]))) / n_per_axis
    rows = max(1, chunk_pairs // len(y))
    partial = {k: [] for k in gs}
    for start in range(0, len(x), rows):
        sl = slice(start, start + rows)
        nx = len(x[sl])
        X = np.repeat(x[sl], len(y), axis=0)
        Y = np.tile(y, (nx, 1))
        W = np.outer(wx[sl], wy).ravel()
        keep = np.linalg.norm(X - Y, axis=1) > tol
        X, Y, W = X[keep], Y[keep], W[keep]
        if cached:
            UX = np.repeat(ux[sl], len(y), axis=0)[keep]
            UY = np.tile(uy, (nx, 1))[keep]
        for k, fn in gs.items():
            vals = fn.from_values(X, Y, UX, UY) if cached else np.asarray(fn(X, Y), dtype=float)
            _check_finite(vals, X, Y)
            partial[k].append(float(np.dot(vals, W)))
    out = {
        k: Estimate(math.fsum(v), 0.0, len(x) * len(y), None, DENSE_ORACLE) for k, v in partial.items()
    }
    return out["g"] if single else out


def richardson(coarse: float, fine: float, ratio: float, order: float) -> float:
    """Eliminate a leading ``C h^order`` error from two grid results."""
    f = ratio**order
    return (f * fine - coarse) / (f - 1.0)


def extrapolated_oracle(g, omega1, omega2, n_per_axis: int, order: float, **kw):
    """Dense oracle at ``n`` and ``2n`` cells per axis, Richardson-extrapolated.

    Returns ``(extrapolated, coarse, fine)``; for a mapping ``g`` each entry
    is a dict.  ``std_error`` of the extrapolated estimate is set to the
    magnitude of the correction, a conservative discretization error bar.
    """
    c = dense_oracle(g, omega1, omega2, n_per_axis, **kw)
    f = dense_oracle(g, omega1, omega2, 2 * n_per_axis, **kw)

    def combine(ec, ef):
        v = richardson(ec.value, ef.value, 2.0, order)
        return Estimate(v, abs(v - ef.value), ef.n_samples, None, DENSE_ORACLE)

    if isinstance(c, Estimate):
        return combine(c, f), c, f
    return {k: combine(c[k], f[k]) for k in c}, c, f


def draw_pairs(omega1, omega2, n: int, seed: int, plan: PairSamplingPlan | None = None, x_ball=None):
    """Equal-allocation pair stream ``(x, y, weight)`` for common-random-number comparisons.

    The weights make ``sum(weight * g(x, y)) / n_per_shell`` an unbiased
    estimate; only pairs with both points in their domains are returned.
    """
    plan = plan or PairSamplingPlan()
    xc, xr = _ball_of(omega1, "omega1") if x_ball is None else (np.asarray(x_ball[0], float), float(x_ball[1]))
    d = xc.size
    ball2 = omega2.bounding_ball()
    if ball2 is None:
        shells = _make_shells(plan, 2.0 * xr, False)
    else:
        shells = _make_shells(plan, float(np.linalg.norm(xc - ball2[0])) + xr + float(ball2[1]), True)
    per = max(1, n // len(shells))
    xs, ys, ws = [], [], []
    for k, (r_in, r_out) in enumerate(shells):
        rng = stream(seed, 7, k)
        x = xc + xr * _uniform_ball(rng, per, d)
        h, wh = _offsets(rng, per, d, r_in, r_out, plan.tail_exponent)
        y = x + h
        keep = omega1.contains(x) & omega2.contains(y)
        xs.append(x[keep])
        ys.append(y[keep])
        ws.append(ball_volume(d, xr) * wh[keep] / per)
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(ws)
