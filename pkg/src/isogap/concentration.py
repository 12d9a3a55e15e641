"""Lipschitz test-function machinery for concentration constants.

Estimators search a family of Lipschitz functions and are all one-sided:
they return upper bounds for constants defined as infima over all Lipschitz
functions (a richer family tightens them).  Direction per check:

    d_fm, d_exp, d_pq        upper bounds on the true constants
    worst_set_value          upper bound (candidate sets under-maximize)
    profile 2-D curves       upper bounds on I(t)

Every inequality check in this package pairs quantities so that these
directions cannot fabricate a pass where the underlying theorem would fail:
explicit-constant checks place the searched estimate on the side that makes
the check stricter, and unnamed-constant comparisons are reported as
tracked ratios, never asserted against invented constants.

Functions are evaluated on a quadrature context: the node/weight tables of
a 1-D measure, or the cells of a rasterized 2-D domain.  Gradient
magnitudes come analytically where the representation allows (distances,
coordinates, piecewise-linear slopes) and from grid differences otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import HalfSpace
from .measures import Measure1D
from .spectral import GridDomain

PSI1_REL_TOL = 1e-9


class ConcentrationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# evaluation context
# ---------------------------------------------------------------------------


@dataclass
class EvalContext:
    """Quadrature view of a measure: points, probability weights, and an
    optional grid domain for difference-quotient gradients.  1-D contexts
    keep the measure itself so gradient integrals of projection-type
    members can use exact CDF increments (narrow ramps would otherwise be
    under-resolved by the node grid and could break the upper-bound
    direction of the estimators)."""

    points: np.ndarray   # (N, d)
    weights: np.ndarray  # (N,), sums to 1
    domain: Optional[GridDomain] = None
    name: str = ""
    measure: Optional[Measure1D] = None

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @staticmethod
    def from_measure_1d(m: Measure1D) -> "EvalContext":
        return EvalContext(m.xs[:, None], m.weights / np.sum(m.weights), None,
                           m.name, measure=m)

    @staticmethod
    def from_grid(dom: GridDomain, name: str = "") -> "EvalContext":
        return EvalContext(dom.coords, dom.weights, dom, name)


def weighted_quantile(values: np.ndarray, weights: np.ndarray, delta: float) -> float:
    """Q_delta(f) = inf{q : mu{f <= q} >= delta}."""
    order = np.argsort(values, kind="stable")
    v = values[order]
    cw = np.cumsum(weights[order])
    total = cw[-1]
    idx = int(np.searchsorted(cw, delta * total - 1e-15, side="left"))
    idx = min(idx, len(v) - 1)
    return float(v[idx])


def weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    return weighted_quantile(values, weights, 0.5)


def norm_lp(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    if p <= 0:
        raise ConcentrationError("p must be positive")
    a = np.abs(values)
    if math.isinf(p):
        return float(np.max(a[weights > 0])) if np.any(weights > 0) else 0.0
    return float((weights @ a**p) ** (1.0 / p))


def expectation(values: np.ndarray, weights: np.ndarray) -> float:
    return float(weights @ values)


# ---------------------------------------------------------------------------
# Lipschitz function representations
# ---------------------------------------------------------------------------


class LipschitzFunction:
    """A member knows its values and gradient magnitudes on a context, and a
    certified Lipschitz constant at least the measured difference quotient."""

    lip: float
    label: str

    def eval(self, ctx: EvalContext):
        raise NotImplementedError


@dataclass
class Coordinate(LipschitzFunction):
    axis: int
    lip: float = 1.0

    @property
    def label(self):
        return f"coord{self.axis}"

    def eval(self, ctx):
        vals = ctx.points[:, self.axis].copy()
        return vals, np.ones(len(vals))


@dataclass
class DistToHalfSpace(LipschitzFunction):
    """Distance to {<normal, x> <= offset}, optionally negated; the distance
    function has Lipschitz constant exactly 1."""

    hs: HalfSpace
    sign: float = 1.0
    lip: float = 1.0

    @property
    def label(self):
        return f"dist-hs({self.sign:+.0f})"

    def eval(self, ctx):
        s = ctx.points @ self.hs.normal - self.hs.offset
        vals = self.sign * np.maximum(s, 0.0)
        grad = (s > 0).astype(float)
        return vals, grad

    def projection_segments(self, ctx):
        if ctx.measure is None:
            return None
        lo, hi = ctx.measure.support
        u = float(self.hs.normal[0])
        c = self.hs.offset
        # f(x) = sign * max(0, u x - c): kink at x = c/u
        x0 = c / u
        if u > 0:
            breaks, slopes = [lo, x0, hi], [0.0, self.sign * u]
        else:
            breaks, slopes = [lo, x0, hi], [self.sign * u, 0.0]
        breaks = sorted(min(max(b, lo), hi) for b in breaks)
        vals = self.sign * np.maximum(u * np.array(breaks) - c, 0.0)
        return np.array(breaks), np.array(slopes), vals


@dataclass
class PiecewiseLinear1D(LipschitzFunction):
    """1-D piecewise-linear function of a projection <u, x>, clamped to its
    end values outside the knot range."""

    knots_x: np.ndarray
    knots_y: np.ndarray
    direction: Optional[np.ndarray] = None  # default: first coordinate
    label: str = "pl"

    def __post_init__(self):
        kx = np.asarray(self.knots_x, dtype=float)
        ky = np.asarray(self.knots_y, dtype=float)
        if len(kx) < 2 or np.any(np.diff(kx) <= 0):
            raise ConcentrationError("knots must be strictly increasing")
        self.knots_x, self.knots_y = kx, ky
        self.slopes = np.diff(ky) / np.diff(kx)
        self.lip = float(np.max(np.abs(self.slopes))) if len(self.slopes) else 0.0

    def eval(self, ctx):
        if self.direction is None:
            t = ctx.points[:, 0]
        else:
            t = ctx.points @ self.direction
        vals = np.interp(t, self.knots_x, self.knots_y)
        seg = np.clip(np.searchsorted(self.knots_x, t, side="right") - 1,
                      0, len(self.slopes) - 1)
        grad = np.abs(self.slopes[seg])
        grad = np.where((t <= self.knots_x[0]) | (t >= self.knots_x[-1]), 0.0, grad)
        return vals, grad

    def projection_segments(self, ctx):
        if ctx.measure is None:
            return None
        if self.direction is not None and not np.allclose(self.direction, [1.0]):
            return None
        lo, hi = ctx.measure.support
        breaks = np.concatenate([[lo], self.knots_x, [hi]])
        breaks = np.clip(breaks, lo, hi)
        breaks = np.unique(breaks)
        slopes = []
        for k in range(len(breaks) - 1):
            mid = 0.5 * (breaks[k] + breaks[k + 1])
            if mid <= self.knots_x[0] or mid >= self.knots_x[-1]:
                slopes.append(0.0)
            else:
                j = min(max(int(np.searchsorted(self.knots_x, mid) - 1), 0),
                        len(self.slopes) - 1)
                slopes.append(float(self.slopes[j]))
        vals = np.interp(breaks, self.knots_x, self.knots_y)
        return breaks, np.array(slopes), vals


@dataclass
class GridFunction(LipschitzFunction):
    """Values on the cells of a grid domain; gradient by grid differences,
    certified constant the maximal adjacent difference quotient."""

    values: np.ndarray
    label: str = "grid"

    def __post_init__(self):
        self.lip = 0.0  # certified lazily against the evaluation domain

    def eval(self, ctx):
        if ctx.domain is None or len(self.values) != ctx.domain.ncells:
            raise ConcentrationError("grid function requires its own domain context")
        dom = ctx.domain
        e = dom.edges
        quot = np.abs(self.values[e[:, 0]] - self.values[e[:, 1]]) / dom.h
        self.lip = float(np.max(quot)) if len(quot) else 0.0
        return self.values.copy(), dom.gradient(self.values)


@dataclass
class TestFamily:
    """Generator list plus closure settings (negation is materialized for
    distance members; power transforms sign(h)|h|^alpha are applied to the
    median-centered values inside the (p,q) estimators)."""

    members: list
    name: str = "family"

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)


def build_default_family(ctx: EvalContext, seed: int = 20240904,
                         n_random: int = 200, directions: int = 72,
                         offsets: int = 21,
                         eigenfunction: Optional[np.ndarray] = None) -> TestFamily:
    """Coordinates, +-distance to half-spaces on a direction x quantile
    net, clamped ramps, seeded random piecewise-linear functions, and the
    spectral eigenfunction when available."""
    members: list = [Coordinate(a) for a in range(ctx.dim)]
    if ctx.dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        th = np.arange(directions) * (2 * np.pi / directions)
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    qs = np.linspace(0.025, 0.975, offsets)
    spread = []
    for u in dirs:
        proj = ctx.points @ u
        offs = np.array([weighted_quantile(proj, ctx.weights, q) for q in qs])
        spread.append(float(weighted_quantile(proj, ctx.weights, 0.75)
                            - weighted_quantile(proj, ctx.weights, 0.25)))
        for c in offs:
            hs = HalfSpace(u, float(c))
            members.append(DistToHalfSpace(hs, +1.0))
            members.append(DistToHalfSpace(hs, -1.0))
    scale = max(np.mean(spread), 1e-12)
    # clamped ramps: indicator approximants riding the same net
    ramp_eps = np.array([0.5, 0.1, 0.02, 0.004]) * scale
    for u in dirs[: max(len(dirs) // 2, 1)]:
        proj = ctx.points @ u
        med = weighted_median(proj, ctx.weights)
        for eps in ramp_eps:
            members.append(PiecewiseLinear1D(
                np.array([med - eps / 2, med + eps / 2]), np.array([0.0, 1.0]),
                direction=u.copy(), label=f"ramp-{eps:.3g}"))
    rng = np.random.default_rng(seed)
    lo = np.array([weighted_quantile(ctx.points[:, a], ctx.weights, 0.001)
                   for a in range(ctx.dim)])
    hi = np.array([weighted_quantile(ctx.points[:, a], ctx.weights, 0.999)
                   for a in range(ctx.dim)])
    for k in range(n_random):
        if ctx.dim == 1:
            u = np.array([1.0])
        else:
            ang = rng.random() * 2 * np.pi
            u = np.array([math.cos(ang), math.sin(ang)])
        plo = float(u @ np.where(u >= 0, lo, hi))
        phi = float(u @ np.where(u >= 0, hi, lo))
        kx = np.sort(plo + (phi - plo) * rng.random(8))
        kx = np.unique(kx)
        if len(kx) < 2:
            continue
        ky = scale * rng.random(len(kx))
        members.append(PiecewiseLinear1D(kx, ky, direction=u, label=f"rand{k}"))
    if eigenfunction is not None:
        members.append(GridFunction(np.asarray(eigenfunction, float), label="eigfun"))
    return TestFamily(members, name=f"default[{ctx.name}]")


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def _grad_profile(mem, ctx: EvalContext):
    """Exact projection profile (breaks, slopes, values-at-breaks) when the
    member supports it on this context, else None."""
    fn = getattr(mem, "projection_segments", None)
    if fn is None:
        return None
    return fn(ctx)


def _profile_grad_norm(prof, ctx: EvalContext, q: float, alpha: float,
                       med: float, scale: float) -> float:
    """q-norm of the gradient magnitude of sign(h)|h|^alpha for
    h = f/scale - med, integrated segment-by-segment with exact CDF
    increments (exact for alpha = 1, where the integrand is constant per
    segment).  Subdivision adapts to the segment length so wide tails of
    unbounded measures stay resolved."""
    breaks, slopes, vals = prof
    lo, hi = ctx.measure.support
    span_scale = max((hi - lo) / 400.0, 1e-12)
    acc = 0.0
    sup = 0.0
    for k in range(len(breaks) - 1):
        s = abs(slopes[k]) / scale
        seg = breaks[k + 1] - breaks[k]
        if s == 0.0 or seg <= 0:
            continue
        nsub = int(min(1024, max(16, math.ceil(seg / span_scale))))
        xs = np.linspace(breaks[k], breaks[k + 1], nsub + 1)
        dF = np.diff(ctx.measure.cdf(xs))
        mids = 0.5 * (xs[:-1] + xs[1:])
        hm = (vals[k] + (mids - breaks[k]) / seg
              * (vals[k + 1] - vals[k])) / scale - med
        phi = alpha * np.abs(hm) ** (alpha - 1.0) * s if alpha != 1.0 \
            else np.full(len(mids), s)
        if math.isinf(q):
            live = dF > 1e-15
            if live.any():
                sup = max(sup, float(np.max(phi[live])))
        else:
            acc += float(dF @ phi**q)
    return sup if math.isinf(q) else acc ** (1.0 / q)


def _normalized_members(ctx: EvalContext, family: TestFamily):
    """Yield (values, gradmag, profile, lip, member) normalized by the
    certified global Lipschitz constant.

    Normalizing by the support-essential supremum instead would let a
    member vary wildly across zero-mass stretches while looking
    1-Lipschitz, which breaks the definitions of the concentration
    constants on measures with density gaps."""
    for mem in family:
        vals, grad = mem.eval(ctx)
        lip = mem.lip
        if not (lip > 0):
            continue
        if not np.any(np.abs(grad[ctx.weights > 0]) > 0):
            continue  # constant on the support
        yield vals / lip, grad / lip, _grad_profile(mem, ctx), lip, mem


def d_fm(ctx: EvalContext, family: TestFamily, center: str = "expectation") -> float:
    """1 / max over unit-Lipschitz members of ||f - center(f)||_1."""
    if len(family) == 0:
        raise ConcentrationError("empty family")
    best = 0.0
    for vals, _grad, _prof, _ess, _m in _normalized_members(ctx, family):
        c = (expectation(vals, ctx.weights) if center == "expectation"
             else weighted_median(vals, ctx.weights))
        best = max(best, norm_lp(vals - c, ctx.weights, 1.0))
    if best <= 0:
        raise ConcentrationError("family contains no nonconstant member")
    return 1.0 / best


def d_exp_single(vals: np.ndarray, weights: np.ndarray) -> float:
    """Exact inf over t > 0 of (1 - ln tail(t)) / t for the discrete tail
    tail(t) = mu(|f - E f| >= t); the infimum is attained at the jump
    points, i.e. the distinct values of |f - E f|."""
    g = np.abs(vals - expectation(vals, weights))
    order = np.argsort(g, kind="stable")[::-1]
    gs = g[order]
    tails = np.cumsum(weights[order])  # tails[k] = mu(|g| >= gs[k])  (>= by sort)
    pos = gs > 1e-300
    if not pos.any():
        return math.inf
    vals_at = (1.0 - np.log(np.clip(tails[pos], 1e-300, 1.0))) / gs[pos]
    return float(np.min(vals_at))


def d_exp(ctx: EvalContext, family: TestFamily) -> float:
    """min over unit-Lipschitz members of the exact per-function exponential
    concentration constant."""
    if len(family) == 0:
        raise ConcentrationError("empty family")
    best = math.inf
    for vals, _grad, _prof, _ess, _m in _normalized_members(ctx, family):
        best = min(best, d_exp_single(vals, ctx.weights))
    return best


def _power_transform(h: np.ndarray, grad: np.ndarray, alpha: float):
    """sign(h) |h|^alpha and its gradient magnitude alpha |h|^(alpha-1) |grad h|."""
    if alpha == 1.0:
        return h, grad
    a = np.abs(h)
    vals = np.sign(h) * a**alpha
    g = alpha * a ** (alpha - 1.0) * grad
    return vals, g


def d_pq(ctx: EvalContext, family: TestFamily, p: float, q: float,
         alphas: Sequence[float] = (1.0,), exact_grad: bool = True) -> float:
    """min over the closed family of ||grad f||_q / ||f - M f||_p (the
    closure applies the power transforms to median-centered members).

    With ``exact_grad`` gradient norms use exact CDF increments where the
    member supports it (accurate constants).  Self-consistency checks that
    compare two (p, q) estimates must instead run with node sums on both
    sides, where the underlying Hoelder chain holds exactly."""
    if len(family) == 0:
        raise ConcentrationError("empty family")
    best = math.inf
    found = False
    for vals, grad, prof, lip, _m in _normalized_members(ctx, family):
        med = weighted_median(vals, ctx.weights)
        h = vals - med
        for alpha in alphas:
            tv, tg = _power_transform(h, grad, alpha)
            denom = norm_lp(tv, ctx.weights, p)
            if denom <= 1e-12 * max(1.0, norm_lp(h, ctx.weights, p)):
                continue
            found = True
            if exact_grad and prof is not None:
                num = _profile_grad_norm(prof, ctx, q, alpha, med, lip)
            else:
                num = norm_lp(tg, ctx.weights, q)
            best = min(best, num / denom)
    if not found:
        raise ConcentrationError("all family members are constant")
    return best


def pq_monotonicity_check(ctx: EvalContext, family: TestFamily,
                          pq1: tuple, pq2: tuple) -> float:
    """Slack of est(p', q') >= (p / p') est(p, q) under the exponent
    relation 1/p - 1/q = 1/p' - 1/q'.

    The transform argument maps every (p', q') candidate g to the (p, q)
    candidate sign(g)|g|^{p'/p}, so the (p, q) side must carry one more
    closure level than the (p', q') side for the estimate-level inequality
    to inherit the proof."""
    (p, q), (p2, q2) = pq1, pq2
    inv = lambda z: 0.0 if math.isinf(z) else 1.0 / z
    if abs((inv(p) - inv(q)) - (inv(p2) - inv(q2))) > 1e-12:
        raise ConcentrationError("exponent relation 1/p - 1/q must be preserved")
    if p2 < p:
        raise ConcentrationError("need p <= p'")
    alpha = p2 / p
    est2 = d_pq(ctx, family, p2, q2, alphas=(1.0, alpha), exact_grad=False)
    est1 = d_pq(ctx, family, p, q, alphas=(1.0, alpha, alpha * alpha),
                exact_grad=False)
    return est2 - (p / p2) * est1


def orlicz_psi1(values: np.ndarray, weights: np.ndarray) -> float:
    """Orlicz norm for Psi_1(t) = e^t - 1: the v solving
    integral (e^{|f|/v} - 1) dmu = 1, by bisection to 1e-9 relative."""
    a = np.abs(np.asarray(values, dtype=float))
    l1 = float(weights @ a)
    if l1 <= 0:
        return 0.0
    top = float(np.max(a[weights > 0]))

    def G(v):
        z = np.clip(a / v, 0.0, 700.0)
        return float(weights @ np.expm1(z)) - 1.0

    lo = l1 / 2.0
    hi = max(top / math.log(2.0), l1) * (1 + 1e-12)
    glo, ghi = G(lo), G(hi)
    while glo < 0:  # widen down (possible for very peaked f)
        lo *= 0.5
        glo = G(lo)
        if lo < 1e-300:
            raise ConcentrationError("Psi1 bracketing failed")
    while ghi > 0:
        hi *= 2.0
        ghi = G(hi)
        if hi > 1e300:
            raise ConcentrationError("Psi1 integral diverges")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if G(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= PSI1_REL_TOL * hi:
            break
    return 0.5 * (lo + hi)


def psi1_p_band(values: np.ndarray, weights: np.ndarray,
                p_grid: Sequence[float] = (1, 2, 4, 8, 16, 32, 64)) -> float:
    """Ratio ||f||_Psi1 / sup_p ||f||_p / p over the p grid."""
    ps = orlicz_psi1(values, weights)
    sup = max(norm_lp(values, weights, p) / p for p in p_grid)
    return ps / sup


def median_expectation_check(values: np.ndarray, weights: np.ndarray,
                             norm_tag: str) -> tuple[float, float]:
    """Slacks of (1/2)||f - E|| <= ||f - M|| <= 3 ||f - E|| for the Orlicz
    norm named by norm_tag in {L1, L2, Psi1}."""
    E = expectation(values, weights)
    M = weighted_median(values, weights)
    if norm_tag == "L1":
        nf = lambda v: norm_lp(v, weights, 1.0)
    elif norm_tag == "L2":
        nf = lambda v: norm_lp(v, weights, 2.0)
    elif norm_tag == "Psi1":
        nf = lambda v: orlicz_psi1(v, weights)
    else:
        raise ConcentrationError(f"unknown norm tag {norm_tag}")
    ne = nf(values - E)
    nm = nf(values - M)
    return nm - 0.5 * ne, 3.0 * ne - nm


def half_space_candidates(ctx: EvalContext, directions: int = 72) -> list[HalfSpace]:
    """Half-spaces at the median offset per direction (measure exactly 1/2
    up to quadrature), the canonical worst-set candidates."""
    if ctx.dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        th = np.arange(directions) * (2 * np.pi / directions)
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    out = []
    for u in dirs:
        proj = ctx.points @ u
        out.append(HalfSpace(u, weighted_median(proj, ctx.weights)))
    return out


def worst_set_value(ctx: EvalContext, sets: Sequence[HalfSpace],
                    mass_tol: float = 1e-9) -> float:
    """inf over candidate sets A (mu(A) >= 1/2) of 1 / int d(x, A) dmu."""
    if not sets:
        raise ConcentrationError("empty candidate list")
    best = math.inf
    for hs in sets:
        s = ctx.points @ hs.normal - hs.offset
        mass = float(ctx.weights @ (s <= 1e-12))
        if mass < 0.5 - mass_tol - 1e-6:
            raise ConcentrationError(f"candidate set has measure {mass:.4f} < 1/2")
        mean_dist = float(ctx.weights @ np.maximum(s, 0.0))
        if mean_dist > 0:
            best = min(best, 1.0 / mean_dist)
    return best


def paley_zygmund_check(values: np.ndarray, weights: np.ndarray, theta: float) -> float:
    """Slack of Q_{1 - eps}(|f|) >= theta ||f||_1 with
    eps = (1 - theta)^2 / D^2 and D = ||f||_2 / ||f||_1 measured from f."""
    if not 0 < theta < 1:
        raise ConcentrationError("theta must lie in (0,1)")
    l1 = norm_lp(values, weights, 1.0)
    if l1 <= 0:
        raise ConcentrationError("||f||_1 vanishes")
    D = norm_lp(values, weights, 2.0) / l1
    eps = (1 - theta) ** 2 / (D * D)
    q = weighted_quantile(np.abs(values), weights, 1.0 - eps)
    return q - theta * l1


@dataclass
class Psi1L1Report:
    ratio: float
    hypothesis_met: bool
    quantile_slack: Optional[float]
    eps0: Optional[float]


def psi1_l1_comparison(values: np.ndarray, weights: np.ndarray,
                       d_fm_value: float, centered_at: str = "median") -> Psi1L1Report:
    """For a 1-Lipschitz f with vanishing median (or expectation) and
    ||f||_1 >= 1/(2 D_FM), report ||f||_Psi1 / ||f||_1 and check the
    quantile conclusion Q_{1-eps0}(|f|) >= ||f||_1 / 2, with eps0 from the
    Paley-Zygmund step at theta = 1/2 and D0 = 2 ||f||_Psi1 / ||f||_1."""
    l1 = norm_lp(values, weights, 1.0)
    if l1 < 1.0 / (2.0 * d_fm_value) - 1e-12 or l1 <= 0:
        return Psi1L1Report(math.inf if l1 == 0 else
                            orlicz_psi1(values, weights) / l1, False, None, None)
    psi = orlicz_psi1(values, weights)
    D0 = 2.0 * psi / l1
    eps0 = 0.25 / (D0 * D0)
    q = weighted_quantile(np.abs(values), weights, 1.0 - eps0)
    return Psi1L1Report(psi / l1, True, q - l1 / 2.0, eps0)
