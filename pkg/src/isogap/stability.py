"""Perturbation experiments: inclusion stability of the Cheeger constant,
geometric-distance comparisons, total-variation stability for log-concave
measures, push-forward contraction, tensorization, and the iterated
volume-ratio limit.

Checks with explicit constants return slacks that must be nonnegative up to
tolerance.  Checks whose sharp constant is an unnamed universal number
return tracked ratios; callers compare those against pinned regression
bands, never against invented constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import concentration as cc
from . import measures as ms
from . import profile as pf
from . import spectral as spc
from .geometry import ConvexBody, Interval, Intersection, direction_net, volume

INCLUSION_TOL = 1e-9


class StabilityError(ValueError):
    pass


def inclusion_holds(L: ConvexBody, K: ConvexBody, tol: float = 1e-7) -> bool:
    """L subset K via support functions over a direction net."""
    us = direction_net(K.dim)
    hL = np.asarray(L.support_many(us))
    hK = np.asarray(K.support_many(us))
    return bool(np.all(hL <= hK + tol * np.maximum(np.abs(hK), 1.0)))


def cheeger_of_body(body: ConvexBody, t_grid=(0.5,)) -> float:
    """Cheeger constant of the uniform measure on a 2-D convex body via the
    cut-search upper bound at half measure (the profile is concave and
    symmetric for convex bodies, so D = 2 I(1/2))."""
    curve = pf.profile_2d_upper(body, t_grid=list(t_grid),
                                arc_anchors=32, arc_radii=64)
    return pf.cheeger_constant(curve, convex=True)


def cheeger_of_measure(m: ms.Measure1D) -> float:
    return 2.0 * pf.profile_1d_value(m, 0.5)


def _concentration_constants_body(body: ConvexBody, h: float = 1 / 48,
                                  seed: int = 11) -> tuple[float, float]:
    """(D_FM, D_Exp) of the uniform measure on a 2-D body by family search
    on a rasterized grid."""
    dom = spc.discretize_body(body, h)
    ctx = cc.EvalContext.from_grid(dom, name=type(body).__name__)
    fam = cc.build_default_family(ctx, seed=seed, n_random=60)
    return cc.d_fm(ctx, fam), cc.d_exp(ctx, fam)


def _concentration_constants_measure(m: ms.Measure1D,
                                     seed: int = 11) -> tuple[float, float]:
    ctx = cc.EvalContext.from_measure_1d(m)
    fam = cc.build_default_family(ctx, seed=seed, n_random=60)
    return cc.d_fm(ctx, fam), cc.d_exp(ctx, fam)


# ---------------------------------------------------------------------------
# inclusion lemmas
# ---------------------------------------------------------------------------


@dataclass
class GoingUpResult:
    v: float
    d_che_outer: float
    d_che_inner: float
    slack: float                       # D(K) - v^2 D(L) >= 0
    single_step_slack: Optional[float]  # D(K) - (2v - 1) D(L) when v > 1/2


def going_up_check(L: ConvexBody, K: ConvexBody, seed: int = 7) -> GoingUpResult:
    """Volume-ratio lower bound with the explicit square power: an inner
    convex body of volume fraction v keeps at least v^2 of the outer Cheeger
    constant; the one-step variant (2v - 1) is reported when v > 1/2."""
    if not inclusion_holds(L, K):
        raise StabilityError("inclusion L subset K fails the support test")
    vol_L = volume(L, seed=seed).value
    vol_K = volume(K, seed=seed).value
    v = vol_L / vol_K
    if K.dim == 1:
        dK = cheeger_of_measure(ms.uniform(*_interval_ends(K)))
        dL = cheeger_of_measure(ms.uniform(*_interval_ends(L)))
    else:
        dK = cheeger_of_body(K)
        dL = cheeger_of_body(L)
    slack = dK - v * v * dL
    single = dK - (2 * v - 1) * dL if v > 0.5 else None
    return GoingUpResult(v, dK, dL, slack, single)


def _interval_ends(body: ConvexBody):
    if isinstance(body, Interval):
        return body.a, body.b
    lo, hi = body.bounding_box()
    return float(lo[0]), float(hi[0])


@dataclass
class GoingDownResult:
    v: float
    d_fm_inner: float
    d_exp_outer: float
    ratio: float  # D_FM(L) * log(1 + 1/v) / D_Exp(K); bounded below by the
    # unnamed universal constant, tracked against the pinned band


def going_down_report(L: ConvexBody, K: ConvexBody, seed: int = 7,
                      h: float = 1 / 48) -> GoingDownResult:
    if not inclusion_holds(L, K):
        raise StabilityError("inclusion L subset K fails the support test")
    v = volume(L, seed=seed).value / volume(K, seed=seed).value
    d_fm_L, _ = _concentration_constants_body(L, h=h)
    _, d_exp_K = _concentration_constants_body(K, h=h)
    ratio = d_fm_L * math.log(1.0 + 1.0 / v) / d_exp_K
    return GoingDownResult(v, d_fm_L, d_exp_K, ratio)


@dataclass
class StabilityReport:
    v_K: float
    v_L: float
    constants_K: dict
    constants_L: dict
    constants_KL: dict
    vsq_slack: float        # D_Che(K) - v_K^2 D_Che(K cap L), explicit
    chain_ratio: float      # D_Che(K) log(1+1/v_L) / (v_K^2 D_Che(L)), tracked
    reverse_chain_ratio: float

    def explicit_slacks(self) -> dict:
        return {"going_up_vsq": self.vsq_slack}


def stability_theorem_report(K: ConvexBody, L: ConvexBody, seed: int = 7,
                             h: float = 1 / 48) -> StabilityReport:
    """Full two-body stability record: volumes of the intersection with a
    shared seed, all constants for K, L, K cap L, the explicit v^2 sub-step
    and the tracked full-chain ratios."""
    inter = Intersection(K, L)
    vol_I = volume(inter, seed=seed).value
    v_K = vol_I / volume(K, seed=seed).value
    v_L = vol_I / volume(L, seed=seed).value

    def consts(body):
        d_che = cheeger_of_body(body)
        d_fm, d_exp = _concentration_constants_body(body, h=h)
        return {"d_che": d_che, "d_fm": d_fm, "d_exp": d_exp}

    cK, cL, cI = consts(K), consts(L), consts(inter)
    vsq_slack = cK["d_che"] - v_K**2 * cI["d_che"]
    chain = cK["d_che"] * math.log(1 + 1 / v_L) / (v_K**2 * cL["d_che"])
    rchain = cL["d_che"] * math.log(1 + 1 / v_K) / (v_L**2 * cK["d_che"])
    return StabilityReport(v_K, v_L, cK, cL, cI, vsq_slack, chain, rchain)


@dataclass
class GeometricDistanceResult:
    d_g: float
    s: float
    dche_ratio: float        # D_Che(K) / D_Che(L)
    scaled_ratio: Optional[float]  # s * D_Che(L) / D_Che(K), None at s = 0


def geometric_distance_check(K: ConvexBody, L: ConvexBody,
                             n: Optional[int] = None) -> GeometricDistanceResult:
    from .geometry import geometric_distance

    n = n or K.dim
    dg = geometric_distance(K, L)
    s = n * (dg - 1.0)
    dK = cheeger_of_body(K) if K.dim == 2 else cheeger_of_measure(
        ms.uniform(*_interval_ends(K)))
    dL = cheeger_of_body(L) if L.dim == 2 else cheeger_of_measure(
        ms.uniform(*_interval_ends(L)))
    ratio = dK / dL
    scaled = s * dL / dK if s > 1e-12 else None
    return GeometricDistanceResult(dg, s, ratio, scaled)


# ---------------------------------------------------------------------------
# measure stability
# ---------------------------------------------------------------------------


@dataclass
class TvStabilityResult:
    tv: float
    eps: float
    dche_ratio: float    # D_Che(m1) / D_Che(m2)
    shape: float         # eps^2 / log(1 + 1/eps)
    tracked: float       # dche_ratio / shape (unnamed constant)


def tv_stability_report(m1: ms.Measure1D, m2: ms.Measure1D) -> TvStabilityResult:
    tv, _err = ms.tv_distance(m1, m2)
    eps = 1.0 - tv
    if eps <= 1e-9:
        raise StabilityError("total variation distance is 1; no stability")
    d1 = cheeger_of_measure(m1)
    d2 = cheeger_of_measure(m2)
    shape = eps * eps / math.log(1.0 + 1.0 / eps)
    return TvStabilityResult(tv, eps, d1 / d2, shape, (d1 / d2) / shape)


@dataclass(frozen=True)
class PushforwardMap:
    """Monotone piecewise-linear 1-D map given by knots."""

    knots_x: np.ndarray
    knots_y: np.ndarray

    def __post_init__(self):
        kx = np.asarray(self.knots_x, dtype=float)
        ky = np.asarray(self.knots_y, dtype=float)
        if np.any(np.diff(kx) <= 0) or np.any(np.diff(ky) <= 0):
            raise StabilityError("push-forward map must be strictly increasing")
        object.__setattr__(self, "knots_x", kx)
        object.__setattr__(self, "knots_y", ky)
        object.__setattr__(self, "slopes", np.diff(ky) / np.diff(kx))

    def apply(self, x):
        return np.interp(x, self.knots_x, self.knots_y)

    def local_lip(self, x):
        """|T'| at x (operator norm of the derivative in 1-D)."""
        seg = np.clip(np.searchsorted(self.knots_x, x, side="right") - 1,
                      0, len(self.slopes) - 1)
        return np.abs(self.slopes[seg])

    @property
    def lip(self) -> float:
        return float(np.max(self.slopes))


@dataclass
class PushforwardResult:
    pushforward_defect: float  # sup-density mismatch of T_* m vs target
    mean_local_lip: float
    plain_fact_slack: float    # D_Che(target) - D_Che(m)/Lip(T), explicit
    tracked_ratio: float       # D_Che(target) * int |DT| dmu / D_Che(m)


def pushforward_check(T: PushforwardMap, m: ms.Measure1D,
                      target: ms.Measure1D, tol: float = 5e-2) -> PushforwardResult:
    """Verify T_* m = target through the 1-D density formula, then evaluate
    the constant-free Lipschitz contraction and the on-average ratio."""
    ys = np.linspace(target.support[0] + 1e-9, target.support[1] - 1e-9, 2001)
    xs = np.interp(ys, T.knots_y, T.knots_x)  # T^{-1}
    lip_at = T.local_lip(xs)
    push_density = m.pdf(xs) / np.maximum(lip_at, 1e-300)
    defect = float(np.max(np.abs(push_density - target.pdf(ys))))
    scale = float(np.max(target.pdf(ys)))
    if defect > tol * scale:
        raise StabilityError(
            f"push-forward density mismatch {defect:.3e} (scale {scale:.3e})")
    mean_lip = float(m.weights @ T.local_lip(m.xs))
    d_src = cheeger_of_measure(m)
    d_tgt = cheeger_of_measure(target)
    plain = d_tgt - d_src / T.lip
    tracked = d_tgt * mean_lip / d_src
    return PushforwardResult(defect / scale, mean_lip, plain, tracked)


# ---------------------------------------------------------------------------
# tensorization
# ---------------------------------------------------------------------------


@dataclass
class TensorizationResult:
    gap_product: float
    gap_factors: tuple
    gap_slack: float                 # |lam(AxB) - min factor lam|, explicit
    dche_ratio: Optional[float]      # D_Che(AxB)/min(D_Che A, D_Che B), tracked


def tensorization_check(a: Union[ms.Measure1D, Interval],
                        b: Union[ms.Measure1D, Interval],
                        ncells: int = 120) -> TensorizationResult:
    """Product spectral gap equals the minimum factor gap (exact Neumann
    identity, checked to eigensolver tolerance); for interval factors the
    Cheeger ratio of the product box is tracked as well."""
    ma = ms.uniform(a.a, a.b) if isinstance(a, Interval) else a
    mb = ms.uniform(b.a, b.b) if isinstance(b, Interval) else b
    # equal spacings across factors, as the product stencil requires
    span = max(ma.support[1] - ma.support[0], mb.support[1] - mb.support[0])
    h = span / ncells
    da = spc.discretize_measure_1d(ma, h=h)
    db = spc.discretize_measure_1d(mb, h=h)
    ga = spc.spectral_gap(spc.GridOperator(da)).lam
    gb = spc.spectral_gap(spc.GridOperator(db)).lam
    dprod = spc.product_grid(da, db)
    gp = spc.spectral_gap(spc.GridOperator(dprod)).lam
    slack = abs(gp - min(ga, gb))
    ratio = None
    if isinstance(a, Interval) and isinstance(b, Interval):
        from .geometry import Box

        box = Box(np.array([a.a, b.a]), np.array([a.b, b.b]))
        d_box = cheeger_of_body(box)
        d_min = min(2.0 / (a.b - a.a), 2.0 / (b.b - b.a))
        ratio = d_box / d_min
    return TensorizationResult(gp, (ga, gb), slack, ratio)


@dataclass
class GoingUpLimitResult:
    ms_grid: np.ndarray
    values: np.ndarray
    limit: float
    monotone: bool
    final_gap: float
    bound: float


def going_up_limit_check(v: float, m_max: int = 64) -> GoingUpLimitResult:
    """Iterated one-step bound (2 v^{1/m} - 1)^m increases towards v^2; the
    final gap is compared against 10 |ln v|^2 / m."""
    if not 0.0 < v <= 1.0:
        raise StabilityError("v must lie in (0, 1]")
    grid = []
    vals = []
    for mm in range(1, m_max + 1):
        root = v ** (1.0 / mm)
        if 2 * root - 1 <= 0:
            continue
        grid.append(mm)
        vals.append((2 * root - 1) ** mm)
    grid = np.asarray(grid)
    vals = np.asarray(vals)
    mono = bool(np.all(np.diff(vals) >= -1e-14))
    gap = abs(vals[-1] - v * v)
    bound = 10.0 / grid[-1] * (math.log(v) ** 2 if v > 0 else math.inf)
    return GoingUpLimitResult(grid, vals, v * v, mono, gap, bound)
