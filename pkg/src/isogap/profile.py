"""Isoperimetric profiles.

1-D profiles are exact for log-concave measures: the minimizing sets are
half-lines, so I(t) = min(F'(F^{-1}(t)), F'(F^{-1}(1-t))) with F' the
density.  2-D profiles for uniform measures on convex bodies are upper
bounds obtained by searching a family of cuts: straight lines over an angle
grid (offsets solved exactly per angle from the piecewise-quadratic
area-versus-offset function) and circular arcs centered on the boundary,
which meet straight boundary pieces orthogonally.  Arc cuts are only
generated for genuinely polygonal bodies; for smooth boundaries the arc
family is empty and lines are used alone.

The Cheeger constant of a convex fixture is 2 * I(1/2) by concavity and
symmetry of the profile; the general sampled fallback inf_t I~(t)/t is also
provided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import (
    ConvexBody,
    polygon_area,
    polygon_circle_region,
    polygon_of,
)
from .measures import Measure1D, MeasureError

DEFAULT_T_GRID = np.round(np.arange(1, 100) * 0.01, 10)
LINE_ANGLES = 360
ARC_ANCHORS = 100
ARC_RADIUS_GRID = 160
ARC_MEASURE_TOL = 1e-5  # tighter than the 1e-4 contract; reported per point
MAX_ARC_POLY_SIDES = 64
PROFILE_POLY_SIDES = 512


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class CutCurve:
    """Minimizer descriptor for a 2-D cut: a line {<normal,x> = offset} or a
    circular arc (center on the boundary, meeting it orthogonally there)."""

    kind: str  # "line" | "arc"
    normal: Optional[np.ndarray] = None
    offset: Optional[float] = None
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None

    def describe(self) -> str:
        if self.kind == "line":
            return (f"line n=({self.normal[0]:.6f},{self.normal[1]:.6f}) "
                    f"c={self.offset:.6f}")
        return (f"arc c=({self.center[0]:.6f},{self.center[1]:.6f}) "
                f"r={self.radius:.6f}")


@dataclass
class ProfileCurve:
    t_values: np.ndarray
    I_values: np.ndarray
    err: np.ndarray
    method: str  # "exact1d" | "cutsearch2d"
    minimizers: list
    name: str = ""

    def __post_init__(self):
        t = np.asarray(self.t_values, dtype=float)
        if np.any(np.diff(t) <= 0):
            raise ProfileError("t grid must be increasing")
        if np.any((t <= 0) | (t >= 1)):
            raise ProfileError("t grid must lie in (0,1)")
        if np.any(np.asarray(self.I_values) < -1e-15):
            raise ProfileError("profile values must be nonnegative")

    def value(self, t: float) -> float:
        i = int(np.argmin(np.abs(self.t_values - t)))
        if abs(self.t_values[i] - t) > 1e-9:
            raise ProfileError(f"t={t} not on the sampled grid")
        return float(self.I_values[i])

    def sym_value(self, t: float) -> float:
        """I~(t) = min(I(t), I(1-t)), from the sampled grid."""
        return min(self.value(t), self.value(1.0 - t))

    @property
    def has_half(self) -> bool:
        return bool(np.any(np.abs(self.t_values - 0.5) <= 1e-9))

    def max_err(self) -> float:
        return float(np.max(self.err)) if len(self.err) else 0.0


# ---------------------------------------------------------------------------
# 1-D profiles (half-line minimizers)
# ---------------------------------------------------------------------------


def _branch_density(m: Measure1D, t: float) -> float:
    """Density at the t-quantile, minimized over the preimage bracket so
    that flat stretches of the CDF (zero-density gaps) report 0."""
    i0 = int(np.searchsorted(m.F, t - 1e-12, side="left"))
    i1 = int(np.searchsorted(m.F, t + 1e-12, side="right"))
    x = float(np.interp(t, m.F, m.xs))
    vals = [float(m.pdf(np.array([x]))[0])]
    if i1 - i0 > 1:  # flat region: check inside it as well
        xl, xr = float(m.xs[max(i0 - 1, 0)]), float(m.xs[min(i1, len(m.xs) - 1)])
        for xe in (xl, xr, 0.5 * (xl + xr)):
            vals.append(float(m.pdf(np.array([xe]))[0]))
    return min(vals)


def profile_1d_value(m: Measure1D, t: float) -> float:
    if not 0.0 < t < 1.0:
        raise ProfileError("t must lie in (0,1)")
    return min(_branch_density(m, t), _branch_density(m, 1.0 - t))


def profile_1d(m: Measure1D, t_grid: Optional[Sequence[float]] = None) -> ProfileCurve:
    ts = np.asarray(DEFAULT_T_GRID if t_grid is None else t_grid, dtype=float)
    if not np.any(np.abs(ts - 0.5) <= 1e-12):
        ts = np.sort(np.append(ts, 0.5))
    vals = np.empty(len(ts))
    mins = []
    h = float(np.max([s.h for s in m.segments]))
    for i, t in enumerate(ts):
        left = _branch_density(m, t)
        right = _branch_density(m, 1.0 - t)
        vals[i] = min(left, right)
        side = "left" if left <= right else "right"
        q = float(m.quantile(t if side == "left" else 1.0 - t))
        mins.append(("halfline", side, q))
    # interpolation bound of the density table: |rho''| h^2 / 8 estimated
    # from second differences
    curv = 0.0
    for s in m.segments:
        if len(s.rho) > 2:
            curv = max(curv, float(np.max(np.abs(np.diff(s.rho, 2)))) / s.h**2)
    err = np.full(len(ts), curv * h * h / 8.0 + 1e-14)
    return ProfileCurve(ts, vals, err, "exact1d", mins, name=m.name)


# ---------------------------------------------------------------------------
# 2-D cut search
# ---------------------------------------------------------------------------


def _line_tables(verts: np.ndarray, u: np.ndarray):
    """Per-angle tables: breakpoints of the width function (vertex
    projections), widths at interval quarter points, and the exact
    cumulative area.

    The boundary of a convex polygon splits into two projection-monotone
    chains between the extreme vertices, so widths follow from two
    monotone interpolations; width is linear between breakpoints and the
    midpoint rule integrates it exactly per interval.
    """
    m = len(verts)
    xi = verts @ u
    uperp = np.array([-u[1], u[0]])
    eta = verts @ uperp
    i0 = int(np.argmin(xi))
    i1 = int(np.argmax(xi))
    if xi[i1] - xi[i0] < 1e-14:
        return None

    def walk(start, stop):
        return np.arange(start, start + (stop - start) % m + 1) % m

    ia = walk(i0, i1)
    ib = walk(i1, i0)[::-1]
    # nudge duplicates so np.interp sees strictly increasing abscissae
    ax = np.maximum.accumulate(xi[ia]) + np.arange(len(ia)) * 1e-13
    ae = eta[ia]
    bx = np.maximum.accumulate(xi[ib]) + np.arange(len(ib)) * 1e-13
    be = eta[ib]

    bp = np.unique(np.round(xi, 14))
    dc = np.diff(bp)
    q1 = bp[:-1] + 0.25 * dc
    q3 = bp[:-1] + 0.75 * dc
    levels = np.concatenate([q1, q3])
    wa = np.interp(levels, ax, ae)
    wb = np.interp(levels, bx, be)
    w = np.abs(wa - wb)
    w_q1, w_q3 = w[: len(q1)], w[len(q1):]
    w_mid = 0.5 * (w_q1 + w_q3)
    slope = (w_q3 - w_q1) / (0.5 * dc)
    cumarea = np.concatenate([[0.0], np.cumsum(w_mid * dc)])
    return bp, w_mid, slope, cumarea


def _line_cut_at(tables, target_area: float):
    """Offset and chord length of the line cut enclosing target_area."""
    bp, w_mid, slope, cumarea = tables
    total = cumarea[-1]
    a = min(max(target_area, 0.0), total)
    k = int(np.searchsorted(cumarea, a, side="right") - 1)
    k = min(max(k, 0), len(bp) - 2)
    dc = bp[k + 1] - bp[k]
    w0 = w_mid[k] - slope[k] * dc / 2.0
    rem = a - cumarea[k]
    s = slope[k]
    if abs(s) < 1e-14 * max(abs(w0), 1.0):
        delta = rem / w0 if w0 > 0 else 0.0
    else:
        disc = max(w0 * w0 + 2.0 * s * rem, 0.0)
        delta = (-w0 + math.sqrt(disc)) / s
        if not (0.0 <= delta <= dc * (1 + 1e-9)):
            delta = rem / max(w0, 1e-300)
    delta = min(max(delta, 0.0), dc)
    chord = w0 + s * delta
    return bp[k] + delta, max(chord, 0.0)


def _boundary_anchors(verts: np.ndarray, count: int) -> np.ndarray:
    """Polygon vertices plus an arc-length net along the boundary."""
    edges = np.roll(verts, -1, axis=0) - verts
    lens = np.linalg.norm(edges, axis=1)
    per = float(lens.sum())
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    ss = (np.arange(count) + 0.5) * per / count
    idx = np.searchsorted(cum, ss, side="right") - 1
    idx = np.clip(idx, 0, len(verts) - 1)
    frac = (ss - cum[idx]) / np.maximum(lens[idx], 1e-300)
    net = verts[idx] + frac[:, None] * edges[idx]
    return np.vstack([verts, net])


def _arc_cut_at(verts, area_total, center, rho_grid, areas, arcs, t,
                prune_above: float = math.inf):
    """Refine the radius so the enclosed fraction hits t within tolerance.

    ``prune_above``: skip refinement when the bracketing grid values show
    the candidate cannot beat the current best cut.
    """
    target = t * area_total
    k = int(np.searchsorted(areas, target))
    if k == 0 or k >= len(rho_grid):
        return None
    guess = min(arcs[k - 1], arcs[k]) / area_total
    if guess > prune_above:
        return None
    lo, hi = rho_grid[k - 1], rho_grid[k]
    best = None
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        a, arc, _nc = polygon_circle_region(verts, center, mid)
        best = (mid, a, arc)
        if abs(a - target) <= ARC_MEASURE_TOL * area_total:
            break
        if a < target:
            lo = mid
        else:
            hi = mid
    rho, a, arc = best
    if abs(a - target) > 10 * ARC_MEASURE_TOL * area_total:
        return None
    return rho, arc


def profile_2d_upper(body: ConvexBody, t_grid: Optional[Sequence[float]] = None,
                     angles: int = LINE_ANGLES, arc_anchors: int = ARC_ANCHORS,
                     arc_radii: int = ARC_RADIUS_GRID,
                     include_arcs: Optional[bool] = None) -> ProfileCurve:
    """Upper bound on the isoperimetric profile of the uniform measure on a
    2-D convex body, minimizing cut length / area over lines and boundary
    centered circular arcs."""
    if body.dim != 2:
        raise ProfileError("cut search requires a 2-D body")
    ts = np.asarray(DEFAULT_T_GRID if t_grid is None else t_grid, dtype=float)
    if not np.any(np.abs(ts - 0.5) <= 1e-12):
        ts = np.sort(np.append(ts, 0.5))
    verts = polygon_of(body, sides=PROFILE_POLY_SIDES)
    area = polygon_area(verts)
    smooth = len(verts) > MAX_ARC_POLY_SIDES
    if include_arcs is None:
        include_arcs = not smooth

    best = np.full(len(ts), np.inf)
    mins: list = [None] * len(ts)

    # line family
    th = np.arange(angles) * (2.0 * np.pi / angles)
    for theta in th:
        u = np.array([math.cos(theta), math.sin(theta)])
        tables = _line_tables(verts, u)
        if tables is None:
            continue
        for i, t in enumerate(ts):
            offset, chord = _line_cut_at(tables, t * area)
            val = chord / area
            if val < best[i]:
                best[i] = val
                mins[i] = CutCurve("line", normal=u, offset=float(offset))

    # arc family (polygonal bodies only; arcs centered on straight boundary
    # pieces or at corners meet the boundary orthogonally)
    if include_arcs:
        anchors = _boundary_anchors(verts, arc_anchors)
        diam = float(np.max(np.linalg.norm(verts - verts.mean(axis=0), axis=1))) * 2.2
        rho_grid = np.linspace(diam / (4 * arc_radii), diam, arc_radii)
        for c in anchors:
            areas = np.empty(len(rho_grid))
            arcs = np.empty(len(rho_grid))
            for k, r in enumerate(rho_grid):
                a, arc, _nc = polygon_circle_region(verts, c, r)
                areas[k], arcs[k] = a, arc
            order = np.maximum.accumulate(areas)
            for i, t in enumerate(ts):
                got = _arc_cut_at(verts, area, c, rho_grid, order, arcs, t,
                                  prune_above=best[i] * 1.05 + 1e-9)
                if got is None:
                    continue
                rho, arclen = got
                val = arclen / area
                if val < best[i] and arclen > 0:
                    best[i] = val
                    mins[i] = CutCurve("arc", center=c.copy(), radius=float(rho))

    # method error: polygon inscription defect plus the measure-solve
    # tolerance, which acts relatively to the enclosed fraction
    poly_defect = (2 * np.pi / len(verts)) ** 2 / 6.0 if smooth else 0.0
    t_eff = np.minimum(ts, 1.0 - ts)
    err = best * (poly_defect + ARC_MEASURE_TOL / np.maximum(t_eff, 1e-6)) + 1e-12
    return ProfileCurve(ts, best, err, "cutsearch2d", mins,
                        name=type(body).__name__.lower())


# ---------------------------------------------------------------------------
# profile-derived quantities
# ---------------------------------------------------------------------------


def cheeger_constant(curve: ProfileCurve, convex: bool = True) -> float:
    """2 * I~(1/2) for convex inputs (profile concavity + symmetry);
    otherwise the sampled inf of I~(t)/t over t <= 1/2."""
    if convex:
        if not curve.has_half:
            raise ProfileError("t = 1/2 sample required with the convex flag")
        return 2.0 * curve.sym_value(0.5)
    ts, Is = curve.t_values, curve.I_values
    mask = ts <= 0.5 + 1e-12
    vals = []
    for t in ts[mask]:
        vals.append(min(curve.value(t),
                        curve.value(1.0 - t) if np.any(np.abs(ts - (1 - t)) < 1e-9) else np.inf) / t)
    return float(np.min(vals))


def capacity_1d(m: Measure1D, a: float, b: float, grid: int = 201) -> float:
    """1-capacity estimate: minimize int |Phi'| dmu over monotone two-knot
    ramps with plateau masses a and 1-b, knots on a quantile grid.

    The estimate equals the smallest average density between quantile pairs
    drawn from [a, b] (decreasing ramps) and from [1-b, 1-a] (increasing
    ramps), which lands inside the profile sandwich
    [inf_{a<=t<=b} I(t), inf_{a<=t<b} I(t)].
    """
    if not (0.0 < a < b < 1.0):
        raise ProfileError("need 0 < a < b < 1")

    def scan(lo: float, hi: float) -> float:
        ts = np.linspace(lo, hi, grid)
        xs = m.quantile(ts)
        best = math.inf
        # all pairs: average density = (t_j - t_i)/(x_j - x_i)
        dt = ts[None, :] - ts[:, None]
        dx = xs[None, :] - xs[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            avg = np.where(dx > 1e-300, dt / dx, np.inf)
        iu = np.triu_indices(grid, k=1)
        best = float(np.min(avg[iu]))
        return best

    return min(scan(a, b), scan(1.0 - b, 1.0 - a))


def concavity_check(curve: ProfileCurve, power: float = 1.0) -> float:
    """Largest discrete convexity defect of I^power over interior sample
    triples; concave profiles give values <= tolerance."""
    ts, Is = curve.t_values, np.maximum(curve.I_values, 0.0)
    if len(ts) < 5:
        raise ProfileError("need at least 5 sampled points")
    g = Is**power
    lam = (ts[2:] - ts[1:-1]) / (ts[2:] - ts[:-2])
    chord = lam * g[:-2] + (1.0 - lam) * g[2:]
    defect = chord - g[1:-1]
    return float(np.max(defect))


def buser_explicit_check(curve: ProfileCurve, D_pq: float, p: float, q: float,
                         tol: float = 1e-9) -> bool:
    """Check I~(t) >= D_pq / (8 * 2^r) * t^r at every sampled t <= 1/2,
    where r = 1 + 1/p - 1/q must lie in [1/2, 2]."""
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    r = 1.0 + inv_p - inv_q
    if not 0.5 <= r <= 2.0:
        raise ProfileError(f"exponent r={r:.3f} outside [1/2, 2]")
    c = D_pq / (8.0 * 2.0**r)
    ok = True
    for t in curve.t_values[curve.t_values <= 0.5 + 1e-12]:
        lhs = curve.sym_value(float(t)) if np.any(
            np.abs(curve.t_values - (1 - t)) < 1e-9) else curve.value(float(t))
        if lhs < c * t**r - tol:
            ok = False
    return ok


def symmetry_defect(curve: ProfileCurve) -> float:
    """max |I(t) - I(1-t)| over sampled symmetric pairs."""
    worst = 0.0
    for t in curve.t_values:
        j = np.abs(curve.t_values - (1.0 - t)) < 1e-9
        if j.any():
            worst = max(worst, abs(curve.value(float(t)) - float(curve.I_values[j][0])))
    return worst
