"""Log-concave probability measures: 1-D quadrature-backed densities,
uniform measures on bodies, products, and a standard Gaussian.

1-D measures are stored as density tables on one or more uniform grid
segments (several segments only where the density has jumps, so composite
Simpson stays exact per smooth segment).  The cumulative table is produced
by Simpson-consistent accumulation and the quantile function inverts its
linear interpolant exactly.  Unbounded supports are truncated where the
density falls below 1e-16 of its maximum; the lost mass goes into the
reported error budget.

All quadrature is composite Simpson with fixed grids, so every number here
is bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .geometry import (
    ConvexBody,
    DimensionMismatch,
    GeometryError,
    polygon_area,
    polygon_circle_region,
    polygon_of,
    volume,
)

MASS_TOL = 1e-10
CONVEXITY_TOL = 1e-9
TRUNCATION_RATIO = 1e-16
MIN_NODES = 2000


class MeasureError(ValueError):
    pass


def _simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights for n nodes (n odd) at spacing h."""
    if n < 3 or n % 2 == 0:
        raise MeasureError("Simpson segment needs an odd node count >= 3")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def _cumulative_simpson(y: np.ndarray, h: float) -> np.ndarray:
    """Per-node cumulative integral consistent with composite Simpson.

    Over each node pair the quadratic through (y0, y1, y2) is integrated to
    the half panel, so the final entry equals the composite Simpson total.
    """
    n = len(y)
    out = np.zeros(n)
    for i in range(0, n - 2, 2):
        y0, y1, y2 = y[i], y[i + 1], y[i + 2]
        # integral of the interpolating quadratic over the first half panel
        left = h * (5 * y0 + 8 * y1 - y2) / 12.0
        full = h * (y0 + 4 * y1 + y2) / 3.0
        out[i + 1] = out[i] + left
        out[i + 2] = out[i] + full
    return out


@dataclass(frozen=True)
class Segment:
    xs: np.ndarray
    rho: np.ndarray

    @property
    def h(self) -> float:
        return float(self.xs[1] - self.xs[0])


class Measure1D:
    """Probability measure exp(-psi(x)) dx on a union of grid segments."""

    def __init__(self, segments: Sequence[Segment], *, name: str = "",
                 log_concave: bool = True, allow_non_logconcave: bool = False,
                 truncation_mass: float = 0.0):
        if not segments:
            raise MeasureError("need at least one segment")
        total_nodes = sum(len(s.xs) for s in segments)
        if total_nodes < MIN_NODES:
            raise MeasureError(f"grid too coarse: {total_nodes} < {MIN_NODES} nodes")
        raw_mass = 0.0
        for s in segments:
            if np.any(s.rho < 0):
                raise MeasureError("negative density")
            raw_mass += float(_simpson_weights(len(s.xs), s.h) @ s.rho)
        segs = [Segment(np.asarray(s.xs, float), np.asarray(s.rho, float) / raw_mass)
                for s in segments]
        self.segments = segs
        self.name = name
        self.truncation_mass = truncation_mass / raw_mass
        self.dim = 1
        # concatenated tables
        self.xs = np.concatenate([s.xs for s in segs])
        self.rho = np.concatenate([s.rho for s in segs])
        self.weights = np.concatenate(
            [_simpson_weights(len(s.xs), s.h) * s.rho for s in segs])
        # cumulative F at every node, accumulated across segments
        Fs = []
        acc = 0.0
        for s in segs:
            c = _cumulative_simpson(s.rho, s.h) + acc
            acc = c[-1]
            Fs.append(c)
        F = np.concatenate(Fs)
        F = np.maximum.accumulate(F) / acc
        self.F = F
        self._mass = acc
        if abs(self._mass - 1.0) > MASS_TOL:
            raise MeasureError("normalization failed")
        self.log_concave = log_concave
        if log_concave:
            viol = self.table_convexity_defect()
            if viol > CONVEXITY_TOL and not allow_non_logconcave:
                raise MeasureError(
                    f"potential table fails convexity by {viol:.3e}; "
                    "pass allow_non_logconcave=True to construct anyway")
        elif not allow_non_logconcave:
            raise MeasureError("non-log-concave measures require allow_non_logconcave=True")

    def table_convexity_defect(self) -> float:
        """Largest negative second difference of the node potential (per
        segment); convex tables give values >= -roundoff."""
        worst = -math.inf
        for s in self.segments:
            with np.errstate(divide="ignore"):
                psi = -np.log(np.maximum(s.rho, 1e-300))
            d2 = np.diff(psi, 2)
            if d2.size:
                worst = max(worst, float(-np.min(d2)))
        return worst

    # -- basic tables --------------------------------------------------------

    @property
    def support(self) -> tuple[float, float]:
        return float(self.xs[0]), float(self.xs[-1])

    @property
    def connected_support(self) -> bool:
        for a, b in zip(self.segments[:-1], self.segments[1:]):
            if b.xs[0] - a.xs[-1] > 1e-12 * max(1.0, abs(a.xs[-1])):
                return False
        return True

    def mass(self) -> float:
        return float(np.sum(self.weights))

    def pdf(self, x) -> np.ndarray:
        """Density between nodes by log-linear interpolation, i.e. the
        potential is piecewise linear, so the interpolated model is exactly
        log-concave whenever the node table is."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for s in self.segments:
            inside = (x >= s.xs[0]) & (x <= s.xs[-1])
            if inside.any():
                with np.errstate(divide="ignore"):
                    logr = np.log(np.maximum(s.rho, 1e-300))
                vals = np.exp(np.interp(x, s.xs, logr))
                vals = np.where(np.interp(x, s.xs, s.rho) <= 0, 0.0, vals)
                out = np.where(inside, vals, out)
        return out

    def psi(self, x) -> np.ndarray:
        """Potential -log(density); +inf outside the support."""
        p = self.pdf(x)
        with np.errstate(divide="ignore"):
            return np.where(p > 0, -np.log(np.maximum(p, 1e-300)), np.inf)

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.xs, self.F)
        out = np.where(x < self.xs[0], 0.0, out)
        out = np.where(x > self.xs[-1], 1.0, out)
        return out

    def quantile(self, t) -> np.ndarray:
        """x with F(x) = t; inverts the linear interpolant of the cumulative
        table, so |F(result) - t| vanishes up to roundoff."""
        t = np.asarray(t, dtype=float)
        if np.any((t <= 0) | (t >= 1)):
            raise MeasureError("quantile requires t in (0,1)")
        return np.interp(t, self.F, self.xs)

    # -- integrals -----------------------------------------------------------

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(self.weights @ np.asarray(f(self.xs), dtype=float))

    def integrate_values(self, vals: np.ndarray) -> float:
        return float(self.weights @ vals)

    def mean(self) -> float:
        return float(self.weights @ self.xs)

    def variance(self) -> float:
        m = self.mean()
        return float(self.weights @ (self.xs - m) ** 2)

    def logconcavity_violation(self, pairs: int = 10000, seed: int = 20240903) -> float:
        """Midpoint-convexity defect of psi on random support pairs."""
        rng = np.random.default_rng(seed)
        lo, hi = self.support
        x = lo + (hi - lo) * rng.random(pairs)
        y = lo + (hi - lo) * rng.random(pairs)
        px, py, pm = self.psi(x), self.psi(y), self.psi(0.5 * (x + y))
        fin = np.isfinite(px) & np.isfinite(py)
        if not fin.any():
            return 0.0
        defect = pm[fin] - 0.5 * (px[fin] + py[fin])
        return float(np.max(defect))

    # -- sampling -------------------------------------------------------------

    def sample(self, n: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        u = rng.random(n)
        u = np.clip(u, 1e-15, 1 - 1e-15)
        return self.quantile(u)


# -- constructors -------------------------------------------------------------


def _grid(lo: float, hi: float, n: int) -> np.ndarray:
    if n % 2 == 0:
        n += 1
    return np.linspace(lo, hi, n)


def uniform(a: float, b: float, n: int = 2001, name: str = "") -> Measure1D:
    xs = _grid(a, b, n)
    return Measure1D([Segment(xs, np.ones_like(xs))],
                     name=name or f"uniform[{a:g},{b:g}]")


def from_potential(psi: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
                   n: int = 4001, name: str = "", log_concave: bool = True,
                   allow_non_logconcave: bool = False) -> Measure1D:
    """Measure with density exp(-psi) on [lo, hi], truncating where the
    density is below 1e-16 of its maximum."""
    xs = _grid(lo, hi, n)
    logrho = -np.asarray(psi(xs), dtype=float)
    logrho -= np.max(logrho)
    keep = logrho >= math.log(TRUNCATION_RATIO)
    i0, i1 = int(np.argmax(keep)), int(len(keep) - np.argmax(keep[::-1]) - 1)
    if i1 - i0 + 1 < n:  # re-grid the kept window at full resolution
        xs = _grid(xs[i0], xs[i1], n)
        logrho = -np.asarray(psi(xs), dtype=float)
        logrho -= np.max(logrho)
    rho = np.exp(logrho)
    # truncation budget: crude bound by edge density times edge spacing scale
    trunc = float(rho[0] + rho[-1]) * (xs[1] - xs[0])
    return Measure1D([Segment(xs, rho)], name=name, log_concave=log_concave,
                     allow_non_logconcave=allow_non_logconcave, truncation_mass=trunc)


def gaussian(mean: float = 0.0, sigma: float = 1.0, n: int = 4001,
             name: str = "gaussian") -> Measure1D:
    half = 8.6 * sigma
    xs = _grid(mean - half, mean + half, n)
    rho = np.exp(-0.5 * ((xs - mean) / sigma) ** 2)
    trunc = 2.0 * stats.norm.sf(8.6)
    return Measure1D([Segment(xs, rho)], name=name, truncation_mass=trunc)


def two_sided_exponential(scale: float = 1.0, n: int = 16001,
                          name: str = "two-sided-exponential") -> Measure1D:
    half = 37.0 * scale
    xs = _grid(-half, half, n)
    rho = np.exp(-np.abs(xs) / scale)
    return Measure1D([Segment(xs, rho)], name=name,
                     truncation_mass=math.exp(-37.0))


def from_psi_table(knots_x: Sequence[float], knots_psi: Sequence[float],
                   nodes_per_piece: Optional[int] = None, name: str = "table") -> Measure1D:
    """Piecewise-linear convex potential given by breakpoints.

    Each linear piece becomes its own Simpson segment, so the exponential
    density is smooth per segment.
    """
    kx = np.asarray(knots_x, dtype=float)
    kp = np.asarray(knots_psi, dtype=float)
    if len(kx) < 2 or np.any(np.diff(kx) <= 0):
        raise MeasureError("potential breakpoints must be strictly increasing")
    slopes = np.diff(kp) / np.diff(kx)
    if np.any(np.diff(slopes) < -CONVEXITY_TOL):
        raise MeasureError("potential table is not convex")
    npieces = len(kx) - 1
    if nodes_per_piece is None:
        nodes_per_piece = max(801, MIN_NODES // npieces + 3)
    segs = []
    for i in range(npieces):
        xs = _grid(kx[i], kx[i + 1], nodes_per_piece)
        psi_vals = kp[i] + slopes[i] * (xs - kx[i])
        segs.append(Segment(xs, np.exp(-psi_vals)))
    return Measure1D(segs, name=name)


def dilate_1d(m: Measure1D, s: float) -> Measure1D:
    """Push-forward of the measure under x -> s x (s > 0)."""
    if s <= 0:
        raise MeasureError("dilation factor must be positive")
    segs = [Segment(seg.xs * s, seg.rho / s) for seg in m.segments]
    return Measure1D(segs, name=f"{m.name}*{s:g}", log_concave=m.log_concave,
                     allow_non_logconcave=not m.log_concave,
                     truncation_mass=m.truncation_mass)


def translate_1d(m: Measure1D, c: float) -> Measure1D:
    """Push-forward of the measure under x -> x + c."""
    segs = [Segment(seg.xs + c, seg.rho.copy()) for seg in m.segments]
    return Measure1D(segs, name=f"{m.name}+{c:g}", log_concave=m.log_concave,
                     allow_non_logconcave=not m.log_concave,
                     truncation_mass=m.truncation_mass)


def punctured_uniform(m: int = 3, n_per_side: int = 2001, *,
                      allow_non_logconcave: bool) -> Measure1D:
    """Uniform on [0,1] minus the centered band of width 2/m.

    Not log-concave; exists purely as a negative fixture and therefore
    demands the explicit flag.
    """
    if m < 3:
        raise MeasureError("band construction needs m >= 3")
    if not allow_non_logconcave:
        raise MeasureError("this fixture requires allow_non_logconcave=True")
    a, b = 0.5 - 1.0 / m, 0.5 + 1.0 / m
    left = _grid(0.0, a, n_per_side)
    right = _grid(b, 1.0, n_per_side)
    return Measure1D([Segment(left, np.ones_like(left)),
                      Segment(right, np.ones_like(right))],
                     name=f"punctured-uniform-{m}", log_concave=False,
                     allow_non_logconcave=True)


# -----------------------------------------------------------------------------
# n-dimensional measures
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class CovarianceSummary:
    mean: np.ndarray
    cov: np.ndarray
    sigma1: float
    std_error: float = 0.0
    method: str = "quadrature"

    def __post_init__(self):
        c = np.atleast_2d(self.cov)
        asym = float(np.max(np.abs(c - c.T))) if c.size else 0.0
        if asym > 1e-8:
            raise MeasureError("covariance must be symmetric")
        if self.sigma1 < 0:
            raise MeasureError("sigma1 must be nonnegative")


class MeasureND:
    """Common interface for the n-dimensional variants."""

    dim: int
    name: str

    def covariance(self, samples: int = 200_000, seed: int = 0) -> CovarianceSummary:
        raise NotImplementedError

    def sample(self, n: int, seed: int) -> np.ndarray:
        raise NotImplementedError

    def ball_mass(self, x0: np.ndarray, r: float) -> float:
        """mu(B(x0, r)); exact or quadrature depending on the variant."""
        raise NotImplementedError


def _sigma1_of(cov: np.ndarray) -> float:
    ev = np.linalg.eigvalsh(np.atleast_2d(cov))
    return float(math.sqrt(max(float(ev[-1]), 0.0)))


class ProductMeasure(MeasureND):
    def __init__(self, factors: Sequence[Measure1D], name: str = ""):
        self.factors = list(factors)
        self.dim = len(self.factors)
        if self.dim > 3:
            raise MeasureError("dimensions above 3 are out of scope")
        self.name = name or "x".join(f.name for f in self.factors)

    def covariance(self, samples: int = 0, seed: int = 0) -> CovarianceSummary:
        means = np.array([f.mean() for f in self.factors])
        varis = np.array([f.variance() for f in self.factors])
        cov = np.diag(varis)
        return CovarianceSummary(means, cov, _sigma1_of(cov))

    def sample(self, n: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        u = np.clip(rng.random((n, self.dim)), 1e-15, 1 - 1e-15)
        cols = [f.quantile(u[:, j]) for j, f in enumerate(self.factors)]
        return np.stack(cols, axis=1)

    def ball_mass(self, x0, r: float) -> float:
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        if self.dim == 1:
            f = self.factors[0]
            return float(f.cdf(x0[0] + r) - f.cdf(x0[0] - r))
        if self.dim == 2:
            fx, fy = self.factors
            # tensor Simpson over the x-range of the ball
            wx_all = fx.weights
            xs = fx.xs
            dy = r * r - (xs - x0[0]) ** 2
            ok = dy > 0
            if not ok.any():
                return 0.0
            half = np.sqrt(dy[ok])
            lo = fy.cdf(x0[1] - half)
            hi = fy.cdf(x0[1] + half)
            return float(wx_all[ok] @ (hi - lo))
        raise MeasureError("ball mass for products implemented for n <= 2")


class GaussianStd(MeasureND):
    def __init__(self, n: int):
        if not 1 <= n <= 3:
            raise MeasureError("GaussianStd supports n in 1..3")
        self.dim = n
        self.name = f"gaussian-std-{n}d"

    def covariance(self, samples: int = 0, seed: int = 0) -> CovarianceSummary:
        return CovarianceSummary(np.zeros(self.dim), np.eye(self.dim), 1.0)

    def sample(self, n: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return rng.standard_normal((n, self.dim))

    def ball_mass(self, x0, r: float) -> float:
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        lam = float(x0 @ x0)
        if lam == 0.0:
            return float(stats.chi2.cdf(r * r, df=self.dim))
        return float(stats.ncx2.cdf(r * r, df=self.dim, nc=lam))


class UniformOnBody(MeasureND):
    def __init__(self, body: ConvexBody, name: str = ""):
        self.body = body
        self.dim = body.dim
        self.name = name or f"uniform-on-{type(body).__name__.lower()}"
        lo, hi = body.bounding_box()
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise MeasureError("uniform measure requires a bounded body")
        self._lo, self._hi = lo, hi

    def covariance(self, samples: int = 200_000, seed: int = 0) -> CovarianceSummary:
        pts = self.sample(samples, seed)
        mean = pts.mean(axis=0)
        dev = pts - mean
        cov = dev.T @ dev / (len(pts) - 1)
        se = float(np.max(np.std(dev * dev, axis=0)) / math.sqrt(len(pts)))
        return CovarianceSummary(mean, cov, _sigma1_of(cov), std_error=se,
                                 method="monte-carlo")

    def sample(self, n: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        out = np.empty((n, self.dim))
        got = 0
        attempts = 0
        total_drawn = 0
        while got < n:
            m = max(4 * (n - got), 4096)
            pts = self._lo + (self._hi - self._lo) * rng.random((m, self.dim))
            ok = self.body.contains_many(pts)
            k = min(int(ok.sum()), n - got)
            out[got : got + k] = pts[ok][:k]
            got += k
            total_drawn += m
            attempts += 1
            if attempts > 10 and got / max(total_drawn, 1) < 1e-4:
                raise MeasureError("rejection acceptance rate below 1e-4")
        return out

    def ball_mass(self, x0, r: float) -> float:
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        if self.dim == 2:
            poly = polygon_of(self.body)
            inter, _arc, _nc = polygon_circle_region(poly, x0, r)
            return inter / polygon_area(poly)
        # 1-D and 3-D fall back to deterministic MC
        vol = volume(self.body, seed=1234, samples=400_000)
        ball_hits = volume_of_ball_intersection(self.body, x0, r, seed=1234)
        return ball_hits / vol.value


def volume_of_ball_intersection(body: ConvexBody, x0: np.ndarray, r: float,
                                seed: int, samples: int = 400_000) -> float:
    lo, hi = body.bounding_box()
    rng = np.random.default_rng(seed)
    box = float(np.prod(hi - lo))
    hits = 0
    done = 0
    while done < samples:
        m = min(65536, samples - done)
        pts = lo + (hi - lo) * rng.random((m, body.dim))
        ok = body.contains_many(pts)
        ok &= np.linalg.norm(pts - x0, axis=1) <= r
        hits += int(np.count_nonzero(ok))
        done += m
    return hits / samples * box


def as_nd(m) -> MeasureND:
    if isinstance(m, Measure1D):
        return ProductMeasure([m], name=m.name)
    return m


# -----------------------------------------------------------------------------
# operations
# -----------------------------------------------------------------------------


def cdf_quantile(m: Measure1D, t: float) -> float:
    """Point x with F(x) = t for t in (0,1)."""
    return float(m.quantile(t))


def tv_distance(m1: Measure1D, m2: Measure1D, n_union: int = 48001):
    """Total-variation distance (1/2) integral |rho1 - rho2| by composite
    Simpson on a uniform union grid.  Returns (value, error_bound) where the
    error bound is a Richardson estimate from the half-resolution grid."""
    lo = min(m1.support[0], m2.support[0])
    hi = max(m1.support[1], m2.support[1])
    if m1.support[1] < m2.support[0] or m2.support[1] < m1.support[0]:
        raise MeasureError("supports do not overlap a common grid range")

    def integral(nn):
        xs = _grid(lo, hi, nn)
        h = xs[1] - xs[0]
        diff = np.abs(m1.pdf(xs) - m2.pdf(xs))
        w = _simpson_weights(len(xs), h)
        return 0.5 * float(w @ diff)

    full = integral(n_union)
    halfres = integral(n_union // 2 if (n_union // 2) % 2 == 1 else n_union // 2 + 1)
    err = abs(full - halfres)
    return min(max(full, 0.0), 1.0), err


def borell_tail_check(m, x0, R: float, t_grid: Sequence[float]) -> float:
    """Max over t >= 1 of tail(t) - theta * ((1-theta)/theta)^((t+1)/2) where
    theta = mu(B(x0, R)) must exceed 1/2.  Log-concave measures must come out
    <= numerical tolerance."""
    nd = as_nd(m)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    theta = nd.ball_mass(x0, R)
    if theta <= 0.5:
        raise MeasureError(f"lemma requires mu(B(x0,R)) > 1/2, got {theta:.4f}")
    worst = -math.inf
    for t in t_grid:
        if t < 1.0:
            raise MeasureError("t grid must satisfy t >= 1")
        tail = 1.0 - nd.ball_mass(x0, t * R)
        bound = theta * ((1.0 - theta) / theta) ** ((t + 1.0) / 2.0)
        worst = max(worst, tail - bound)
    return worst


def covariance(m, samples: int = 200_000, seed: int = 0) -> CovarianceSummary:
    return as_nd(m).covariance(samples=samples, seed=seed)


def sample(m, n: int, seed: int) -> np.ndarray:
    return as_nd(m).sample(n, seed)


def ks_statistic(points: np.ndarray, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """Kolmogorov-Smirnov statistic of a 1-D sample against a CDF."""
    x = np.sort(np.asarray(points, dtype=float).ravel())
    n = len(x)
    F = cdf(x)
    up = np.max(np.arange(1, n + 1) / n - F)
    dn = np.max(F - np.arange(0, n) / n)
    return float(max(up, dn))
