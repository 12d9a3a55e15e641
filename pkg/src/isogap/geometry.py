"""Convex bodies in R^n (n <= 3) with membership, support, volume and
distance primitives.

Bodies are immutable after construction and safe to share read-only across
workers.  Monte Carlo volume consumes an explicit seed and accumulates hit
counts in fixed-size chunks combined in index order, so the result is
bit-identical for a given seed regardless of how the samples are split.

Throughout, "support" means the support function h(u) = sup_{x in K} <u, x>.
The Euclidean norm is used everywhere a norm is needed; when several
Euclidean structures could be in force simultaneously, this module fixes the
standard one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import HalfspaceIntersection

# Tolerances (construction-time defaults; report-facing values carry them).
DEGENERACY_TOL = 1e-10
UNIT_NORMAL_TOL = 1e-12
DEFAULT_DIRECTIONS_2D = 720
DEFAULT_DIRECTIONS_3D = 2000
MC_CHUNK = 65536
Z99 = 2.5758293035489004  # two-sided 99% normal quantile


class GeometryError(ValueError):
    pass


class DimensionMismatch(GeometryError):
    pass


class UnboundedBodyError(GeometryError):
    pass


class DegenerateBodyError(GeometryError):
    pass


def _as_point(x, dim: int) -> np.ndarray:
    p = np.atleast_1d(np.asarray(x, dtype=float))
    if p.shape != (dim,):
        raise DimensionMismatch(f"expected point of dimension {dim}, got shape {p.shape}")
    return p


def _ro(a: np.ndarray) -> np.ndarray:
    """Return a read-only float array (defensive immutability)."""
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def direction_net(dim: int, count: Optional[int] = None) -> np.ndarray:
    """Deterministic unit-direction net: uniform angles in 2-D, Fibonacci
    sphere in 3-D.  1-D returns the two signs."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        m = DEFAULT_DIRECTIONS_2D if count is None else count
        th = np.arange(m) * (2.0 * np.pi / m)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if dim == 3:
        m = DEFAULT_DIRECTIONS_3D if count is None else count
        i = np.arange(m) + 0.5
        phi = np.arccos(1.0 - 2.0 * i / m)
        golden = np.pi * (1.0 + 5.0**0.5)
        th = golden * i
        return np.stack(
            [np.sin(phi) * np.cos(th), np.sin(phi) * np.sin(th), np.cos(phi)], axis=1
        )
    raise GeometryError(f"unsupported dimension {dim}")


# ---------------------------------------------------------------------------
# body variants
# ---------------------------------------------------------------------------


class ConvexBody:
    """Base class.  Concrete variants implement exact membership and exact
    (or certified) support evaluation."""

    dim: int

    # -- membership ---------------------------------------------------------
    def contains(self, x) -> bool:
        return bool(self.contains_many(np.asarray(x, dtype=float).reshape(1, -1))[0])

    def contains_many(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- support ------------------------------------------------------------
    def support(self, u) -> float:
        """h(u) = sup <u, x> over the body.  Exact for all variants except
        Intersection, where a certified numeric maximization is used."""
        raise NotImplementedError

    def support_many(self, us: np.ndarray) -> np.ndarray:
        return np.array([self.support(u) for u in us])

    # -- geometry helpers ----------------------------------------------------
    def interior_point(self) -> np.ndarray:
        raise NotImplementedError

    def inradius_lower(self) -> float:
        """Certified lower bound on the radius of a ball inside the body."""
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        us = np.eye(self.dim)
        hi = self.support_many(us)
        lo = -self.support_many(-us)
        return lo, hi

    def exact_volume(self) -> Optional[float]:
        """Closed-form volume when one exists, else None."""
        return None

    def _check_nondegenerate(self):
        if not np.isfinite(self.support_many(np.eye(self.dim))).all():
            raise UnboundedBodyError("support diverges along a coordinate direction")
        if self.inradius_lower() < DEGENERACY_TOL:
            raise DegenerateBodyError(
                f"interior-ball radius below {DEGENERACY_TOL:g}"
            )


@dataclass(frozen=True)
class Interval(ConvexBody):
    a: float
    b: float
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        if not (self.b > self.a):
            raise DegenerateBodyError("interval requires b > a")
        self._check_nondegenerate()

    def contains_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        return (pts[:, 0] >= self.a) & (pts[:, 0] <= self.b)

    def support(self, u):
        u = _as_point(u, 1)
        return float(max(self.a * u[0], self.b * u[0]))

    def interior_point(self):
        return np.array([0.5 * (self.a + self.b)])

    def inradius_lower(self):
        return 0.5 * (self.b - self.a)

    def exact_volume(self):
        return self.b - self.a


@dataclass(frozen=True)
class Box(ConvexBody):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = _ro(self.lo), _ro(self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "dim", lo.shape[0])
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch("lo/hi shape mismatch")
        if not np.all(hi > lo):
            raise DegenerateBodyError("box requires hi > lo on every axis")
        self._check_nondegenerate()

    def contains_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    def support(self, u):
        u = _as_point(u, self.dim)
        return float(np.sum(np.maximum(self.lo * u, self.hi * u)))

    def interior_point(self):
        return 0.5 * (self.lo + self.hi)

    def inradius_lower(self):
        return 0.5 * float(np.min(self.hi - self.lo))

    def exact_volume(self):
        return float(np.prod(self.hi - self.lo))

    def exact_diameter(self):
        return float(np.linalg.norm(self.hi - self.lo))


@dataclass(frozen=True)
class Ball(ConvexBody):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = _ro(np.atleast_1d(self.center))
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "dim", c.shape[0])
        if self.radius <= 0:
            raise DegenerateBodyError("ball requires positive radius")
        self._check_nondegenerate()

    def contains_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.linalg.norm(pts - self.center, axis=1) <= self.radius * (1 + 1e-15)

    def support(self, u):
        u = _as_point(u, self.dim)
        return float(self.center @ u + self.radius * np.linalg.norm(u))

    def interior_point(self):
        return self.center.copy()

    def inradius_lower(self):
        return self.radius

    def exact_volume(self):
        n = self.dim
        return float(math.pi ** (n / 2) / math.gamma(n / 2 + 1) * self.radius**n)

    def exact_diameter(self):
        return 2.0 * self.radius


@dataclass(frozen=True)
class LpBall(ConvexBody):
    """{x : |x - 0|_p <= radius}, centered at the origin."""

    p: float
    radius: float
    dim: int = 2

    def __post_init__(self):
        if self.p < 1:
            raise GeometryError("p >= 1 required for convexity")
        if self.radius <= 0:
            raise DegenerateBodyError("lp ball requires positive radius")
        self._check_nondegenerate()

    def contains_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        if np.isinf(self.p):
            nrm = np.max(np.abs(pts), axis=1)
        else:
            nrm = np.sum(np.abs(pts) ** self.p, axis=1) ** (1.0 / self.p)
        return nrm <= self.radius * (1 + 1e-14)

    def support(self, u):
        u = _as_point(u, self.dim)
        # dual norm: h(u) = r * |u|_q with 1/p + 1/q = 1
        if np.isinf(self.p):
            return float(self.radius * np.sum(np.abs(u)))
        if self.p == 1:
            return float(self.radius * np.max(np.abs(u)))
        q = self.p / (self.p - 1.0)
        return float(self.radius * np.sum(np.abs(u) ** q) ** (1.0 / q))

    def interior_point(self):
        return np.zeros(self.dim)

    def inradius_lower(self):
        expo = min(0.0, 0.5 - 1.0 / self.p) if not np.isinf(self.p) else 0.0
        return self.radius * self.dim**expo

    def exact_volume(self):
        n, r, p = self.dim, self.radius, self.p
        if np.isinf(p):
            return (2.0 * r) ** n
        return float((2.0 * r) ** n * math.gamma(1 + 1 / p) ** n / math.gamma(1 + n / p))


@dataclass(frozen=True)
class HalfSpace:
    """{x : <normal, x> <= offset} with |normal| = 1."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        nrm = np.atleast_1d(np.asarray(self.normal, dtype=float))
        length = np.linalg.norm(nrm)
        if abs(length - 1.0) > 1e-6:
            nrm = nrm / length
            object.__setattr__(self, "offset", self.offset / length)
        if abs(np.linalg.norm(nrm) - 1.0) > UNIT_NORMAL_TOL:
            raise GeometryError("half-space normal must be a unit vector")
        object.__setattr__(self, "normal", _ro(nrm))

    @property
    def dim(self):
        return self.normal.shape[0]

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.normal - self.offset

    def contains_many(self, pts) -> np.ndarray:
        return self.signed_distance(pts) <= 1e-12


@dataclass(frozen=True)
class HPolytope(ConvexBody):
    """Intersection of half-spaces {x : A x <= b}; bounded by construction."""

    halfspaces: tuple

    def __post_init__(self):
        hs = tuple(self.halfspaces)
        if not hs:
            raise GeometryError("empty half-space list")
        dim = hs[0].dim
        if any(h.dim != dim for h in hs):
            raise DimensionMismatch("mixed half-space dimensions")
        object.__setattr__(self, "halfspaces", hs)
        object.__setattr__(self, "dim", dim)
        A = np.stack([h.normal for h in hs])
        b = np.array([h.offset for h in hs])
        object.__setattr__(self, "_A", _ro(A))
        object.__setattr__(self, "_b", _ro(b))
        cheb, rad = self._chebyshev()
        object.__setattr__(self, "_cheb", _ro(cheb))
        object.__setattr__(self, "_inradius", float(rad))
        if rad < DEGENERACY_TOL:
            raise DegenerateBodyError("polytope interior-ball radius below tolerance")
        verts = self._enumerate_vertices()
        object.__setattr__(self, "_vertices", _ro(verts))

    def _chebyshev(self):
        A, b = self._A, self._b
        n = self.dim
        # max rho  s.t.  A x + rho * 1 <= b   (normals are unit)
        c = np.zeros(n + 1)
        c[-1] = -1.0
        A_ub = np.hstack([A, np.ones((A.shape[0], 1))])
        res = linprog(c, A_ub=A_ub, b_ub=b, bounds=[(None, None)] * n + [(0, None)],
                      method="highs")
        if not res.success:
            raise UnboundedBodyError("polytope infeasible or unbounded")
        if res.status != 0 or not np.isfinite(res.fun):
            raise UnboundedBodyError("Chebyshev LP failed")
        return res.x[:n], res.x[n]

    def _enumerate_vertices(self):
        hs = np.hstack([self._A, -self._b[:, None]])
        try:
            inter = HalfspaceIntersection(hs, self._cheb)
        except Exception as exc:  # qhull raises on unbounded regions
            raise UnboundedBodyError(f"vertex enumeration failed: {exc}") from exc
        verts = inter.intersections
        if not np.isfinite(verts).all():
            raise UnboundedBodyError("polytope is unbounded")
        return verts

    @property
    def vertices(self) -> np.ndarray:
        return self._vertices

    def contains_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.all(pts @ self._A.T <= self._b + 1e-12, axis=1)

    def support(self, u):
        u = _as_point(u, self.dim)
        return float(np.max(self._vertices @ u))

    def support_many(self, us):
        return np.max(us @ self._vertices.T, axis=1)

    def interior_point(self):
        return self._cheb.copy()

    def inradius_lower(self):
        return self._inradius


def _compose_contains(parts, pts):
    out = np.ones(pts.shape[0], dtype=bool)
    col = 0
    for body in parts:
        out &= body.contains_many(pts[:, col : col + body.dim])
        col += body.dim
    return out


@dataclass(frozen=True)
class Product(ConvexBody):
    left: ConvexBody
    right: ConvexBody

    def __post_init__(self):
        object.__setattr__(self, "dim", self.left.dim + self.right.dim)
        if self.dim > 3:
            raise GeometryError("dimensions above 3 are out of scope")
        self._check_nondegenerate()

    def contains_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        return _compose_contains((self.left, self.right), pts)

    def support(self, u):
        u = _as_point(u, self.dim)
        k = self.left.dim
        return self.left.support(u[:k]) + self.right.support(u[k:])

    def interior_point(self):
        return np.concatenate([self.left.interior_point(), self.right.interior_point()])

    def inradius_lower(self):
        return min(self.left.inradius_lower(), self.right.inradius_lower())

    def exact_volume(self):
        vl, vr = self.left.exact_volume(), self.right.exact_volume()
        if vl is None or vr is None:
            return None
        return vl * vr


@dataclass(frozen=True)
class Intersection(ConvexBody):
    left: ConvexBody
    right: ConvexBody

    def __post_init__(self):
        if self.left.dim != self.right.dim:
            raise DimensionMismatch("intersection requires equal dimensions")
        object.__setattr__(self, "dim", self.left.dim)
        ip = self._find_interior_point()
        object.__setattr__(self, "_interior", _ro(ip))
        self._check_nondegenerate()

    def _find_interior_point(self):
        # deterministic search: candidate midpoints, then rejection samples
        # from the joint bounding box, averaged to move well inside
        cands = [
            0.5 * (self.left.interior_point() + self.right.interior_point()),
            self.left.interior_point(),
            self.right.interior_point(),
        ]
        for c in cands:
            if self.left.contains(c) and self.right.contains(c):
                return self._centralize(np.asarray(c))
        lo1, hi1 = self.left.bounding_box()
        lo2, hi2 = self.right.bounding_box()
        lo, hi = np.maximum(lo1, lo2), np.minimum(hi1, hi2)
        if not np.all(hi > lo):
            raise DegenerateBodyError("intersection has empty interior")
        rng = np.random.default_rng(20240901)
        for _ in range(200):
            pts = lo + (hi - lo) * rng.random((512, self.dim))
            ok = self.contains_many_raw(pts)
            if ok.any():
                return self._centralize(pts[ok][0])
        raise DegenerateBodyError("no interior point found for intersection")

    def _centralize(self, x0):
        # average a fixed batch of member points to land well inside
        lo1, hi1 = self.left.bounding_box()
        lo2, hi2 = self.right.bounding_box()
        lo, hi = np.maximum(lo1, lo2), np.minimum(hi1, hi2)
        rng = np.random.default_rng(20240902)
        pts = lo + (hi - lo) * rng.random((4096, self.dim))
        ok = self.contains_many_raw(pts)
        if ok.sum() >= 8:
            return pts[ok].mean(axis=0)
        return x0

    def contains_many_raw(self, pts):
        pts = np.asarray(pts, dtype=float)
        return self.left.contains_many(pts) & self.right.contains_many(pts)

    def contains_many(self, pts):
        return self.contains_many_raw(pts)

    def support(self, u):
        u = _as_point(u, self.dim)
        ub = min(self.left.support(u), self.right.support(u))
        if self.dim == 2:
            return min(self._support_refine_2d(u), ub)
        cloud = self._boundary_cloud()
        return min(float(np.max(cloud @ u)), ub)

    def _boundary_cloud(self):
        cached = getattr(self, "_cloud", None)
        if cached is not None:
            return cached
        x0 = self._interior
        us = direction_net(self.dim)
        k = len(us)
        lo, hi = np.zeros(k), np.ones(k)
        for _ in range(200):
            ok = self.contains_many(x0 + hi[:, None] * us)
            if not ok.any():
                break
            hi = np.where(ok, 2.0 * hi, hi)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            ok = self.contains_many(x0 + mid[:, None] * us)
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        pts = x0 + lo[:, None] * us
        object.__setattr__(self, "_cloud", _ro(pts))
        return pts

    def _support_refine_2d(self, u):
        # <u, boundary(phi)> is quasiconcave in the ray angle for a convex
        # body, so golden-section refinement around the best net angle is safe
        x0 = self._interior

        def val(phi):
            w = np.array([math.cos(phi), math.sin(phi)])
            return float(ray_shoot(self, x0, w) @ u)

        m = DEFAULT_DIRECTIONS_2D
        step = 2 * np.pi / m
        cloud = self._boundary_cloud()
        i = int(np.argmax(cloud @ u))
        lo, hi = i * step - step, i * step + step
        golden = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c, d = b - golden * (b - a), a + golden * (b - a)
        fc, fd = val(c), val(d)
        for _ in range(60):
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - golden * (b - a)
                fc = val(c)
            else:
                a, c, fc = c, d, fd
                d = a + golden * (b - a)
                fd = val(d)
        return max(fc, fd)

    def interior_point(self):
        return self._interior.copy()

    def inradius_lower(self):
        x0 = self._interior
        dists = np.linalg.norm(self._boundary_cloud() - x0, axis=1)
        # min ray distance over a dense net lower-bounds distance to the
        # boundary up to the net resolution factor
        ang = 2 * np.pi / DEFAULT_DIRECTIONS_2D if self.dim == 2 else 0.1
        return float(np.min(dists)) * math.cos(ang / 2.0)


@dataclass(frozen=True)
class AffineImage(ConvexBody):
    """{ A x + shift : x in inner } with invertible A."""

    matrix: np.ndarray
    shift: np.ndarray
    inner: ConvexBody

    def __post_init__(self):
        A = _ro(np.atleast_2d(self.matrix))
        s = _ro(np.atleast_1d(self.shift))
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "shift", s)
        n = self.inner.dim
        if A.shape != (n, n) or s.shape != (n,):
            raise DimensionMismatch("affine map shape mismatch")
        det = np.linalg.det(A)
        if abs(det) < 1e-14:
            raise GeometryError("singular affine map")
        object.__setattr__(self, "_inv", _ro(np.linalg.inv(A)))
        object.__setattr__(self, "dim", n)
        self._check_nondegenerate()

    def contains_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        return self.inner.contains_many((pts - self.shift) @ self._inv.T)

    def support(self, u):
        u = _as_point(u, self.dim)
        return float(self.shift @ u) + self.inner.support(self.matrix.T @ u)

    def interior_point(self):
        return self.matrix @ self.inner.interior_point() + self.shift

    def inradius_lower(self):
        smin = float(np.linalg.svd(self.matrix, compute_uv=False)[-1])
        return self.inner.inradius_lower() * smin


def translate(body: ConvexBody, v) -> ConvexBody:
    v = _as_point(v, body.dim)
    return AffineImage(np.eye(body.dim), v, body)


def dilate(body: ConvexBody, s: float) -> ConvexBody:
    return AffineImage(s * np.eye(body.dim), np.zeros(body.dim), body)


# ---------------------------------------------------------------------------
# primitives on bodies
# ---------------------------------------------------------------------------


def ray_shoot(body: ConvexBody, x0: np.ndarray, w: np.ndarray, iters: int = 60) -> np.ndarray:
    """Furthest point x0 + s*w still inside the body (bisection on s)."""
    lo_s, hi_s = 0.0, 1.0
    grow = 0
    while body.contains(x0 + hi_s * w):
        hi_s *= 2.0
        grow += 1
        if grow > 200:
            raise UnboundedBodyError("ray never exits the body")
    for _ in range(iters):
        mid = 0.5 * (lo_s + hi_s)
        if body.contains(x0 + mid * w):
            lo_s = mid
        else:
            hi_s = mid
    return x0 + lo_s * w


@dataclass(frozen=True)
class VolumeResult:
    value: float
    half_width_99: float
    method: str
    samples: int = 0
    seed: Optional[int] = None


def volume(body: ConvexBody, seed: Optional[int] = None, samples: int = 1_000_000) -> VolumeResult:
    """Volume with an absolute-error bound.

    Closed form for Interval/Box/Ball/LpBall/Product; Monte Carlo rejection
    from the support bounding box otherwise (seed mandatory there).
    """
    ev = body.exact_volume()
    if ev is not None:
        return VolumeResult(ev, 0.0, "exact")
    if seed is None:
        raise GeometryError("seed is mandatory for Monte Carlo volume")
    lo, hi = body.bounding_box()
    if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
        raise UnboundedBodyError("unbounded body")
    box_vol = float(np.prod(hi - lo))
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    # fixed-size chunks, combined in index order: worker splits on chunk
    # boundaries would produce identical partial sums
    while done < samples:
        m = min(MC_CHUNK, samples - done)
        pts = lo + (hi - lo) * rng.random((m, body.dim))
        hits += int(np.count_nonzero(body.contains_many(pts)))
        done += m
    p = hits / samples
    half = Z99 * math.sqrt(max(p * (1 - p), 1e-12) / samples) * box_vol
    return VolumeResult(p * box_vol, half, "monte-carlo", samples, seed)


@dataclass(frozen=True)
class DiameterResult:
    value: float
    upper_bound: float
    method: str


def diameter(body: ConvexBody, directions: Optional[int] = None) -> DiameterResult:
    """Diameter; exact for Interval/Box/Ball, otherwise the maximum width
    sup_u h(u) + h(-u) over a direction net.  For a convex body the net value
    underestimates by at most a factor cos(delta/2) at angular resolution
    delta, which is reported via ``upper_bound``."""
    if isinstance(body, Interval):
        d = body.b - body.a
        return DiameterResult(d, d, "exact")
    if isinstance(body, (Box, Ball)):
        d = body.exact_diameter()
        return DiameterResult(d, d, "exact")
    us = direction_net(body.dim, directions)
    if isinstance(body, Intersection):
        cloud = body._boundary_cloud()
        diffs = cloud[:, None, :] - cloud[None, :, :]
        val = float(np.max(np.linalg.norm(diffs, axis=2)))
    else:
        val = float(np.max(body.support_many(us) + body.support_many(-us)))
    if body.dim == 2:
        delta = 2 * np.pi / us.shape[0]
    else:
        delta = math.sqrt(4.0 * np.pi / us.shape[0])  # mean net spacing on S^2
    return DiameterResult(val, val / math.cos(delta / 2.0), "direction-net")


def geometric_distance(K: ConvexBody, L: ConvexBody, directions: Optional[int] = None) -> float:
    """d_G(K, L) = inf { a b : (1/a) L subset K subset b L, a, b >= 1 }.

    Requires the origin in the interior of both bodies.  Inclusion tests
    reduce to support-function ratios over a direction net: (1/a)L in K iff
    a >= max_u h_L/h_K, and K in bL iff b >= max_u h_K/h_L.
    """
    if K.dim != L.dim:
        raise DimensionMismatch("bodies must share a dimension")
    origin = np.zeros(K.dim)
    if not (K.contains(origin) and L.contains(origin)):
        raise GeometryError("origin must be interior to both bodies")
    us = direction_net(K.dim, directions)
    hK = np.asarray(K.support_many(us), dtype=float)
    hL = np.asarray(L.support_many(us), dtype=float)
    if np.any(hK <= 0) or np.any(hL <= 0):
        raise GeometryError("origin must be interior to both bodies")
    a_star = float(np.max(hL / hK))
    b_star = float(np.max(hK / hL))
    return max(a_star, 1.0) * max(b_star, 1.0)


# ---------------------------------------------------------------------------
# 2-D polygon machinery (shared by the profile cut search and 2-D quadrature)
# ---------------------------------------------------------------------------

POLYGON_CIRCLE_SIDES = 2048


def _ccw_order(verts: np.ndarray) -> np.ndarray:
    c = verts.mean(axis=0)
    ang = np.arctan2(verts[:, 1] - c[1], verts[:, 0] - c[0])
    return verts[np.argsort(ang)]


def _dedupe(verts: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    out = [verts[0]]
    for v in verts[1:]:
        if np.linalg.norm(v - out[-1]) > tol:
            out.append(v)
    if len(out) > 1 and np.linalg.norm(out[0] - out[-1]) <= tol:
        out.pop()
    return np.array(out)


def clip_convex_polygon(verts: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon by {<normal, x> <= offset}."""
    out = []
    m = len(verts)
    d = verts @ normal - offset
    for i in range(m):
        j = (i + 1) % m
        if d[i] <= 0:
            out.append(verts[i])
        if (d[i] < 0 < d[j]) or (d[j] < 0 < d[i]):
            t = d[i] / (d[i] - d[j])
            out.append(verts[i] + t * (verts[j] - verts[i]))
    if not out:
        return np.zeros((0, 2))
    return _dedupe(np.array(out))


def polygon_area(verts: np.ndarray) -> float:
    if len(verts) < 3:
        return 0.0
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def polygon_of(body: ConvexBody, sides: int = POLYGON_CIRCLE_SIDES) -> np.ndarray:
    """Convex polygon representation (ccw vertices) of a 2-D body.

    Exact for polytopal variants; smooth boundaries are inscribed by a
    regular boundary sampling with ``sides`` vertices (relative area defect
    O(1/sides^2), reported by callers as method error).
    """
    if body.dim != 2:
        raise DimensionMismatch("polygon_of requires a 2-D body")
    if isinstance(body, Box):
        lo, hi = body.lo, body.hi
        return np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    if isinstance(body, Ball):
        th = np.arange(sides) * (2 * np.pi / sides)
        return body.center + body.radius * np.stack([np.cos(th), np.sin(th)], axis=1)
    if isinstance(body, LpBall):
        if body.p == 1:
            r = body.radius
            return np.array([[r, 0.0], [0.0, r], [-r, 0.0], [0.0, -r]])
        if np.isinf(body.p):
            r = body.radius
            return np.array([[-r, -r], [r, -r], [r, r], [-r, r]])
        th = np.arange(sides) * (2 * np.pi / sides)
        d = np.stack([np.cos(th), np.sin(th)], axis=1)
        nrm = np.sum(np.abs(d) ** body.p, axis=1) ** (1.0 / body.p)
        return body.radius * d / nrm[:, None]
    if isinstance(body, HPolytope):
        return _ccw_order(_dedupe(_ccw_order(body.vertices)))
    if isinstance(body, Product):
        if isinstance(body.left, Interval) and isinstance(body.right, Interval):
            return polygon_of(Box(np.array([body.left.a, body.right.a]),
                                  np.array([body.left.b, body.right.b])))
        raise GeometryError("2-D product must be a product of intervals")
    if isinstance(body, AffineImage):
        inner = polygon_of(body.inner, sides)
        return _ccw_order(inner @ body.matrix.T + body.shift)
    if isinstance(body, Intersection):
        poly = polygon_of(body.left, sides)
        right = polygon_of(body.right, sides)
        m = len(right)
        for i in range(m):
            a, b = right[i], right[(i + 1) % m]
            edge = b - a
            normal = np.array([edge[1], -edge[0]])  # outward for ccw polygon
            nl = np.linalg.norm(normal)
            if nl < 1e-15:
                continue
            normal = normal / nl
            poly = clip_convex_polygon(poly, normal, float(normal @ a))
            if len(poly) == 0:
                raise DegenerateBodyError("empty polygon intersection")
        return _ccw_order(poly)
    raise GeometryError(f"no polygon representation for {type(body).__name__}")


def polygon_circle_region(verts: np.ndarray, center: np.ndarray, rho: float):
    """Area of polygon ∩ disk(center, rho) and the length of the circular
    arc lying strictly inside the polygon.

    Edges fully inside the disk are accumulated vectorized; only edges that
    cross the circle (a handful for convex inputs) are walked individually.
    Area via Green's theorem with exact circular-sector terms.  Also returns
    the number of transversal boundary crossings.
    """
    verts = np.asarray(verts, dtype=float)
    m = len(verts)
    center = np.asarray(center, dtype=float)
    cx, cy = center
    P = verts
    Q = np.roll(verts, -1, axis=0)
    inside = np.linalg.norm(verts - center, axis=1) <= rho
    if inside.all():
        return polygon_area(verts), 0.0, 0

    # per-edge circle intersections: |p + t d - c|^2 = rho^2
    D = Q - P
    F = P - center
    a = np.einsum("ij,ij->i", D, D)
    b = 2.0 * np.einsum("ij,ij->i", F, D)
    c0 = np.einsum("ij,ij->i", F, F) - rho * rho
    disc = b * b - 4.0 * a * c0
    has = (disc > 0) & (a > 0)
    sq = np.sqrt(np.where(has, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(has, (-b - sq) / (2 * a), np.nan)
        t2 = np.where(has, (-b + sq) / (2 * a), np.nan)
    valid1 = has & (t1 > 1e-12) & (t1 < 1 - 1e-12)
    valid2 = has & (t2 > 1e-12) & (t2 < 1 - 1e-12)
    crossing_edges = np.nonzero(valid1 | valid2)[0]

    inside_j = np.roll(inside, -1)
    full_edges = inside & inside_j & ~valid1 & ~valid2

    # vectorized Green contribution of fully-inside edges
    area2 = float(np.sum(P[full_edges, 0] * Q[full_edges, 1]
                         - Q[full_edges, 0] * P[full_edges, 1]))

    entry_exit = []  # (point, entering?) in polygon walk order
    for i in crossing_edges:
        p, q = P[i], Q[i]
        ts = []
        if valid1[i]:
            ts.append(float(t1[i]))
        if valid2[i]:
            ts.append(float(t2[i]))
        pts = [(p, False)] + [(p + t * (q - p), True) for t in sorted(ts)]
        for k in range(len(pts)):
            a_pt = pts[k][0]
            b_pt = pts[k + 1][0] if k + 1 < len(pts) else q
            mid = 0.5 * (a_pt + b_pt)
            mid_in = float(np.linalg.norm(mid - center)) <= rho
            if pts[k][1]:
                entry_exit.append((a_pt, mid_in))
            if mid_in:
                area2 += a_pt[0] * b_pt[1] - b_pt[0] * a_pt[1]

    ncross = len(entry_exit)
    if ncross == 0:
        if _point_in_polygon(center, verts) and rho > 0:
            return math.pi * rho * rho, 2 * math.pi * rho, 0
        return 0.0, 0.0, 0

    exits = sorted(math.atan2(p[1] - cy, p[0] - cx)
                   for p, entering in entry_exit if not entering)
    entries = sorted(math.atan2(p[1] - cy, p[0] - cx)
                     for p, entering in entry_exit if entering)
    arc_len = 0.0
    for th_out in exits:
        cand = [th for th in entries if th > th_out + 1e-14]
        th_in = cand[0] if cand else (entries[0] + 2 * math.pi if entries else None)
        if th_in is None:
            continue
        span = th_in - th_out
        mid_ang = th_out + span / 2.0
        mid_pt = center + rho * np.array([math.cos(mid_ang), math.sin(mid_ang)])
        if not _point_in_polygon(mid_pt, verts):
            continue
        arc_len += rho * span
        p0 = center + rho * np.array([math.cos(th_out), math.sin(th_out)])
        p1 = center + rho * np.array([math.cos(th_in), math.sin(th_in)])
        area2 += rho * rho * span + (cx * (p1[1] - p0[1]) - cy * (p1[0] - p0[0]))
    return 0.5 * abs(area2), arc_len, ncross


def _point_in_polygon(pt, verts) -> bool:
    a = verts
    b = np.roll(verts, -1, axis=0)
    cr = (b[:, 0] - a[:, 0]) * (pt[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (pt[0] - a[:, 0])
    return bool(np.all(cr >= -1e-14) or np.all(cr <= 1e-14))
