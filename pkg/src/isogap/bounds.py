"""Classical lower bounds on the spectral-gap family of constants, computed
as concrete numbers and compared against the measured constants.

Explicit-constant comparisons (pi/diam for the Poincare constant, the 1/2
in the first-moment bound) are slack checks; bounds whose sharp constant is
an unnamed universal number (longest-interval bound, the sqrt(E S) and
fourth-root variance forms) are reported with tracked ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .concentration import EvalContext
from .geometry import ConvexBody, diameter
from .measures import MeasureND, as_nd


class BoundsError(ValueError):
    pass


def mean_distance(ctx: EvalContext, x0: np.ndarray) -> float:
    return float(ctx.weights @ np.linalg.norm(ctx.points - x0, axis=1))


def optimal_center(ctx: EvalContext, levels: int = 3, grid: int = 17) -> np.ndarray:
    """Minimize the mean distance over x0 by a shrinking grid around the
    mean (the objective is convex in x0, so the refinement is global)."""
    x0 = ctx.weights @ ctx.points
    span = float(np.max(np.ptp(ctx.points, axis=0)))
    width = span / 2.0
    best = x0.copy()
    best_val = mean_distance(ctx, best)
    for _ in range(levels):
        offsets = np.linspace(-width, width, grid)
        if ctx.dim == 1:
            cands = best[None, :] + offsets[:, None]
        else:
            gx, gy = np.meshgrid(offsets, offsets, indexing="ij")
            cands = best[None, :] + np.stack([gx.ravel(), gy.ravel()], axis=1)
        for c in cands:
            v = mean_distance(ctx, c)
            if v < best_val:
                best_val, best = v, c.copy()
        width /= 4.0
    return best


@dataclass
class PayneWeinbergerResult:
    bound: float
    measured: float
    slack: float


def payne_weinberger_check(body: ConvexBody, d_poin_measured: float) -> PayneWeinbergerResult:
    """Euclidean Poincare bound pi / diam(K); equality for intervals."""
    diam = diameter(body).value
    bound = math.pi / diam
    return PayneWeinbergerResult(bound, d_poin_measured, d_poin_measured - bound)


@dataclass
class FirstMomentBoundResult:
    bound: float
    x0: np.ndarray
    measured: float
    slack: float


def first_moment_bound_check(ctx: EvalContext, d_fm_measured: float) -> FirstMomentBoundResult:
    """Explicit half-constant first-moment bound:
    D_FM >= sup_x0 1 / (2 int |x - x0| dmu)."""
    x0 = optimal_center(ctx)
    md = mean_distance(ctx, x0)
    bound = 1.0 / (2.0 * md)
    return FirstMomentBoundResult(bound, x0, d_fm_measured, d_fm_measured - bound)


@dataclass
class Kls2Result:
    theta_integral: float
    tracked_ratio: float  # D_Che * int theta_B dmu (unnamed constant)


def kls2_value(ctx: EvalContext, x0: np.ndarray, R: float,
               d_che_measured: float, tol: float = 1e-6) -> Kls2Result:
    """Longest-centered-interval bound for measures supported in B(x0, R):
    theta_B(x) = 2 sqrt(R^2 - |x - x0|^2)."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    r2 = R * R - np.sum((ctx.points - x0) ** 2, axis=1)
    if np.min(r2) < -tol * R * R:
        raise BoundsError("support is not inside the stated ball")
    theta = 2.0 * np.sqrt(np.maximum(r2, 0.0))
    integral = float(ctx.weights @ theta)
    return Kls2Result(integral, d_che_measured * integral)


@dataclass
class BobkovResult:
    E: float
    S: float
    sqrt_es_value: float          # 1 / sqrt(E S)
    variance_value: float         # 1 / Var(|x - x0|^2)^{1/4}
    ball_mass: float              # mu(B(x0, E + 2S)), Chebyshev gives >= 3/4
    branch: str                   # "ball" or "small-diameter"
    tracked_sqrt_es: float        # D_Che * sqrt(E S)
    tracked_variance: float       # D_Che * Var(...)^{1/4}


def bobkov_bound(ctx: EvalContext, x0, d_che_measured: float,
                 nd: Optional[MeasureND] = None) -> BobkovResult:
    """Moment-based bounds built from E = E|x - x0| and S = Std|x - x0|.
    When E < 2S the proof path degrades to a small-diameter argument, which
    is reported as the branch tag."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    r = np.linalg.norm(ctx.points - x0, axis=1)
    E = float(ctx.weights @ r)
    S2 = float(ctx.weights @ (r - E) ** 2)
    S = math.sqrt(max(S2, 0.0))
    r2 = r * r
    var_r2 = float(ctx.weights @ (r2 - ctx.weights @ r2) ** 2)
    sqrt_es = 1.0 / math.sqrt(E * S) if E * S > 0 else math.inf
    var_val = 1.0 / var_r2**0.25 if var_r2 > 0 else math.inf
    R = E + 2.0 * S
    if nd is not None:
        mass = nd.ball_mass(x0, R)
    else:
        mass = float(ctx.weights @ (r <= R))
    if mass < 0.75 - 1e-9:
        raise BoundsError(f"Chebyshev ball mass {mass:.4f} below 3/4")
    branch = "ball" if E >= 2.0 * S else "small-diameter"
    return BobkovResult(E, S, sqrt_es, var_val, mass, branch,
                        d_che_measured * math.sqrt(E * S) if E * S > 0 else 0.0,
                        d_che_measured * var_r2**0.25)


def kls_ratio(sigma1: float, d_che_measured: float) -> float:
    """Dimensionless product D_Che * sigma_1; conjecturally bounded below by
    a universal constant, tracked across fixtures."""
    return d_che_measured * sigma1
