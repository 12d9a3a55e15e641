"""Orchestration: compute the four constants for a fixture, run the
explicit inequality suite, and assemble serializable report records.

Check rows come in two kinds.  ``assert`` rows carry an explicit constant
from a proved inequality and must pass at their stated tolerance.  ``track``
rows monitor quantities whose sharp universal constant is unnamed; they are
compared against pinned regression bands by the verify driver and never
asserted against invented numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import bounds as bd
from . import concentration as cc
from . import measures as ms
from . import profile as pf
from . import spectral as spc
from .fixtures import Fixture, get_fixture
from .geometry import Ball, Box, ConvexBody, Interval, diameter

DEFAULT_SEED = 20240905


@dataclass
class RunConfig:
    h2d: float = 1 / 64          # base spacing for 2-D eigensolves
    h2d_family: float = 1 / 32   # rasterization for family search
    ncells_1d: int = 2000
    seed: int = DEFAULT_SEED
    t_grid: Optional[list] = None
    n_random: int = 120
    strict: bool = False
    tolerances: dict = field(default_factory=dict)

    def tol(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default))


@dataclass
class CheckRow:
    name: str
    value: float
    tol: float
    passed: bool
    kind: str = "assert"  # "assert" | "track"

    def as_dict(self):
        return {"name": self.name, "slack": _num(self.value),
                "tol": _num(self.tol), "pass": bool(self.passed),
                "kind": self.kind}


def _num(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _assert_row(name, slack, tol):
    return CheckRow(name, slack, tol, bool(slack >= -tol), "assert")


def _band_row(name, value, lo, hi):
    return CheckRow(f"{name}[{lo:g},{hi:g}]", value, 0.0,
                    bool(lo <= value <= hi), "assert")


def _track_row(name, value):
    return CheckRow(name, value, math.nan, True, "track")


# ---------------------------------------------------------------------------
# constants per fixture
# ---------------------------------------------------------------------------


def _uniform_body_of(m: ms.Measure1D) -> Optional[Interval]:
    """Interval body when the 1-D measure is uniform on its support."""
    if len(m.segments) != 1:
        return None
    rho = m.segments[0].rho
    if np.max(rho) - np.min(rho) <= 1e-12 * np.max(rho):
        return Interval(*m.support)
    return None


def _common_checks(ctx, fam, rec, cfg, curve, convex, compact_diam):
    """Inequality suite shared between 1-D and 2-D fixtures."""
    checks = rec["checks"]
    d_che, d_poin = rec["d_che"], rec["d_poin"]
    d_fm, d_fm_med, d_exp = rec["d_fm"], rec["d_fm_median"], rec["d_exp"]
    w = ctx.weights

    if d_poin is not None:
        checks.append(_assert_row("cheeger_to_poincare_half",
                                  d_poin - d_che / 2.0, cfg.tol("maz_cheeger", 1e-6)))
    # worst-set characterization
    wsv = rec["worst_set_value"]
    if convex and d_che > 1e-9:
        checks.append(_band_row("worst_set_over_cheeger", wsv / d_che, 1.0, 8.0))
        checks.append(_assert_row("cheeger_le_half_worst_set",
                                  wsv / 2.0 - d_che, cfg.tol("worst_set", 1e-9)))
    # profile lower bounds from the searched (p,q) constants
    if convex:
        ok22 = pf.buser_explicit_check(curve, rec["d_22"], 2, 2,
                                       tol=curve.max_err() + 1e-9)
        checks.append(CheckRow("profile_vs_l2_constant_over_16",
                               1.0 if ok22 else -1.0, 0.0, ok22, "assert"))
        ok_fm = pf.buser_explicit_check(curve, d_fm_med, 1, math.inf,
                                        tol=curve.max_err() + 1e-9)
        checks.append(CheckRow("profile_quadratic_fm_over_32",
                               1.0 if ok_fm else -1.0, 0.0, ok_fm, "assert"))
    # median vs expectation factors for a coordinate and a skewed function
    xvals = ctx.points[:, 0]
    skew = np.maximum(xvals - cc.weighted_quantile(xvals, w, 0.9), 0.0)
    for tag in ("L1", "L2", "Psi1"):
        s1, s2 = cc.median_expectation_check(xvals, w, tag)
        checks.append(_assert_row(f"median_mean_lower_factor2_{tag}", s1,
                                  cfg.tol("med_exp", 1e-9)))
        checks.append(_assert_row(f"median_mean_upper_factor3_{tag}", s2,
                                  cfg.tol("med_exp", 1e-9)))
        s1, s2 = cc.median_expectation_check(skew, w, tag)
        checks.append(_assert_row(f"median_mean_lower_factor2_{tag}_skew", s1,
                                  cfg.tol("med_exp", 1e-9)))
        checks.append(_assert_row(f"median_mean_upper_factor3_{tag}_skew", s2,
                                  cfg.tol("med_exp", 1e-9)))
    # exponent-shift monotonicity with its explicit p/p' factor; both sides
    # on node sums, where the transform argument is exact
    mono_tol = cfg.tol("pq_monotonicity", 1e-9) * max(1.0, rec["d_11"])
    checks.append(_assert_row("pq_shift_11_to_22",
                              cc.pq_monotonicity_check(ctx, fam, (1, 1), (2, 2)),
                              mono_tol))
    checks.append(_assert_row("pq_shift_22_to_44",
                              cc.pq_monotonicity_check(ctx, fam, (2, 2), (4, 4)),
                              mono_tol))
    # Jensen ordering and the p-chain
    d1inf = cc.d_pq(ctx, fam, 1, math.inf, exact_grad=False)
    for tag, pp, qq in (("11", 1, 1), ("22", 2, 2)):
        val = cc.d_pq(ctx, fam, pp, qq, exact_grad=False)
        checks.append(_assert_row(f"weakest_link_1inf_ge_{tag}", d1inf - val,
                                  cfg.tol("jensen", 1e-9)))
    for p in (2.0, 4.0):
        dpp = cc.d_pq(ctx, fam, p, p, alphas=(1.0, p), exact_grad=False)
        d11_closed = cc.d_pq(ctx, fam, 1, 1, alphas=(1.0, p, p * p),
                             exact_grad=False)
        checks.append(_assert_row(f"chain_pp_ge_11_over_p_{int(p)}",
                                  dpp - d11_closed / p, mono_tol))
    # quantile lower bounds (Paley-Zygmund)
    centered = xvals - cc.weighted_median(xvals, w)
    for theta in (0.25, 0.5, 0.75, 0.9):
        s = cc.paley_zygmund_check(centered, w, theta)
        checks.append(_assert_row(f"paley_zygmund_theta_{theta:g}", s,
                                  cfg.tol("paley_zygmund", 1e-9)))
    # exponential-norm machinery
    checks.append(_band_row("psi1_vs_sup_p_norm_band",
                            cc.psi1_p_band(np.abs(centered), w),
                            1.0 / math.e, 2.0))
    rep = cc.psi1_l1_comparison(centered, w, d_fm_med)
    if rep.hypothesis_met:
        checks.append(_assert_row("psi1_l1_quantile_conclusion",
                                  rep.quantile_slack, cfg.tol("psi1_l1", 1e-9)))
        checks.append(_track_row("psi1_over_l1_ratio", rep.ratio))
    # trivial diameter bound on the exponential constant
    if compact_diam is not None:
        checks.append(_assert_row("dexp_ge_two_over_diameter",
                                  d_exp - 2.0 / compact_diam,
                                  cfg.tol("dexp_diam", 1e-9)))
    # first-moment classical bound with its explicit 1/2
    fmres = bd.first_moment_bound_check(ctx, d_fm)
    rec["bounds"]["first_moment"] = {
        "bound": _num(fmres.bound), "slack": _num(fmres.slack),
        "x0": [float(v) for v in np.atleast_1d(fmres.x0)]}
    checks.append(_assert_row("first_moment_half_bound", fmres.slack,
                              cfg.tol("first_moment", 1e-9)))
    # tracked main-theorem ratios
    if d_poin is not None and d_poin > 0:
        checks.append(_track_row("ratio_che_over_poin", d_che / d_poin))
        checks.append(_track_row("ratio_exp_over_poin", d_exp / d_poin))
    if d_che > 1e-12:
        checks.append(_track_row("ratio_fm_over_che", d_fm / d_che))
        checks.append(_track_row("ratio_exp_over_che", d_exp / d_che))
    checks.append(_track_row("ratio_fm_over_exp", d_fm / d_exp))


def constants_measure1d(fix: Fixture, cfg: RunConfig) -> dict:
    m = fix.build()
    rec: dict = {"fixture": fix.name, "kind": fix.kind, "convex": fix.convex,
                 "checks": [], "bounds": {}, "method": {}}
    curve = pf.profile_1d(m)
    rec["method"]["profile"] = curve.method
    d_che = pf.cheeger_constant(curve, convex=fix.convex)
    rec["d_che"] = d_che

    # spectral gap (undefined for disconnected supports: reported as 0)
    if m.connected_support:
        eg = spc.spectral_gap_extrapolated(
            lambda h: spc.discretize_measure_1d(m, ncells=int(round(
                (m.support[1] - m.support[0]) / h))),
            (m.support[1] - m.support[0]) / (cfg.ncells_1d // 2), levels=2)
        rec["d_poin"] = eg.d_poin
        rec["d_poin_raw"] = [float(v) for v in eg.raw]
        dom = spc.discretize_measure_1d(m, ncells=cfg.ncells_1d)
        gap = spc.spectral_gap(spc.GridOperator(dom))
        eig_member = cc.PiecewiseLinear1D(dom.coords[:, 0], gap.eigenvector,
                                          label="eigfun")
    else:
        rec["d_poin"] = 0.0
        rec["d_poin_raw"] = []
        eig_member = None

    ctx = cc.EvalContext.from_measure_1d(m)
    fam = cc.build_default_family(ctx, seed=cfg.seed, n_random=cfg.n_random)
    if eig_member is not None:
        fam.members.append(eig_member)
    rec["d_fm"] = cc.d_fm(ctx, fam)
    rec["d_fm_median"] = cc.d_fm(ctx, fam, center="median")
    rec["d_exp"] = cc.d_exp(ctx, fam)
    rec["d_11"] = cc.d_pq(ctx, fam, 1, 1)
    rec["d_22"] = cc.d_pq(ctx, fam, 2, 2)
    rec["d_1inf"] = cc.d_pq(ctx, fam, 1, math.inf)
    rec["worst_set_value"] = cc.worst_set_value(
        ctx, cc.half_space_candidates(ctx))
    rec["sigma1"] = math.sqrt(m.variance())

    lo, hi = m.support
    compact_diam = hi - lo
    _common_checks(ctx, fam, rec, cfg, curve, fix.convex, compact_diam)
    checks = rec["checks"]

    # profile structure
    if fix.convex:
        checks.append(_assert_row("profile_symmetry",
                                  1e-9 - pf.symmetry_defect(curve), 0.0))
        checks.append(_assert_row("profile_concavity",
                                  cfg.tol("concavity_1d", 1e-6)
                                  - pf.concavity_check(curve, 1.0), 0.0))
        # capacity sandwich over an (a, b) grid; tolerance follows the
        # quantile-grid resolution times the measured profile slope
        worst = -math.inf
        for a, b in ((0.2, 0.5), (0.3, 0.7), (0.4, 0.6), (0.1, 0.9)):
            cap = pf.capacity_1d(m, a, b)
            ts = np.linspace(a, b, 201)
            profs = np.array([pf.profile_1d_value(m, float(t)) for t in ts])
            lo_s, hi_s = float(np.min(profs)), float(np.min(profs[:-1]))
            slope = float(np.max(np.abs(np.diff(profs) / np.diff(ts))))
            gap_tol = 1.5 * slope * (ts[1] - ts[0]) + cfg.tol("capacity", 1e-6)
            worst = max(worst, lo_s - gap_tol - cap, cap - hi_s - gap_tol)
        checks.append(_assert_row("capacity_profile_sandwich", -worst, 0.0))
        # concave-profile identity for the Cheeger constant
        ts_half = curve.t_values[curve.t_values <= 0.5 + 1e-12]
        ratios = [curve.sym_value(float(t)) / t for t in ts_half]
        checks.append(_assert_row(
            "cheeger_concavity_identity",
            0.01 * d_che - abs(2 * curve.sym_value(0.5) - min(ratios)), 0.0))
    else:
        checks.append(CheckRow("negative_control_profile_dip",
                               pf.profile_1d_value(m, 0.5), 1e-6,
                               pf.profile_1d_value(m, 0.5) <= 1e-6, "assert"))
        checks.append(CheckRow("negative_control_concavity_fails",
                               pf.concavity_check(curve, 1.0), 0.0,
                               pf.concavity_check(curve, 1.0) > 1e-3, "assert"))

    # tail lemma for log-concave inputs
    if fix.convex:
        x0 = np.array([m.quantile(0.5)])
        R = max(m.quantile(0.9) - x0[0], x0[0] - m.quantile(0.1)) + 1e-9
        viol = ms.borell_tail_check(m, x0, float(R), [1, 1.5, 2, 3, 5])
        checks.append(_assert_row("borell_tail", -viol, cfg.tol("borell", 1e-8)))

    # classical bounds
    body = _uniform_body_of(m)
    if body is not None and rec["d_poin"]:
        pw = bd.payne_weinberger_check(body, rec["d_poin"])
        rec["bounds"]["payne_weinberger"] = {"bound": _num(pw.bound),
                                             "slack": _num(pw.slack)}
        checks.append(_assert_row("poincare_pi_over_diam", pw.slack,
                                  cfg.tol("payne_weinberger", 1e-3)))
    center = np.array([0.5 * (lo + hi)])
    R = 0.5 * (hi - lo) + 1e-12
    k2 = bd.kls2_value(ctx, center, R, d_che)
    rec["bounds"]["kls2"] = {"theta_integral": _num(k2.theta_integral),
                             "tracked_ratio": _num(k2.tracked_ratio)}
    checks.append(_track_row("kls2_ratio", k2.tracked_ratio))
    mean = np.array([m.mean()])
    bb = bd.bobkov_bound(ctx, mean, d_che)
    rec["bounds"]["bobkov"] = {
        "E": _num(bb.E), "S": _num(bb.S), "sqrt_es": _num(bb.sqrt_es_value),
        "variance_form": _num(bb.variance_value), "ball_mass": _num(bb.ball_mass),
        "branch": bb.branch}
    checks.append(_assert_row("bobkov_chebyshev_ball_three_quarters",
                              bb.ball_mass - 0.75, 1e-9))
    checks.append(_track_row("bobkov_sqrt_es_ratio", bb.tracked_sqrt_es))
    rec["bounds"]["kls_ratio"] = _num(bd.kls_ratio(rec["sigma1"], d_che))
    checks.append(_track_row("kls_ratio", rec["bounds"]["kls_ratio"]))
    return rec


def constants_body2d(fix: Fixture, cfg: RunConfig) -> dict:
    body = fix.build()
    rec: dict = {"fixture": fix.name, "kind": fix.kind, "convex": fix.convex,
                 "checks": [], "bounds": {}, "method": {}}
    curve = pf.profile_2d_upper(body, t_grid=cfg.t_grid)
    rec["method"]["profile"] = curve.method
    d_che = pf.cheeger_constant(curve, convex=True)
    rec["d_che"] = d_che

    eg = spc.spectral_gap_extrapolated(lambda h: spc.discretize_body(body, h),
                                       cfg.h2d, levels=2)
    rec["d_poin"] = eg.d_poin
    rec["d_poin_raw"] = [float(v) for v in eg.raw]

    dom = spc.discretize_body(body, cfg.h2d_family)
    gap = spc.spectral_gap(spc.GridOperator(dom))
    ctx = cc.EvalContext.from_grid(dom, name=fix.name)
    fam = cc.build_default_family(ctx, seed=cfg.seed, n_random=cfg.n_random,
                                  eigenfunction=gap.eigenvector)
    rec["d_fm"] = cc.d_fm(ctx, fam)
    rec["d_fm_median"] = cc.d_fm(ctx, fam, center="median")
    rec["d_exp"] = cc.d_exp(ctx, fam)
    rec["d_11"] = cc.d_pq(ctx, fam, 1, 1)
    rec["d_22"] = cc.d_pq(ctx, fam, 2, 2)
    rec["d_1inf"] = cc.d_pq(ctx, fam, 1, math.inf)
    rec["worst_set_value"] = cc.worst_set_value(
        ctx, cc.half_space_candidates(ctx))
    mean = ctx.weights @ ctx.points
    dev = ctx.points - mean
    cov = (ctx.weights[:, None] * dev).T @ dev
    rec["sigma1"] = float(math.sqrt(max(np.linalg.eigvalsh(cov)[-1], 0.0)))

    diam = diameter(body).value
    _common_checks(ctx, fam, rec, cfg, curve, True, diam)
    checks = rec["checks"]

    # profile structure: concavity of I and of I^2 (uniform measure, n = 2)
    conc_tol = 8.0 * curve.max_err() + cfg.tol("concavity_2d", 1e-6)
    checks.append(_assert_row("profile_concavity",
                              conc_tol - pf.concavity_check(curve, 1.0), 0.0))
    i2_tol = 8.0 * curve.max_err() * float(np.max(curve.I_values)) \
        + cfg.tol("concavity_2d", 1e-6)
    checks.append(_assert_row("profile_concavity_squared",
                              i2_tol - pf.concavity_check(curve, 2.0), 0.0))
    ts_half = curve.t_values[curve.t_values <= 0.5 + 1e-12]
    ratios = [curve.sym_value(float(t)) / t for t in ts_half]
    checks.append(_assert_row(
        "cheeger_concavity_identity",
        0.01 * d_che - abs(2 * curve.sym_value(0.5) - min(ratios)), 0.0))

    # tail lemma via exact polygon-circle masses
    und = ms.UniformOnBody(body)
    x0 = mean
    R = float(np.max(np.linalg.norm(ctx.points - x0, axis=1))) * 0.75
    theta = und.ball_mass(x0, R)
    if theta > 0.5:
        viol = ms.borell_tail_check(und, x0, R, [1, 1.5, 2, 3])
        checks.append(_assert_row("borell_tail", -viol,
                                  cfg.tol("borell_2d", 1e-6)))

    pw = bd.payne_weinberger_check(body, rec["d_poin"])
    rec["bounds"]["payne_weinberger"] = {"bound": _num(pw.bound),
                                         "slack": _num(pw.slack)}
    checks.append(_assert_row("poincare_pi_over_diam", pw.slack,
                              cfg.tol("payne_weinberger", 1e-3)))
    circum = float(np.max(np.linalg.norm(ctx.points - mean, axis=1))) + cfg.h2d_family
    k2 = bd.kls2_value(ctx, mean, circum, d_che)
    rec["bounds"]["kls2"] = {"theta_integral": _num(k2.theta_integral),
                             "tracked_ratio": _num(k2.tracked_ratio)}
    checks.append(_track_row("kls2_ratio", k2.tracked_ratio))
    bb = bd.bobkov_bound(ctx, mean, d_che, nd=und)
    rec["bounds"]["bobkov"] = {
        "E": _num(bb.E), "S": _num(bb.S), "sqrt_es": _num(bb.sqrt_es_value),
        "variance_form": _num(bb.variance_value), "ball_mass": _num(bb.ball_mass),
        "branch": bb.branch}
    checks.append(_assert_row("bobkov_chebyshev_ball_three_quarters",
                              bb.ball_mass - 0.75, 1e-9))
    checks.append(_track_row("bobkov_sqrt_es_ratio", bb.tracked_sqrt_es))
    rec["bounds"]["kls_ratio"] = _num(bd.kls_ratio(rec["sigma1"], d_che))
    checks.append(_track_row("kls_ratio", rec["bounds"]["kls_ratio"]))
    return rec


def compute_constants(name: str, cfg: Optional[RunConfig] = None) -> dict:
    cfg = cfg or RunConfig()
    fix = get_fixture(name)
    if fix.kind == "measure1d":
        return constants_measure1d(fix, cfg)
    if fix.kind == "body2d":
        return constants_body2d(fix, cfg)
    raise ValueError(f"unhandled fixture kind {fix.kind}")


def record_to_json_dict(rec: dict) -> dict:
    out = {}
    for k, v in rec.items():
        if k == "checks":
            out[k] = [r.as_dict() for r in v]
        elif isinstance(v, float):
            out[k] = _num(v)
        elif isinstance(v, np.floating):
            out[k] = _num(float(v))
        else:
            out[k] = v
    return out
