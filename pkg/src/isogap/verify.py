"""The one-shot verification suite: every module invariant on the pinned
fixture manifest, plus the stability, semigroup, tensorization and scaling
sections, with tracked ratios compared against the pinned regression bands.

Assertion-class failures are hard failures.  Tracked-ratio drifts beyond
10 percent of the pinned value are warnings unless strict mode escalates
them.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import concentration as cc
from . import measures as ms
from . import pipeline as pl
from . import profile as pf
from . import spectral as spc
from . import stability as st
from .fixtures import fixture_names, get_fixture, load_packaged_manifest
from .geometry import Ball, Box, Interval, Intersection, LpBall, translate

BAND_DRIFT = 0.10


def _row(section, name, slack, tol, passed, kind="assert"):
    return {"section": section, "name": name, "slack": pl._num(slack),
            "tol": pl._num(tol), "pass": bool(passed), "kind": kind}


def _assert(section, name, slack, tol):
    return _row(section, name, slack, tol, slack >= -tol)


def _track(section, name, value):
    return _row(section, name, value, math.nan, True, "track")


def stability_section(cfg: pl.RunConfig) -> list[dict]:
    rows = []
    sq = Box(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    halfbox = Box(np.array([0.0, 0.0]), np.array([1.0, 0.5]))

    # inclusion lemma with the explicit square power
    for tag, (L, K) in {
        "interval_0.6": (Interval(0.0, 0.6), Interval(0.0, 1.0)),
        "halfbox_in_square": (halfbox, sq),
        "identity": (sq, sq),
    }.items():
        r = st.going_up_check(L, K, seed=cfg.seed)
        rows.append(_assert("stability", f"going_up_vsq[{tag}]", r.slack, 1e-7))
        if r.single_step_slack is not None:
            rows.append(_assert("stability", f"going_up_single_step[{tag}]",
                                r.single_step_slack, 1e-7))
    # tracked going-down ratios
    for tag, (L, K) in {
        "halfbox_in_square": (halfbox, sq),
        "identity": (sq, sq),
    }.items():
        r = st.going_down_report(L, K, seed=cfg.seed, h=cfg.h2d_family)
        rows.append(_track("stability", f"going_down_ratio[{tag}]", r.ratio))

    # two-body stability: explicit sub-step plus tracked chain
    rep = st.stability_theorem_report(sq, translate(sq, [0.1, 0.0]),
                                      seed=cfg.seed, h=cfg.h2d_family)
    rows.append(_assert("stability", "stability_vsq[shifted_squares]",
                        rep.vsq_slack, 1e-7))
    rows.append(_track("stability", "stability_chain[shifted_squares]",
                       rep.chain_ratio))

    # geometric distance: identity edge case and a pure dilation
    sqc = Box(np.array([-0.5, -0.5]), np.array([0.5, 0.5]))
    g0 = st.geometric_distance_check(sqc, sqc)
    rows.append(_assert("stability", "geom_dist_identity_ratio",
                        1e-9 - abs(g0.dche_ratio - 1.0), 0.0))
    from .geometry import dilate

    g1 = st.geometric_distance_check(sqc, dilate(sqc, 1.05))
    rows.append(_assert("stability", "geom_dist_dilation_ratio",
                        0.01 - abs(g1.dche_ratio - 1.0 / 1.05), 0.0))
    rows.append(_track("stability", "geom_dist_scaled[dilated_square]",
                       g1.scaled_ratio))

    # cross-polytope and slab: qualitative 1/s trend of the inner constant
    b1 = LpBall(p=1.0, radius=1.0, dim=2)
    slab_d = {}
    for s in (0.3, 0.5, 0.8):
        slab = Box(np.array([-s, -1.0]), np.array([s, 1.0]))
        Ls = Intersection(b1, slab)
        slab_d[s] = st.cheeger_of_body(Ls)
        rows.append(_track("stability", f"slab_value[s={s:g}]", s * slab_d[s]))
    rows.append(_assert("stability", "slab_trend_decreasing",
                        min(slab_d[0.3] - slab_d[0.5],
                            slab_d[0.5] - slab_d[0.8]), 0.0))

    # total-variation stability of 1-D log-concave measures
    r = st.tv_stability_report(ms.uniform(0, 1), ms.uniform(0, 0.8))
    rows.append(_assert("stability", "tv_ratio[uniform_pair]",
                        1e-6 - abs(r.dche_ratio - 0.8), 0.0))
    rows.append(_track("stability", "tv_tracked[uniform_pair]", r.tracked))
    g = ms.gaussian()
    gs = ms.translate_1d(g, 0.5)
    r2 = st.tv_stability_report(g, gs)
    rows.append(_assert("stability", "tv_ratio[shifted_gaussian]",
                        1e-6 - abs(r2.dche_ratio - 1.0), 0.0))

    # push-forward maps
    T_half = st.PushforwardMap(np.array([0.0, 1.0]), np.array([0.0, 0.5]))
    rr = st.pushforward_check(T_half, ms.uniform(0, 1), ms.uniform(0, 0.5))
    rows.append(_assert("stability", "pushforward_plain_fact[x_half]",
                        rr.plain_fact_slack, 1e-9))
    rows.append(_assert("stability", "pushforward_ratio_one[x_half]",
                        1e-6 - abs(rr.tracked_ratio - 1.0), 0.0))
    T_id = st.PushforwardMap(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    ri = st.pushforward_check(T_id, ms.uniform(0, 1), ms.uniform(0, 1))
    rows.append(_assert("stability", "pushforward_identity",
                        1e-9 - abs(ri.tracked_ratio - 1.0), 0.0))
    import scipy.stats as sps

    ys = np.linspace(1e-6, 1 - 1e-6, 4001)
    T_beta = st.PushforwardMap(ys, sps.beta.ppf(ys, 2, 2))
    beta_m = ms.from_potential(
        lambda x: -np.log(np.clip(6 * x * (1 - x), 1e-300, None)),
        1e-4, 1 - 1e-4, n=4001, name="beta22")
    rb = st.pushforward_check(T_beta, ms.uniform(0, 1), beta_m)
    rows.append(_assert("stability", "pushforward_plain_fact[beta]",
                        rb.plain_fact_slack, 1e-6))
    rows.append(_track("stability", "pushforward_ratio[beta]", rb.tracked_ratio))

    # tensorization
    for tag, (a, b) in {
        "box_1x2": (Interval(0, 1), Interval(0, 2)),
        "unit_square": (Interval(0, 1), Interval(0, 1)),
        "gaussian_pair": (ms.gaussian(n=2001), ms.gaussian(n=2001)),
    }.items():
        tr = st.tensorization_check(a, b)
        tol = 2e-2 * min(tr.gap_factors)
        rows.append(_assert("tensorization", f"product_gap_identity[{tag}]",
                            tol - tr.gap_slack, 0.0))
        if tr.dche_ratio is not None:
            rows.append(_track("tensorization", f"cheeger_ratio[{tag}]",
                               tr.dche_ratio))

    # iterated inclusion limit
    for v, mmax in ((0.9, 64), (0.5, 128), (1.0, 8)):
        r = st.going_up_limit_check(v, mmax)
        rows.append(_row("stability", f"going_up_limit_monotone[v={v:g}]",
                         1.0 if r.monotone else -1.0, 0.0, r.monotone))
        rows.append(_assert("stability", f"going_up_limit_gap[v={v:g}]",
                            r.bound - r.final_gap, 0.0))

    # log-shape of the thin-product family (2-D slice of the sharpness
    # example; tracked, not asserted)
    K = Box(np.array([0.0, -1.0]), np.array([1.0, 1.0]))
    dK = st.cheeger_of_body(K)
    for eps in (0.1, 0.2, 0.4):
        L = Box(np.array([0.0, -eps]), np.array([1.0, eps]))
        dL = st.cheeger_of_body(L)
        rows.append(_track("stability", f"thin_product_logshape[eps={eps:g}]",
                           (dL / dK) * 1.0 / math.log(1 + 1 / eps)))

    # translation invariance of the constants
    u = ms.uniform(0, 1)
    ut = ms.translate_1d(u, 5.0)
    rows.append(_assert("stability", "translation_invariance_1d",
                        1e-9 - abs(st.cheeger_of_measure(u)
                                   - st.cheeger_of_measure(ut)), 0.0))
    sq_t = translate(sq, [3.0, -2.0])
    rows.append(_assert("stability", "translation_invariance_2d",
                        1e-6 - abs(st.cheeger_of_body(sq)
                                   - st.cheeger_of_body(sq_t)), 0.0))
    return rows


def semigroup_section(cfg: pl.RunConfig) -> list[dict]:
    rows = []
    u = ms.uniform(0, 1)
    dom = spc.discretize_measure_1d(u, ncells=1000)
    op = spc.GridOperator(dom)
    x = dom.coords[:, 0]
    for t in (0.01, 0.1):
        v = spc.bakry_ledoux_check(op, np.cos(np.pi * x), t)
        rows.append(_assert("semigroup", f"gradient_variance_bound[interval,cos,t={t:g}]",
                            spc.bl_tolerance(dom.h, t) - v, 0.0))
    rows.append(_assert("semigroup", "l1_smoothing[interval,x,t=0.02]",
                        spc.ledoux_l1_check(op, x.copy(), 0.02), 1e-6))
    step = np.sign(x - 0.5)
    rows.append(_assert("semigroup", "gradient_decay_inf[interval,step,t=0.1]",
                        spc.gradient_decay_check(op, step, 0.1, q=math.inf,
                                                 monotone=True), 1e-6))
    g = ms.gaussian()
    domg = spc.discretize_measure_1d(g, ncells=1500)
    opg = spc.GridOperator(domg)
    xg = domg.coords[:, 0].copy()
    rows.append(_assert("semigroup", "gradient_decay_l2[gaussian,x,t=1]",
                        spc.gradient_decay_check(opg, xg, 1.0, q=2.0), 1e-6))
    sq = Box(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    dom2 = spc.discretize_body(sq, 1 / 32)
    op2 = spc.GridOperator(dom2)
    f2 = dom2.coords[:, 0].copy()
    for t in (0.01, 0.1):
        v = spc.bakry_ledoux_check(op2, f2, t)
        rows.append(_assert("semigroup", f"gradient_variance_bound[square,x,t={t:g}]",
                            spc.bl_tolerance(dom2.h, t) - v, 0.0))
    disk = Ball(np.array([0.0, 0.0]), 1.0)
    domd = spc.discretize_body(disk, 1 / 32)
    opd = spc.GridOperator(domd)
    rows.append(_assert("semigroup", "l1_smoothing[disk,x,t=0.05]",
                        spc.ledoux_l1_check(opd, domd.coords[:, 0].copy(), 0.05),
                        1e-6))
    # semigroup structural invariants
    one = np.ones(dom.ncells)
    hs = spc.heat_evolve(op, one, 0.1)
    rows.append(_assert("semigroup", "unit_preserved",
                        1e-10 - float(np.max(np.abs(hs.values - 1.0))), 0.0))
    f = np.cos(np.pi * x)
    ev = spc.heat_evolve(op, f, 0.05)
    rows.append(_assert("semigroup", "mass_preserved",
                        1e-10 - abs(dom.integrate(ev.values) - dom.integrate(f)),
                        0.0))
    rows.append(_assert("semigroup", "l2_contraction",
                        dom.lp_norm(f, 2) - dom.lp_norm(ev.values, 2), 1e-10))
    pos = spc.heat_evolve(op, (x <= 0.5).astype(float), 0.01, monotone=True)
    rows.append(_assert("semigroup", "positivity_monotone_mode",
                        float(np.min(pos.values)), 1e-10))
    rows.append(_assert("semigroup", "max_principle_monotone_mode",
                        1.0 + 1e-10 - float(np.max(pos.values)), 0.0))
    return rows


def scaling_section(cfg: pl.RunConfig) -> list[dict]:
    """Every constant estimator is (-1)-homogeneous under dilation."""
    rows = []
    base = ms.uniform(0, 1)
    ctx0 = cc.EvalContext.from_measure_1d(base)
    fam0 = cc.build_default_family(ctx0, seed=cfg.seed, n_random=40)
    vals0 = {
        "d_che": st.cheeger_of_measure(base),
        "d_fm": cc.d_fm(ctx0, fam0),
        "d_exp": cc.d_exp(ctx0, fam0),
        "d_poin": spc.spectral_gap(spc.GridOperator(
            spc.discretize_measure_1d(base, ncells=1000))).d_poin,
    }
    for s in (0.5, 2.0):
        m = ms.dilate_1d(base, s)
        ctx = cc.EvalContext.from_measure_1d(m)
        fam = cc.build_default_family(ctx, seed=cfg.seed, n_random=40)
        vals = {
            "d_che": st.cheeger_of_measure(m),
            "d_fm": cc.d_fm(ctx, fam),
            "d_exp": cc.d_exp(ctx, fam),
            "d_poin": spc.spectral_gap(spc.GridOperator(
                spc.discretize_measure_1d(m, ncells=1000))).d_poin,
        }
        for k in vals0:
            rel = abs(vals[k] * s - vals0[k]) / vals0[k]
            rows.append(_assert("scaling", f"minus_one_homogeneous[{k},s={s:g}]",
                                0.01 - rel, 0.0))
    return rows


def geometry_section(cfg: pl.RunConfig) -> list[dict]:
    """Randomized geometric invariants with fixed seeds."""
    from .geometry import AffineImage, diameter, dilate, geometric_distance, volume

    rows = []
    rng = np.random.default_rng(cfg.seed)
    bodies = [Box(np.array([0.0, 0.0]), np.array([1.0, 1.0])),
              Ball(np.array([0.0, 0.0]), 1.0),
              LpBall(p=1.0, radius=1.0, dim=2)]
    # convexity witness: random member segments stay inside
    worst = math.inf
    for body in bodies:
        und = ms.UniformOnBody(body)
        pts = und.sample(2000, seed=cfg.seed)
        lam = rng.random(1000)[:, None]
        a, b = pts[:1000], pts[1000:]
        mid = lam * a + (1 - lam) * b
        ok = body.contains_many(mid)
        worst = min(worst, float(np.mean(ok)))
    rows.append(_assert("geometry", "convexity_witness", worst - 1.0, 1e-12))
    # product volume and orthogonal invariance
    box = Box(np.array([0.0, 0.0]), np.array([1.0, 2.0]))
    th = 0.7
    Q = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    rot = AffineImage(Q, np.zeros(2), box)
    vr = volume(rot, seed=cfg.seed)
    rows.append(_assert("geometry", "volume_orthogonal_invariance",
                        vr.half_width_99 * 1.5 + 2e-3 - abs(vr.value - 2.0), 0.0))
    for s in (0.5, 2.0):
        d0 = diameter(box).value
        ds = diameter(dilate(box, s)).value
        rows.append(_assert("geometry", f"diameter_dilation[s={s:g}]",
                            1e-6 - abs(ds - s * d0), 0.0))
    # multiplicative triangle inequality for the geometric distance
    K = Box(np.array([-0.5, -0.5]), np.array([0.5, 0.5]))
    L = Ball(np.array([0.0, 0.0]), 0.5)
    M = LpBall(p=1.0, radius=0.75, dim=2)
    dKL, dLM, dKM = (geometric_distance(K, L), geometric_distance(L, M),
                     geometric_distance(K, M))
    rows.append(_assert("geometry", "geom_dist_submultiplicative",
                        dKL * dLM - dKM, 1e-6))
    return rows


def band_section(records: dict, manifest: dict, strict: bool) -> list[dict]:
    """Compare tracked ratios of this run against the pinned manifest."""
    rows = []
    for fname, rec in records.items():
        for chk in rec["checks"]:
            if chk.kind != "track":
                continue
            key = f"track.{fname}.{chk.name}"
            if key not in manifest:
                rows.append(_row("band", f"unpinned[{key}]", chk.value,
                                 math.nan, True, "track"))
                continue
            pinned = manifest[key]
            drift = abs(chk.value - pinned) / max(abs(pinned), 1e-12)
            ok = drift <= BAND_DRIFT
            rows.append(_row("band", f"drift[{key}]", drift, BAND_DRIFT,
                             ok or not strict,
                             "assert" if strict else "track"))
    return rows


def pinned_entries(records: dict, extra_rows: list[dict]) -> dict:
    out = {}
    for fname, rec in records.items():
        for chk in rec["checks"]:
            if chk.kind == "track" and np.isfinite(chk.value):
                out[f"track.{fname}.{chk.name}"] = float(chk.value)
        for key in ("d_che", "d_poin", "d_fm", "d_exp"):
            if rec.get(key) is not None:
                out[f"fixture.{fname}.{key}"] = float(rec[key])
    for row in extra_rows:
        if row["kind"] == "track" and row["slack"] is not None \
                and isinstance(row["slack"], float) and np.isfinite(row["slack"]):
            out[f"track._suite.{row['section']}.{row['name']}"] = row["slack"]
    return out


def run_verify(cfg: pl.RunConfig, fixture_set: str = "full",
               manifest: Optional[dict] = None) -> dict:
    t0 = time.time()
    manifest = load_packaged_manifest() if manifest is None else manifest
    names = fixture_names(fixture_set)
    records = {}
    for name in names:
        records[name] = pl.compute_constants(name, cfg)
    rows: list[dict] = []
    for name, rec in records.items():
        for chk in rec["checks"]:
            rows.append(_row(f"fixture:{name}", chk.name, chk.value, chk.tol,
                             chk.passed, chk.kind))
    rows.extend(geometry_section(cfg))
    rows.extend(scaling_section(cfg))
    rows.extend(semigroup_section(cfg))
    if fixture_set == "full":
        rows.extend(stability_section(cfg))
    rows.extend(band_section(records, manifest, cfg.strict))

    # pairwise main-theorem band across the convex fixture set
    ratio_rows = []
    for name, rec in records.items():
        if not rec["convex"]:
            continue
        vals = {k: rec[k] for k in ("d_che", "d_poin", "d_exp", "d_fm")}
        for ka in vals:
            for kb in vals:
                if ka < kb and vals[kb]:
                    key = f"band.{name}.{ka}_over_{kb}"
                    ratio_rows.append((key, vals[ka] / vals[kb]))
    for key, val in ratio_rows:
        if key in manifest:
            drift = abs(val - manifest[key]) / max(abs(manifest[key]), 1e-12)
            ok = drift <= BAND_DRIFT
            rows.append(_row("band", f"drift[{key}]", drift, BAND_DRIFT,
                             ok or not cfg.strict,
                             "assert" if cfg.strict else "track"))
        else:
            rows.append(_row("band", f"unpinned[{key}]", val, math.nan, True,
                             "track"))

    n_fail = sum(1 for r in rows if not r["pass"])
    summary = {
        "fixture_set": fixture_set,
        "rows": rows,
        "records": {k: pl.record_to_json_dict(v) for k, v in records.items()},
        "n_checks": len(rows),
        "n_failed": n_fail,
        "ok": n_fail == 0,
        "elapsed_seconds": round(time.time() - t0, 3),
    }
    summary["pin_entries"] = pinned_entries(records, rows)
    for key, val in ratio_rows:
        summary["pin_entries"][key] = val
    return summary
