"""Command-line entry points.

Subcommands: constants, profile, semigroup, stability, bounds, verify.
Exit codes: 0 pass, 2 assertion-class failure, 3 numerical failure,
4 configuration error.  Reports embed the tool version, a hash of the
effective configuration and all seeds, and identical configurations produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from . import measures as ms
from . import pipeline as pl
from . import profile as pf
from . import spectral as spc
from . import stability as st
from . import verify as vf
from .fixtures import (
    FixtureError,
    fixture_names,
    get_fixture,
    format_manifest,
    load_packaged_manifest,
    parse_manifest,
)

EXIT_OK = 0
EXIT_ASSERT = 2
EXIT_NUMERIC = 3
EXIT_CONFIG = 4

SCHEMA = "isogap.report/1"


def _config_dict(args) -> dict:
    keep = ("fixture", "fixture_set", "h", "seed", "strict", "power", "pair")
    return {k: getattr(args, k) for k in keep if hasattr(args, k)}


def _config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _run_config(args) -> pl.RunConfig:
    cfg = pl.RunConfig()
    if getattr(args, "h", None):
        cfg.h2d = float(args.h)
    if getattr(args, "seed", None) is not None:
        cfg.seed = int(args.seed)
    cfg.strict = bool(getattr(args, "strict", False))
    return cfg


def _emit(payload: dict, args) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    out = getattr(args, "out", None)
    if out:
        # atomic write per output file
        d = os.path.dirname(os.path.abspath(out)) or "."
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".isogap-")
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, out)
    if getattr(args, "json", False) or not out:
        sys.stdout.write(text)


def _report_envelope(args, body: dict) -> dict:
    cfgd = _config_dict(args)
    return {
        "schema": SCHEMA,
        "tool_version": __version__,
        "config": cfgd,
        "config_hash": _config_hash(cfgd),
        **body,
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_constants(args) -> int:
    cfg = _run_config(args)
    rec = pl.compute_constants(args.fixture, cfg)
    payload = _report_envelope(args, {
        "seeds": {"main": cfg.seed},
        "fixtures": {args.fixture: pl.record_to_json_dict(rec)},
    })
    if args.eig_csv:
        fix = get_fixture(args.fixture)
        if fix.kind == "body2d":
            dom = spc.discretize_body(fix.build(), cfg.h2d_family)
        else:
            dom = spc.discretize_measure_1d(fix.build(), ncells=cfg.ncells_1d)
        gap = spc.spectral_gap(spc.GridOperator(dom))
        with open(args.eig_csv, "w") as fh:
            fh.write(spc.eigenfunction_csv(dom, gap.eigenvector))
    _emit(payload, args)
    fails = [c for c in rec["checks"] if not c.passed and c.kind == "assert"]
    return EXIT_ASSERT if fails else EXIT_OK


def cmd_profile(args) -> int:
    cfg = _run_config(args)
    fix = get_fixture(args.fixture)
    if fix.kind == "measure1d":
        curve = pf.profile_1d(fix.build())
    else:
        curve = pf.profile_2d_upper(fix.build())
    lines = ["t,I,err,method,minimizer"]
    for i, t in enumerate(curve.t_values):
        mn = curve.minimizers[i]
        desc = mn.describe() if hasattr(mn, "describe") else \
            (f"{mn[0]}:{mn[1]}@{mn[2]:.9g}" if isinstance(mn, tuple) else "")
        lines.append(f"{t:.6g},{curve.I_values[i]:.12g},{curve.err[i]:.3g},"
                     f"{curve.method},{desc}")
    csv = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(csv)
    else:
        sys.stdout.write(csv)
    power = args.power
    defect = pf.concavity_check(curve, power)
    tol = (1e-6 if curve.method == "exact1d"
           else 8.0 * curve.max_err() * float(np.max(curve.I_values)) ** (power - 1)
           + 1e-6)
    concave = defect <= tol
    sys.stderr.write(f"concavity power={power:g}: defect={defect:.3e} "
                     f"tol={tol:.3e} {'PASS' if concave else 'FAIL'}\n")
    if not concave and fix.convex:
        return EXIT_ASSERT
    return EXIT_OK


def cmd_semigroup(args) -> int:
    cfg = _run_config(args)
    rows = vf.semigroup_section(cfg)
    payload = _report_envelope(args, {"checks": rows})
    _emit(payload, args)
    bad = [r for r in rows if not r["pass"]]
    return EXIT_ASSERT if bad else EXIT_OK


def cmd_stability(args) -> int:
    cfg = _run_config(args)
    rows = vf.stability_section(cfg)
    if args.pair:
        rows = [r for r in rows if args.pair in r["name"]]
        if not rows:
            sys.stderr.write(f"no stability rows match {args.pair!r}\n")
            return EXIT_CONFIG
    payload = _report_envelope(args, {"checks": rows})
    _emit(payload, args)
    bad = [r for r in rows if not r["pass"]]
    return EXIT_ASSERT if bad else EXIT_OK


def cmd_bounds(args) -> int:
    cfg = _run_config(args)
    rec = pl.compute_constants(args.fixture, cfg)
    rows = []
    meas = {"d_che": rec["d_che"], "d_poin": rec["d_poin"],
            "d_fm": rec["d_fm"], "d_exp": rec["d_exp"]}
    for bname, data in rec["bounds"].items():
        rows.append({"bound": bname, **(data if isinstance(data, dict)
                                        else {"value": data})})
    payload = _report_envelope(args, {
        "fixture": args.fixture, "measured": meas, "bounds": rows})
    _emit(payload, args)
    width = max(len(r["bound"]) for r in rows)
    sys.stderr.write(f"fixture {args.fixture}: " + json.dumps(meas) + "\n")
    for r in rows:
        sys.stderr.write(f"  {r['bound']:<{width}} "
                         + json.dumps({k: v for k, v in r.items() if k != 'bound'})
                         + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _run_config(args)
    manifest = None
    if args.bands:
        with open(args.bands) as fh:
            manifest = parse_manifest(fh.read())
    summary = vf.run_verify(cfg, fixture_set=args.fixture_set, manifest=manifest)
    pins = summary.pop("pin_entries")
    if args.write_manifest:
        with open(args.write_manifest, "w") as fh:
            fh.write(format_manifest(pins))
        sys.stderr.write(f"wrote {len(pins)} pinned entries to "
                         f"{args.write_manifest}\n")
    payload = _report_envelope(args, {
        "seeds": {"main": cfg.seed}, **summary})
    _emit(payload, args)
    sys.stderr.write(f"verify: {summary['n_checks']} checks, "
                     f"{summary['n_failed']} failed, "
                     f"{summary['elapsed_seconds']}s\n")
    return EXIT_OK if summary["ok"] else EXIT_ASSERT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="isogap",
        description="isoperimetric, spectral-gap and concentration constants "
                    "for convex bodies and log-concave measures")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fixture=True):
        if fixture:
            sp.add_argument("--fixture", default="uniform01",
                            help="fixture name from the registry")
        sp.add_argument("--h", type=float, default=None,
                        help="grid spacing override for 2-D eigensolves")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="output file path")
        sp.add_argument("--json", action="store_true",
                        help="also print JSON to stdout")
        sp.add_argument("--strict", action="store_true")

    sp = sub.add_parser("constants", help="compute the four constants")
    common(sp)
    sp.add_argument("--eig-csv", default=None,
                    help="dump the gap eigenfunction as CSV")
    sp.set_defaults(func=cmd_constants)

    sp = sub.add_parser("profile", help="profile curve as CSV plus concavity")
    common(sp)
    sp.add_argument("--power", type=float, default=1.0)
    sp.set_defaults(func=cmd_profile)

    sp = sub.add_parser("semigroup", help="heat semigroup estimate checks")
    common(sp, fixture=False)
    sp.set_defaults(func=cmd_semigroup)

    sp = sub.add_parser("stability", help="perturbation experiments")
    common(sp, fixture=False)
    sp.add_argument("--pair", default=None,
                    help="filter stability rows by substring")
    sp.set_defaults(func=cmd_stability)

    sp = sub.add_parser("bounds", help="classical lower-bound table")
    common(sp)
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("verify", help="full verification suite")
    common(sp, fixture=False)
    sp.add_argument("--fixture-set", default="full",
                    choices=("full", "minimal"))
    sp.add_argument("--bands", default=None,
                    help="override the pinned band manifest file")
    sp.add_argument("--write-manifest", default=None,
                    help="write pinned entries from this run")
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except FixtureError as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return EXIT_CONFIG
    except (spc.SpectralError,) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
