"""Pinned fixture registry, key=value definition-file parsing, and the
regression-band manifest.

Fixture definition files are line-based key=value text.  Bodies come in
named blocks separated by blank lines and may reference earlier blocks:

    name=sq
    kind=box
    lo=0,0
    hi=1,1

    name=halfplane
    kind=hpolytope
    normals=0,-1
    offsets=0

    name=halfsq
    kind=intersection
    left=sq
    right=halfplane

Measures use a single block (`kind=gaussian`, `kind=uniform1d a=0 b=1`,
`kind=table psi=-2:4,-1:1,0:0,1:1,2:4`, `kind=uniform body=<name>` after
body blocks).  The last block is the definition's main object unless a
`main=<name>` line appears.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import measures as ms
from .geometry import (
    AffineImage,
    Ball,
    Box,
    ConvexBody,
    HalfSpace,
    HPolytope,
    Interval,
    Intersection,
    LpBall,
    Product,
)


class FixtureError(ValueError):
    pass


@dataclass
class Fixture:
    name: str
    kind: str                     # "measure1d" | "body2d"
    convex: bool                  # log-concave / convex control flag
    build: Callable[[], Union[ms.Measure1D, ConvexBody]]
    in_minimal: bool = False


def _quartic():
    return ms.from_potential(lambda x: x**4, -2.48, 2.48, n=4001, name="quartic")


REGISTRY: dict[str, Fixture] = {}


def _register(name, kind, convex, build, in_minimal=False):
    REGISTRY[name] = Fixture(name, kind, convex, build, in_minimal)


_register("uniform01", "measure1d", True, lambda: ms.uniform(0.0, 1.0, name="uniform01"), True)
_register("uniform_sym", "measure1d", True, lambda: ms.uniform(-1.0, 1.0, name="uniform_sym"), True)
_register("gaussian1d", "measure1d", True, lambda: ms.gaussian(), True)
_register("twosided_exp", "measure1d", True, lambda: ms.two_sided_exponential(), True)
_register("quartic", "measure1d", True, _quartic, True)
_register("table_vee", "measure1d", True,
          lambda: ms.from_psi_table([-2, -1, 0, 1, 2], [4, 1, 0, 1, 4], name="table_vee"), True)
_register("counterexample3", "measure1d", False,
          lambda: ms.punctured_uniform(3, allow_non_logconcave=True), True)
_register("square", "body2d", True,
          lambda: Box(np.array([0.0, 0.0]), np.array([1.0, 1.0])))
_register("disk", "body2d", True, lambda: Ball(np.array([0.0, 0.0]), 1.0))
_register("box12", "body2d", True,
          lambda: Box(np.array([0.0, 0.0]), np.array([1.0, 2.0])))
_register("b1ball", "body2d", True, lambda: LpBall(p=1.0, radius=1.0, dim=2))
_register("halfdisk", "body2d", True,
          lambda: Intersection(Ball(np.array([0.0, 0.0]), 1.0),
                               Box(np.array([-1.0, 0.0]), np.array([1.0, 1.0]))))


def fixture_names(fixture_set: str = "full") -> list[str]:
    if fixture_set == "minimal":
        return [n for n, f in REGISTRY.items() if f.in_minimal]
    if fixture_set == "full":
        return list(REGISTRY)
    raise FixtureError(f"unknown fixture set {fixture_set!r}")


def get_fixture(name: str) -> Fixture:
    if name not in REGISTRY:
        raise FixtureError(
            f"unknown fixture {name!r}; known: {', '.join(sorted(REGISTRY))}")
    return REGISTRY[name]


# ---------------------------------------------------------------------------
# definition files
# ---------------------------------------------------------------------------


def _parse_blocks(text: str) -> list[dict]:
    blocks = []
    cur: dict = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            if cur:
                blocks.append(cur)
                cur = {}
            continue
        if "=" not in line:
            raise FixtureError(f"bad definition line: {raw!r}")
        k, v = line.split("=", 1)
        cur[k.strip()] = v.strip()
    if cur:
        blocks.append(cur)
    return blocks


def _floats(s: str) -> np.ndarray:
    return np.array([float(z) for z in s.split(",") if z.strip() != ""])


def _build_body(block: dict, env: dict) -> ConvexBody:
    kind = block.get("kind")
    if kind == "interval":
        return Interval(float(block["a"]), float(block["b"]))
    if kind == "box":
        return Box(_floats(block["lo"]), _floats(block["hi"]))
    if kind == "ball":
        return Ball(_floats(block["center"]), float(block["radius"]))
    if kind == "lpball":
        return LpBall(p=float(block["p"]), radius=float(block["radius"]),
                      dim=int(block.get("dim", 2)))
    if kind == "hpolytope":
        normals = [_floats(s) for s in block["normals"].split(";")]
        offsets = _floats(block["offsets"])
        if len(normals) != len(offsets):
            raise FixtureError("normals/offsets length mismatch")
        return HPolytope(tuple(HalfSpace(n, float(o))
                               for n, o in zip(normals, offsets)))
    if kind == "product":
        return Product(env[block["left"]], env[block["right"]])
    if kind == "intersection":
        return Intersection(env[block["left"]], env[block["right"]])
    if kind == "affine":
        rows = [_floats(r) for r in block["matrix"].split(";")]
        return AffineImage(np.array(rows), _floats(block["shift"]),
                           env[block["inner"]])
    raise FixtureError(f"unknown body kind {kind!r}")


def _build_measure(block: dict, env: dict) -> ms.Measure1D:
    kind = block.get("kind")
    if kind == "gaussian":
        return ms.gaussian(mean=float(block.get("mean", 0.0)),
                           sigma=float(block.get("sigma", 1.0)))
    if kind == "uniform1d":
        return ms.uniform(float(block["a"]), float(block["b"]))
    if kind == "exponential2":
        return ms.two_sided_exponential(scale=float(block.get("scale", 1.0)))
    if kind == "table":
        pairs = [p.split(":") for p in block["psi"].split(",")]
        xs = [float(p[0]) for p in pairs]
        ps = [float(p[1]) for p in pairs]
        return ms.from_psi_table(xs, ps)
    if kind == "punctured_uniform":
        flag = block.get("allow_non_logconcave", "false").lower() == "true"
        return ms.punctured_uniform(int(block.get("m", 3)),
                                    allow_non_logconcave=flag)
    raise FixtureError(f"unknown measure kind {kind!r}")


def parse_definition(text: str):
    """Parse a definition file; returns ('body', ConvexBody) or
    ('measure1d', Measure1D) or ('uniform_on_body', ConvexBody)."""
    blocks = _parse_blocks(text)
    if not blocks:
        raise FixtureError("empty definition")
    env: dict = {}
    main_name = None
    last = None
    for block in blocks:
        if "main" in block and "kind" not in block:
            main_name = block["main"]
            continue
        kind = block.get("kind")
        if kind in ("gaussian", "uniform1d", "exponential2", "table",
                    "punctured_uniform"):
            obj = _build_measure(block, env)
            tag = "measure1d"
        elif kind == "uniform":
            body = env[block["body"]]
            return "uniform_on_body", body
        else:
            obj = _build_body(block, env)
            tag = "body"
        nm = block.get("name")
        if nm:
            env[nm] = obj
        last = (tag, obj)
        if main_name and nm == main_name:
            return tag, obj
    if last is None:
        raise FixtureError("no buildable block in definition")
    return last


def load_definition_file(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_definition(fh.read())


# ---------------------------------------------------------------------------
# manifest: pinned values and bands (key=value text)
# ---------------------------------------------------------------------------


def parse_manifest(text: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        k, v = line.split("=", 1)
        out[k.strip()] = float(v.strip())
    return out


def format_manifest(entries: dict[str, float]) -> str:
    lines = ["# pinned fixture values and regression bands"]
    for k in sorted(entries):
        lines.append(f"{k}={entries[k]:.12g}")
    return "\n".join(lines) + "\n"


def load_packaged_manifest() -> dict[str, float]:
    import importlib.resources as res

    try:
        text = (res.files("isogap") / "data" / "manifest.txt").read_text()
    except FileNotFoundError:
        return {}
    return parse_manifest(text)
