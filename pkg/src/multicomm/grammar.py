"""Compact string grammar and JSON descriptors for operators.

Grammar::

    op      := name [":" key "=" value ("," key "=" value)*]
             | "tensor(" op (";" op)* ")"
    ops     := op ("|" op)*

Values are JSON literals when they parse as such (``0.6``, ``[1,0]``) and
bare strings otherwise (``+``, ``cube``).  Parameter indices are 1-based.

Examples: ``hilbert:k=2``, ``riesz:k=1,j=2``, ``proj:k=1,side=-``,
``scone:k=1,dir=[1,0],r=0.6,tau=0.2``,
``journe:params=[1,2],dirs=[[1,0],[0,1]],N=21``,
``shift:complexity=[1,0,0,1],seed=3``,
``tensor(riesz:k=1,j=1 ; riesz:k=3,j=2)``.

Every descriptor dict accepted by :func:`build` is also what the
constructors store in ``Multiplier.meta``, so ``build(m.meta, grid)``
rebuilds ``m``.
"""
from __future__ import annotations

import json

from .commutator import LinearOperator, from_multiplier, from_shift
from .dyadic.shift import ShiftSpec, make_shift
from .lattice import GridSpec
from .multiplier import (
    ConeSpec,
    Multiplier,
    identity,
    make_cone_projection,
    make_hilbert,
    make_projection,
    make_riesz,
    make_smooth_cone,
    tensor,
)
from .zonal import JourneConeSpec, PhiProfile, journe_multiplier

ALIASES = {
    "hilbert": "hilbert",
    "h": "hilbert",
    "riesz": "riesz",
    "cone": "cone",
    "scone": "smooth_cone",
    "smooth_cone": "smooth_cone",
    "proj": "projection",
    "projection": "projection",
    "journe": "journe_cone",
    "journe_cone": "journe_cone",
    "id": "identity",
    "identity": "identity",
    "shift": "shift",
}


def split_top(text: str, sep: str) -> list[str]:
    """Split on ``sep`` outside brackets and parentheses."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
            if depth < 0:
                raise ValueError(f"unbalanced brackets in {text!r}")
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if depth:
        raise ValueError(f"unbalanced brackets in {text!r}")
    parts.append("".join(cur))
    return [p.strip() for p in parts]


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_descriptor(text: str) -> dict:
    """Parse one operator string into a descriptor dict."""
    text = text.strip()
    if not text:
        raise ValueError("empty operator string")
    if text.startswith("tensor(") and text.endswith(")"):
        inner = text[len("tensor(") : -1]
        return {"kind": "tensor", "parts": [parse_descriptor(p) for p in split_top(inner, ";")]}
    name, _, rest = text.partition(":")
    kind = ALIASES.get(name.strip().lower())
    if kind is None:
        raise ValueError(f"unknown operator {name.strip()!r}")
    desc = {"kind": kind}
    if rest.strip():
        for item in split_top(rest, ","):
            key, eq, val = item.partition("=")
            if not eq or not key.strip():
                raise ValueError(f"expected key=value, got {item!r}")
            desc[key.strip()] = _value(val.strip())
    return desc


def parse_ops(text: str) -> list[dict]:
    """Parse ``op | op | ...`` into a list of descriptors."""
    return [parse_descriptor(p) for p in split_top(text, "|")]


def _cone(desc: dict) -> ConeSpec:
    return ConeSpec(
        int(desc["k"]),
        tuple(desc["dir"]),
        float(desc["r"]),
        desc.get("base", "ball"),
        float(desc.get("tau", 0.2)),
        desc.get("m"),
    )


def build_multiplier(desc: dict, grid: GridSpec) -> Multiplier:
    """Construct the multiplier described by ``desc`` on ``grid``."""
    kind = ALIASES.get(desc.get("kind"), desc.get("kind"))
    for k in desc.get("params", [desc["k"]] if "k" in desc else []):
        if not isinstance(k, int) or not 1 <= k <= grid.t:
            raise ValueError(f"{kind} refers to parameter {k!r}, grid has {grid.t}")
    if kind == "hilbert":
        return make_hilbert(grid, int(desc["k"]), int(desc.get("sign", -1)))
    if kind == "riesz":
        return make_riesz(grid, int(desc["k"]), int(desc["j"]), int(desc.get("sign", -1)))
    if kind == "projection":
        return make_projection(grid, int(desc["k"]), str(desc.get("side", "+")))
    if kind == "cone":
        return make_cone_projection(grid, _cone(desc))
    if kind == "smooth_cone":
        return make_smooth_cone(grid, _cone(desc))
    if kind == "tensor":
        return tensor([build_multiplier(p, grid) for p in desc["parts"]])
    if kind == "journe_cone":
        prof = PhiProfile(float(desc.get("a", 0.75)), float(desc.get("b", 0.25)), int(desc.get("m", 4)))
        spec = JourneConeSpec(tuple(desc["params"]), tuple(tuple(x) for x in desc["dirs"]), prof, int(desc.get("N", 41)))
        return journe_multiplier(spec, grid)
    if kind == "identity":
        return identity(grid)
    raise ValueError(f"cannot build a multiplier of kind {desc.get('kind')!r}")


def build(desc, grid: GridSpec) -> LinearOperator:
    """Construct an operator from a descriptor dict or an operator string."""
    if isinstance(desc, str):
        desc = parse_descriptor(desc)
    if desc.get("kind") == "shift":
        spec = ShiftSpec(tuple(int(c) for c in desc["complexity"]), desc.get("coefficients", "random-phase"),
                         desc.get("seed", 0))
        return from_shift(make_shift(spec, grid))
    return from_multiplier(build_multiplier(desc, grid))


def build_ops(text: str, grid: GridSpec) -> list[LinearOperator]:
    return [build(d, grid) for d in parse_ops(text)]


def format_descriptor(desc: dict) -> str:
    """Inverse of :func:`parse_descriptor` for descriptors it produces."""
    if desc["kind"] == "tensor":
        return "tensor(" + " ; ".join(format_descriptor(p) for p in desc["parts"]) + ")"
    items = [f"{k}={v if isinstance(v, str) else json.dumps(v, separators=(',', ':'))}"
             for k, v in desc.items() if k != "kind" and v is not None]
    return desc["kind"] + (":" + ",".join(items) if items else "")
