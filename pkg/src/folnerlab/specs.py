"""Parsing of the short text specs used on the command line and in configs.

Systems:      ``rotation:theta=0.414[/0.2]``, ``bernoulli``, ``product:theta=0.414``, ``skew:theta=0.414``
Observables:  ``cos[:k=1,phase=0]``, ``coord[:j=0/1]``, ``const:0.5``,
              ``tensor:cos*coord``, ``skewcos:k=0,m=1``
Weights:      ``orbit:<system>[:params],obs=...,x=...`` (``seed=`` fixes a Bernoulli point),
              ``bernoulli:seed=7``, ``zero``, ``const:0.5``, ``file:path.csv``
Targets:      ``random:density=0.3,window=1000,seed=11``
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .covering import random_targets
from .dynamics import (
    BernoulliShift,
    Const,
    Coord,
    Observable,
    ProductSystem,
    Rotation,
    SkewCos,
    SkewProduct,
    SystemModel,
    Tensor,
    TorusCos,
)
from .folner import FolnerSeq, interval_family, parse_seq, pow2_family
from .groups import FiniteRegion, GroupModel, UsageError


def _params(text: str) -> dict[str, str]:
    out = {}
    for tok in filter(None, (t.strip() for t in text.split(","))):
        if "=" not in tok:
            raise UsageError(f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _floats(v: str) -> list[float]:
    return [float(t) for t in v.split("/")]


def _ints(v: str) -> list[int]:
    return [int(t) for t in v.split("/")]


def parse_system(spec: str) -> SystemModel:
    kind, _, rest = spec.strip().partition(":")
    p = _params(rest)
    if kind == "rotation":
        return Rotation(_floats(p.get("theta", "0.41421356237309515")))
    if kind == "bernoulli":
        return BernoulliShift(int(p.get("rank", 1)))
    if kind == "product":
        return ProductSystem(Rotation(_floats(p.get("theta", "0.41421356237309515"))), BernoulliShift())
    if kind == "skew":
        return SkewProduct(float(p.get("theta", "0.41421356237309515")))
    raise UsageError(f"unknown system {spec!r}")


def parse_observable(spec: str) -> Observable:
    s = spec.strip()
    kind, _, rest = s.partition(":")
    if kind == "tensor":
        left, _, right = rest.partition("*")
        return Tensor(parse_observable(left), parse_observable(right))
    if kind == "const":
        return Const(float(rest or 1.0))
    p = _params(rest)
    if kind == "cos":
        return TorusCos(tuple(_ints(p.get("k", "1"))), float(p.get("phase", 0.0)))
    if kind == "coord":
        return Coord(tuple(_ints(p.get("j", "0"))))
    if kind == "skewcos":
        return SkewCos(int(p.get("k", 0)), int(p.get("m", 1)))
    raise UsageError(f"unknown observable {spec!r}")


def default_observable(system: SystemModel) -> Observable:
    if isinstance(system, Rotation):
        return TorusCos((1,) + (0,) * (system.dim - 1))
    if isinstance(system, BernoulliShift):
        return Coord((0,))
    if isinstance(system, ProductSystem):
        return Tensor(TorusCos((1,)), Coord((0,)))
    if isinstance(system, SkewProduct):
        return SkewCos(0, 1)
    raise UsageError("no default observable")


@dataclass
class WeightSpec:
    """A parsed weight spec; ``point`` is ``None`` when it is to be sampled."""

    kind: str  # orbit | bernoulli | const | file
    system: SystemModel | None = None
    obs: Observable | None = None
    point: object = None
    value: float = 0.0
    path: str | None = None
    text: str = ""


def parse_weight(spec: str) -> WeightSpec:
    s = spec.strip()
    if s in ("zero", "0"):
        return WeightSpec("const", value=0.0, text=s)
    if s.startswith("const:"):
        return WeightSpec("const", value=float(s[6:]), text=s)
    if s.startswith("file:"):
        return WeightSpec("file", path=s[5:], text=s)
    if s.startswith("bernoulli:") or s == "bernoulli":
        p = _params(s.partition(":")[2])
        return WeightSpec("bernoulli", point=int(p["seed"]) if "seed" in p else None, text=s)
    if s.startswith("orbit:"):
        body = s[len("orbit:"):]
        kind, _, rest = body.partition(":")
        p = _params(rest)
        sys_keys = {k: v for k, v in p.items() if k in ("theta", "rank")}
        sys_spec = kind + (":" + ",".join(f"{k}={v}" for k, v in sys_keys.items()) if sys_keys else "")
        system = parse_system(sys_spec)
        obs = _parse_obs_param(p["obs"]) if "obs" in p else default_observable(system)
        point = None
        if "seed" in p:
            point = int(p["seed"])
            if isinstance(system, ProductSystem):
                point = (np.array([float(p.get("x", 0.0))]), point)
        elif "x" in p:
            xs = _floats(p["x"])
            if isinstance(system, SkewProduct):
                point = (xs[0], xs[1] if len(xs) > 1 else 0.0)
            else:
                point = np.array(xs)
        return WeightSpec("orbit", system=system, obs=obs, point=point, text=s)
    raise UsageError(f"unknown weight spec {spec!r}")


def _parse_obs_param(v: str) -> Observable:
    # inside a comma-separated weight spec observable params use ';' instead of ','
    return parse_observable(v.replace(";", ","))


def parse_targets(model: GroupModel, spec: str, scales: tuple[int, int]) -> dict[int, FiniteRegion]:
    kind, _, rest = spec.partition(":")
    if kind != "random":
        raise UsageError(f"unknown target spec {spec!r}")
    p = _params(rest)
    return random_targets(model, float(p.get("density", 0.3)), int(p.get("window", 1000)), int(p.get("seed", 0)), scales)


def parse_sequence(model: GroupModel, spec: str, n_max: int | None = None) -> FolnerSeq:
    """``parse_seq`` plus ``alt2:lo..hi`` (alternating ``[0,2^N)`` and ``[-2^N,0)``)."""
    m = re.fullmatch(r"alt2:(\d+)\.\.(\d+)", spec.strip())
    if m:
        return alternating_family(model, int(m.group(1)), int(m.group(2)))
    return parse_seq(model, spec, n_max)


def alternating_family(model: GroupModel, lo: int, hi: int) -> FolnerSeq:
    sets = []
    for n in range(lo, hi + 1):
        sets.append(FiniteRegion.interval(model, 0, 2**n) if (n - lo) % 2 == 0 else FiniteRegion.interval(model, -(2**n), 0))
    return FolnerSeq(model, sets, tag=f"alt2:{lo}..{hi}")


def parse_range(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+)\.\.(\d+)", text.strip())
    if not m:
        raise UsageError(f"expected a range a..b, got {text!r}")
    return int(m.group(1)), int(m.group(2))


__all__ = [
    "parse_system", "parse_observable", "parse_weight", "parse_targets", "parse_sequence",
    "parse_range", "alternating_family", "default_observable", "WeightSpec",
    "interval_family", "pow2_family",
]
