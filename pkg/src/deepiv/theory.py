"""Arithmetic on compositional smoothness structures.

A compositional function is a chain of ``L* + 1`` layers; layer ``i`` has
``d_i`` inputs, each output depends on ``t_i`` of them and is
``p_i``-Hölder smooth. The effective smoothness of layer ``i`` is

    p_i* = p_i * prod_{s > i} min(p_s, 1)

and the bottleneck layer ``i* = argmin p_i* / t_i`` fixes the intrinsic
smoothness ``p*`` and dimension ``t*`` that govern the network rate
``n^{-p*/(2p* + t*)}``. Infinite smoothness is represented by ``math.inf``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import DomainError


def strict_floor(a: float) -> int:
    """Largest integer strictly less than ``a``."""
    return math.ceil(a) - 1


def strict_ceil(a: float) -> int:
    """``strict_floor(a) + 1`` (equal to the usual ceiling)."""
    return strict_floor(a) + 1


@dataclass(frozen=True)
class CompositionalSpec:
    l_star: int
    dims: tuple  # d_0 .. d_{L*+1}
    active_vars: tuple  # t_0 .. t_{L*}
    smoothness: tuple  # p_0 .. p_{L*}

    def __post_init__(self):
        dims = tuple(int(v) for v in self.dims)
        t = tuple(int(v) for v in self.active_vars)
        p = tuple(float(v) for v in self.smoothness)
        L = int(self.l_star)
        if L < 0:
            raise DomainError("L* must be >= 0")
        if len(dims) != L + 2 or len(t) != L + 1 or len(p) != L + 1:
            raise DomainError("need L*+2 dims and L*+1 entries of t and p")
        if dims[-1] != 1:
            raise DomainError("the last dimension must be 1")
        if any(v < 1 for v in dims) or any(v < 1 for v in t):
            raise DomainError("dimensions and active-variable counts must be positive")
        if any(ti > di for ti, di in zip(t, dims)):
            raise DomainError("a layer cannot depend on more variables than it receives")
        if any(not pi > 0 for pi in p):
            raise DomainError("smoothness must be positive")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "active_vars", t)
        object.__setattr__(self, "smoothness", p)

    def to_dict(self) -> dict:
        return {"l_star": self.l_star, "dims": list(self.dims), "t": list(self.active_vars),
                "p": [_enc(v) for v in self.smoothness]}

    @classmethod
    def from_dict(cls, obj: dict) -> "CompositionalSpec":
        return cls(obj["l_star"], tuple(obj["dims"]), tuple(obj["t"]), tuple(_dec(v) for v in obj["p"]))


@dataclass(frozen=True)
class IntrinsicSummary:
    p_star_per_layer: tuple
    i_star: int
    p_star: float
    t_star: int
    rate_exponent: float
    lw_exponent: float
    layer_depths: tuple | None  # L_i, None when undefined
    layer_widths: tuple | None  # W_i
    min_depth: int | None
    min_width: int | None
    infinite_smoothness: bool

    def to_dict(self) -> dict:
        return {
            "p_star_per_layer": [_enc(v) for v in self.p_star_per_layer],
            "i_star": self.i_star,
            "p_star": _enc(self.p_star),
            "t_star": self.t_star,
            "rate_exponent": self.rate_exponent,
            "lw_exponent": self.lw_exponent,
            "layer_depths": None if self.layer_depths is None else list(self.layer_depths),
            "layer_widths": None if self.layer_widths is None else list(self.layer_widths),
            "min_depth": self.min_depth,
            "min_width": self.min_width,
            "infinite_smoothness": self.infinite_smoothness,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _enc(v):
    return "inf" if v == math.inf else v


def _dec(v):
    if isinstance(v, str):
        if v.lower() in ("inf", "infinity", "+inf"):
            return math.inf
        raise DomainError(f"cannot parse smoothness {v!r}")
    return float(v)


def layer_depth(p: float) -> int:
    return 216 * strict_ceil(p) ** 2 + 1


def layer_width(p: float, t: int) -> int:
    c = strict_ceil(p)
    return 81 * (c + t + 2) ** (t + 1) * 3 ** (t + 1)


def effective_smoothness(p: tuple) -> tuple:
    out = []
    for i, pi in enumerate(p):
        prod = 1.0
        for ps in p[i + 1:]:
            prod *= min(ps, 1.0)
        out.append(pi * prod)
    return tuple(out)


def intrinsic_summary(spec: CompositionalSpec, q: int = 1) -> IntrinsicSummary:
    """Intrinsic smoothness/dimension, rate exponents and minimal network size.

    The minimal size ``L >= L* + sum L_i``, ``W >= max_i q W_i d_{i+1}`` is
    undefined when some ``p_i`` is infinite; those fields are then ``None``
    and ``infinite_smoothness`` is set.
    """
    if q < 1:
        raise DomainError("q must be >= 1")
    p_eff = effective_smoothness(spec.smoothness)
    ratios = [pe / t for pe, t in zip(p_eff, spec.active_vars)]
    i_star = min(range(len(ratios)), key=lambda i: (ratios[i], i))
    p_star, t_star = p_eff[i_star], spec.active_vars[i_star]
    exponent, _ = rate(p_star, t_star)
    lw = 0.0 if p_star == math.inf else t_star / (2.0 * (2.0 * p_star + t_star))
    infinite = any(pi == math.inf for pi in spec.smoothness)
    if infinite:
        depths = widths = None
        min_depth = min_width = None
    else:
        depths = tuple(layer_depth(pi) for pi in spec.smoothness)
        widths = tuple(layer_width(pi, ti) for pi, ti in zip(spec.smoothness, spec.active_vars))
        min_depth = spec.l_star + sum(depths)
        min_width = max(q * w * spec.dims[i + 1] for i, w in enumerate(widths))
    return IntrinsicSummary(p_eff, i_star, p_star, t_star, exponent, lw, depths, widths,
                            min_depth, min_width, infinite)


def composition_smoothness(p1: float, p2: float) -> float:
    """Hölder degree of ``g1 o g2`` for ``p1``-smooth ``g1`` and ``p2``-smooth ``g2``."""
    if not (p1 > 0 and p2 > 0):
        raise DomainError("smoothness must be positive")
    return min(p1 * p2, p1, p2)


def rate(p_star: float, t_star: int):
    """Exponent ``p*/(2p* + t*)`` of the first-stage convergence rate and a label."""
    if not p_star > 0 or t_star < 1:
        raise DomainError("need p* > 0 and t* >= 1")
    if p_star == math.inf:
        return 0.5, "n^(-1/2)"
    e = p_star / (2.0 * p_star + t_star)
    return e, f"n^(-{p_star:g}/(2*{p_star:g}+{t_star}))"


def classical_rate(p_holder: float, d: int) -> float:
    """Exponent ``p/(2p + d)`` for series or kernel estimators of a ``p``-smooth function of ``d`` inputs."""
    if not p_holder > 0 or d < 1:
        raise DomainError("need p > 0 and d >= 1")
    return p_holder / (2.0 * p_holder + d)
