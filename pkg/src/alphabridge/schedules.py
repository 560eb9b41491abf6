"""Schedules for alpha(t) and the twin-gradient mixing weight gamma(alpha)."""

from __future__ import annotations

import math
from dataclasses import dataclass

ALPHA_FAMILIES = ("linear", "sigmoid", "x5")
GAMMA_FAMILIES = ("linear", "sigmoid", "cosine", "square")


@dataclass(frozen=True)
class ScheduleSpec:
    alpha_family: str = "sigmoid"
    gamma_family: str = "sigmoid"
    a: float = 20.0
    b: float = -10.0
    c: float = 20.0
    d: float = -10.0
    eps: float = 1e-3
    num_iters: int = 2000

    def __post_init__(self):
        if self.alpha_family not in ALPHA_FAMILIES:
            raise ValueError(f"alpha_family must be one of {ALPHA_FAMILIES}")
        if self.gamma_family not in GAMMA_FAMILIES:
            raise ValueError(f"gamma_family must be one of {GAMMA_FAMILIES}")
        if not 0.0 < self.eps < 0.1:
            raise ValueError("eps must lie in (0, 0.1)")
        if self.num_iters < 2:
            raise ValueError("num_iters must be >= 2")


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _sigmoid_ramp(u: float, scale: float, shift: float) -> float:
    lo = _sigmoid(shift)
    return (_sigmoid(scale * u + shift) - lo) / (_sigmoid(scale + shift) - lo)


def t_of_iter(it: int, spec: ScheduleSpec) -> float:
    """Map iteration 1..num_iters linearly onto [eps, 1 - eps]."""
    if not 1 <= it <= spec.num_iters:
        raise ValueError(f"iteration {it} outside 1..{spec.num_iters}")
    return spec.eps + (it - 1) * (1.0 - 2.0 * spec.eps) / (spec.num_iters - 1)


def alpha_at(t: float, spec: ScheduleSpec) -> float:
    fam = spec.alpha_family
    if fam == "linear":
        return t
    if fam == "sigmoid":
        return _sigmoid_ramp(t, spec.a, spec.b)
    return 16.0 * (t - 0.5) ** 5 + 0.5


def gamma_at(alpha: float, spec: ScheduleSpec) -> float:
    """gamma(0) = 0 and gamma(1) = 1 exactly for every family."""
    fam = spec.gamma_family
    if fam == "linear":
        return alpha
    if fam == "sigmoid":
        return _sigmoid_ramp(alpha, spec.c, spec.d)
    if fam == "cosine":
        return 0.5 - 0.5 * math.cos(math.pi * alpha)
    return 1.0 - (1.0 - alpha) ** 2


def schedule_at(it: int, spec: ScheduleSpec) -> tuple[float, float]:
    """(alpha, gamma) used at Step-II iteration ``it``; gamma is always gamma_at(alpha)."""
    a = alpha_at(t_of_iter(it, spec), spec)
    return a, gamma_at(a, spec)
