"""Parameter-integral interchange for jump integrals on one sampled stream.

Integrands are ``ffun(t, z, lam) -> float``.  On a finite parameter set both
orders of summation must agree to round-off; a gap points at bookkeeping
errors (compensator timing, which atoms count up to ``t``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .drivers import JumpStream, MarkSpace, TimeGrid, compensated_jump_integral, raw_jump_integral
from .errors import ConfigurationError


@dataclass(frozen=True, eq=False)
class ParamMeasure:
    """Finite parameter set with nonnegative weights."""

    points: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or len(w) != len(self.points):
            raise ConfigurationError("need exactly one weight per parameter point")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ConfigurationError("parameter weights must be finite and nonnegative")
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points, mass: float = None) -> "ParamMeasure":
        """Unit weights, or weights summing to ``mass``."""
        n = len(points)
        w = np.ones(n) if mass is None else np.full(n, float(mass) / n)
        return cls(tuple(points), w)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())


Integrand = Callable[[float, np.ndarray, object], float]


def _mixed(ffun: Integrand, pm: ParamMeasure):
    def mixed(t, z):
        acc = 0.0
        for lam, m in zip(pm.points, pm.weights):
            acc = acc + m * ffun(t, z, lam)
        return acc

    return mixed


def fubini_tilde_check(ffun: Integrand, pm: ParamMeasure, js: JumpStream, ms: MarkSpace,
                       tg: TimeGrid | None = None, t: float | None = None) -> tuple[float, float]:
    """``(sum_lam m * int f_lam dpi~, int (sum_lam m f_lam) dpi~)`` on the same stream."""
    tg = js.grid if tg is None else tg
    t = tg.horizon if t is None else t
    lhs = 0.0
    for lam, m in zip(pm.points, pm.weights):
        lhs = lhs + m * compensated_jump_integral(lambda s, z, lam=lam: ffun(s, z, lam), js, ms, tg, t)
    rhs = compensated_jump_integral(_mixed(ffun, pm), js, ms, tg, t)
    return float(lhs), float(rhs)


def fubini_pi_check(gfun: Integrand, pm: ParamMeasure, js: JumpStream, ms: MarkSpace | None = None,
                    tg: TimeGrid | None = None, t: float | None = None) -> tuple[float, float]:
    """As :func:`fubini_tilde_check` with raw atom sums (no compensator)."""
    tg = js.grid if tg is None else tg
    t = tg.horizon if t is None else t
    lhs = 0.0
    for lam, m in zip(pm.points, pm.weights):
        lhs = lhs + m * raw_jump_integral(lambda s, z, lam=lam: gfun(s, z, lam), js, t)
    rhs = raw_jump_integral(_mixed(gfun, pm), js, t)
    return float(lhs), float(rhs)


def _moment_per_param(ffun: Integrand, pm: ParamMeasure, ms: MarkSpace, tg: TimeGrid, power: float) -> np.ndarray:
    """``int_0^T int_Z |f(., ., lam)|^power mu(dz) dt`` for every parameter, left-endpoint in time."""
    nodes, weights = ms.cubature()
    out = np.zeros(len(pm.points))
    for i, lam in enumerate(pm.points):
        acc = 0.0
        for t, dt in zip(tg.points[:-1], tg.steps):
            inner = 0.0
            for z, w in zip(nodes, weights):
                inner += w * abs(float(ffun(t, z, lam))) ** power
            acc += inner * dt
        out[i] = acc
    return out


def fubini_cond_value(ffun: Integrand, pm: ParamMeasure, ms: MarkSpace, tg: TimeGrid) -> float:
    """``sum_lam m(lam) (int int |f|^2 dmu dt)^(1/2)``."""
    return float(np.dot(pm.weights, np.sqrt(_moment_per_param(ffun, pm, ms, tg, 2.0))))


def protter_cond_value(ffun: Integrand, pm: ParamMeasure, ms: MarkSpace, tg: TimeGrid) -> float:
    """Square-integrated variant ``sum_lam m(lam) int int |f|^2 dmu dt``."""
    return float(np.dot(pm.weights, _moment_per_param(ffun, pm, ms, tg, 2.0)))


def pi_cond_value(gfun: Integrand, pm: ParamMeasure, ms: MarkSpace, tg: TimeGrid) -> float:
    """``sum_lam m(lam) int int |g| dmu dt``, the absolute-integrability condition for raw sums."""
    return float(np.dot(pm.weights, _moment_per_param(gfun, pm, ms, tg, 1.0)))
