"""Built-in driver profiles, addressed by text specs like ``bump c=0.5 width=0.4``.

A profile is a scalar function of time (and of space for field drivers)
multiplied by a mark window and laid out on the requested components.
"""

from __future__ import annotations

import math
import shlex
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import ConfigurationError


@dataclass(frozen=True)
class Param:
    kind: type
    default: object
    doc: str


COMMON = {
    "c": Param(float, 1.0, "amplitude"),
    "comp": Param(int, -1, "component index that carries the value (-1: all)"),
    "rw": Param(int, -1, "Wiener column that carries the value (-1: all; g only)"),
    "marks": Param(str, "all", "finite marks where a jump coefficient is active, '|' separated"),
    "zlo": Param(float, -math.inf, "lower end of the active window on the first mark coordinate"),
    "zhi": Param(float, math.inf, "upper end (exclusive) of the active mark window"),
    "zpow": Param(int, 0, "multiply by z[0]**zpow"),
    "width": Param(float, 0.5, "half-width of the spatial envelope of field drivers"),
}


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    doc: str
    params: dict
    random: bool = False

    def schema(self) -> dict:
        full = {**self.params, **COMMON}
        return {k: (v.kind.__name__, v.default, v.doc) for k, v in full.items()}


CATALOG = {
    e.name: e
    for e in (
        CatalogEntry("zero", "identically zero", {}),
        CatalogEntry("constant", "c", {}),
        CatalogEntry(
            "bump",
            "c * k((s - center) / scale) with s = |x| for fields and s = t otherwise; k(0) = 1",
            {"center": Param(float, 0.0, "bump centre"), "scale": Param(float, 0.5, "bump radius")},
        ),
        CatalogEntry("ramp", "c * (t - t0)", {"t0": Param(float, 0.0, "zero crossing")}),
        CatalogEntry(
            "sinusoid",
            "c * sin(2 pi freq t + phase)",
            {"freq": Param(float, 1.0, "frequency"), "phase": Param(float, 0.0, "phase")},
        ),
        CatalogEntry(
            "randomized",
            "c * a * (1 + b sin(2 pi t) + e z[0]) with a, b, e ~ U(-1, 1) drawn per path and entry",
            {},
            random=True,
        ),
    )
}


@dataclass(frozen=True)
class DriverSpec:
    name: str
    params: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str) -> "DriverSpec":
        tokens = shlex.split(text)
        if not tokens:
            raise ConfigurationError("empty driver spec")
        name = tokens[0]
        entry = CATALOG.get(name)
        if entry is None:
            raise ConfigurationError(f"unknown driver id {name!r}; known: {', '.join(sorted(CATALOG))}")
        allowed = {**entry.params, **COMMON}
        params = {}
        for tok in tokens[1:]:
            key, sep, raw = tok.partition("=")
            if not sep:
                raise ConfigurationError(f"driver {name!r}: expected key=value, got {tok!r}")
            if key not in allowed:
                raise ConfigurationError(f"driver {name!r}: unknown parameter {key!r}")
            try:
                params[key] = allowed[key].kind(raw)
            except ValueError as exc:
                raise ConfigurationError(f"driver {name!r}: bad value for {key!r}: {raw!r}") from exc
        return cls(name, params)

    def format(self) -> str:
        return " ".join([self.name] + [f"{k}={v}" for k, v in sorted(self.params.items())])

    def get(self, key):
        if key in self.params:
            return self.params[key]
        return {**CATALOG[self.name].params, **COMMON}[key].default

    @property
    def random(self) -> bool:
        return CATALOG[self.name].random


def catalog_listing() -> list[str]:
    """One block of text per entry with its parameter schema."""
    out = []
    for name, entry in CATALOG.items():
        lines = [f"{name}: {entry.doc}"]
        for key, (kind, default, doc) in entry.schema().items():
            lines.append(f"    {key} ({kind}, default {default}): {doc}")
        out.append("\n".join(lines))
    return out


def _unit_bump(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def _profile(spec: DriverSpec, coeffs) -> Callable:
    """``prof(t, s, z0) -> array``: time/space profile including the random coefficients."""
    c = spec.get("c")
    name = spec.name
    if name == "zero":
        return lambda t, s, z0: 0.0 * s
    if name == "constant":
        return lambda t, s, z0: c + 0.0 * s
    if name == "bump":
        center, scale = spec.get("center"), spec.get("scale")
        return lambda t, s, z0: c * _unit_bump((s - center) / scale)
    if name == "ramp":
        t0 = spec.get("t0")
        return lambda t, s, z0: c * (t - t0) + 0.0 * s
    if name == "sinusoid":
        freq, phase = spec.get("freq"), spec.get("phase")
        return lambda t, s, z0: c * math.sin(2 * math.pi * freq * t + phase) + 0.0 * s
    a, b, e = coeffs
    return lambda t, s, z0: c * a * (1 + b * math.sin(2 * math.pi * t) + e * z0) + 0.0 * s


def _mark_factor(spec: DriverSpec, z) -> float:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    marks = spec.get("marks")
    if marks != "all":
        active = {float(m) for m in marks.split("|") if m}
        if float(z[0]) not in active:
            return 0.0
    if not spec.get("zlo") <= z[0] < spec.get("zhi"):
        return 0.0
    return float(z[0]) ** spec.get("zpow")


def _layout(spec: DriverSpec, shape: tuple, rng) -> tuple[np.ndarray, list]:
    """Component mask of ``shape`` and one coefficient triple per entry."""
    mask = np.zeros(shape)
    comp, rw = spec.get("comp"), spec.get("rw")
    if comp >= shape[0]:
        raise ConfigurationError(f"driver {spec.name!r}: comp={comp} exceeds M={shape[0]}")
    if len(shape) == 2 and rw >= shape[1]:
        raise ConfigurationError(f"driver {spec.name!r}: rw={rw} exceeds the Wiener count {shape[1]}")
    rows = slice(None) if comp < 0 else slice(comp, comp + 1)
    if len(shape) == 2:
        cols = slice(None) if rw < 0 else slice(rw, rw + 1)
        mask[rows, cols] = 1.0
    else:
        mask[rows] = 1.0
    coeffs = []
    for _ in range(mask.size):
        if spec.random:
            if rng is None:
                raise ConfigurationError(f"driver {spec.name!r} needs a coefficient generator")
            coeffs.append(tuple(rng.uniform(-1.0, 1.0, size=3)))
        else:
            coeffs.append(None)
    return mask, coeffs


def fd_component(spec: DriverSpec, role: str, M: int, R: int = 0, rng=None) -> Callable | None:
    """Closure for an R^M driver: ``f(t)``, ``g(t)``, ``h(t, z)`` or ``hbar(t, z)``."""
    if spec.name == "zero":
        return None
    shape = (M, R) if role == "g" else (M,)
    mask, coeffs = _layout(spec, shape, rng)
    profs = [_profile(spec, cf) for cf in coeffs]

    def values(t, z0):
        flat = np.array([pr(t, 0.0 if spec.name != "bump" else t, z0) for pr in profs], dtype=float)
        return flat.reshape(shape) * mask

    if role in ("f", "g"):
        return lambda t: values(t, 0.0)
    if role in ("h", "hbar"):
        def jump(t, z):
            factor = _mark_factor(spec, z)
            if factor == 0.0:
                return np.zeros(shape)
            return factor * values(t, float(np.atleast_1d(z)[0]))
        return jump
    raise ConfigurationError(f"unknown R^M driver role {role!r}")


def field_component(spec: DriverSpec, role: str, M: int, R: int = 0, rng=None) -> Callable | None:
    """Closure for a field driver evaluated on ``x`` of shape ``(P, d)``.

    Roles: ``f0``/``f_div`` ``(t, x)``, ``g`` ``(t, x)``, ``h`` ``(t, x, z)``, ``psi`` ``(x)``.
    Every value is multiplied by a smooth envelope of half-width ``width`` around 0.
    """
    if spec.name == "zero":
        return None
    shape = (M, R) if role == "g" else (M,)
    mask, coeffs = _layout(spec, shape, rng)
    profs = [_profile(spec, cf) for cf in coeffs]
    width = spec.get("width")
    memo = {}

    def radial(x):
        # grids pass the same read-only points array every step
        if memo.get("x") is not x or not isinstance(x, np.ndarray) or x.flags.writeable:
            s = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
            memo.update(x=x, s=s, env=_unit_bump(s / width))
        return memo["s"], memo["env"]

    def values(t, x, z0):
        s, env = radial(x)
        out = np.empty((len(s), len(profs)))
        for k, pr in enumerate(profs):
            out[:, k] = pr(t, s, z0) * env
        return out.reshape((len(s),) + shape) * mask

    if role in ("f0", "f_div", "g"):
        return lambda t, x: values(t, x, 0.0)
    if role == "psi":
        return lambda x: values(0.0, x, 0.0)
    if role == "h":
        def jump(t, x, z):
            factor = _mark_factor(spec, z)
            if factor == 0.0:
                return np.zeros((len(x),) + shape)
            return factor * values(t, x, float(np.atleast_1d(z)[0]))
        return jump
    raise ConfigurationError(f"unknown field driver role {role!r}")
