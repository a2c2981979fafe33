"""INI experiment configuration.

Sections and keys (all optional except ``experiment.kind``)::

    [experiment]  kind, p, M, T, n_steps, n_wiener, x0, paths, seed, workers
    [space]       d, half_width, n_cells
    [marks]       spec = finite size=3 mass=2.0 | box lo=0 hi=1 mass=1 resolution=8
    [drivers]     f, g, h, hbar (R^M); f0, f_div, g, h, psi (fields); one catalog spec each,
                  f_div takes one spec per space axis separated by ';'
    [study]       truncation, eps, lambdas, times
    [tolerances]  residual, contraction, consistency, fubini, ratio_max
"""

from __future__ import annotations

import configparser
import io
import math
import shlex
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..drivers import MarkSpace
from ..errors import ConfigurationError
from .catalog import DriverSpec

KINDS = ("fd_ito", "lp_ito_thm21", "lp_ito_thm22", "mollifier_study", "fubini", "apriori_sweep")
FD_ROLES = ("f", "g", "h", "hbar")
FIELD_ROLES = ("f0", "g", "h", "psi")
DEFAULT_TOLERANCES = {
    "residual": 1e-10,
    "contraction": 1e-12,
    "consistency": 1e-8,
    "fubini": 1e-12,
    "ratio_max": math.inf,
}


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    p: float = 2.0
    M: int = 1
    d: int = 1
    T: float = 1.0
    n_steps: int = 64
    half_width: float = 1.0
    n_cells: int = 64
    n_wiener: int = 0
    marks: str = "finite size=1 mass=0"
    truncation: tuple = ()
    eps: tuple = (8.0, 4.0, 2.0)
    lambdas: int = 5
    times: tuple = ()
    drivers: dict = field(default_factory=dict)
    f_div: tuple = ()
    x0: tuple = ()
    paths: int = 10
    seed: int = 0
    workers: int = 1
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    name: str = "experiment"

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigurationError(f"kind: unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if not self.p >= 2:
            raise ConfigurationError(f"p: must satisfy p >= 2, got {self.p!r}")
        if self.M < 1:
            raise ConfigurationError(f"M: must be >= 1, got {self.M}")
        if self.kind == "lp_ito_thm22" and self.M != 1:
            raise ConfigurationError(f"M: lp_ito_thm22 requires M = 1, got {self.M}")
        if self.d < 1 or self.n_cells < 3 or not self.half_width > 0:
            raise ConfigurationError("space: need d >= 1, n_cells >= 3 and half_width > 0")
        if not self.T > 0 or self.n_steps < 1:
            raise ConfigurationError("T/n_steps: need T > 0 and n_steps >= 1")
        if self.n_wiener < 0:
            raise ConfigurationError(f"n_wiener: must be >= 0, got {self.n_wiener}")
        if self.paths < 1:
            raise ConfigurationError(f"paths: must be >= 1, got {self.paths}")
        if self.workers < 1:
            raise ConfigurationError(f"workers: must be >= 1, got {self.workers}")
        for key, tol in self.tolerances.items():
            if not tol > 0:
                raise ConfigurationError(f"tolerances.{key}: must be positive, got {tol!r}")
        if any(not e > 0 for e in self.eps):
            raise ConfigurationError("study.eps: multiples of the spacing must be positive")
        if self.lambdas < 1:
            raise ConfigurationError("study.lambdas: must be >= 1")
        if any(not 0 <= t <= self.T for t in self.times):
            raise ConfigurationError("study.times: report times must lie in [0, T]")
        roles = FD_ROLES if self.kind in ("fd_ito", "fubini") else FIELD_ROLES
        for role in self.drivers:
            if role not in roles:
                raise ConfigurationError(f"drivers.{role}: not a driver role of kind {self.kind}")
        if self.f_div and self.kind != "lp_ito_thm22" and not (self.kind == "apriori_sweep" and self.M == 1):
            raise ConfigurationError("drivers.f_div: divergence-form drift needs lp_ito_thm22 (or apriori_sweep with M = 1)")
        if self.f_div and len(self.f_div) != self.d:
            raise ConfigurationError(f"drivers.f_div: need {self.d} specs (one per space axis), got {len(self.f_div)}")
        if self.x0 and len(self.x0) != self.M:
            raise ConfigurationError(f"x0: need {self.M} values, got {len(self.x0)}")
        self.mark_space()
        return self

    @property
    def is_field(self) -> bool:
        return self.kind not in ("fd_ito", "fubini")

    def driver(self, role: str) -> DriverSpec:
        return self.drivers.get(role, DriverSpec("zero"))

    def mark_space(self) -> MarkSpace:
        tokens = shlex.split(self.marks)
        if not tokens:
            raise ConfigurationError("marks.spec: empty")
        kind, kv = tokens[0], {}
        for tok in tokens[1:]:
            key, sep, raw = tok.partition("=")
            if not sep:
                raise ConfigurationError(f"marks.spec: expected key=value, got {tok!r}")
            kv[key] = raw
        try:
            mass = float(kv.pop("mass", 1.0))
            if kind == "finite":
                out = MarkSpace.finite_set(int(kv.pop("size", 1)), mass)
            elif kind == "box":
                lo = _floats(kv.pop("lo", "0"))
                hi = _floats(kv.pop("hi", "1"))
                out = MarkSpace.box(list(zip(lo, hi)), mass, int(kv.pop("resolution", 8)))
            else:
                raise ConfigurationError(f"marks.spec: unknown mark space kind {kind!r}")
        except ValueError as exc:
            raise ConfigurationError(f"marks.spec: {exc}") from exc
        if kv:
            raise ConfigurationError(f"marks.spec: unknown keys {sorted(kv)}")
        return out

    def to_ini(self) -> str:
        """Serialize back to the INI format (round-trips through :func:`parse_config`)."""
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["experiment"] = {
            "name": self.name, "kind": self.kind, "p": repr(self.p), "M": str(self.M), "T": repr(self.T),
            "n_steps": str(self.n_steps), "n_wiener": str(self.n_wiener), "paths": str(self.paths),
            "seed": str(self.seed), "workers": str(self.workers),
        }
        if self.x0:
            cp["experiment"]["x0"] = " ".join(repr(v) for v in self.x0)
        cp["space"] = {"d": str(self.d), "half_width": repr(self.half_width), "n_cells": str(self.n_cells)}
        cp["marks"] = {"spec": self.marks}
        drivers = {role: spec.format() for role, spec in self.drivers.items()}
        if self.f_div:
            drivers["f_div"] = "; ".join(s.format() for s in self.f_div)
        cp["drivers"] = drivers
        cp["study"] = {
            "truncation": " ".join(repr(v) for v in self.truncation),
            "eps": " ".join(repr(v) for v in self.eps),
            "lambdas": str(self.lambdas),
            "times": " ".join(repr(v) for v in self.times),
        }
        cp["tolerances"] = {k: repr(v) for k, v in self.tolerances.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


_SECTIONS = {"experiment", "space", "marks", "drivers", "study", "tolerances"}


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse INI text; ``overrides`` (e.g. ``seed``, ``paths``) win over file values."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"config syntax: {exc}") from exc
    unknown = set(cp.sections()) - _SECTIONS
    if unknown:
        raise ConfigurationError(f"unknown config sections {sorted(unknown)}")
    if not cp.has_option("experiment", "kind"):
        raise ConfigurationError("kind: [experiment] must define kind")
    ex = cp["experiment"]
    kw: dict = {}

    def take(section, key, conv, target=None):
        if cp.has_option(section, key):
            raw = cp[section][key]
            try:
                kw[target or key] = conv(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigurationError(f"{key}: cannot parse {raw!r}") from exc

    kw["kind"] = ex["kind"].strip()
    for key, conv in (("name", str), ("p", float), ("M", int), ("T", float), ("n_steps", int),
                      ("n_wiener", int), ("paths", int), ("seed", int), ("workers", int), ("x0", _floats)):
        take("experiment", key, conv)
    for key, conv in (("d", int), ("half_width", float), ("n_cells", int)):
        take("space", key, conv)
    take("marks", "spec", str, "marks")
    for key, conv in (("truncation", _floats), ("eps", _floats), ("lambdas", int), ("times", _floats)):
        take("study", key, conv)
    allowed_ex = {"name", "kind", "p", "M", "T", "n_steps", "n_wiener", "paths", "seed", "workers", "x0"}
    for section, allowed in (("experiment", allowed_ex), ("space", {"d", "half_width", "n_cells"}),
                             ("marks", {"spec"}), ("study", {"truncation", "eps", "lambdas", "times"})):
        if cp.has_section(section):
            extra = set(cp[section]) - allowed
            if extra:
                raise ConfigurationError(f"{section}.{sorted(extra)[0]}: unknown key")
    if cp.has_section("drivers"):
        drivers = {}
        for role, text_spec in cp["drivers"].items():
            try:
                if role == "f_div":
                    kw["f_div"] = tuple(DriverSpec.parse(s) for s in text_spec.split(";") if s.strip())
                else:
                    drivers[role] = DriverSpec.parse(text_spec)
            except ConfigurationError as exc:
                raise ConfigurationError(f"drivers.{role}: {exc}") from exc
        kw["drivers"] = drivers
    if cp.has_section("tolerances"):
        tol = dict(DEFAULT_TOLERANCES)
        for key, raw in cp["tolerances"].items():
            if key not in DEFAULT_TOLERANCES:
                raise ConfigurationError(f"tolerances.{key}: unknown tolerance")
            try:
                tol[key] = float(raw)
            except ValueError as exc:
                raise ConfigurationError(f"tolerances.{key}: cannot parse {raw!r}") from exc
        kw["tolerances"] = tol
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**kw).validate()


def load_config(path, **overrides) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {str(path)!r}: {exc.strerror}") from exc
    cfg = parse_config(text, **overrides)
    if cfg.name == "experiment":
        cfg = replace(cfg, name=path.stem)
    return cfg
