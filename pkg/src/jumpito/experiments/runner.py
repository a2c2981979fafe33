"""Seeded experiment sweeps with CSV and JSON reports.

Every path is simulated from its own generator stream, so the output does
not depend on the worker count; results are reduced in path order.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..drivers import COEFFICIENT_STREAM, path_rng, sample_jump_stream
from ..field import FieldDrivers, FieldSetup, SpaceGrid, lp_norm
from ..fubini import ParamMeasure, fubini_cond_value, fubini_pi_check, fubini_tilde_check, pi_cond_value, protter_cond_value
from ..lp_verifier import apriori_summary, apriori_terms, eval_ito_lp, ito_lp_mollified_consistency
from ..mollifier import MollKernel, mollify
from ..semimartingale import DriverFD, FDSetup, clipping_study, eval_ito_fd
from ..drivers import TimeGrid
from .catalog import field_component, fd_component
from .config import FD_ROLES, ExperimentConfig

SCHEMA_VERSION = 1
CSV_HEADER = ("experiment", "path", "t", "term", "value")
QUANTILES = (0.0, 0.5, 0.9, 1.0)


@dataclass
class Assertion:
    name: str
    passed: bool
    detail: str


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    summary: dict
    assertions: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def failures(self) -> list:
        return [a for a in self.assertions if not a.passed]


def _needs_rng(specs) -> bool:
    return any(s.random for s in specs)


def fd_drivers(cfg: ExperimentConfig):
    """A DriverFD, or a factory ``rng -> DriverFD`` when any spec is randomized."""

    def build(rng):
        parts = {role: fd_component(cfg.driver(role), role, cfg.M, cfg.n_wiener, rng) for role in FD_ROLES}
        return DriverFD(cfg.M, cfg.n_wiener, **parts)

    return build if _needs_rng(cfg.drivers.values()) else build(None)


def field_drivers(cfg: ExperimentConfig):
    """A FieldDrivers, or a factory ``rng -> FieldDrivers`` when any spec is randomized."""

    def build(rng):
        f0 = field_component(cfg.driver("f0"), "f0", cfg.M, cfg.n_wiener, rng)
        g = field_component(cfg.driver("g"), "g", cfg.M, cfg.n_wiener, rng)
        h = field_component(cfg.driver("h"), "h", cfg.M, cfg.n_wiener, rng)
        psi = field_component(cfg.driver("psi"), "psi", cfg.M, cfg.n_wiener, rng)
        f_div = [field_component(s, "f_div", cfg.M, cfg.n_wiener, rng) for s in cfg.f_div]
        f_div = [fn if fn is not None else (lambda t, x: np.zeros((len(x), cfg.M))) for fn in f_div]
        return FieldDrivers(cfg.M, cfg.n_wiener, f0=f0, f_div=f_div or None, g=g, h=h, psi=psi)

    specs = list(cfg.drivers.values()) + list(cfg.f_div)
    return build if _needs_rng(specs) else build(None)


def fd_setup(cfg: ExperimentConfig) -> FDSetup:
    x0 = np.asarray(cfg.x0 if cfg.x0 else np.zeros(cfg.M), dtype=float)
    return FDSetup(fd_drivers(cfg), x0, cfg.mark_space(), cfg.T, cfg.n_steps, cfg.seed)


def field_setup(cfg: ExperimentConfig) -> FieldSetup:
    mode = "thm22" if cfg.f_div else "thm21"
    sg = SpaceGrid(cfg.d, cfg.half_width, cfg.n_cells)
    return FieldSetup(field_drivers(cfg), sg, cfg.mark_space(), cfg.T, cfg.n_steps, cfg.seed, mode)


def _times(cfg: ExperimentConfig) -> tuple:
    return cfg.times if cfg.times else (cfg.T,)


def fubini_integrand(rng):
    """Randomized non-separable ``f(t, z, lam)`` with coefficients from ``rng``."""
    a = rng.uniform(-1.0, 1.0, size=4)

    def f(t, z, lam):
        z0 = float(np.atleast_1d(z)[0])
        return (a[0] * math.sin(lam * t + a[1] * z0) + a[2] * math.cos(lam * lam * z0 - t)
                + a[3] * lam * t * (1.0 + z0))

    return f


def _path_fd_ito(cfg, i):
    setup = fd_setup(cfg)
    path = setup.simulate(i)
    rows, resid = [], []
    for t in _times(cfg):
        tb = eval_ito_fd(path, cfg.p, t)
        rows += [(t, name, value) for name, value in tb.rows()]
        resid.append(abs(tb.residual) / (1.0 + abs(tb.lhs)))
    if cfg.truncation:
        clipped = clipping_study(setup, i, cfg.truncation, cfg.p)
        rows += [(cfg.T, f"clipped_residual[{lvl!r}]", v) for lvl, v in zip(cfg.truncation, clipped)]
    return rows, {"rel_residual": max(resid)}


def _path_lp_ito(cfg, i):
    fp = field_setup(cfg).simulate(i)
    rows, resid = [], []
    for t in _times(cfg):
        tb = eval_ito_lp(fp, cfg.p, t)
        rows += [(t, name, value) for name, value in tb.rows()]
        resid.append(abs(tb.residual) / (1.0 + abs(tb.lhs)))
    return rows, {"rel_residual": max(resid)}


def _path_mollifier(cfg, i):
    fp = field_setup(cfg).simulate(i)
    sg = fp.space
    u = fp.u[-1]
    base = float(lp_norm(u, cfg.p, sg))
    rows = [(cfg.T, "norm_u", base)]
    excess, consistency, dists = [], [], []
    for m in cfg.eps:
        kernel = MollKernel(m * sg.spacing, sg)
        um = mollify(u, kernel)
        nm = float(lp_norm(um, cfg.p, sg))
        dist = float(lp_norm(um - u, cfg.p, sg))
        cons = ito_lp_mollified_consistency(fp, kernel, cfg.p)
        rows += [(cfg.T, f"norm_moll[{m!r}]", nm), (cfg.T, f"dist_moll[{m!r}]", dist),
                 (cfg.T, f"consistency[{m!r}]", cons.relative_difference)]
        excess.append(nm - base)
        consistency.append(cons.relative_difference)
        dists.append(dist)
    return rows, {"contraction_excess": max(excess), "consistency": max(consistency),
                  "dist_monotone": float(all(a >= b for a, b in zip(dists, dists[1:])))}


def _path_fubini(cfg, i):
    ms = cfg.mark_space()
    tg = TimeGrid.uniform(cfg.T, cfg.n_steps)
    js = sample_jump_stream(ms, tg, path_rng(cfg.seed, i))
    crng = path_rng(cfg.seed, i, COEFFICIENT_STREAM)
    ffun = fubini_integrand(crng)
    pm = ParamMeasure(tuple(float(k + 1) for k in range(cfg.lambdas)), crng.uniform(0.0, 1.0, cfg.lambdas))
    lt, rt = fubini_tilde_check(ffun, pm, js, ms)
    lp_, rp = fubini_pi_check(ffun, pm, js, ms)
    rows = [(cfg.T, "lhs_tilde", lt), (cfg.T, "rhs_tilde", rt), (cfg.T, "lhs_pi", lp_), (cfg.T, "rhs_pi", rp),
            (cfg.T, "cond_tilde", fubini_cond_value(ffun, pm, ms, js.grid)),
            (cfg.T, "cond_protter", protter_cond_value(ffun, pm, ms, js.grid)),
            (cfg.T, "cond_pi", pi_cond_value(ffun, pm, ms, js.grid))]
    gap = max(abs(lt - rt) / (1.0 + abs(lt)), abs(lp_ - rp) / (1.0 + abs(lp_)))
    return rows, {"fubini_gap": gap}


def _path_apriori(cfg, i):
    fp = field_setup(cfg).simulate(i)
    terms = apriori_terms(fp, cfg.p)
    return [(cfg.T, k, v) for k, v in terms.items()], {"terms": terms}


_PATH_FUNCS = {
    "fd_ito": _path_fd_ito,
    "lp_ito_thm21": _path_lp_ito,
    "lp_ito_thm22": _path_lp_ito,
    "mollifier_study": _path_mollifier,
    "fubini": _path_fubini,
    "apriori_sweep": _path_apriori,
}


def _run_path(args):
    cfg, i = args
    return _PATH_FUNCS[cfg.kind](cfg, i)


def _term_stats(rows) -> dict:
    by_term: dict = {}
    for _, _, t, term, value in rows:
        by_term.setdefault((t, term), []).append(value)
    out = {}
    for (t, term), values in by_term.items():
        arr = np.asarray(values, dtype=float)
        se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else float("nan")
        out[f"{term}@{t!r}"] = {"mean": float(arr.mean()), "std_err": se}
    return out


def _quantiles(values) -> dict:
    arr = np.asarray(values, dtype=float)
    return {f"q{int(q * 100)}": float(np.quantile(arr, q)) for q in QUANTILES}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Simulate ``cfg.paths`` paths and check the configured invariants."""
    cfg.validate()
    jobs = [(cfg, i) for i in range(cfg.paths)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_path, jobs))
    else:
        results = [_run_path(job) for job in jobs]
    rows = [(cfg.name, i, t, term, float(v)) for i, (prow, _) in enumerate(results) for t, term, v in prow]
    stats = [s for _, s in results]
    tol = cfg.tolerances
    summary = {"experiment": cfg.name, "kind": cfg.kind, "seed": cfg.seed, "paths": cfg.paths, "p": cfg.p,
               "terms": _term_stats(rows)}
    asserts = []
    if cfg.kind in ("fd_ito", "lp_ito_thm21", "lp_ito_thm22"):
        rel = [s["rel_residual"] for s in stats]
        summary["residual_quantiles"] = _quantiles(rel)
        asserts.append(Assertion("residual", max(rel) <= tol["residual"],
                                 f"max |residual|/(1+|lhs|) = {max(rel)!r}, tolerance {tol['residual']!r}"))
    elif cfg.kind == "mollifier_study":
        exc = max(s["contraction_excess"] for s in stats)
        cons = max(s["consistency"] for s in stats)
        summary["contraction_excess_max"] = exc
        summary["consistency_quantiles"] = _quantiles([s["consistency"] for s in stats])
        summary["dist_monotone_fraction"] = float(np.mean([s["dist_monotone"] for s in stats]))
        asserts.append(Assertion("contraction", exc <= tol["contraction"],
                                 f"max(|u_eps|_p - |u|_p) = {exc!r}, slack {tol['contraction']!r}"))
        asserts.append(Assertion("consistency", cons <= tol["consistency"],
                                 f"max route difference = {cons!r}, tolerance {tol['consistency']!r}"))
    elif cfg.kind == "fubini":
        gaps = [s["fubini_gap"] for s in stats]
        summary["gap_quantiles"] = _quantiles(gaps)
        summary["conditions"] = {k: v for k, v in summary["terms"].items() if k.startswith("cond_")}
        asserts.append(Assertion("fubini", max(gaps) <= tol["fubini"],
                                 f"max |lhs-rhs|/(1+|lhs|) = {max(gaps)!r}, tolerance {tol['fubini']!r}"))
    else:
        rep = apriori_summary([s["terms"] for s in stats], cfg.T, cfg.p)
        summary["apriori"] = {"lhs": rep.lhs, "components": rep.components, "ratio": rep.ratio}
        ok = math.isfinite(rep.ratio) and rep.ratio <= tol["ratio_max"]
        asserts.append(Assertion("apriori_ratio", ok, f"ratio = {rep.ratio!r}, bound {tol['ratio_max']!r}"))
    summary["assertions"] = {a.name: {"passed": a.passed, "detail": a.detail} for a in asserts}
    summary["passed"] = all(a.passed for a in asserts)
    return ExperimentResult(cfg, rows, summary, asserts)


def write_reports(result: ExperimentResult, out_dir) -> tuple[Path, Path]:
    """``<name>.csv`` (with a leading ``schema=N`` line) and ``<name>.summary.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{result.config.name}.csv"
    json_path = out_dir / f"{result.config.name}.summary.json"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"schema={SCHEMA_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for name, i, t, term, value in result.rows:
            writer.writerow([name, i, repr(float(t)), term, repr(float(value))])
    json_path.write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, json_path
