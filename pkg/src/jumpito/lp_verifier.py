"""Term-by-term evaluation of the Ito formula for ``|u_t|^p_{L_p}``.

``eval_ito_lp`` integrates each integrand over space at every time step and
then sums in time.  ``pointwise_breakdown`` runs the R^M evaluator at every
cell and integrates the results over space afterwards; agreement of the two
is the deterministic-plus-stochastic Fubini interchange on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from ._paths import power_flow
from .calculus import norm_power
from .errors import ConfigurationError, DomainError
from .field import FieldPath, SpaceGrid, fd_derivative, gradient_norm_integral, lp_integral
from .mollifier import MollKernel, mollify_pathwise
from .semimartingale import TermBreakdown, power_terms

LP_TERM_NAMES = (
    "wiener_term",
    "drift_term",
    "qv_cross_term",
    "qv_trace_term",
    "compensated_jump_term",
    "remainder_jump_term",
)
SIMPLE_TERM_NAMES = ("wiener_term", "drift_term", "qv_term", "compensated_jump_term", "remainder_jump_term")


@dataclass(frozen=True)
class LpTermBreakdown(TermBreakdown):
    mode: str = "thm21"


def _kt(fp: FieldPath, t: float | None) -> tuple[float, int]:
    t = fp.grid.horizon if t is None else float(t)
    if not fp.grid.contains(t):
        raise DomainError(f"t={t!r} is not a grid point of the path")
    return t, fp.grid.index_of(t)


def _space_sum(a: np.ndarray, sg: SpaceGrid) -> np.ndarray:
    """Rectangle rule over the trailing ``d`` axes."""
    return np.sum(a, axis=tuple(range(a.ndim - sg.d, a.ndim))) * sg.cell_volume


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def eval_ito_lp(fp: FieldPath, p: float, t: float | None = None, mode: str | None = None) -> LpTermBreakdown:
    """Every term of the L_p Ito formula at grid time ``t``.

    ``thm21``: drift ``p|u|^(p-2) u.f`` with the path's full drift.
    ``thm22``: drift from ``f0`` only plus the integrated-by-parts term
    ``-p(p-1)|u|^(p-2) f^i D_i u``; needs ``M = 1`` and divergence samples.
    """
    p = float(p)
    if not p >= 2:
        raise DomainError(f"p must be >= 2, got {p!r}")
    mode = fp.mode if mode is None else mode
    M = fp.u.shape[-1]
    if mode == "thm22" and (M != 1 or fp.f_div is None):
        raise ConfigurationError("thm22 evaluation needs M = 1 and divergence-form drift samples")
    if mode not in ("thm21", "thm22"):
        raise ConfigurationError(f"unknown mode {mode!r}")
    t, kt = _kt(fp, t)
    sg, s = fp.space, fp.samples
    dt = fp.grid.steps[:kt]
    dw = fp.wiener.increments[:kt]
    u = fp.u[:kt]
    r = np.linalg.norm(u, axis=-1)
    a = norm_power(r, p - 2)
    g = s.diffusion[:kt]

    wiener_steps = np.zeros(kt)
    for rr in range(dw.shape[1]):
        wiener_steps = wiener_steps + _space_sum(p * a * _dot(u, g[..., rr]), sg) * dw[:, rr]
    f = s.drift[:kt] if mode == "thm21" else fp.f0[:kt]
    drift_steps = _space_sum(p * a * _dot(u, f), sg) * dt
    ug = np.einsum("k...i,k...ir->k...r", u, g)
    cross = (p - 2) * norm_power(r, p - 4) * np.sum(ug**2, axis=-1) if p != 2 else np.zeros_like(r)
    cross_steps = _space_sum(0.5 * p * cross, sg) * dt
    trace_steps = _space_sum(0.5 * p * a * np.sum(g**2, axis=(-2, -1)), sg) * dt

    sel = fp.jumps.grid_index <= kt
    pre = fp.atom_pre[sel]
    h = s.atom_h[sel]
    a_pre = norm_power(np.linalg.norm(pre, axis=-1), p - 2)
    lin = p * a_pre * _dot(pre, h)
    lin_atoms = _space_sum(lin, sg)
    flow = power_flow(p, u, s.compensator[:kt], dt)
    flow_steps = _space_sum(flow, sg)
    after = norm_power(np.linalg.norm(pre + h, axis=-1), p)
    before = norm_power(np.linalg.norm(pre, axis=-1), p)
    rem_atoms = _space_sum(after - before - lin, sg)

    terms = {
        "wiener_term": np.sum(wiener_steps),
        "drift_term": np.sum(drift_steps),
        "qv_cross_term": np.sum(cross_steps),
        "qv_trace_term": np.sum(trace_steps),
        "compensated_jump_term": np.sum(lin_atoms) - np.sum(flow_steps),
        "remainder_jump_term": np.sum(rem_atoms),
    }
    if mode == "thm22":
        by_parts = np.zeros(kt)
        for i in range(sg.d):
            du = fd_derivative(u, i, sg, check_margin=False)
            by_parts = by_parts + _space_sum(-p * (p - 1) * a * _dot(fp.f_div[i, :kt], du), sg) * dt
        terms["by_parts_term"] = np.sum(by_parts)
    lhs = lp_integral(fp.u[kt], p, sg)
    init = lp_integral(fp.psi, p, sg)
    out = LpTermBreakdown.assemble(t, lhs, init, terms)
    return replace(out, mode=mode)


def eval_ito1_simple(fp: FieldPath, p: float, t: float | None = None) -> LpTermBreakdown:
    """Scalar (M = 1) form with the two quadratic-variation terms merged into
    ``(p/2)(p-1)|u|^(p-2)|g|^2``.  Written with scalar arithmetic only."""
    p = float(p)
    if fp.u.shape[-1] != 1:
        raise ConfigurationError("the scalar form needs M = 1")
    t, kt = _kt(fp, t)
    sg, s = fp.space, fp.samples
    dt = fp.grid.steps[:kt]
    dw = fp.wiener.increments[:kt]
    u = fp.u[:kt, ..., 0]
    au = np.abs(u)
    pw = norm_power(au, p - 2)
    g = s.diffusion[:kt, ..., 0, :]
    wiener = 0.0
    for rr in range(dw.shape[1]):
        wiener = wiener + np.sum(_space_sum(p * pw * u * g[..., rr], sg) * dw[:, rr])
    drift = np.sum(_space_sum(p * pw * u * s.drift[:kt, ..., 0], sg) * dt)
    qv = np.sum(_space_sum(0.5 * p * (p - 1) * pw * np.sum(g**2, axis=-1), sg) * dt)
    sel = fp.jumps.grid_index <= kt
    pre = fp.atom_pre[sel][..., 0]
    h = s.atom_h[sel][..., 0]
    lin = p * norm_power(np.abs(pre), p - 2) * pre * h
    H = s.compensator[:kt, ..., 0]
    end = u - dt.reshape((-1,) + (1,) * (u.ndim - 1)) * H
    flow = np.abs(u) ** p - np.abs(end) ** p
    compensated = np.sum(_space_sum(lin, sg)) - np.sum(_space_sum(flow, sg))
    remainder = np.sum(_space_sum(np.abs(pre + h) ** p - np.abs(pre) ** p - lin, sg))
    terms = {
        "wiener_term": wiener,
        "drift_term": drift,
        "qv_term": qv,
        "compensated_jump_term": compensated,
        "remainder_jump_term": remainder,
    }
    lhs = np.sum(np.abs(fp.u[kt, ..., 0]) ** p) * sg.cell_volume
    init = np.sum(np.abs(fp.psi[..., 0]) ** p) * sg.cell_volume
    return replace(LpTermBreakdown.assemble(t, lhs, init, terms), mode="thm21")


def pointwise_breakdown(fp: FieldPath, p: float, t: float | None = None) -> TermBreakdown:
    """R^M Ito formula at every cell, each term integrated over space afterwards."""
    t, kt = _kt(fp, t)
    arrays = power_terms(float(p), fp.u, fp.psi, fp.samples, fp.atom_pre, fp.jumps.grid_index,
                         fp.grid, fp.wiener, kt)
    sg = fp.space
    lhs = _space_sum(arrays.pop("lhs"), sg)
    init = _space_sum(arrays.pop("initial"), sg)
    return TermBreakdown.assemble(t, lhs, init, {k: _space_sum(v, sg) for k, v in arrays.items()})


@dataclass(frozen=True)
class MollifiedConsistency:
    field_route: LpTermBreakdown
    pointwise_route: TermBreakdown

    @property
    def residual_eps(self) -> float:
        return self.field_route.residual

    @property
    def difference(self) -> float:
        return self.field_route.residual - self.pointwise_route.residual

    @property
    def relative_difference(self) -> float:
        return abs(self.difference) / (1.0 + abs(self.field_route.lhs))


def ito_lp_mollified_consistency(fp: FieldPath, kernel: MollKernel, p: float, t: float | None = None,
                                 check_margin: bool = True) -> MollifiedConsistency:
    """Evaluate the L_p formula on the mollified path by both integration orders."""
    mp = mollify_pathwise(fp, kernel, check_margin)
    return MollifiedConsistency(eval_ito_lp(mp, p, t, mode="thm21"), pointwise_breakdown(mp, p, t))


def by_parts_pair(u, f_div, p: float, sg: SpaceGrid) -> tuple[float, float]:
    """``(int |u|^(p-2) u D_i f^i, -(p-1) int |u|^(p-2) f^i D_i u)`` for scalar ``u`` of shape ``(*S, 1)``."""
    u = np.asarray(u, dtype=float)
    f_div = np.asarray(f_div, dtype=float)
    if u.shape[-1] != 1:
        raise ConfigurationError("integration by parts check needs M = 1")
    pw = norm_power(np.abs(u[..., 0]), p - 2)
    lhs = 0.0
    rhs = 0.0
    for i in range(sg.d):
        lhs = lhs + _space_sum(pw * u[..., 0] * fd_derivative(f_div[i], i, sg)[..., 0], sg)
        rhs = rhs - (p - 1) * _space_sum(pw * f_div[i][..., 0] * fd_derivative(u, i, sg)[..., 0], sg)
    return float(lhs), float(rhs)


def by_parts_check(fp: FieldPath, p: float, t: float | None = None) -> tuple[float, float]:
    """:func:`by_parts_pair` with ``u_t`` and the divergence drift of the step starting at ``t``."""
    if fp.f_div is None:
        raise ConfigurationError("path has no divergence-form drift")
    t, kt = _kt(fp, t)
    step = min(kt, fp.grid.n_steps - 1)
    return by_parts_pair(fp.u[kt], fp.f_div[:, step], p, fp.space)


APRIORI_COMPONENTS = ("psi_term", "f0_term", "h_lp_term", "g_f_du_term", "h_l2_term")


@dataclass(frozen=True)
class AprioriReport:
    lhs: float
    components: dict
    ratio: float
    n_paths: int


def apriori_terms(fp: FieldPath, p: float) -> dict:
    """Per-path integrands of the a priori estimate (before expectations and T-weights)."""
    sg, s = fp.space, fp.samples
    dt = fp.grid.steps
    sup = max(float(np.max(lp_integral(fp.u, p, sg))), float(np.max(lp_integral(fp.u_minus, p, sg))))
    if len(fp.jumps):
        sup = max(sup, float(np.max(lp_integral(fp.atom_pre, p, sg))))
    f0 = np.sum(lp_integral(fp.f0, p, sg) * dt)
    g = np.sum(lp_integral(s.diffusion, p, sg, value_axes=2) * dt)
    fdiv = 0.0
    if fp.f_div is not None:
        fdiv = np.sum(np.sum(lp_integral(fp.f_div, p, sg), axis=0) * dt)
    du = np.sum(gradient_norm_integral(fp.u[:-1], p, sg) * dt) if fp.u.shape[-1] == 1 else 0.0
    h_lp = np.zeros(dt.shape)
    h_sq = np.zeros(s.drift.shape[:-1])
    for q, w in enumerate(s.weights):
        mag2 = np.sum(s.h_nodes[:, q] ** 2, axis=-1)
        h_lp = h_lp + w * _space_sum(mag2 ** (p / 2), sg)
        h_sq = h_sq + w * mag2
    h_l2 = _space_sum(h_sq ** (p / 2), sg)
    return {
        "sup": sup,
        "psi": float(lp_integral(fp.psi, p, sg)),
        "f0": float(f0),
        "h_lp": float(np.sum(h_lp * dt)),
        "g_f_du": float(g + fdiv + du),
        "h_l2": float(np.sum(h_l2 * dt)),
    }


def apriori_summary(per_path: list, horizon: float, p: float) -> AprioriReport:
    """Combine per-path :func:`apriori_terms` into the weighted components and the ratio.

    ``ratio = max(E sup|u|^p - 2E|psi|^p, 0) / (weighted remainder)``, with
    0/0 := 0; it bounds the unknown constant N(d, p) from below.
    """
    if not per_path:
        raise ConfigurationError("need at least one path")
    mean = {k: float(np.mean([row[k] for row in per_path])) for k in per_path[0]}
    T = float(horizon)
    comps = {
        "psi_term": 2.0 * mean["psi"],
        "f0_term": T ** (p - 1) * mean["f0"],
        "h_lp_term": mean["h_lp"],
        "g_f_du_term": T ** ((p - 2) / 2) * mean["g_f_du"],
        "h_l2_term": T ** ((p - 2) / 2) * mean["h_l2"],
    }
    excess = max(mean["sup"] - comps["psi_term"], 0.0)
    denom = comps["f0_term"] + comps["h_lp_term"] + comps["g_f_du_term"] + comps["h_l2_term"]
    if excess == 0.0:
        ratio = 0.0
    elif denom == 0.0:
        ratio = float("inf")
    else:
        ratio = excess / denom
    return AprioriReport(mean["sup"], comps, ratio, len(per_path))


def apriori_estimate_report(simulate: Callable[[int], FieldPath], n_paths: int, p: float) -> AprioriReport:
    """Monte-Carlo estimate of both sides of the a priori bound over paths ``0..n_paths-1``."""
    paths = (simulate(i) for i in range(n_paths))
    per_path, horizon = [], None
    for fp in paths:
        horizon = fp.grid.horizon
        per_path.append(apriori_terms(fp, p))
    return apriori_summary(per_path, horizon, p)
