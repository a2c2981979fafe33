"""R^M jump-diffusion semimartingales and term-by-term Ito formula evaluation.

The path solves

    X_t = X_0 + int f ds + int g^r dw^r + int int hbar dpi + int int h dpi~

on a jump-augmented grid.  ``eval_ito_fd`` evaluates ``phi(X_t)`` and every
right-hand term of the Ito formula for a C^2 jet ``phi``, or for ``|x|^p``
through a separate closed-form evaluator.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ._paths import DriverSamples, integrate, power_flow, segment_integral
from .calculus import Jet, PNormJet, j_operator, norm_power, p_norm_value
from .drivers import (
    COEFFICIENT_STREAM,
    JumpStream,
    MarkSpace,
    TimeGrid,
    WienerBundle,
    path_rng,
    sample_jump_stream,
    sample_wiener,
)
from .errors import ConfigurationError, DomainError, PreconditionError

TERM_NAMES = (
    "wiener_integral",
    "drift_term",
    "diffusion_qv_term",
    "raw_jump_term",
    "compensated_jump_term",
    "remainder_jump_term",
)


@dataclass(frozen=True, eq=False)
class DriverFD:
    """Driver closures of an R^M semimartingale.

    f(t) -> (M,), g(t) -> (M, n_wiener), h(t, z) -> (M,), hbar(t, z) -> (M,)
    where ``z`` is one mark.  Missing closures mean zero.
    """

    M: int
    n_wiener: int = 0
    f: Callable | None = None
    g: Callable | None = None
    h: Callable | None = None
    hbar: Callable | None = None

    def __post_init__(self):
        if int(self.M) < 1 or int(self.n_wiener) < 0:
            raise ConfigurationError("M must be >= 1 and n_wiener >= 0")

    def _vec(self, fn, *args) -> np.ndarray:
        if fn is None:
            return np.zeros(self.M)
        out = np.asarray(fn(*args), dtype=float)
        if out.shape != (self.M,):
            raise ConfigurationError(f"driver returned shape {out.shape}, expected ({self.M},)")
        return out

    def drift(self, t):
        return self._vec(self.f, t)

    def diffusion(self, t):
        if self.g is None:
            return np.zeros((self.M, self.n_wiener))
        out = np.asarray(self.g(t), dtype=float)
        if out.shape != (self.M, self.n_wiener):
            raise ConfigurationError(f"g returned shape {out.shape}, expected ({self.M}, {self.n_wiener})")
        return out

    def jump(self, t, z):
        return self._vec(self.h, t, z)

    def raw_jump(self, t, z):
        return self._vec(self.hbar, t, z)


def _check_orthogonal(hb: np.ndarray, h: np.ndarray, t: float, z) -> None:
    if np.any(np.outer(hb, h) != 0):
        raise PreconditionError(f"hbar and h are both nonzero at t={t!r}, z={np.asarray(z).tolist()!r}")


def sample_drivers_fd(drivers: DriverFD, ms: MarkSpace, js: JumpStream) -> DriverSamples:
    """Evaluate the closures at every left endpoint, cubature node and atom.

    Checks the orthogonality ``hbar^i h^j = 0`` on the same sample set.
    """
    tg = js.grid
    nodes, weights = ms.cubature()
    n, Q, M = tg.n_steps, nodes.shape[0], drivers.M
    drift = np.empty((n, M))
    diffusion = np.empty((n, M, drivers.n_wiener))
    h_nodes = np.empty((n, Q, M))
    for k, t in enumerate(tg.points[:-1]):
        drift[k] = drivers.drift(t)
        diffusion[k] = drivers.diffusion(t)
        for q, z in enumerate(nodes):
            h_nodes[k, q] = drivers.jump(t, z)
            if drivers.hbar is not None:
                _check_orthogonal(drivers.raw_jump(t, z), h_nodes[k, q], t, z)
    atom_h = np.empty((len(js), M))
    atom_hbar = np.empty((len(js), M))
    for j, (tau, z) in enumerate(zip(js.times, js.marks)):
        atom_h[j] = drivers.jump(tau, z)
        atom_hbar[j] = drivers.raw_jump(tau, z)
        _check_orthogonal(atom_hbar[j], atom_h[j], tau, z)
    return DriverSamples(drift, diffusion, h_nodes, np.asarray(weights, dtype=float), atom_h, atom_hbar)


@dataclass(frozen=True, eq=False)
class PathFD:
    """A simulated path on its jump-augmented grid.

    ``X[k]`` is the value at ``t_k`` after any jump there; ``X_minus[k]`` the
    value just before (equal to ``X[k]`` where no atom sits); ``atom_pre[j]``
    the left limit used by atom ``j``.
    """

    grid: TimeGrid
    X: np.ndarray
    X_minus: np.ndarray
    atom_pre: np.ndarray
    jumps: JumpStream
    wiener: WienerBundle
    drivers: DriverFD | None
    samples: DriverSamples
    X0: np.ndarray


def build_path_fd(drivers: DriverFD, js: JumpStream, wb: WienerBundle, X0, tg: TimeGrid | None = None,
                  ms: MarkSpace | None = None) -> PathFD:
    """Jump-adapted Euler-Maruyama path.

    ``tg`` defaults to ``js.grid`` and must contain every atom time; ``ms``
    supplies the compensator (defaults to zero intensity).
    """
    tg = js.grid if tg is None else tg
    js = js if js.grid is tg else js.on_grid(tg)
    ms = MarkSpace.finite_set(1, 0.0) if ms is None else ms
    X0 = np.asarray(X0, dtype=float).reshape(drivers.M)
    if wb.increments.shape != (tg.n_steps, drivers.n_wiener):
        raise ConfigurationError("Wiener bundle does not match the grid and driver count")
    samples = sample_drivers_fd(drivers, ms, js)
    return path_from_samples(samples, js, wb, X0, drivers)


def path_from_samples(samples: DriverSamples, js: JumpStream, wb: WienerBundle, X0,
                      drivers: DriverFD | None = None) -> PathFD:
    X0 = np.asarray(X0, dtype=float)
    X, X_minus, atom_pre = integrate(X0, samples, js.grid, js, wb)
    return PathFD(js.grid, X, X_minus, atom_pre, js, wb, drivers, samples, X0)


@dataclass(frozen=True)
class TermBreakdown:
    t: float
    lhs: float
    initial: float
    terms: dict = field(default_factory=dict)
    residual: float = 0.0

    @classmethod
    def assemble(cls, t, lhs, initial, terms: dict) -> "TermBreakdown":
        total = initial
        for name in terms:
            total = total + terms[name]
        return cls(float(t), float(lhs), float(initial), {k: float(v) for k, v in terms.items()}, float(lhs - total))

    def rows(self):
        yield "lhs", self.lhs
        yield "initial", self.initial
        yield from self.terms.items()
        yield "residual", self.residual


def _step_count(grid: TimeGrid, t: float) -> int:
    if not grid.contains(float(t)):
        raise DomainError(f"t={t!r} is not a grid point of the path")
    return grid.index_of(float(t))


def power_terms(p: float, X, X0, samples: DriverSamples, atom_pre, atom_grid_index, grid: TimeGrid,
                wb: WienerBundle, kt: int) -> dict:
    """Closed-form terms of the |x|^p Ito formula, vectorized over a spatial shape.

    Returns arrays of shape ``S``; the first axis of ``X`` is time, the last
    is the component.
    """
    dt = grid.steps[:kt]
    tshape = (-1,) + (1,) * (X.ndim - 2)
    Xk = X[:kt]
    r = np.linalg.norm(Xk, axis=-1)
    a = norm_power(r, p - 2)
    g = samples.diffusion[:kt]
    dw = wb.increments[:kt]
    gdw = np.zeros_like(Xk)
    for rr in range(dw.shape[1]):
        gdw = gdw + g[..., rr] * dw[:, rr].reshape(tshape + (1,))
    wiener = np.sum(p * a * np.sum(Xk * gdw, axis=-1), axis=0)
    drift = np.sum(p * a * np.sum(Xk * samples.drift[:kt], axis=-1) * dt.reshape(tshape), axis=0)
    xg = np.einsum("...i,...ir->...r", Xk, g)
    cross = (p - 2) * norm_power(r, p - 4) * np.sum(xg**2, axis=-1) if p != 2 else 0.0
    trace = a * np.sum(g**2, axis=(-2, -1))
    qv = np.sum(0.5 * p * (cross + trace) * dt.reshape(tshape), axis=0)
    sel = atom_grid_index <= kt
    pre = atom_pre[sel]
    hb = samples.atom_hbar[sel]
    h = samples.atom_h[sel]
    base = p_norm_value(p, pre)
    raw = np.sum(p_norm_value(p, pre + hb) - base, axis=0)
    lin = np.sum(p * norm_power(np.linalg.norm(pre, axis=-1), p - 2)[..., None] * pre * h, axis=-1)
    comp_flow = power_flow(p, Xk, samples.compensator[:kt], dt)
    compensated = np.sum(lin, axis=0) - np.sum(comp_flow, axis=0)
    remainder = np.sum(p_norm_value(p, pre + h) - base - lin, axis=0)
    return {
        "lhs": p_norm_value(p, X[kt]),
        "initial": p_norm_value(p, X0),
        "wiener_integral": wiener,
        "drift_term": drift,
        "diffusion_qv_term": qv,
        "raw_jump_term": raw,
        "compensated_jump_term": compensated,
        "remainder_jump_term": remainder,
    }


def _jet_terms(jet: Jet, path: PathFD, kt: int) -> dict:
    dt = path.grid.steps[:kt]
    Xk = path.X[:kt]
    s = path.samples
    grad = jet.grad(Xk)
    g = s.diffusion[:kt]
    dw = path.wiener.increments[:kt]
    gdw = np.zeros_like(Xk)
    for r in range(dw.shape[1]):
        gdw = gdw + g[..., r] * dw[:, r][:, None]
    hess = jet.hess(Xk)
    qv = 0.5 * np.einsum("kir,kij,kjr->k", g, hess, g)
    sel = path.jumps.grid_index <= kt
    pre = path.atom_pre[sel]
    hb = s.atom_hbar[sel]
    h = s.atom_h[sel]
    raw = jet.value(pre + hb) - jet.value(pre)
    lin = np.sum(jet.grad(pre) * h, axis=-1)
    comp_flow = segment_integral(jet.grad, Xk, s.compensator[:kt], dt)
    return {
        "lhs": jet.value(path.X[kt]),
        "initial": jet.value(path.X0),
        "wiener_integral": np.sum(np.sum(grad * gdw, axis=-1)),
        "drift_term": np.sum(np.sum(grad * s.drift[:kt], axis=-1) * dt),
        "diffusion_qv_term": np.sum(qv * dt),
        "raw_jump_term": np.sum(raw),
        "compensated_jump_term": np.sum(lin) - np.sum(comp_flow),
        "remainder_jump_term": np.sum(j_operator(jet, pre, h)),
    }


def eval_ito_fd(path: PathFD, phi: Jet | float, t: float | None = None) -> TermBreakdown:
    """Evaluate both sides of the Ito formula for ``phi(X_t)``.

    Time and Wiener integrands use ``X`` at left endpoints; jump integrands use
    the stored left limits; the compensator part of the dpi~ integral follows
    the compensator flow within each step.  Passing a float ``p`` selects the
    closed-form |x|^p evaluator.
    """
    t = path.grid.horizon if t is None else float(t)
    kt = _step_count(path.grid, t)
    if isinstance(phi, Jet):
        terms = _jet_terms(phi, path, kt)
    else:
        p = float(phi)
        PNormJet(p)
        terms = power_terms(p, path.X, path.X0, path.samples, path.atom_pre, path.jumps.grid_index,
                            path.grid, path.wiener, kt)
    lhs, initial = terms.pop("lhs"), terms.pop("initial")
    return TermBreakdown.assemble(t, lhs, initial, {name: terms[name] for name in TERM_NAMES})


@dataclass(frozen=True)
class FDSetup:
    """Everything needed to simulate paths of one R^M configuration.

    ``drivers`` is a DriverFD, or a callable ``rng -> DriverFD`` for drivers
    with random coefficients (fed from the coefficient stream of each path).
    """

    drivers: DriverFD | Callable
    X0: tuple | np.ndarray
    marks: MarkSpace
    horizon: float = 1.0
    n_steps: int = 64
    seed: int = 0

    def drivers_for(self, path_index: int) -> DriverFD:
        if isinstance(self.drivers, DriverFD):
            return self.drivers
        return self.drivers(path_rng(self.seed, path_index, COEFFICIENT_STREAM))

    def simulate(self, path_index: int, n_steps: int | None = None) -> PathFD:
        return self.simulate_refined(path_index, [self.n_steps if n_steps is None else n_steps])[0]

    def simulate_refined(self, path_index: int, levels) -> list[PathFD]:
        """Paths on ``uniform(n) + atoms`` for each ``n`` in ``levels``, sharing one noise draw.

        Noise is drawn on the finest level; coarser Wiener increments are sums
        of fine ones.  Levels must be nested (e.g. powers of two).
        """
        levels = [int(n) for n in levels]
        drivers = self.drivers_for(path_index)
        rng = path_rng(self.seed, path_index)
        finest = max(levels)
        js = sample_jump_stream(self.marks, TimeGrid.uniform(self.horizon, finest), rng)
        fine = js.grid
        wb = sample_wiener(fine, drivers.n_wiener, rng)
        paths = []
        for n in levels:
            coarse = TimeGrid.uniform(self.horizon, n).augment(js.times)
            if not fine.is_refinement_of(coarse):
                raise ConfigurationError(f"level {n} is not nested in level {finest}")
            wb_c = wb if n == finest else wb.restrict(fine, coarse)
            paths.append(build_path_fd(drivers, js.on_grid(coarse), wb_c, self.X0, ms=self.marks))
        return paths


def energy_gap(path: PathFD) -> float:
    """Per-path quantity whose mean vanishes by the p = 2 Ito formula.

    ``|X_T|^2 - |X_0|^2 - int (2 X.f + |g|^2) dt - int int |h|^2 mu dt
    - sum over atoms of (|X_- + hbar|^2 - |X_-|^2)``
    """
    s = path.samples
    dt = path.grid.steps
    Xk = path.X[:-1]
    drift = np.sum((2 * np.sum(Xk * s.drift, axis=-1) + np.sum(s.diffusion**2, axis=(-2, -1))) * dt)
    h_sq = np.zeros(dt.shape)
    for q, w in enumerate(s.weights):
        h_sq = h_sq + w * np.sum(s.h_nodes[:, q] ** 2, axis=-1)
    pre = path.atom_pre
    raw = np.sum(np.sum((pre + s.atom_hbar) ** 2, axis=-1) - np.sum(pre**2, axis=-1))
    return float(np.sum(path.X[-1] ** 2) - np.sum(path.X0**2) - drift - np.sum(h_sq * dt) - raw)


def energy_identity_stat(setup: FDSetup, n_paths: int) -> tuple[float, float]:
    """Monte-Carlo mean of :func:`energy_gap` and its standard error."""
    if n_paths < 2:
        raise ConfigurationError("need at least two paths for a standard error")
    gaps = np.array([energy_gap(setup.simulate(i)) for i in range(n_paths)])
    return float(gaps.mean()), float(gaps.std(ddof=1) / np.sqrt(n_paths))


def refinement_residuals(setup: FDSetup, levels, n_paths: int, phi: Jet | float) -> np.ndarray:
    """``|residual|`` at T for each path (rows) and refinement level (columns)."""
    out = np.empty((n_paths, len(levels)))
    for i in range(n_paths):
        for j, path in enumerate(setup.simulate_refined(i, levels)):
            out[i, j] = abs(eval_ito_fd(path, phi).residual)
    return out


def clip_drivers(drivers: DriverFD, level: float) -> DriverFD:
    """``h`` replaced by its componentwise clipping ``-n v h ^ n``."""
    if drivers.h is None:
        return drivers
    h = drivers.h
    return replace(drivers, h=lambda t, z: np.clip(h(t, z), -level, level))


def clipping_study(setup: FDSetup, path_index: int, levels, phi: Jet | float) -> np.ndarray:
    """Residual at T of the same noise with ``h`` clipped at each level."""
    base = setup.drivers_for(path_index)
    out = []
    for level in levels:
        clipped = replace(setup, drivers=clip_drivers(base, level))
        out.append(eval_ito_fd(clipped.simulate(path_index), phi).residual)
    return np.array(out)
