"""L_p-valued field processes u_t(x) on a uniform cell-centred grid.

Field arrays have shape ``(*S, M)`` where ``S = (n_cells,) * d``; arrays over
time or atoms add a leading axis.  Every spatial integral uses the same
rectangle rule (sum over cell centres times the cell volume).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._paths import DriverSamples, integrate
from .drivers import (COEFFICIENT_STREAM, JumpStream, MarkSpace, TimeGrid, WienerBundle, path_rng,
                      sample_jump_stream, sample_wiener)
from .errors import ConfigurationError, DomainError, PreconditionError
from .semimartingale import DriverFD

MODES = ("thm21", "thm22")


@dataclass(frozen=True, eq=False)
class SpaceGrid:
    """Uniform grid on the box ``[-L, L]^d`` with ``n_cells`` cells per axis."""

    d: int
    half_width: float
    n_cells: int

    def __post_init__(self):
        if int(self.d) < 1 or int(self.n_cells) < 3:
            raise ConfigurationError("need d >= 1 and at least 3 cells per axis")
        if not np.isfinite(self.half_width) or self.half_width <= 0:
            raise ConfigurationError("half_width must be finite and positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n_cells

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.d

    @property
    def shape(self) -> tuple:
        return (self.n_cells,) * self.d

    @property
    def axis(self) -> np.ndarray:
        return -self.half_width + (np.arange(self.n_cells) + 0.5) * self.spacing

    @cached_property
    def points(self) -> np.ndarray:
        """Cell centres, ``(P, d)`` in C order (cached, read-only)."""
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        pts.setflags(write=False)
        return pts

    @property
    def size(self) -> int:
        return self.n_cells**self.d

    def sample(self, fn: Callable, *args, tail: tuple = ()) -> np.ndarray:
        """Evaluate ``fn(*args, points)`` and reshape to ``S + tail``."""
        out = np.asarray(fn(*args, self.points), dtype=float)
        try:
            return out.reshape(self.shape + tail)
        except ValueError as exc:
            raise ConfigurationError(f"field closure returned shape {out.shape}") from exc


def _spatial_axes(arr: np.ndarray, d: int) -> tuple:
    return tuple(range(arr.ndim - 1 - d, arr.ndim - 1))


def lp_integral(field, p: float, grid: SpaceGrid, value_axes: int = 1) -> np.ndarray:
    """``int |field(x)|^p dx``; the trailing ``value_axes`` axes form the Euclidean norm."""
    field = np.asarray(field, dtype=float)
    if value_axes:
        mag = np.sqrt(np.sum(field**2, axis=tuple(range(-value_axes, 0))))
    else:
        mag = np.abs(field)
    axes = tuple(range(mag.ndim - grid.d, mag.ndim))
    return np.sum(mag**p, axis=axes) * grid.cell_volume


def lp_norm(field, p: float, grid: SpaceGrid, value_axes: int = 1) -> np.ndarray:
    """Rectangle-rule ``|field|_{L_p}``."""
    if not p >= 1:
        raise DomainError(f"p must be >= 1, got {p!r}")
    return lp_integral(field, p, grid, value_axes) ** (1.0 / p)


def _check_support(values: np.ndarray, d: int, margin: int, what: str) -> None:
    """Raise unless ``values`` (spatial axes last ``d`` before the component) vanish near the boundary."""
    scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
    for ax in _spatial_axes(values, d):
        n = values.shape[ax]
        edge = np.concatenate([np.take(values, range(margin), axis=ax).ravel(),
                               np.take(values, range(n - margin, n), axis=ax).ravel()])
        if np.any(np.abs(edge) > 1e-12 * scale):
            raise ConfigurationError(f"{what} does not vanish within {margin} cell(s) of the boundary")


def weak_pairing(field, test, grid: SpaceGrid) -> np.ndarray:
    """``(u^i, phi)`` for each component ``i``; ``test`` is an array on ``S`` or a callable ``x -> (P,)``."""
    field = np.asarray(field, dtype=float)
    phi = grid.sample(test) if callable(test) else np.asarray(test, dtype=float)
    if phi.shape != grid.shape:
        raise ConfigurationError("test function must live on the space grid")
    _check_support(phi[..., None], grid.d, 1, "test function")
    return np.tensordot(phi, field, axes=(tuple(range(grid.d)), tuple(range(grid.d)))) * grid.cell_volume


def fd_derivative(field, axis: int, grid: SpaceGrid, check_margin: bool = True) -> np.ndarray:
    """Central difference ``D_axis`` with zero extension outside the box.

    ``field`` has shape ``(..., *S, M)``.
    """
    field = np.asarray(field, dtype=float)
    if not 0 <= axis < grid.d:
        raise DomainError(f"axis must be in [0, {grid.d})")
    if check_margin:
        _check_support(field, grid.d, 1, "field")
    ax = field.ndim - 1 - grid.d + axis
    u = np.moveaxis(field, ax, 0)
    out = np.zeros_like(u)
    out[1:-1] = u[2:] - u[:-2]
    out[0] = u[1]
    out[-1] = -u[-2]
    return np.moveaxis(out / (2.0 * grid.spacing), 0, ax)


def gradient_norm_integral(field, p: float, grid: SpaceGrid) -> np.ndarray:
    """``int (sum_i |D_i u|^2)^(p/2) dx`` for scalar fields ``(..., *S, 1)``."""
    grads = np.stack([fd_derivative(field, i, grid, check_margin=False)[..., 0] for i in range(grid.d)], axis=-1)
    return lp_integral(grads, p, grid)


@dataclass(frozen=True, eq=False)
class FieldDrivers:
    """Closures of a field process; ``x`` is the ``(P, d)`` array of cell centres.

    f0(t, x) -> (P, M); f_div[i](t, x) -> (P, M) (divergence-form drift, M = 1);
    g(t, x) -> (P, M, n_wiener); h(t, x, z) -> (P, M); psi(x) -> (P, M).
    """

    M: int
    n_wiener: int = 0
    f0: Callable | None = None
    f_div: Sequence[Callable] | None = None
    g: Callable | None = None
    h: Callable | None = None
    psi: Callable | None = None

    def __post_init__(self):
        if int(self.M) < 1 or int(self.n_wiener) < 0:
            raise ConfigurationError("M must be >= 1 and n_wiener >= 0")


@dataclass(frozen=True, eq=False)
class FieldPath:
    grid: TimeGrid
    space: SpaceGrid
    u: np.ndarray
    u_minus: np.ndarray
    atom_pre: np.ndarray
    jumps: JumpStream
    wiener: WienerBundle
    samples: DriverSamples
    psi: np.ndarray
    mode: str = "thm21"
    f0: np.ndarray | None = None
    f_div: np.ndarray | None = None
    drivers: FieldDrivers | None = None


def sample_field_drivers(drivers: FieldDrivers, js: JumpStream, sg: SpaceGrid, ms: MarkSpace,
                         mode: str = "thm21"):
    """Driver arrays on the time x space grid; returns ``(samples, f0, f_div, psi)``."""
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}")
    if mode == "thm22" and drivers.M != 1:
        raise ConfigurationError("divergence-form mode requires M = 1")
    if mode == "thm21" and drivers.f_div:
        raise ConfigurationError("divergence-form drift given outside thm22 mode")
    tg = js.grid
    nodes, weights = ms.cubature()
    n, Q, M, R, S = tg.n_steps, nodes.shape[0], drivers.M, drivers.n_wiener, sg.shape
    zero = np.zeros(S + (M,))
    f0 = np.empty((n,) + S + (M,))
    diffusion = np.zeros((n,) + S + (M, R))
    h_nodes = np.empty((n, Q) + S + (M,))
    n_div = len(drivers.f_div) if drivers.f_div else 0
    if mode == "thm22" and n_div not in (0, sg.d):
        raise ConfigurationError(f"need one divergence component per space axis ({sg.d}), got {n_div}")
    f_div = np.empty((n_div, n) + S + (M,)) if n_div else None
    for k, t in enumerate(tg.points[:-1]):
        f0[k] = sg.sample(drivers.f0, t, tail=(M,)) if drivers.f0 is not None else zero
        if drivers.g is not None:
            diffusion[k] = sg.sample(drivers.g, t, tail=(M, R))
        for q, z in enumerate(nodes):
            h_nodes[k, q] = sg.sample(lambda x: drivers.h(t, x, z), tail=(M,)) if drivers.h is not None else zero
        for i in range(n_div):
            f_div[i, k] = sg.sample(drivers.f_div[i], t, tail=(M,))
    drift = f0
    if n_div:
        drift = f0.copy()
        for i in range(n_div):
            drift = drift + fd_derivative(f_div[i], i, sg)
    atom_h = np.empty((len(js),) + S + (M,))
    for j, (tau, z) in enumerate(zip(js.times, js.marks)):
        atom_h[j] = sg.sample(lambda x: drivers.h(tau, x, z), tail=(M,)) if drivers.h is not None else zero
    psi = sg.sample(drivers.psi, tail=(M,)) if drivers.psi is not None else zero.copy()
    samples = DriverSamples(drift, diffusion, h_nodes, np.asarray(weights, dtype=float), atom_h,
                            np.zeros_like(atom_h))
    return samples, f0, f_div, psi


def build_field_path(drivers: FieldDrivers, js: JumpStream, wb: WienerBundle, sg: SpaceGrid,
                     ms: MarkSpace | None = None, mode: str = "thm21") -> FieldPath:
    """Pointwise-in-x jump-adapted Euler recursion, the same as for R^M paths.

    In ``thm22`` mode the drift is ``f0 + sum_i D_i f^i`` with central differences.
    """
    ms = MarkSpace.finite_set(1, 0.0) if ms is None else ms
    if wb.increments.shape != (js.grid.n_steps, drivers.n_wiener):
        raise ConfigurationError("Wiener bundle does not match the grid and driver count")
    samples, f0, f_div, psi = sample_field_drivers(drivers, js, sg, ms, mode)
    return field_path_from_samples(samples, js, wb, sg, psi, mode, f0, f_div, drivers)


def field_path_from_samples(samples: DriverSamples, js: JumpStream, wb: WienerBundle, sg: SpaceGrid, psi,
                            mode: str = "thm21", f0=None, f_div=None, drivers=None) -> FieldPath:
    psi = np.asarray(psi, dtype=float)
    u, u_minus, atom_pre = integrate(psi, samples, js.grid, js, wb)
    return FieldPath(js.grid, sg, u, u_minus, atom_pre, js, wb, samples, psi, mode,
                     samples.drift if f0 is None else f0, f_div, drivers)


def pointwise_drivers(drivers: FieldDrivers, sg: SpaceGrid, flat_index: int) -> DriverFD:
    """R^M drivers obtained by freezing ``x`` at one cell centre (plain drift mode)."""
    if drivers.f_div:
        raise PreconditionError("pointwise restriction is defined for plain drift only")
    x = sg.points[flat_index:flat_index + 1]
    M, R = drivers.M, drivers.n_wiener
    f = (lambda t: np.asarray(drivers.f0(t, x), dtype=float).reshape(M)) if drivers.f0 else None
    g = (lambda t: np.asarray(drivers.g(t, x), dtype=float).reshape(M, R)) if drivers.g else None
    h = (lambda t, z: np.asarray(drivers.h(t, x, z), dtype=float).reshape(M)) if drivers.h else None
    return DriverFD(M, R, f=f, g=g, h=h)


def export_snapshot(field, path, fmt: str = "csv") -> None:
    """Write one field slice ``(*S, M)``.

    Ordering: flat cell index in C order (last space axis fastest), then the
    component.  ``csv`` has the header ``x_index,component,value``; ``bin`` is
    raw little-endian float64 in the same order.
    """
    field = np.asarray(field, dtype=float)
    flat = field.reshape(-1, field.shape[-1])
    path = Path(path)
    if fmt == "csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x_index", "component", "value"])
            for i, row in enumerate(flat):
                for c, v in enumerate(row):
                    writer.writerow([i, c, repr(float(v))])
    elif fmt == "bin":
        path.write_bytes(flat.astype("<f8").tobytes())
    else:
        raise ConfigurationError(f"unknown snapshot format {fmt!r}")


def read_snapshot(path, shape: tuple, fmt: str = "csv") -> np.ndarray:
    path = Path(path)
    if fmt == "bin":
        return np.frombuffer(path.read_bytes(), dtype="<f8").reshape(shape).copy()
    out = np.empty(int(np.prod(shape[:-1]))* shape[-1])
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for i, c, v in reader:
            out[int(i) * shape[-1] + int(c)] = float(v)
    return out.reshape(shape)


@dataclass(frozen=True, eq=False)
class FieldSetup:
    """Everything needed to simulate paths of one field configuration.

    ``drivers`` is a FieldDrivers or a callable ``rng -> FieldDrivers`` fed from
    the coefficient stream of each path, as for R^M setups.
    """

    drivers: FieldDrivers | Callable
    space: SpaceGrid
    marks: MarkSpace
    horizon: float = 1.0
    n_steps: int = 64
    seed: int = 0
    mode: str = "thm21"

    def drivers_for(self, path_index: int) -> FieldDrivers:
        if isinstance(self.drivers, FieldDrivers):
            return self.drivers
        return self.drivers(path_rng(self.seed, path_index, COEFFICIENT_STREAM))

    def simulate(self, path_index: int) -> FieldPath:
        drivers = self.drivers_for(path_index)
        rng = path_rng(self.seed, path_index)
        js = sample_jump_stream(self.marks, TimeGrid.uniform(self.horizon, self.n_steps), rng)
        wb = sample_wiener(js.grid, drivers.n_wiener, rng)
        return build_field_path(drivers, js, wb, self.space, self.marks, self.mode)
