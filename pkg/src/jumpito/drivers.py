"""Noise sources: time grids, finite-activity Poisson random measures, Wiener bundles.

Everything here is stateless.  Randomness enters only through an explicit
``numpy.random.Generator``; :func:`path_rng` derives the per-path generator
from a 64-bit master seed and a path index:

    SeedSequence(entropy=seed mod 2**64, spawn_key=(path_index, stream)) -> PCG64

``stream=0`` feeds the noise (jump stream first, then Wiener increments);
``stream=1`` feeds randomized driver coefficients.  The mapping is part of the
public contract, so any (seed, path_index) pair reproduces bit-identical paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DomainError

SEED_MASK = (1 << 64) - 1
NOISE_STREAM = 0
COEFFICIENT_STREAM = 1


def path_rng(seed: int, path_index: int, stream: int = NOISE_STREAM) -> np.random.Generator:
    """Independent generator for one Monte-Carlo path."""
    if path_index < 0 or stream < 0:
        raise ConfigurationError("path_index and stream must be nonnegative")
    ss = np.random.SeedSequence(entropy=int(seed) & SEED_MASK, spawn_key=(int(path_index), int(stream)))
    return np.random.Generator(np.random.PCG64(ss))


def _finite_positive(name: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ConfigurationError(f"{name} must be a finite positive number, got {value!r}")
    return value


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Sorted time points ``0 = t_0 < t_1 < ... < t_n = T``."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ConfigurationError("a time grid needs at least two points")
        if pts[0] != 0.0:
            raise ConfigurationError("time grid must start at 0")
        if not np.all(np.isfinite(pts)) or np.any(np.diff(pts) <= 0):
            raise ConfigurationError("time grid points must be finite and strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, horizon: float, n_steps: int) -> "TimeGrid":
        horizon = _finite_positive("horizon T", horizon)
        if int(n_steps) < 1:
            raise ConfigurationError(f"n_steps must be a positive integer, got {n_steps!r}")
        n_steps = int(n_steps)
        # (k*T)/n keeps dyadic refinements exactly nested
        pts = (np.arange(n_steps + 1) * horizon) / n_steps
        pts[-1] = horizon
        return cls(pts)

    @property
    def horizon(self) -> float:
        return float(self.points[-1])

    @property
    def n_steps(self) -> int:
        return self.points.size - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.points)

    def augment(self, times) -> "TimeGrid":
        """Grid with ``times`` inserted; coinciding points appear once."""
        times = np.asarray(times, dtype=float).ravel()
        if times.size == 0:
            return self
        if np.any(times < 0) or np.any(times > self.horizon) or not np.all(np.isfinite(times)):
            raise DomainError("inserted times must lie in [0, T]")
        return TimeGrid(np.union1d(self.points, times))

    def contains(self, t: float) -> bool:
        k = np.searchsorted(self.points, t)
        return bool(k < self.points.size and self.points[k] == t)

    def index_of(self, t: float) -> int:
        k = int(np.searchsorted(self.points, t))
        if k >= self.points.size or self.points[k] != t:
            raise DomainError(f"t={t!r} is not a grid point")
        return k

    def is_refinement_of(self, coarse: "TimeGrid") -> bool:
        return bool(np.all(np.isin(coarse.points, self.points)))


@dataclass(frozen=True, eq=False)
class MarkSpace:
    """Finite mark measure ``mu`` with total mass ``total_mass`` (jumps per unit time).

    ``finite_set`` marks are the rows of ``points`` (default: the indices
    0..size-1 as 1-vectors) drawn with probabilities ``probs``; ``box`` marks
    are uniform on the rectangle ``bounds`` (shape ``(dim, 2)``) and are
    integrated with a tensor midpoint rule of ``resolution`` cells per axis.
    """

    kind: str
    total_mass: float
    points: np.ndarray | None = None
    probs: np.ndarray | None = None
    bounds: np.ndarray | None = None
    resolution: int = 8

    def __post_init__(self):
        mass = float(self.total_mass)
        if not np.isfinite(mass) or mass < 0:
            raise ConfigurationError(f"total mass must be finite and nonnegative, got {self.total_mass!r}")
        object.__setattr__(self, "total_mass", mass)
        if self.kind == "finite_set":
            pts = np.asarray(self.points, dtype=float)
            if pts.ndim == 1:
                pts = pts[:, None]
            probs = np.asarray(self.probs, dtype=float)
            if pts.shape[0] == 0 or probs.shape != (pts.shape[0],):
                raise ConfigurationError("finite_set needs one probability per point")
            if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0, rtol=0, atol=1e-12):
                raise ConfigurationError("finite_set probabilities must be nonnegative and sum to 1")
            object.__setattr__(self, "points", pts)
            object.__setattr__(self, "probs", probs)
        elif self.kind == "box":
            b = np.asarray(self.bounds, dtype=float)
            if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 1] <= b[:, 0]) or not np.all(np.isfinite(b)):
                raise ConfigurationError("box bounds must be finite (dim, 2) with lo < hi")
            if int(self.resolution) < 1:
                raise ConfigurationError("box resolution must be a positive integer")
            object.__setattr__(self, "bounds", b)
            object.__setattr__(self, "resolution", int(self.resolution))
        else:
            raise ConfigurationError(f"unknown mark space kind {self.kind!r}")

    @classmethod
    def finite_set(cls, size: int, total_mass: float, values=None, probs=None) -> "MarkSpace":
        size = int(size)
        if size < 1:
            raise ConfigurationError("finite_set size must be at least 1")
        values = np.arange(size, dtype=float) if values is None else values
        probs = np.full(size, 1.0 / size) if probs is None else probs
        return cls("finite_set", total_mass, points=values, probs=probs)

    @classmethod
    def box(cls, bounds, total_mass: float, resolution: int = 8) -> "MarkSpace":
        return cls("box", total_mass, bounds=np.atleast_2d(np.asarray(bounds, dtype=float)), resolution=resolution)

    @property
    def mark_dim(self) -> int:
        return self.points.shape[1] if self.kind == "finite_set" else self.bounds.shape[0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "finite_set":
            idx = rng.choice(self.points.shape[0], size=n, p=self.probs)
            return self.points[idx]
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return rng.uniform(lo, hi, size=(n, self.mark_dim))

    def cubature(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes ``(q, mark_dim)`` and weights ``(q,)`` with ``sum(weights) == mu(Z)``."""
        if self.kind == "finite_set":
            return self.points, self.total_mass * self.probs
        n = self.resolution
        axes = [lo + (hi - lo) * (np.arange(n) + 0.5) / n for lo, hi in self.bounds]
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=-1)
        weights = np.full(nodes.shape[0], self.total_mass / nodes.shape[0])
        return nodes, weights

    def contains(self, marks) -> np.ndarray:
        marks = np.atleast_2d(np.asarray(marks, dtype=float))
        if self.kind == "finite_set":
            return np.array([np.any(np.all(self.points == z, axis=1)) for z in marks], dtype=bool)
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return np.all((marks >= lo) & (marks <= hi), axis=1)

    def mass_of(self, subset: Callable[[np.ndarray], np.ndarray]) -> float:
        """``mu(A)`` for ``A`` given as a vectorized indicator on marks (cubature for boxes)."""
        nodes, weights = self.cubature()
        return float(np.sum(weights * np.asarray(subset(nodes), dtype=float)))

    def restrict(self, keep) -> "MarkSpace":
        """Restriction ``mu(. & Z_n)``; ``keep`` is a boolean mask over points or new box bounds."""
        if self.kind == "finite_set":
            keep = np.asarray(keep, dtype=bool)
            if keep.shape != self.probs.shape or not keep.any():
                raise ConfigurationError("restriction mask must keep at least one point")
            kept = self.probs[keep]
            return MarkSpace("finite_set", self.total_mass * kept.sum(), points=self.points[keep],
                             probs=kept / kept.sum())
        sub = np.atleast_2d(np.asarray(keep, dtype=float))
        if sub.shape != self.bounds.shape or np.any(sub[:, 0] < self.bounds[:, 0]) or np.any(sub[:, 1] > self.bounds[:, 1]):
            raise ConfigurationError("restricted box must lie inside the original box")
        frac = np.prod((sub[:, 1] - sub[:, 0]) / (self.bounds[:, 1] - self.bounds[:, 0]))
        return MarkSpace("box", self.total_mass * frac, bounds=sub, resolution=self.resolution)


@dataclass(frozen=True, eq=False)
class JumpStream:
    """Atoms ``(time, mark)`` of one sampled Poisson random measure on (0, T] x Z.

    ``grid`` is the input grid with every atom time inserted.
    """

    times: np.ndarray
    marks: np.ndarray
    grid: TimeGrid
    truncation_level: int = 0
    grid_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        marks = np.asarray(self.marks, dtype=float)
        if marks.ndim == 1:
            marks = marks.reshape(times.size, -1) if times.size else marks.reshape(0, 1)
        if marks.shape[0] != times.size:
            raise ConfigurationError("one mark per atom time is required")
        if np.any(np.diff(times) < 0):
            raise ConfigurationError("atom times must be sorted")
        if times.size and (times[0] <= 0 or times[-1] > self.grid.horizon):
            raise DomainError("atom times must lie in (0, T]")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "grid_index", np.array([self.grid.index_of(t) for t in times], dtype=int))

    @classmethod
    def from_atoms(cls, times, marks, tg: TimeGrid, truncation_level: int = 0) -> "JumpStream":
        """Hand-built stream; the grid is augmented with the atom times."""
        times = np.asarray(times, dtype=float).ravel()
        order = np.argsort(times, kind="stable")
        marks = np.asarray(marks, dtype=float).reshape(times.size, -1) if times.size else np.zeros((0, 1))
        return cls(times[order], marks[order], tg.augment(times), truncation_level)

    def __len__(self) -> int:
        return self.times.size

    def on_grid(self, tg: TimeGrid) -> "JumpStream":
        """Same atoms re-indexed against a grid that already contains every atom time."""
        return JumpStream(self.times, self.marks, tg, self.truncation_level)

    def restrict(self, ms: MarkSpace, level: int | None = None) -> "JumpStream":
        """Thinning to the atoms whose marks lie in ``ms`` (a restriction ``Z_n``)."""
        keep = ms.contains(self.marks) if len(self) else np.zeros(0, dtype=bool)
        return JumpStream(self.times[keep], self.marks[keep], self.grid,
                          self.truncation_level if level is None else level)


def sample_jump_stream(ms: MarkSpace, tg: TimeGrid, rng: np.random.Generator,
                       truncation_level: int = 0) -> JumpStream:
    """Poisson(mu(Z) T) atoms, times uniform on (0, T], marks from the mark law."""
    lam, horizon = ms.total_mass, tg.horizon
    if not (np.isfinite(lam) and np.isfinite(horizon)):
        raise ConfigurationError("intensity and horizon must be finite")
    count = int(rng.poisson(lam * horizon))
    # T - U(0, T) lies in (0, T]
    times = horizon - rng.uniform(0.0, horizon, size=count)
    marks = ms.sample(count, rng)
    order = np.argsort(times, kind="stable")
    times, marks = times[order], marks[order]
    return JumpStream(times, marks.reshape(count, ms.mark_dim), tg.augment(times), truncation_level)


@dataclass(frozen=True, eq=False)
class WienerBundle:
    """Increments ``(n_steps, R_w)`` of ``R_w`` independent Wiener processes on a grid."""

    increments: np.ndarray

    @property
    def n_drivers(self) -> int:
        return self.increments.shape[1]

    def restrict(self, fine: TimeGrid, coarse: TimeGrid) -> "WienerBundle":
        """Coupled coarse increments: sums of the fine increments over each coarse step."""
        if not fine.is_refinement_of(coarse):
            raise ConfigurationError("coarse grid points must all be fine grid points")
        path = np.vstack([np.zeros((1, self.n_drivers)), np.cumsum(self.increments, axis=0)])
        idx = np.searchsorted(fine.points, coarse.points)
        return WienerBundle(np.diff(path[idx], axis=0))


def sample_wiener(tg: TimeGrid, n_drivers: int, rng: np.random.Generator) -> WienerBundle:
    if int(n_drivers) < 0:
        raise ConfigurationError("number of Wiener drivers must be nonnegative")
    z = rng.standard_normal((tg.n_steps, int(n_drivers)))
    return WienerBundle(z * np.sqrt(tg.steps)[:, None])


def _check_time(tg: TimeGrid, t: float) -> float:
    t = float(t)
    if not (0.0 <= t <= tg.horizon):
        raise DomainError(f"t={t!r} outside [0, {tg.horizon}]")
    return t


def compensator_integral(hfun, ms: MarkSpace, tg: TimeGrid, t: float, start: float = 0.0):
    """Left-endpoint quadrature of ``int_start^t int_Z hfun(s, z) mu(dz) ds``.

    ``hfun(s, z)`` takes a time and one mark (a ``(mark_dim,)`` array) and may
    return a scalar or an array; the result has the same shape.
    """
    t, start = _check_time(tg, t), _check_time(tg, start)
    if start > t:
        raise DomainError("start must not exceed t")
    nodes, weights = ms.cubature()
    pts = tg.points
    acc = 0.0
    for k in range(tg.n_steps):
        lo = pts[k]
        if lo >= t:
            break
        hi = min(pts[k + 1], t)
        lo = max(lo, start)
        if hi <= lo:
            continue
        inner = 0.0
        for z, w in zip(nodes, weights):
            inner = inner + w * np.asarray(hfun(lo, z), dtype=float)
        acc = acc + inner * (hi - lo)
    return acc


def raw_jump_integral(hfun, js: JumpStream, t: float):
    """``int_0^t int_Z hfun dpi``: the sum over atoms with time <= t."""
    acc = 0.0
    for tau, z in zip(js.times, js.marks):
        if tau > t:
            break
        acc = acc + np.asarray(hfun(tau, z), dtype=float)
    return acc


def compensated_jump_integral(hfun, js: JumpStream, ms: MarkSpace, tg: TimeGrid, t: float):
    """``int_0^t int_Z hfun d(pi - mu x ds)`` on one sampled stream."""
    t = _check_time(tg, t)
    return raw_jump_integral(hfun, js, t) - compensator_integral(hfun, ms, tg, t)
