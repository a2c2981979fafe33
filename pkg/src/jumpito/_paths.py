"""Driver samples on a grid and the jump-adapted Euler recursion.

Shared by the R^M builder and the field builder so that a field restricted to
one spatial point reproduces the R^M path bit for bit.  Arrays carry a spatial
shape ``S`` between the leading (time or atom) axis and the component axis;
``S = ()`` for R^M paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drivers import JumpStream, TimeGrid, WienerBundle

GAUSS_NODES = 12


@dataclass(frozen=True, eq=False)
class DriverSamples:
    """Drivers evaluated at left endpoints of every step and at every atom.

    drift      (n, *S, M)       f at t_k (in divergence mode: f0 + D_i f^i)
    diffusion  (n, *S, M, R)    g at t_k
    h_nodes    (n, Q, *S, M)    h(t_k, z_q) at the mark cubature nodes
    weights    (Q,)             cubature weights, summing to mu(Z)
    atom_h     (N, *S, M)       h(tau_j, z_j)
    atom_hbar  (N, *S, M)       hbar(tau_j, z_j)
    """

    drift: np.ndarray
    diffusion: np.ndarray
    h_nodes: np.ndarray
    weights: np.ndarray
    atom_h: np.ndarray
    atom_hbar: np.ndarray

    @property
    def compensator(self) -> np.ndarray:
        """``H_k = sum_q w_q h(t_k, z_q)`` accumulated in node order."""
        acc = np.zeros(self.drift.shape)
        for q, w in enumerate(self.weights):
            acc = acc + w * self.h_nodes[:, q]
        return acc

    def map_space(self, fn) -> "DriverSamples":
        """Apply a linear spatial operator ``fn`` (acting on ``(..., *S, M)``) to every field."""
        diff = np.moveaxis(fn(np.moveaxis(self.diffusion, -1, 1)), 1, -1) if self.diffusion.size else self.diffusion
        return DriverSamples(fn(self.drift), diff, fn(self.h_nodes), self.weights,
                             fn(self.atom_h), fn(self.atom_hbar))


def integrate(x0: np.ndarray, samples: DriverSamples, tg: TimeGrid, js: JumpStream, wb: WienerBundle):
    """Run the recursion; returns ``(X, X_minus, atom_pre)``.

    One step: compensator flow ``-H_k dt``, then the Euler drift and diffusion
    increments, then every atom sitting at ``t_{k+1}`` in atom order.
    """
    n = tg.n_steps
    dt = tg.steps
    dw = wb.increments
    n_wiener = dw.shape[1]
    comp = samples.compensator
    X = np.empty((n + 1,) + x0.shape)
    X_minus = np.empty_like(X)
    atom_pre = np.empty((len(js),) + x0.shape)
    atoms_at: dict[int, list[int]] = {}
    for j, k in enumerate(js.grid_index):
        atoms_at.setdefault(int(k), []).append(j)
    state = np.array(x0, dtype=float)
    X[0] = X_minus[0] = state
    for k in range(n):
        y = state - comp[k] * dt[k]
        y = y + samples.drift[k] * dt[k]
        for r in range(n_wiener):
            y = y + samples.diffusion[k, ..., r] * dw[k, r]
        X_minus[k + 1] = y
        for j in atoms_at.get(k + 1, ()):
            atom_pre[j] = y
            y = y + (samples.atom_hbar[j] + samples.atom_h[j])
        X[k + 1] = y
        state = y
    return X, X_minus, atom_pre


def segment_integral(grad_fn, x: np.ndarray, H: np.ndarray, dt: np.ndarray) -> np.ndarray:
    """``int_0^dt grad_fn(x - s H) . H ds`` along the compensator flow of each step.

    Gauss-Legendre on two pieces split at the point of closest approach to the
    origin, where ``|.|^p`` jets lose smoothness.  ``dt`` broadcasts against
    the leading axis of ``x``.
    """
    nodes, weights = np.polynomial.legendre.leggauss(GAUSS_NODES)
    dt = np.asarray(dt, dtype=float).reshape((-1,) + (1,) * (x.ndim - 2))
    dt = np.broadcast_to(dt, x.shape[:-1])
    hh = np.sum(H * H, axis=-1)
    xh = np.sum(x * H, axis=-1)
    split = np.zeros_like(hh)
    np.divide(xh, hh, out=split, where=hh > 0)
    split = np.clip(split, 0.0, dt)
    total = np.zeros(x.shape[:-1])
    for lo, hi in ((np.zeros_like(dt), split), (split, dt)):
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        for node, w in zip(nodes, weights):
            s = mid + half * node
            pts = x - s[..., None] * H
            total = total + w * half * np.sum(grad_fn(pts) * H, axis=-1)
    return total


def power_flow(p: float, x: np.ndarray, H: np.ndarray, dt: np.ndarray) -> np.ndarray:
    """Closed form of :func:`segment_integral` for ``|x|^p``: ``|x|^p - |x - dt H|^p``."""
    dt = np.asarray(dt, dtype=float).reshape((-1,) + (1,) * (x.ndim - 1))
    end = x - dt * H
    r0 = np.linalg.norm(x, axis=-1)
    r1 = np.linalg.norm(end, axis=-1)
    return _pow(r0, p) - _pow(r1, p)


def _pow(r, p):
    out = np.zeros_like(r)
    np.power(r, p, out=out, where=r > 0)
    return out
