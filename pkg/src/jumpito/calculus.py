"""Jets of ``|x|^p`` and the jump increment operators I^a and J^a.

All jets act on the last axis and broadcast over leading axes.  Powers of a
vanishing norm follow the convention 0/0 := 0: a factor ``|x|^e`` with
``e < 0`` that multiplies a vanishing monomial is taken as 0 at ``x = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError


def _check_p(p: float) -> float:
    p = float(p)
    if not p >= 2:
        raise DomainError(f"p must be >= 2, got {p!r}")
    return p


def norm_power(r: np.ndarray, e: float) -> np.ndarray:
    """``r**e`` for ``r >= 0`` with ``0**e := 0`` for ``e != 0`` and ``0**0 := 1``."""
    r = np.asarray(r, dtype=float)
    if e == 0:
        return np.ones_like(r)
    pos = r > 0
    out = np.zeros_like(r)
    np.power(r, e, out=out, where=pos)
    return out


def p_norm_value(p: float, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return norm_power(np.linalg.norm(x, axis=-1), _check_p(p))


def p_norm_grad(p: float, x) -> np.ndarray:
    """``p |x|^(p-2) x``; the zero vector at ``x = 0``."""
    p = _check_p(p)
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    return p * norm_power(r, p - 2)[..., None] * x


def p_norm_hess(p: float, x) -> np.ndarray:
    """``p(p-2)|x|^(p-4) x x^T + p|x|^(p-2) I``."""
    p = _check_p(p)
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    eye = np.eye(x.shape[-1])
    outer = x[..., :, None] * x[..., None, :]
    radial = p * (p - 2) * norm_power(r, p - 4)[..., None, None] * outer if p != 2 else 0.0 * outer
    return radial + p * norm_power(r, p - 2)[..., None, None] * eye


class Jet:
    """A C^2 function on R^M with value, gradient and Hessian."""

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError


@dataclass(frozen=True)
class PNormJet(Jet):
    p: float

    def __post_init__(self):
        _check_p(self.p)

    def value(self, x):
        return p_norm_value(self.p, x)

    def grad(self, x):
        return p_norm_grad(self.p, x)

    def hess(self, x):
        return p_norm_hess(self.p, x)


@dataclass(frozen=True)
class FunctionJet(Jet):
    """User-supplied jet; each callable must broadcast over leading axes."""

    value_fn: Callable
    grad_fn: Callable
    hess_fn: Callable

    def value(self, x):
        return np.asarray(self.value_fn(np.asarray(x, dtype=float)), dtype=float)

    def grad(self, x):
        return np.asarray(self.grad_fn(np.asarray(x, dtype=float)), dtype=float)

    def hess(self, x):
        return np.asarray(self.hess_fn(np.asarray(x, dtype=float)), dtype=float)


def i_operator(jet: Jet, v, a) -> np.ndarray:
    """``I^a phi(v) = phi(v + a) - phi(v)``."""
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    return jet.value(v + a) - jet.value(v)


def j_operator(jet: Jet, v, a) -> np.ndarray:
    """``J^a phi(v) = I^a phi(v) - D_i phi(v) a^i``, the first-order Taylor remainder."""
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    return i_operator(jet, v, a) - np.sum(jet.grad(v) * a, axis=-1)


def j_constant(p: float) -> float:
    """Constant N(p) with ``|J^a |v|^p| <= N (|v|^(p-2)|a|^2 + |a|^p)``.

    The integral Taylor remainder gives ``|J| <= 1/2 sup_seg |D^2|.|^p|_op |a|^2``
    with operator norm ``p(p-1)|x|^(p-2)``, and
    ``(|v|+|a|)^(p-2) <= max(1, 2^(p-3)) (|v|^(p-2) + |a|^(p-2))``.
    """
    p = _check_p(p)
    return 0.5 * p * (p - 1) * max(1.0, 2.0 ** (p - 3))


def j_bound_check(p: float, v, a) -> tuple[float, float]:
    """Both sides of the J-estimate; ``lhs <= rhs`` must hold."""
    p = _check_p(p)
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    lhs = abs(float(j_operator(PNormJet(p), v, a)))
    nv, na = float(np.linalg.norm(v)), float(np.linalg.norm(a))
    rhs = j_constant(p) * (float(norm_power(nv, p - 2)) * na**2 + na**p)
    return lhs, rhs


def taylor_segment_bound(jet: Jet, v, a, n_samples: int = 64, inflate: float = 1.1) -> float:
    """``sup |D^2 phi|_F |a|^2`` over the segment ``v + theta a``, sampled and inflated.

    A pointwise, computable stand-in for the sup in the Taylor bound of J^a.
    """
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    theta = np.linspace(0.0, 1.0, n_samples)
    pts = v[None, :] + theta[:, None] * a[None, :]
    frob = np.sqrt(np.sum(jet.hess(pts) ** 2, axis=(-2, -1)))
    return inflate * float(frob.max()) * float(a @ a)
