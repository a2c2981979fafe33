"""Kernel smoothing ``v -> v^(eps) = v * k_eps`` on the space grid."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError
from .field import FieldPath, SpaceGrid, _check_support


def bump(r) -> np.ndarray:
    """``exp(-1/(1-r^2))`` on ``|r| < 1``, zero elsewhere."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


@dataclass(frozen=True, eq=False)
class MollKernel:
    """Grid weights of ``k_eps(y) = eps^-d k(y/eps)``, rescaled to sum to exactly one."""

    eps: float
    space: SpaceGrid
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        h = self.space.spacing
        if not np.isfinite(self.eps) or self.eps < 2 * h * (1 - 1e-12):
            raise ConfigurationError(f"eps={self.eps!r} is below two grid spacings ({2 * h!r})")
        radius = int(np.ceil(self.eps / h - 1e-12))
        offs = np.arange(-radius, radius + 1) * h
        mesh = np.meshgrid(*([offs] * self.space.d), indexing="ij")
        r = np.sqrt(sum(m**2 for m in mesh)) / self.eps
        w = bump(r)
        w = w / w.sum()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def radius(self) -> int:
        return self.weights.shape[0] // 2

    def lq_norm(self, q: float) -> float:
        """``|k_eps|_{L_q}`` of the grid density ``weights / cell_volume``."""
        vol = self.space.cell_volume
        dens = self.weights / vol
        if np.isinf(q):
            return float(dens.max())
        return float(np.sum(dens**q) * vol) ** (1.0 / q)


def mollify(values, kernel: MollKernel, check_margin: bool = True) -> np.ndarray:
    """Discrete convolution over the spatial axes of ``(..., *S, M)`` with zero extension."""
    values = np.asarray(values, dtype=float)
    d = kernel.space.d
    if values.ndim < d + 1 or values.shape[values.ndim - 1 - d:-1] != kernel.space.shape:
        raise ConfigurationError("values do not live on the kernel's space grid")
    if check_margin:
        _check_support(values, d, kernel.radius, "field")
    w = kernel.weights.reshape((1,) * (values.ndim - 1 - d) + kernel.weights.shape + (1,))
    return ndimage.correlate(values, w, mode="constant", cval=0.0)


def mollify_pathwise(fp: FieldPath, kernel: MollKernel, check_margin: bool = True) -> FieldPath:
    """Mollify every time slice, left limit and driver sample of a field path."""

    def mol(a):
        return mollify(a, kernel, check_margin) if a.size else a

    f_div = None if fp.f_div is None else mol(fp.f_div)
    return replace(
        fp,
        u=mol(fp.u),
        u_minus=mol(fp.u_minus),
        atom_pre=mol(fp.atom_pre),
        samples=fp.samples.map_space(mol),
        psi=mol(fp.psi),
        f0=mol(fp.f0),
        f_div=f_div,
        drivers=None,
    )
