"""Discrete sewing of germs on a fixed grid.

On a finite grid the sewing map is realised at the finest partition: the
sewn path is the running sum of the germ over adjacent cells and the
remainder is what the germ misses on a longer pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fields import VectorFieldSet
from .rough_core import GridPath, RoughLift, TimeGrid

__all__ = ["Germ", "sew", "coherence_defect", "rough_integral_germ"]


@dataclass(frozen=True)
class Germ:
    """Local expansion ``g(s, t)`` on node indices, with its claimed coherence order."""

    evaluator: Callable[[int, int], np.ndarray]
    claimed_zeta: float = 1.0
    dim: int | None = None

    def __call__(self, s: int, t: int) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.evaluator(s, t), dtype=float))


def sew(germ: Germ, grid: TimeGrid) -> tuple[GridPath, Callable[[int, int], np.ndarray]]:
    """Return ``(I(g), remainder)`` with ``I(g)_{t_k} = sum_{j<k} g(t_j, t_{j+1})``.

    ``remainder(s, t) = I(g)_t - I(g)_s - g(s, t)``; it vanishes on adjacent pairs.
    """
    cells = np.stack([germ(k, k + 1) for k in range(grid.n)])
    vals = np.zeros((grid.n + 1,) + cells.shape[1:])
    np.cumsum(cells, axis=0, out=vals[1:])
    path = GridPath(grid, vals)

    def remainder(s: int, t: int) -> np.ndarray:
        if s > t:
            raise ValueError("remainder needs s <= t")
        if t == s + 1:
            return np.zeros(vals.shape[1:])
        return vals[t] - vals[s] - germ(s, t)

    return path, remainder


def coherence_defect(germ: Germ, s: int, theta: int, t: int) -> np.ndarray:
    """``g(s, t) - g(s, theta) - g(theta, t)``."""
    if not s < theta < t:
        raise ValueError(f"need s < theta < t, got ({s}, {theta}, {t})")
    return germ(s, t) - germ(s, theta) - germ(theta, t)


def rough_integral_germ(X: GridPath, fields: VectorFieldSet, lift: RoughLift, zeta: float | None = None) -> Germ:
    """Germ ``beta_j(X_s) dZ^j[s,t] + D beta_j(X_s) beta_i(X_s) ZZ^{ij}[s,t]`` of ``int beta(X) dZ``."""
    if not X.grid.same_as(lift.grid):
        raise ValueError("path and lift must share a grid")
    if X.dim != fields.dim or lift.dim != fields.n_fields:
        raise ValueError("dimension mismatch between path, fields and lift")
    vals = X.values

    def g(s, t):
        dz, area = lift.pair(s, t)
        x = vals[s]
        V = fields.fields(x)
        Jc = fields.jac(x)
        return V @ dz + np.einsum("jab,bi,ij->a", Jc, V, area)

    return Germ(g, claimed_zeta=3 * lift.alpha if zeta is None else zeta, dim=fields.dim)
