"""Discrete rough paths on a time grid.

A path lives on a :class:`TimeGrid` as a :class:`GridPath`.  Second-level
data (iterated integrals, areas, cross-areas) is a :class:`TwoIndexMap` that
stores one value per adjacent cell and rebuilds the value on an arbitrary
pair ``(s, t)`` of node indices by folding Chen's relation

    A[s, t] = A[s, u] + A[u, t] + dX[s, u] (x) dY[u, t]

from left to right.  Entry ``(i, j)`` of a second-level value is the
iterated integral of ``dX^i`` followed by ``dY^j``, i.e.
``int_s^t (X^i_r - X^i_s) dY^j_r``.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable

import numpy as np

__all__ = [
    "TimeGrid",
    "GridPath",
    "TwoIndexMap",
    "RoughLift",
    "ExponentEstimate",
    "UndefinedExponentError",
    "make_uniform_grid",
    "increment",
    "chen_defect",
    "chen_defect_sweep",
    "geometric_defect",
    "extend_second_level",
    "lift_smooth_path",
    "holder_seminorm",
    "estimate_holder_exponent",
    "time_augmented_lift",
    "rough_distance",
    "dyadic_triples",
    "dyadic_pairs",
    "pair_values",
    "write_lift_csv",
    "read_lift_csv",
    "write_path_csv",
]

# all pairs are enumerated up to this many cells, dyadic strata beyond
FULL_PAIR_LIMIT = 2**12


class UndefinedExponentError(ValueError):
    """Raised when a Hölder exponent is requested for an all-zero map."""


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing nodes ``0 = t_0 < ... < t_n = T``."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a grid needs at least two nodes")
        if nodes[0] != 0.0:
            raise ValueError("grid must start at t = 0")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("grid nodes must be strictly increasing")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("grid nodes must be finite")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n(self) -> int:
        """Number of cells."""
        return self.nodes.size - 1

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @cached_property
    def dt(self) -> np.ndarray:
        d = np.diff(self.nodes)
        d.setflags(write=False)
        return d

    @cached_property
    def is_uniform(self) -> bool:
        d = self.dt
        return bool(np.allclose(d, d[0], rtol=1e-12, atol=0.0))

    def same_as(self, other: "TimeGrid") -> bool:
        return self is other or (
            self.nodes.shape == other.nodes.shape and np.array_equal(self.nodes, other.nodes)
        )

    def check_index(self, *idx: int) -> None:
        for i in idx:
            if not 0 <= i <= self.n:
                raise IndexError(f"node index {i} outside [0, {self.n}]")

    def coarsen(self, factor: int) -> "TimeGrid":
        """Keep every ``factor``-th node."""
        if factor < 1 or self.n % factor:
            raise ValueError(f"factor {factor} does not divide {self.n} cells")
        return TimeGrid(self.nodes[::factor])

    def __repr__(self):
        return f"TimeGrid(n={self.n}, T={self.T:g})"


def make_uniform_grid(T: float, n: int) -> TimeGrid:
    """Uniform grid with ``n`` cells on ``[0, T]``."""
    if not T > 0:
        raise ValueError(f"horizon must be positive, got {T}")
    if int(n) != n or n < 1:
        raise ValueError(f"cell count must be a positive integer, got {n}")
    n = int(n)
    # k*T/n keeps dyadic inputs exact
    return TimeGrid(np.arange(n + 1, dtype=float) * T / n)


@dataclass(frozen=True, eq=False)
class GridPath:
    """Values of an ``m``-dimensional path at every node of ``grid``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.nodes.size:
            raise ValueError(
                f"values of shape {v.shape} do not match {self.grid.nodes.size} grid nodes"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @cached_property
    def increments(self) -> np.ndarray:
        """Cell increments, shape ``(n, m)``."""
        d = np.diff(self.values, axis=0)
        d.setflags(write=False)
        return d

    def restrict(self, factor: int) -> "GridPath":
        """Subsample onto the grid keeping every ``factor``-th node."""
        return GridPath(self.grid.coarsen(factor), self.values[::factor])

    @classmethod
    def from_function(cls, func: Callable, grid: TimeGrid) -> "GridPath":
        vals = np.asarray([np.atleast_1d(func(t)) for t in grid.nodes], dtype=float)
        return cls(grid, vals)


def increment(path: GridPath, i: int, j: int) -> np.ndarray:
    """``path[j] - path[i]`` for node indices ``i <= j``."""
    if i > j:
        raise ValueError(f"increment needs i <= j, got ({i}, {j})")
    path.grid.check_index(i, j)
    return path.values[j] - path.values[i]


_RULES = ("chen", "additive", "dense")


@dataclass(frozen=True, eq=False)
class TwoIndexMap:
    """Matrix-valued two-index map on a grid.

    ``rule`` selects how pair values are obtained:

    ``"chen"``
        fold the cell values with the cross term ``dX (x) dY`` where ``X`` is
        ``left`` and ``Y`` is ``right`` (first-level node values);
    ``"additive"``
        sum of cell values;
    ``"dense"``
        explicit ``table[s, t]`` for every pair; used for cross-tool
        verification and fault injection, ``cells`` mirror the diagonal.
    """

    grid: TimeGrid
    cells: np.ndarray
    rule: str = "chen"
    left: np.ndarray | None = None
    right: np.ndarray | None = None
    table: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.rule not in _RULES:
            raise ValueError(f"unknown composition rule {self.rule!r}")
        cells = np.asarray(self.cells, dtype=float)
        if cells.ndim != 3 or cells.shape[0] != self.grid.n:
            raise ValueError(f"cells must have shape (n, m, m'), got {cells.shape}")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        if self.rule == "chen":
            if self.left is None:
                raise ValueError("chen composition needs first-level values")
            left = np.asarray(self.left, dtype=float)
            right = left if self.right is None else np.asarray(self.right, dtype=float)
            m, m2 = cells.shape[1:]
            if left.shape != (self.grid.n + 1, m) or right.shape != (self.grid.n + 1, m2):
                raise ValueError("first-level values do not match the cell shape")
            object.__setattr__(self, "left", left)
            object.__setattr__(self, "right", right)
        if self.rule == "dense":
            tab = np.asarray(self.table, dtype=float)
            n1 = self.grid.n + 1
            if tab.shape != (n1, n1) + cells.shape[1:]:
                raise ValueError("dense table must have shape (n+1, n+1, m, m')")
            object.__setattr__(self, "table", tab)

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape[1], self.cells.shape[2]

    @cached_property
    def _left_inc(self):
        return np.diff(self.left, axis=0)

    @cached_property
    def _right_inc(self):
        return np.diff(self.right, axis=0)

    def value(self, s: int, t: int, method: str = "sequential") -> np.ndarray:
        """Pair value for node indices ``s <= t``."""
        return extend_second_level(self, None, s, t, method=method)

    def row(self, s: int) -> np.ndarray:
        """Values at ``(s, t)`` for every ``t = s, ..., n``; shape ``(n-s+1, m, m')``."""
        self.grid.check_index(s)
        out = np.zeros((self.grid.n - s + 1,) + self.shape)
        if self.rule == "dense":
            return self.table[s, s:].copy()
        terms = self.cells[s:]
        if self.rule == "chen":
            base = self.left[s:-1] - self.left[s]
            terms = terms + base[:, :, None] * self._right_inc[s:, None, :]
        np.cumsum(terms, axis=0, out=out[1:])
        return out

    def to_dense(self) -> "TwoIndexMap":
        n1 = self.grid.n + 1
        tab = np.zeros((n1, n1) + self.shape)
        for s in range(n1):
            tab[s, s:] = self.row(s)
        return TwoIndexMap(self.grid, self.cells, rule="dense", table=tab)

    def with_corrupted_pair(self, s: int, t: int, eps) -> "TwoIndexMap":
        """Dense copy with ``eps`` added to the single pair ``(s, t)``."""
        dense = self if self.rule == "dense" else self.to_dense()
        tab = dense.table.copy()
        tab[s, t] += eps
        cells = dense.cells.copy()
        if t == s + 1:
            cells[s] += eps
        return TwoIndexMap(self.grid, cells, rule="dense", table=tab)

    def scaled(self, c: float) -> "TwoIndexMap":
        """``c`` times the map (for additive/dense maps, or Chen maps with scaled paths)."""
        if self.rule == "chen":
            raise ValueError("scaling a Chen map requires rescaling its first level")
        tab = None if self.table is None else c * self.table
        return TwoIndexMap(self.grid, c * self.cells, rule=self.rule, table=tab)


def _cross(a, b):
    return a[:, None] * b[None, :]


def extend_second_level(
    map: TwoIndexMap,
    first: GridPath | None,
    s: int,
    t: int,
    method: str = "sequential",
) -> np.ndarray:
    """Rebuild ``map[s, t]`` from cell values.

    ``first`` overrides the map's own first level (both sides) for Chen maps.
    ``method="sequential"`` folds cells left to right; ``"balanced"`` splits
    the interval recursively at its midpoint.
    """
    if s > t:
        raise ValueError(f"pair needs s <= t, got ({s}, {t})")
    map.grid.check_index(s, t)
    if map.rule == "dense":
        return map.table[s, t].copy()
    if s == t:
        return np.zeros(map.shape)
    if map.rule == "additive":
        return map.cells[s:t].sum(axis=0)

    if first is not None:
        left = right = first.values
    else:
        left, right = map.left, map.right

    if method == "sequential":
        base = left[s:t] - left[s]
        inc = right[s + 1 : t + 1] - right[s:t]
        terms = map.cells[s:t] + base[:, :, None] * inc[:, None, :]
        # cumsum accumulates strictly left to right
        return np.cumsum(terms, axis=0)[-1]
    if method == "balanced":

        def fold(a, b):
            if b == a + 1:
                return map.cells[a].copy()
            mid = (a + b) // 2
            return fold(a, mid) + fold(mid, b) + _cross(left[mid] - left[a], right[b] - right[mid])

        return fold(s, t)
    raise ValueError(f"unknown fold method {method!r}")


@dataclass(frozen=True, eq=False)
class RoughLift:
    """First-level path plus its Chen-composed second level."""

    first: GridPath
    second: TwoIndexMap
    alpha: float = 0.5

    def __post_init__(self):
        if not (1.0 / 3.0 < self.alpha <= 0.5):
            raise ValueError(f"alpha must lie in (1/3, 1/2], got {self.alpha}")
        if not self.first.grid.same_as(self.second.grid):
            raise ValueError("first and second level live on different grids")
        m = self.first.dim
        if self.second.shape != (m, m):
            raise ValueError(f"second level of shape {self.second.shape} for a {m}-dim path")

    @property
    def grid(self) -> TimeGrid:
        return self.first.grid

    @property
    def dim(self) -> int:
        return self.first.dim

    @cached_property
    def holder_constants(self) -> tuple[float, float]:
        """Empirical ``([Z]_alpha, [ZZ]_{2 alpha})`` over grid pairs."""
        return (
            holder_seminorm(self.first, self.alpha),
            holder_seminorm(self.second, 2 * self.alpha),
        )

    def pair(self, s: int, t: int) -> tuple[np.ndarray, np.ndarray]:
        return increment(self.first, s, t), self.second.value(s, t)

    def pairs(self, s, t) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised :meth:`pair` over index arrays."""
        return pair_values(self.first, s, t), pair_values(self.second, s, t)

    def replace_second(self, second: TwoIndexMap) -> "RoughLift":
        return RoughLift(self.first, second, self.alpha)


def chen_defect(lift: RoughLift, s: int, theta: int, t: int) -> np.ndarray:
    """``ZZ[s,t] - ZZ[s,theta] - ZZ[theta,t] - dZ[s,theta] (x) dZ[theta,t]``."""
    if not s < theta < t:
        raise ValueError(f"need s < theta < t, got ({s}, {theta}, {t})")
    z = lift.first
    A = lift.second
    return (
        A.value(s, t)
        - A.value(s, theta)
        - A.value(theta, t)
        - _cross(increment(z, s, theta), increment(z, theta, t))
    )


def chen_defect_sweep(lift: RoughLift, triples=None) -> tuple[float, tuple[int, int, int] | None]:
    """Largest ``|chen_defect|`` over ``triples`` (all dyadic triples by default) and where it occurs."""
    triples = dyadic_triples(lift.grid.n) if triples is None else triples
    worst, where = 0.0, None
    for tr in triples:
        v = float(np.max(np.abs(chen_defect(lift, *tr))))
        if where is None or v > worst:
            worst, where = v, tuple(int(i) for i in tr)
    return worst, where


def geometric_defect(lift: RoughLift) -> tuple[float, tuple[int, int] | None]:
    """Largest ``|Sym(ZZ[s,t]) - dZ (x) dZ / 2|`` over all pairs and the pair attaining it."""
    v = lift.first.values
    worst, where = 0.0, None
    for s in range(lift.grid.n):
        A = lift.second.row(s)[1:]
        d = v[s + 1 :] - v[s]
        err = np.abs(0.5 * (A + np.swapaxes(A, 1, 2)) - 0.5 * d[:, :, None] * d[:, None, :])
        k = int(np.argmax(err.reshape(len(d), -1).max(axis=1)))
        e = float(err[k].max())
        if where is None or e > worst:
            worst, where = e, (s, s + 1 + k)
    return worst, where


def _lift_cells(vals: np.ndarray) -> np.ndarray:
    inc = np.diff(vals, axis=0)
    return 0.5 * inc[:, :, None] * inc[:, None, :]


def lift_smooth_path(
    path: GridPath,
    subdivision: int = 1,
    func: Callable[[float], np.ndarray] | None = None,
    alpha: float = 0.5,
) -> RoughLift:
    """Geometric lift of a path that is linear between nodes.

    One linear segment contributes ``dZ (x) dZ / 2``.  With ``func`` and
    ``subdivision > 1`` every cell is refined into ``subdivision`` linear
    pieces of the smooth path ``func`` before its area is taken; without
    ``func`` refinement reproduces the same linear segments.
    """
    if subdivision < 1:
        raise ValueError("subdivision must be >= 1")
    if subdivision == 1 or func is None:
        cells = _lift_cells(path.values)
    else:
        nodes = path.grid.nodes
        m = path.dim
        cells = np.empty((path.grid.n, m, m))
        frac = np.linspace(0.0, 1.0, subdivision + 1)
        for k in range(path.grid.n):
            ts = nodes[k] + frac * (nodes[k + 1] - nodes[k])
            sub = np.asarray([np.atleast_1d(func(t)) for t in ts], dtype=float)
            # pin endpoints to the stored first level so Chen stays exact
            sub[0], sub[-1] = path.values[k], path.values[k + 1]
            inc = np.diff(sub, axis=0)
            base = sub[:-1] - sub[0]
            cells[k] = (0.5 * inc[:, :, None] * inc[:, None, :] + base[:, :, None] * inc[:, None, :]).sum(0)
    second = TwoIndexMap(path.grid, cells, rule="chen", left=path.values)
    return RoughLift(path, second, alpha)


def time_augmented_lift(lift: RoughLift) -> RoughLift:
    """Lift of ``(t, Z_t)``; index 0 is time.

    Per linear cell: ``int dt dt = dt^2/2``, ``int (r-s) dZ = dt dZ/2`` and
    ``int dZ dr = dZ dt/2``; the ``Z`` block keeps the original cells.
    """
    grid = lift.grid
    t = grid.nodes[:, None]
    vals = np.hstack([t, lift.first.values])
    m = lift.dim
    dt = grid.dt
    dz = lift.first.increments
    cells = np.zeros((grid.n, m + 1, m + 1))
    cells[:, 0, 0] = 0.5 * dt**2
    cells[:, 0, 1:] = 0.5 * dt[:, None] * dz
    cells[:, 1:, 0] = 0.5 * dz * dt[:, None]
    cells[:, 1:, 1:] = lift.second.cells
    first = GridPath(grid, vals)
    return RoughLift(first, TwoIndexMap(grid, cells, rule="chen", left=vals), lift.alpha)


# ---------------------------------------------------------------------------
# Hölder seminorms and exponent regression


def _as_row_source(g, grid: TimeGrid | None):
    """Normalise ``g`` into ``(grid, row(s) -> array (n-s+1, ...), pair(s, t))``."""
    if isinstance(g, GridPath):
        v = g.values
        return g.grid, (lambda s: v[s:] - v[s]), (lambda s, t: v[t] - v[s])
    if isinstance(g, TwoIndexMap):
        return g.grid, g.row, g.value
    if callable(g):
        if grid is None:
            raise ValueError("a callable map needs an explicit grid")

        def row(s):
            return np.array([np.asarray(g(s, t), dtype=float) for t in range(s, grid.n + 1)])

        return grid, row, g
    raise TypeError(f"cannot interpret {type(g).__name__} as a two-index map")


def _norms(vals: np.ndarray) -> np.ndarray:
    v = vals.reshape(vals.shape[0], -1)
    return np.sqrt(np.einsum("ij,ij->i", v, v))


def holder_seminorm(g, alpha: float, grid: TimeGrid | None = None) -> float:
    """``max |g[s,t]| / |t-s|^alpha`` over grid pairs.

    All pairs are visited up to ``FULL_PAIR_LIMIT`` cells; beyond that only
    pairs at dyadic separations (every start node) are used.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    grid, row, _ = _as_row_source(g, grid)
    nodes = grid.nodes
    n = grid.n
    best = 0.0
    if n <= FULL_PAIR_LIMIT:
        for s in range(n):
            r = row(s)[1:]
            h = nodes[s + 1 :] - nodes[s]
            best = max(best, float(np.max(_norms(r) / h**alpha)))
        return best
    seps = 2 ** np.arange(int(math.log2(n)) + 1)
    seps = seps[seps <= n]
    for s in range(n):
        r = row(s)
        ok = seps[seps <= n - s]
        h = nodes[s + ok] - nodes[s]
        best = max(best, float(np.max(_norms(r[ok]) / h**alpha)))
    return best


@dataclass(frozen=True)
class ExponentEstimate:
    """Least-squares slope of a per-scale magnitude of ``|g|`` against ``log h``."""

    slope: float
    intercept: float
    scales: np.ndarray
    magnitudes: np.ndarray
    statistic: str = "logmean"

    @property
    def constant(self) -> float:
        return math.exp(self.intercept)


def dyadic_pairs(n: int, sep: int) -> tuple[np.ndarray, np.ndarray]:
    """Start/end indices of the non-overlapping intervals of ``sep`` cells."""
    s = np.arange(0, n - sep + 1, sep)
    return s, s + sep


def dyadic_triples(n: int) -> list[tuple[int, int, int]]:
    """Every dyadic interval of a ``2^K``-cell grid split at its midpoint."""
    if n & (n - 1):
        raise ValueError("dyadic triples need a power-of-two cell count")
    out = []
    sep = n
    while sep >= 2:
        for s in range(0, n, sep):
            out.append((s, s + sep // 2, s + sep))
        sep //= 2
    return out


def _default_levels(n: int) -> range:
    K = int(round(math.log2(n)))
    return range(2, max(K - 2, 2) + 1)


def pair_values(g, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Evaluate a map on index arrays ``s``, ``t``; rows follow the pair order.

    Chen maps use the prefix identity ``A[s,t] = A[0,t] - A[0,s] - dX[0,s] (x) dY[s,t]``.
    A callable is evaluated pair by pair unless it sets ``vectorized = True``.
    """
    s = np.asarray(s, dtype=int)
    t = np.asarray(t, dtype=int)
    if isinstance(g, GridPath):
        return g.values[t] - g.values[s]
    if isinstance(g, TwoIndexMap):
        if g.rule == "dense":
            return g.table[s, t]
        S = g.row(0)
        if g.rule == "additive":
            return S[t] - S[s]
        base = g.left[s] - g.left[0]
        inc = g.right[t] - g.right[s]
        return S[t] - S[s] - base[:, :, None] * inc[:, None, :]
    if getattr(g, "vectorized", False):
        return np.asarray(g(s, t), dtype=float)
    return np.array([np.asarray(g(int(a), int(b)), dtype=float) for a, b in zip(s, t)])


_STATISTICS = ("logmean", "median", "rms", "max")


def estimate_holder_exponent(
    g,
    grid: TimeGrid | None = None,
    levels: Iterable[int] | None = None,
    statistic: str = "logmean",
    pairs: str = "all",
) -> ExponentEstimate:
    """Regress a per-scale magnitude of ``|g[s,t]|`` on ``log h`` for ``h = T / 2^k``.

    ``levels`` defaults to ``k = 2 .. log2(n) - 2``.  At each scale the pairs
    are either every start node (``pairs="all"``) or the non-overlapping
    dyadic intervals (``"dyadic"``).  ``statistic`` is the mean of
    ``log |g|`` (``"logmean"``, a pooled log-log fit), the median, the root
    mean square, or the maximum; the maximum over many intervals picks up a
    ``sqrt(log(1/h))`` factor on Gaussian paths and biases the slope down.

    ``g`` may be a :class:`TwoIndexMap`, a :class:`GridPath` (increments) or a
    callable ``g(s, t)`` on node indices together with ``grid``.
    """
    if statistic not in _STATISTICS:
        raise ValueError(f"statistic must be one of {_STATISTICS}")
    if isinstance(g, (GridPath, TwoIndexMap)):
        grid = g.grid
    elif not (callable(g) and grid is not None):
        raise TypeError("need a map, a path, or a callable with a grid")
    n = grid.n
    if n & (n - 1) or not grid.is_uniform:
        raise ValueError("exponent regression needs a uniform 2^K-cell grid")
    levels = list(_default_levels(n) if levels is None else levels)
    if len(levels) < 2:
        raise ValueError("need at least two dyadic scales")
    scales, mags = [], []
    for k in levels:
        sep = n >> k
        if sep < 1:
            raise ValueError(f"level {k} is finer than the grid")
        if pairs == "all":
            s_idx = np.arange(n - sep + 1)
            t_idx = s_idx + sep
        elif pairs == "dyadic":
            s_idx, t_idx = dyadic_pairs(n, sep)
        else:
            raise ValueError("pairs must be 'all' or 'dyadic'")
        v = _norms(np.atleast_2d(pair_values(g, s_idx, t_idx)).reshape(len(s_idx), -1))
        if not np.any(v > 0):
            raise UndefinedExponentError(f"map vanishes at scale 2^-{k}; exponent undefined")
        if statistic == "max":
            mags.append(float(v.max()))
        elif statistic == "median":
            mags.append(float(np.median(v)))
        elif statistic == "rms":
            mags.append(float(np.sqrt(np.mean(v**2))))
        else:
            # exact zeros (e.g. cancelling pairs) are floored, not dropped
            mags.append(float(np.exp(np.mean(np.log(np.maximum(v, 1e-300))))))
        scales.append(grid.T / 2**k)
    scales = np.asarray(scales)
    mags = np.asarray(mags)
    slope, intercept = np.polyfit(np.log(scales), np.log(mags), 1)
    return ExponentEstimate(float(slope), float(intercept), scales, mags, statistic)


def rough_distance(a: RoughLift, b: RoughLift, alpha: float | None = None) -> float:
    """Inhomogeneous metric ``[Z - W]_alpha + [ZZ - WW]_{2 alpha}`` over grid pairs."""
    if not a.grid.same_as(b.grid):
        raise ValueError("lifts live on different grids")
    alpha = min(a.alpha, b.alpha) if alpha is None else alpha
    diff_first = GridPath(a.grid, a.first.values - b.first.values)
    grid = a.grid

    def row(s):
        return a.second.row(s) - b.second.row(s)

    nodes = grid.nodes
    best = 0.0
    for s in range(grid.n):
        r = row(s)[1:]
        h = nodes[s + 1 :] - nodes[s]
        best = max(best, float(np.max(_norms(r) / h ** (2 * alpha))))
    return holder_seminorm(diff_first, alpha) + best


# ---------------------------------------------------------------------------
# CSV exchange format
#
# columns: node, time, z0..z{m-1}, a_i_j (row-major, per cell [t_k, t_{k+1}]);
# the final node row leaves the second-level columns empty.


def _fmt(x: float) -> str:
    return repr(float(x))


def _open_out(dest):
    if isinstance(dest, (str, os.PathLike)):
        return open(dest, "w", newline=""), True
    return dest, False


def write_path_csv(path: GridPath, dest) -> None:
    fh, close = _open_out(dest)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "time"] + [f"z{i}" for i in range(path.dim)])
        for k, (t, v) in enumerate(zip(path.grid.nodes, path.values)):
            w.writerow([k, _fmt(t)] + [_fmt(x) for x in v])
    finally:
        if close:
            fh.close()


def write_lift_csv(lift: RoughLift, dest) -> None:
    """Write ``lift`` in the columnar exchange format."""
    m = lift.dim
    fh, close = _open_out(dest)
    try:
        w = csv.writer(fh, lineterminator="\n")
        area_cols = [f"a_{i}_{j}" for i in range(m) for j in range(m)]
        w.writerow(["node", "time"] + [f"z{i}" for i in range(m)] + area_cols)
        cells = lift.second.cells
        n = lift.grid.n
        for k in range(n + 1):
            row = [k, _fmt(lift.grid.nodes[k])] + [_fmt(x) for x in lift.first.values[k]]
            if k < n:
                row += [_fmt(x) for x in cells[k].ravel()]
            else:
                row += [""] * (m * m)
            w.writerow(row)
    finally:
        if close:
            fh.close()


def read_lift_csv(src, alpha: float = 0.5) -> RoughLift:
    """Inverse of :func:`write_lift_csv`."""
    if isinstance(src, (str, os.PathLike)):
        with open(src, newline="") as fh:
            text = fh.read()
    else:
        text = src.read()
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    m = sum(1 for h in header if h.startswith("z"))
    if len(header) != 2 + m + m * m:
        raise ValueError("header does not describe a square second level")
    times = np.array([float(r[1]) for r in body])
    vals = np.array([[float(x) for x in r[2 : 2 + m]] for r in body])
    cells = np.array([[float(x) for x in r[2 + m :]] for r in body[:-1]]).reshape(-1, m, m)
    grid = TimeGrid(times)
    first = GridPath(grid, vals)
    return RoughLift(first, TwoIndexMap(grid, cells, rule="chen", left=vals), alpha)
