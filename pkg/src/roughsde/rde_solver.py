"""Davie-scheme solvers for rough differential equations with drift.

One Davie step over ``(s, t)`` is the local expansion

    x + u(s, x) (t - s) + beta_j(x) dZ^j + D beta_j(x) beta_i(x) ZZ^{ij}

with ``ZZ^{ij} = int dZ^i dZ^j``.  The same step drives the joint equation
``dX = e_i dB^i + beta_j(X) dZ^j`` over the lift of ``(B, Z)``, and an
Euler-Maruyama scheme serves as the classical reference for smooth drivers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import VectorFieldSet, with_identity_block
from .rough_core import (
    ExponentEstimate,
    GridPath,
    RoughLift,
    TimeGrid,
    UndefinedExponentError,
    estimate_holder_exponent,
)
from .stochastic_drivers import joint_cell

__all__ = [
    "SolverConfig",
    "DivergenceError",
    "RemainderReport",
    "davie_step",
    "split_cell",
    "solve_rde",
    "solve_driftless_joint",
    "joint_scan",
    "remainder_orders",
    "euler_maruyama_reference",
    "euler_maruyama_scan",
]


class DivergenceError(FloatingPointError):
    """The state became non-finite; ``step`` is the offending cell index."""

    def __init__(self, step: int, state: np.ndarray):
        self.step = step
        self.state = np.asarray(state)
        super().__init__(f"solution diverged at step {step}; last finite state {self.state}")

    def record(self) -> dict:
        return {"step": self.step, "last_state": self.state.tolist()}


@dataclass(frozen=True)
class SolverConfig:
    """``substeps`` splits every cell into equal sub-cells that compose back to the cell's lift value."""

    nu: float = 0.5
    grid: TimeGrid | None = None
    x0: np.ndarray | None = None
    substeps: int = 1

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("nu must be non-negative")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError("substeps must be a positive integer")

    @property
    def sigma(self) -> float:
        return float(np.sqrt(2.0 * self.nu))


def _expansion(fields: VectorFieldSet, t, x, dt, dz, area):
    V = fields.fields(x)
    Jc = fields.jac(x)
    step = np.einsum("...aj,...j->...a", V, dz)
    step = step + np.einsum("...jab,...bi,...ij->...a", Jc, V, area)
    if dt is not None:
        step = fields.u(t, x) * dt + step
    return step


def davie_step(x, s: int, t: int, lift: RoughLift, fields: VectorFieldSet) -> np.ndarray:
    """One Davie step from node ``s`` to node ``t`` using the lift's pair value."""
    x = np.asarray(x, dtype=float)
    if lift.dim != fields.n_fields:
        raise ValueError(f"lift has dimension {lift.dim} but there are {fields.n_fields} fields")
    dz, area = lift.pair(s, t)
    nodes = lift.grid.nodes
    out = x + _expansion(fields, nodes[s], x, nodes[t] - nodes[s], dz, area)
    if not np.all(np.isfinite(out)):
        raise DivergenceError(s, x)
    return out


def split_cell(dz: np.ndarray, area: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """First and second level of one of ``r`` equal sub-cells.

    The sub-cell carries ``dz / r`` with area ``sym(dz/r) + (area - sym(dz)) / r``;
    Chen-composing ``r`` copies returns ``(dz, area)`` exactly in exact arithmetic.
    """
    sub = dz / r
    half = 0.5 * np.multiply.outer(dz, dz)
    return sub, 0.5 * np.multiply.outer(sub, sub) + (area - half) / r


def _scan(x0, times, cell, fields, record, with_drift=True, raise_on_divergence=False):
    """Iterate Davie steps; ``cell(k)`` returns the first and second level of cell ``k``.

    Rows that turn non-finite are frozen at NaN and reported in the mask.
    """
    x = np.array(x0, dtype=float)
    n = times.size - 1
    path = np.empty((n + 1,) + x.shape) if record else None
    if record:
        path[0] = x
    bad = np.zeros(x.shape[:-1], dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            dz, area = cell(k)
            dt = times[k + 1] - times[k] if with_drift else None
            new = x + _expansion(fields, times[k], x, dt, dz, area)
            fin = np.all(np.isfinite(new), axis=-1)
            if not np.all(fin):
                if raise_on_divergence:
                    raise DivergenceError(k, x)
                bad |= ~fin
                new[~fin] = np.nan
            x = new
            if record:
                path[k + 1] = x
    return (path if record else x), bad


def solve_rde(
    x0,
    lift: RoughLift,
    fields: VectorFieldSet,
    config: SolverConfig | None = None,
) -> GridPath:
    """Davie scheme for ``dX = u(t, X) dt + beta_j(X) dZ^j`` over every grid cell.

    With ``config.substeps = r > 1`` each cell is traversed in ``r`` Davie
    steps over :func:`split_cell` pieces and only node values are kept.
    Raises :class:`DivergenceError` carrying the step index and last finite state.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (fields.dim,):
        raise ValueError(f"initial state must have shape ({fields.dim},)")
    if lift.dim != fields.n_fields:
        raise ValueError(f"lift has dimension {lift.dim} but there are {fields.n_fields} fields")
    dz = lift.first.increments
    cells = lift.second.cells
    r = 1 if config is None else int(config.substeps)
    if r == 1:
        path, _ = _scan(
            x0, lift.grid.nodes, lambda k: (dz[k], cells[k]), fields, record=True, raise_on_divergence=True
        )
        return GridPath(lift.grid, path)
    nodes = lift.grid.nodes
    frac = np.arange(r) / r
    times = np.append((nodes[:-1, None] + frac * lift.grid.dt[:, None]).ravel(), nodes[-1])
    pieces = [split_cell(dz[k], cells[k], r) for k in range(lift.grid.n)]
    try:
        path, _ = _scan(x0, times, lambda k: pieces[k // r], fields, record=True, raise_on_divergence=True)
    except DivergenceError as err:
        raise DivergenceError(err.step // r, err.state) from None
    return GridPath(lift.grid, path[::r])


def solve_driftless_joint(
    x0,
    jlift: RoughLift,
    beta: VectorFieldSet,
    nu: float = 0.5,
) -> GridPath:
    """Solve ``dX = sqrt(2 nu) e_i dB^i + beta_j(X) dZ^j`` over a joint lift (Brownian block first)."""
    d = beta.dim
    if jlift.dim != d + beta.n_fields:
        raise ValueError("joint lift dimension does not match d + J")
    fields = with_identity_block(beta.without_drift(), np.sqrt(2.0 * nu))
    return solve_rde(x0, jlift, fields)


def joint_scan(
    x0,
    zlift: RoughLift,
    dB: np.ndarray,
    beta: VectorFieldSet,
    convention: str = "ito",
    nu: float = 0.5,
    record: bool = False,
):
    """Batched :func:`solve_driftless_joint` for Brownian increments ``dB`` of shape ``(N, n, d)``.

    Cells are built on the fly with :func:`joint_cell`, so row ``k`` agrees
    with ``solve_driftless_joint`` on ``joint_lift(zlift, B_k)`` bitwise.
    Returns ``(states, diverged)`` where states are ``(n+1, N, d)`` if
    ``record`` else the terminal ``(N, d)``.
    """
    N, n, d = dB.shape
    if n != zlift.grid.n or d != beta.dim:
        raise ValueError("Brownian increments do not match the grid or state dimension")
    fields = with_identity_block(beta.without_drift(), np.sqrt(2.0 * nu))
    dz = zlift.first.increments
    zz = zlift.second.cells
    dt = zlift.grid.dt
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (N, d))

    def cell(k):
        return joint_cell(dB[:, k], dz[k], zz[k], dt[k], convention)

    return _scan(x0, zlift.grid.nodes, cell, fields, record, with_drift=False)


# ---------------------------------------------------------------------------
# remainder orders


@dataclass(frozen=True)
class RemainderReport:
    estimate: ExponentEstimate | None
    passed: bool
    threshold: float
    exact: bool = False
    max_remainder: float = 0.0

    @property
    def slope(self) -> float:
        return float("inf") if self.estimate is None else self.estimate.slope


def remainder_orders(
    X: GridPath,
    lift: RoughLift,
    fields: VectorFieldSet,
    levels=None,
    threshold: float = 1.05,
    atol: float = 1e-13,
    statistic: str = "logmean",
) -> RemainderReport:
    """Measure the order of ``X♮[s,t] = dX - int u - beta(X_s) dZ - D beta beta(X_s) ZZ``.

    The drift integral is the left-point sum along the stored path.  A
    remainder below ``atol`` on every scale is reported as exact (passes).
    """
    grid = lift.grid
    if not grid.same_as(X.grid):
        raise ValueError("solution and lift live on different grids")
    nodes = grid.nodes
    vals = X.values
    drift = np.stack([fields.u(nodes[k], vals[k]) for k in range(grid.n)])
    drift_cum = np.zeros_like(vals)
    np.cumsum(drift * grid.dt[:, None], axis=0, out=drift_cum[1:])

    def remainder(s, t):
        dz, area = lift.pairs(s, t)
        x = vals[s]
        local = _expansion(fields, nodes[s], x, None, dz, area)
        return vals[t] - vals[s] - (drift_cum[t] - drift_cum[s]) - local

    remainder.vectorized = True

    try:
        est = estimate_holder_exponent(remainder, grid, levels, statistic=statistic)
    except UndefinedExponentError:
        return RemainderReport(None, True, threshold, exact=True)
    top = float(np.max(np.abs(remainder(np.arange(grid.n), np.arange(1, grid.n + 1)))))
    top = max(top, float(est.magnitudes.max()))
    if top <= atol:
        return RemainderReport(None, True, threshold, exact=True, max_remainder=top)
    return RemainderReport(est, est.slope > threshold, threshold, max_remainder=top)


# ---------------------------------------------------------------------------
# Euler-Maruyama reference for smooth drivers


def euler_maruyama_scan(x0, fields: VectorFieldSet, grid: TimeGrid, dz, dB, nu=0.5, record=False):
    """``X_{k+1} = X_k + u dt + sqrt(2 nu) dB_k + beta_j(X_k) dZ^j_k``, batched over ``dB``'s first axis."""
    times = grid.nodes
    sigma = np.sqrt(2.0 * nu)
    x = np.array(np.broadcast_to(np.asarray(x0, dtype=float), dB.shape[:-2] + (fields.dim,)))
    path = np.empty((grid.n + 1,) + x.shape) if record else None
    if record:
        path[0] = x
    bad = np.zeros(x.shape[:-1], dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(grid.n):
            dt = times[k + 1] - times[k]
            b = fields.fields(x)
            x = x + fields.u(times[k], x) * dt + sigma * dB[..., k, :] + np.einsum("...aj,j->...a", b, dz[k])
            fin = np.all(np.isfinite(x), axis=-1)
            bad |= ~fin
            if record:
                path[k + 1] = x
    return (path if record else x), bad


def euler_maruyama_reference(
    x0,
    fields: VectorFieldSet,
    Z: GridPath,
    B: GridPath,
    nu: float = 0.5,
) -> GridPath:
    """Euler-Maruyama for ``dX = u dt + sqrt(2 nu) dB + beta_j(X) dZ^j`` with ``Z`` linear per cell."""
    if not Z.grid.same_as(B.grid):
        raise ValueError("Z and B must share a grid")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    path, bad = euler_maruyama_scan(x0, fields, Z.grid, Z.increments, B.increments, nu, record=True)
    if bad:
        step = int(np.argmax(~np.all(np.isfinite(path), axis=-1))) - 1
        raise DivergenceError(step, path[step])
    return GridPath(Z.grid, path)
