"""Feynman-Kac check for smooth drivers in one space dimension.

The forward Kolmogorov equation

    d_t xi = nu xi_xx + (u(t, x) + beta_j(x) Zdot^j_t) xi_x,    xi(0, .) = xi0

is solved by finite differences and compared with ``E[xi0(Y_t^x)]`` where
``Y`` solves the SDE driven by the time-reversed coefficients
``u(t - r, .)`` and ``Z^rev_r = Z_t - Z_{t - r}``.  For time-independent
coefficients the reversal is the identity.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .fields import VectorFieldSet
from .girsanov import euler_maruyama_ensemble, weak_solution_sampler, weighted_expectation
from .rough_core import GridPath, RoughLift, lift_smooth_path, make_uniform_grid
from .stochastic_drivers import RngSpec

__all__ = [
    "PdeConfig",
    "FdSolution",
    "BoundaryWarning",
    "solve_kolmogorov_fd",
    "boundary_margin",
    "fk_estimate",
    "FkRow",
    "FkReport",
    "fk_compare",
]

_SCHEMES = ("implicit", "imex", "explicit")


class BoundaryWarning(UserWarning):
    """The domain may be too narrow for the Dirichlet boundary to be harmless."""


@dataclass(frozen=True)
class PdeConfig:
    """Mesh, horizon and initial datum for the finite-difference solver.

    ``scheme="implicit"`` (default) treats advection and diffusion implicitly;
    ``"imex"`` keeps advection explicit; ``"explicit"`` is forward Euler and
    requires ``dt <= safety * dx^2 / (2 nu)``.
    """

    a: float
    b: float
    dx: float
    dt: float
    T: float
    xi0: Callable[[np.ndarray], np.ndarray]
    nu: float = 0.5
    scheme: str = "implicit"
    safety: float = 0.9

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("domain needs a < b")
        if not (self.dx > 0 and self.dt > 0 and self.T > 0):
            raise ValueError("mesh sizes and horizon must be positive")
        if self.nu < 0:
            raise ValueError("nu must be non-negative")
        if self.scheme not in _SCHEMES:
            raise ValueError(f"scheme must be one of {_SCHEMES}")

    @property
    def n_x(self) -> int:
        return max(2, int(round((self.b - self.a) / self.dx)))

    @property
    def n_t(self) -> int:
        return max(1, int(math.ceil(self.T / self.dt - 1e-9)))

    def halved(self) -> "PdeConfig":
        return replace(self, dx=self.dx / 2, dt=self.dt / 2)


@dataclass(frozen=True, eq=False)
class FdSolution:
    x: np.ndarray
    times: np.ndarray
    values: np.ndarray  # (n_t + 1, n_x + 1)

    def at(self, t: float, x) -> np.ndarray:
        """Linear interpolation in time and space."""
        x = np.asarray(x, dtype=float)
        if not self.times[0] <= t <= self.times[-1] + 1e-12:
            raise ValueError(f"time {t} outside the solved horizon")
        k = min(int(np.searchsorted(self.times, t, side="right")) - 1, self.times.size - 2)
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        lo = np.interp(x, self.x, self.values[k])
        hi = np.interp(x, self.x, self.values[k + 1])
        return (1 - w) * lo + w * hi


def _scalar_beta(fields: VectorFieldSet, x: np.ndarray) -> np.ndarray:
    return fields.fields(x[:, None])[:, 0, :]


def _speed(fields: VectorFieldSet, Z: Callable, t0: float, t1: float, x: np.ndarray) -> np.ndarray:
    """Advection speed on ``[t0, t1]``: ``u`` at the midpoint plus ``beta`` times the cell-mean ``Zdot``."""
    zdot = (np.atleast_1d(Z(t1)) - np.atleast_1d(Z(t0))) / (t1 - t0)
    u = fields.u(0.5 * (t0 + t1), x[:, None])[:, 0]
    return u + _scalar_beta(fields, x) @ zdot


def _check_fields(fields: VectorFieldSet):
    if fields.dim != 1:
        raise ValueError("the finite-difference solver is one-dimensional")


def solve_kolmogorov_fd(cfg: PdeConfig, fields: VectorFieldSet, Z: Callable) -> FdSolution:
    """Solve the forward Kolmogorov equation on ``[a, b]`` with Dirichlet data ``xi0(a), xi0(b)``.

    ``Z`` is a smooth driver given as a function of time; on each time step
    ``Zdot`` is its mean slope.  Central differences in space.
    """
    _check_fields(fields)
    _refuse_rough(Z)
    M, nt = cfg.n_x, cfg.n_t
    x = np.linspace(cfg.a, cfg.b, M + 1)
    dx = x[1] - x[0]
    dt = cfg.T / nt
    times = np.arange(nt + 1) * dt
    nu = cfg.nu
    if cfg.scheme == "explicit" and nu > 0 and dt > cfg.safety * dx**2 / (2 * nu):
        raise ValueError(f"explicit step dt={dt:g} exceeds {cfg.safety} * dx^2 / (2 nu)")
    vals = np.empty((nt + 1, M + 1))
    vals[0] = np.asarray(cfg.xi0(x), dtype=float)
    left, right = vals[0, 0], vals[0, -1]
    xi = x[1:-1]
    diff = nu / dx**2
    for k in range(nt):
        c = _speed(fields, Z, times[k], times[k + 1], xi)
        adv = c / (2 * dx)
        old = vals[k]
        if cfg.scheme == "explicit":
            if np.any(np.abs(c) * dt > 2 * dx) or np.any(np.abs(c) * dx > 2 * nu):
                raise ValueError("explicit step violates the advection stability bound")
            new = old.copy()
            new[1:-1] = old[1:-1] + dt * (
                diff * (old[2:] - 2 * old[1:-1] + old[:-2]) + adv * (old[2:] - old[:-2])
            )
        else:
            lower = -dt * diff * np.ones_like(xi)
            upper = -dt * diff * np.ones_like(xi)
            rhs = old[1:-1].copy()
            if cfg.scheme == "implicit":
                lower = lower + dt * adv
                upper = upper - dt * adv
            else:
                rhs = rhs + dt * adv * (old[2:] - old[:-2])
            rhs[0] -= lower[0] * left
            rhs[-1] -= upper[-1] * right
            ab = np.zeros((3, xi.size))
            ab[0, 1:] = upper[:-1]
            ab[1] = 1 + 2 * dt * diff
            ab[2, :-1] = lower[1:]
            new = np.empty(M + 1)
            new[1:-1] = solve_banded((1, 1), ab, rhs)
            new[0], new[-1] = left, right
        vals[k + 1] = new
    return FdSolution(x, times, vals)


def boundary_margin(cfg: PdeConfig, probe_x: float, speed_bound: float) -> float:
    """Distance to spare under ``|a|, |b| >= |x| + 6 sqrt(2 nu T) + T * speed_bound`` (negative fails)."""
    need = abs(probe_x) + 6 * math.sqrt(2 * cfg.nu * cfg.T) + cfg.T * speed_bound
    return min(abs(cfg.a), abs(cfg.b)) - need


def _refuse_rough(Z):
    if isinstance(Z, (GridPath, RoughLift)) or not callable(Z):
        raise TypeError("Feynman-Kac needs a smooth driver given as a function of time")


def fk_estimate(
    x: float,
    t: float,
    xi0: Callable[[np.ndarray], np.ndarray],
    fields: VectorFieldSet,
    Z: Callable,
    n_samples: int,
    rng: RngSpec,
    n_steps: int = 256,
    method: str = "weak",
    nu: float = 0.5,
    reverse: bool = True,
    workers: int = 1,
) -> tuple[float, float]:
    """Monte Carlo ``E[xi0(Y_t^x)]`` with its standard error.

    ``method="weak"`` uses the Girsanov-weighted driftless sampler,
    ``"em"`` the Euler-Maruyama ensemble.  ``t = 0`` returns ``xi0(x)`` exactly.
    """
    _check_fields(fields)
    _refuse_rough(Z)
    if t < 0:
        raise ValueError("time must be non-negative")
    if t == 0:
        return float(np.asarray(xi0(np.asarray([x], dtype=float)))[0]), 0.0
    grid = make_uniform_grid(t, n_steps)
    r = grid.nodes
    if reverse:
        z_t = np.atleast_1d(Z(t))
        zv = np.stack([z_t - np.atleast_1d(Z(t - rk)) for rk in r])
        base = fields.drift

        def drift(s, y):
            return base(t - s, y)

        fset = fields.with_drift(drift, fields.drift_bound)
    else:
        zv = np.stack([np.atleast_1d(Z(rk)) for rk in r])
        fset = fields
    if zv.shape[1] != fields.n_fields:
        raise ValueError("driver dimension does not match the number of fields")
    path = GridPath(grid, zv)
    if method == "weak":
        ens = weak_solution_sampler([x], fset, lift_smooth_path(path), n_samples, rng, nu=nu, workers=workers)
    elif method == "em":
        ens = euler_maruyama_ensemble([x], fset, path, n_samples, rng, nu=nu, workers=workers)
    else:
        raise ValueError("method must be 'weak' or 'em'")
    return weighted_expectation(ens, lambda p: xi0(p[:, -1, 0]))


@dataclass(frozen=True)
class FkRow:
    x: float
    t: float
    fd_value: float
    mc_value: float
    se: float
    budget: float
    n_se: float = 3.0

    @property
    def passed(self) -> bool:
        return abs(self.mc_value - self.fd_value) <= self.n_se * self.se + self.budget


@dataclass(frozen=True)
class FkReport:
    rows: list
    boundary_ok: bool

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_csv(self, dest) -> None:
        close = isinstance(dest, (str, os.PathLike))
        fh = open(dest, "w", newline="") if close else dest
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "t", "fd_value", "mc_value", "se", "budget", "pass"])
            for r in self.rows:
                w.writerow(
                    [repr(r.x), repr(r.t)]
                    + [repr(float(v)) for v in (r.fd_value, r.mc_value, r.se, r.budget)]
                    + [int(r.passed)]
                )
        finally:
            if close:
                fh.close()


def fk_compare(
    probes: Sequence[tuple[float, float]],
    cfg: PdeConfig,
    fields: VectorFieldSet,
    Z: Callable,
    n_samples: int,
    rng: RngSpec,
    n_steps: int = 256,
    method: str = "weak",
    pde_fields: VectorFieldSet | None = None,
    n_se: float = 3.0,
    workers: int = 1,
) -> FkReport:
    """FD versus Monte Carlo at each ``(x, t)`` probe.

    The FD value is the solution on the halved mesh and the budget is its
    difference from the coarse solution.  ``pde_fields`` lets the PDE side
    use different coefficients (fault injection).
    """
    pde_fields = fields if pde_fields is None else pde_fields
    t_max = max(t for _, t in probes)
    if t_max > cfg.T + 1e-12:
        raise ValueError("probe time beyond the PDE horizon")
    coarse = solve_kolmogorov_fd(cfg, pde_fields, Z)
    fine = solve_kolmogorov_fd(cfg.halved(), pde_fields, Z)
    # speed bound sampled on the fine mesh
    speed = 0.0
    for k in range(fine.times.size - 1):
        c = _speed(pde_fields, Z, fine.times[k], fine.times[k + 1], fine.x)
        speed = max(speed, float(np.max(np.abs(c))))
    boundary_ok = all(boundary_margin(cfg, px, speed) >= 0 for px, _ in probes)
    if not boundary_ok:
        warnings.warn("domain narrower than the boundary-influence heuristic", BoundaryWarning, stacklevel=2)
    rows = []
    for px, pt in probes:
        f1 = float(fine.at(pt, px))
        f0 = float(coarse.at(pt, px))
        mc, se = fk_estimate(px, pt, cfg.xi0, fields, Z, n_samples, rng, n_steps, method, cfg.nu, workers=workers)
        rows.append(FkRow(float(px), float(pt), f1, mc, se, abs(f1 - f0), n_se))
    return FkReport(rows, boundary_ok)
