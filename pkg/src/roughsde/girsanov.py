"""Girsanov weights and weak solutions of rough SDEs with drift.

The weak-solution sampler solves the driftless equation
``dX = sqrt(2 nu) dB~ + beta_j(X) dZ^j`` over the joint lift of ``(B~, Z)``
and attaches the log-density

    sum_k (u(t_k, X_k) / sigma) . dB~_k - 1/2 sum_k |u(t_k, X_k) / sigma|^2 dt_k,

so that ``E_weak[F(X)] = E[exp(log_w) F(X)]`` for the equation with drift ``u``.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fields import VectorFieldSet
from .parallel import DEFAULT_CHUNK, map_chunks
from .rde_solver import euler_maruyama_scan, joint_scan
from .rough_core import GridPath, RoughLift, make_uniform_grid
from .stochastic_drivers import RngSpec, brownian_increments, sample_fbm

__all__ = [
    "WeightedEnsemble",
    "SamplerError",
    "log_weight_smooth",
    "moment_formula",
    "BlowupTable",
    "blowup_experiment",
    "drift_log_weight",
    "shifted_brownian",
    "weak_solution_sampler",
    "euler_maruyama_ensemble",
    "weighted_expectation",
    "LawReport",
    "law_distance",
    "weighted_ks",
    "write_ensemble_csv",
]


class SamplerError(RuntimeError):
    """Too many samples diverged for the ensemble to be trusted."""


@dataclass(frozen=True, eq=False)
class WeightedEnsemble:
    """Solution samples with Girsanov log-weights.

    ``paths`` has shape ``(N, len(times), d)``; ``streams`` holds the RNG
    stream of each kept sample.
    """

    times: np.ndarray
    paths: np.ndarray
    log_weights: np.ndarray
    streams: np.ndarray
    seed: int
    flagged: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.log_weights)):
            raise ValueError("log-weights must be finite")
        if self.paths.shape[0] != self.log_weights.shape[0]:
            raise ValueError("one log-weight per path is required")

    def __len__(self):
        return self.paths.shape[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.paths[:, -1, :]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def rng(self, i: int) -> RngSpec:
        return RngSpec(self.seed, int(self.streams[i]))


# ---------------------------------------------------------------------------
# smooth drivers: the singular-measure computation


def _slopes(Z: GridPath) -> np.ndarray:
    return Z.increments / Z.grid.dt[:, None]


def log_weight_smooth(Z: GridPath, B) -> float | np.ndarray:
    """``sum_k Zdot_k . dB_k - 1/2 sum_k |Zdot_k|^2 dt_k`` for ``Z`` linear per cell.

    ``B`` is a :class:`GridPath` or an array of increments ``(..., n, d)``.
    """
    zdot = _slopes(Z)
    if isinstance(B, GridPath):
        if not B.grid.same_as(Z.grid):
            raise ValueError("Z and B must share a grid")
        dB = B.increments
    else:
        dB = np.asarray(B)
    energy = float(np.sum(zdot**2 * Z.grid.dt[:, None]))
    out = np.einsum("...kd,kd->...", dB, zdot) - 0.5 * energy
    return float(out) if np.ndim(out) == 0 else out


def energy(Z: GridPath) -> float:
    """``int |Zdot|^2 = sum_k |dZ_k|^2 / dt_k``."""
    return float(np.sum(Z.increments**2 / Z.grid.dt[:, None]))


def moment_formula(Z: GridPath, p: float, log: bool = False) -> float:
    """``E[M_T(Z)^p] = exp(p (p - 1) / 2 * int |Zdot|^2)`` (``log=True`` returns the exponent)."""
    if p < 1:
        raise ValueError("moment formula is used for p >= 1")
    expo = 0.5 * p * (p - 1) * energy(Z)
    if log:
        return expo
    with np.errstate(over="ignore"):
        return float(np.exp(expo))


@dataclass(frozen=True)
class BlowupTable:
    H: float
    ps: tuple[float, ...]
    levels: np.ndarray
    n: np.ndarray
    integral: np.ndarray
    log_moments: np.ndarray  # (levels, ps)
    rng: RngSpec

    @property
    def moments(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_moments)

    def to_csv(self, dest) -> None:
        header = ["k", "n", "integral"]
        for p in self.ps:
            header += [f"log_moment_p{p:g}", f"moment_p{p:g}"]
        close = isinstance(dest, (str, os.PathLike))
        fh = open(dest, "w", newline="") if close else dest
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            mom = self.moments
            for i, k in enumerate(self.levels):
                row = [int(k), int(self.n[i]), repr(float(self.integral[i]))]
                for j in range(len(self.ps)):
                    row += [repr(float(self.log_moments[i, j])), repr(float(mom[i, j]))]
                w.writerow(row)
        finally:
            if close:
                fh.close()


def blowup_experiment(
    H: float,
    p: float | Sequence[float],
    levels: Sequence[int],
    rng: RngSpec,
    T: float = 1.0,
    method: str = "circulant",
) -> BlowupTable:
    """Moment formula along piecewise-linear interpolants of one fBm sample.

    The sample is drawn once at ``2^max(levels)`` cells; level ``k`` keeps
    every ``2^(max - k)``-th node.
    """
    ps = (float(p),) if np.isscalar(p) else tuple(float(q) for q in p)
    levels = np.asarray(sorted(int(k) for k in levels))
    kmax = int(levels[-1])
    fine = sample_fbm(make_uniform_grid(T, 2**kmax), H, rng, method=method)
    integral = np.empty(levels.size)
    logs = np.empty((levels.size, len(ps)))
    for i, k in enumerate(levels):
        Zk = fine.restrict(2 ** (kmax - int(k)))
        integral[i] = energy(Zk)
        for j, q in enumerate(ps):
            logs[i, j] = moment_formula(Zk, q, log=True)
    return BlowupTable(float(H), ps, levels, 2**levels, integral, logs, rng)


# ---------------------------------------------------------------------------
# drift weights


def _drift_log_weight_arrays(u, times, X, dB, sign=1.0, scale=1.0):
    """``X``: ``(..., n+1, d)``, ``dB``: ``(..., n, d)``; integrand ``u / scale``."""
    n = times.size - 1
    dt = np.diff(times)
    total = np.zeros(X.shape[:-2])
    quad = np.zeros(X.shape[:-2])
    for k in range(n):
        v = u(times[k], X[..., k, :]) / scale
        total = total + np.einsum("...a,...a->...", v, dB[..., k, :])
        quad = quad + np.einsum("...a,...a->...", v, v) * dt[k]
    return sign * total - 0.5 * quad


def drift_log_weight(u: Callable, X: GridPath, B: GridPath, sign: int = 1) -> float:
    """``sign * sum_k u(t_k, X_k) . dB_k - 1/2 sum_k |u(t_k, X_k)|^2 dt_k``."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if not X.grid.same_as(B.grid):
        raise ValueError("X and B must share a grid")
    return float(_drift_log_weight_arrays(u, X.grid.nodes, X.values, B.increments, float(sign)))


def shifted_brownian(u: Callable, X: GridPath, Btilde: GridPath, sign: int = -1) -> GridPath:
    """``Btilde + sign * int_0^t u(s, X_s) ds`` with left-point quadrature."""
    nodes = X.grid.nodes
    drift = np.stack([u(nodes[k], X.values[k]) for k in range(X.grid.n)]) * X.grid.dt[:, None]
    acc = np.zeros_like(Btilde.values)
    np.cumsum(drift, axis=0, out=acc[1:])
    return GridPath(Btilde.grid, Btilde.values + sign * acc)


# ---------------------------------------------------------------------------
# ensembles


def _assemble(parts, times, seed, n_samples, max_flag_fraction, meta):
    paths = np.concatenate([p[0] for p in parts])
    logw = np.concatenate([p[1] for p in parts])
    bad = np.concatenate([p[2] for p in parts])
    streams = np.concatenate([p[3] for p in parts])
    flagged = int(bad.sum())
    if flagged > max_flag_fraction * n_samples:
        raise SamplerError(f"{flagged} of {n_samples} samples diverged")
    keep = ~bad
    meta = dict(meta, flagged=flagged, n_samples=n_samples)
    return WeightedEnsemble(times, paths[keep], logw[keep], streams[keep], seed, flagged, meta)


def weak_solution_sampler(
    x0,
    fields: VectorFieldSet,
    zlift: RoughLift,
    n_samples: int,
    rng: RngSpec,
    nu: float = 0.5,
    convention: str = "ito",
    record: str = "terminal",
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    max_flag_fraction: float = 1e-3,
) -> WeightedEnsemble:
    """Girsanov-weighted samples of ``dX = u dt + sqrt(2 nu) dB + beta_j(X) dZ^j``.

    Stream ``rng.stream + k`` drives sample ``k``.  Samples that diverge are
    dropped and counted; more than ``max_flag_fraction`` of them raises
    :class:`SamplerError`.
    """
    if record not in ("terminal", "path"):
        raise ValueError("record must be 'terminal' or 'path'")
    grid = zlift.grid
    d = fields.dim
    sigma = math.sqrt(2.0 * nu)
    if sigma == 0:
        raise ValueError("the weak-solution construction needs nu > 0")
    times = grid.nodes
    u = fields.drift

    def run(start, count):
        dB = brownian_increments(grid, d, rng.offset(start), count)
        path, bad = joint_scan(x0, zlift, dB, fields, convention, nu, record=True)
        path = np.swapaxes(path, 0, 1)
        with np.errstate(invalid="ignore", over="ignore"):
            logw = _drift_log_weight_arrays(u, times, path, dB, 1.0, sigma)
        bad = bad | ~np.isfinite(logw)
        logw = np.where(bad, 0.0, logw)
        keep = path if record == "path" else path[:, -1:, :]
        streams = rng.stream + start + np.arange(count, dtype=np.uint64)
        return keep, logw, bad, streams

    parts = map_chunks(run, n_samples, workers, chunk_size)
    rec_times = times if record == "path" else times[-1:]
    meta = {"sampler": "girsanov-davie", "nu": nu, "convention": convention, "n": grid.n, "T": grid.T}
    return _assemble(parts, rec_times, rng.seed, n_samples, max_flag_fraction, meta)


def euler_maruyama_ensemble(
    x0,
    fields: VectorFieldSet,
    Z: GridPath,
    n_samples: int,
    rng: RngSpec,
    nu: float = 0.5,
    record: str = "terminal",
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    max_flag_fraction: float = 1e-3,
) -> WeightedEnsemble:
    """Unit-weight Euler-Maruyama samples of the equation with a linear-per-cell ``Z``."""
    grid = Z.grid
    d = fields.dim
    dz = Z.increments

    def run(start, count):
        dB = brownian_increments(grid, d, rng.offset(start), count)
        path, bad = euler_maruyama_scan(x0, fields, grid, dz, dB, nu, record=(record == "path"))
        if record == "path":
            path = np.swapaxes(path, 0, 1)
        else:
            path = path[:, None, :]
        streams = rng.stream + start + np.arange(count, dtype=np.uint64)
        return path, np.zeros(count), bad, streams

    parts = map_chunks(run, n_samples, workers, chunk_size)
    rec_times = grid.nodes if record == "path" else grid.nodes[-1:]
    meta = {"sampler": "euler-maruyama", "nu": nu, "n": grid.n, "T": grid.T}
    return _assemble(parts, rec_times, rng.seed, n_samples, max_flag_fraction, meta)


def weighted_expectation(
    ens: WeightedEnsemble,
    F: Callable[[np.ndarray], np.ndarray],
    normalized: bool = False,
) -> tuple[float, float]:
    """Estimate ``E[w F(X)]`` and its standard error.

    ``F`` maps the ``(N, len(times), d)`` path array to ``N`` values.  With
    ``normalized=True`` the self-normalised ratio ``sum w F / sum w`` is used
    and its error comes from the delete-one jackknife.
    """
    if len(ens) == 0:
        raise ValueError("empty ensemble")
    f = np.asarray(F(ens.paths), dtype=float)
    return _weighted_mean(f, ens.weights, normalized)


def _weighted_mean(f, w, normalized):
    N = f.size
    if not normalized:
        wf = w * f
        se = float(np.std(wf, ddof=1) / math.sqrt(N)) if N > 1 else float("nan")
        return float(np.mean(wf)), se
    sw, swf = w.sum(), (w * f).sum()
    est = swf / sw
    loo = (swf - w * f) / (sw - w)
    se = math.sqrt((N - 1) / N * float(np.sum((loo - loo.mean()) ** 2)))
    return float(est), se


# ---------------------------------------------------------------------------
# law comparison


def _weighted_ecdf(x, w, at):
    order = np.argsort(x, kind="stable")
    xs = x[order]
    cw = np.cumsum(w[order])
    cw /= cw[-1]
    idx = np.searchsorted(xs, at, side="right")
    out = np.zeros(at.shape)
    pos = idx > 0
    out[pos] = cw[idx[pos] - 1]
    return out


def _kish(w):
    return float(w.sum() ** 2 / np.sum(w**2))


def weighted_ks(x1, w1, x2, w2, level: float = 0.01) -> tuple[float, float]:
    """Weighted two-sample KS statistic and its critical value at ``level``.

    The critical value uses Kish effective sample sizes in place of counts.
    """
    x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
    w1 = np.ones_like(x1) if w1 is None else np.asarray(w1, float)
    w2 = np.ones_like(x2) if w2 is None else np.asarray(w2, float)
    pooled = np.concatenate([x1, x2])
    ks = float(np.max(np.abs(_weighted_ecdf(x1, w1, pooled) - _weighted_ecdf(x2, w2, pooled))))
    n1, n2 = _kish(w1), _kish(w2)
    c = math.sqrt(-0.5 * math.log(level / 2.0))
    return ks, c * math.sqrt((n1 + n2) / (n1 * n2))


@dataclass(frozen=True)
class LawReport:
    ks: float
    ks_critical: float
    moment_gaps: np.ndarray
    combined_se: np.ndarray

    def moments_agree(self, n_moments: int = 2, n_se: float = 3.0) -> bool:
        return bool(np.all(np.abs(self.moment_gaps[:n_moments]) <= n_se * self.combined_se[:n_moments]))

    @property
    def ks_passed(self) -> bool:
        return self.ks <= self.ks_critical


def law_distance(
    a: WeightedEnsemble,
    b: WeightedEnsemble,
    coordinate: Callable[[np.ndarray], np.ndarray] | None = None,
    level: float = 0.01,
) -> LawReport:
    """Weighted KS statistic and gaps of the first four moments of ``coordinate``.

    ``coordinate`` defaults to the first component of the terminal state.
    """
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both ensembles must be nonempty")
    coordinate = coordinate or (lambda p: p[:, -1, 0])
    xa, xb = np.asarray(coordinate(a.paths), float), np.asarray(coordinate(b.paths), float)
    wa, wb = a.weights, b.weights
    ks, crit = weighted_ks(xa, wa, xb, wb, level)
    gaps, ses = [], []
    for k in range(1, 5):
        ma, sa = _weighted_mean(xa**k, wa, False)
        mb, sb = _weighted_mean(xb**k, wb, False)
        gaps.append(ma - mb)
        ses.append(math.hypot(sa, sb))
    return LawReport(ks, crit, np.asarray(gaps), np.asarray(ses))


def write_ensemble_csv(ens: WeightedEnsemble, dest) -> None:
    """Columns: ``stream, log_weight, x0..x{d-1}`` (terminal state), ``flagged`` (always 0 for kept rows)."""
    d = ens.paths.shape[-1]
    close = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", newline="") if close else dest
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stream", "log_weight"] + [f"x{i}" for i in range(d)] + ["flagged"])
        term = ens.terminal
        for i in range(len(ens)):
            w.writerow(
                [int(ens.streams[i]), repr(float(ens.log_weights[i]))]
                + [repr(float(v)) for v in term[i]]
                + [0]
            )
    finally:
        if close:
            fh.close()
