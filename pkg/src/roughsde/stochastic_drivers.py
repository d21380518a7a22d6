"""Brownian and fractional Brownian drivers, their areas, and the joint lift.

Randomness comes from a counter-based Philox generator keyed by
``(seed, stream)``: draws for stream ``k`` never depend on how streams are
batched or distributed over workers.
"""

from __future__ import annotations

import math
import warnings
import zlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg

from .rough_core import GridPath, RoughLift, TimeGrid, TwoIndexMap

__all__ = [
    "RngSpec",
    "derive_seed",
    "JointLiftConfig",
    "sample_brownian",
    "brownian_increments",
    "sample_fbm",
    "fbm_paths",
    "fbm_covariance",
    "ito_area",
    "cross_area_z_db",
    "cross_area_b_dz",
    "cross_area_direct",
    "joint_lift",
    "joint_cell",
    "CirculantEmbeddingWarning",
]

_U64 = 2**64


@dataclass(frozen=True)
class RngSpec:
    seed: int
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if int(v) != v or not 0 <= v < _U64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v}")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=int(self.seed) + (int(self.stream) << 64)))

    def offset(self, k: int) -> "RngSpec":
        return RngSpec(self.seed, self.stream + k)


def derive_seed(seed: int, label: str) -> int:
    """Independent 64-bit seed for a named role (e.g. one side of a comparison)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(label.encode()),))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class JointLiftConfig:
    """``bb_convention`` only changes the diagonal of the Brownian area cells."""

    bb_convention: str = "ito"

    def __post_init__(self):
        if self.bb_convention not in ("ito", "stratonovich"):
            raise ValueError(f"unknown convention {self.bb_convention!r}")


# ---------------------------------------------------------------------------
# Brownian motion


def _bm_increments(grid: TimeGrid, d: int, gen: np.random.Generator) -> np.ndarray:
    return gen.standard_normal((grid.n, d)) * np.sqrt(grid.dt)[:, None]


def sample_brownian(grid: TimeGrid, d: int, rng: RngSpec) -> GridPath:
    """``d``-dimensional Brownian path with ``B_0 = 0``."""
    inc = _bm_increments(grid, d, rng.generator())
    vals = np.zeros((grid.n + 1, d))
    np.cumsum(inc, axis=0, out=vals[1:])
    return GridPath(grid, vals)


def brownian_increments(grid: TimeGrid, d: int, rng: RngSpec, count: int) -> np.ndarray:
    """Increments of streams ``rng.stream .. rng.stream + count - 1``, shape ``(count, n, d)``.

    Row ``k`` holds the increments behind ``sample_brownian(grid, d, rng.offset(k))``;
    their cumulative sum reproduces that path bitwise.
    """
    out = np.empty((count, grid.n, d))
    for k in range(count):
        out[k] = _bm_increments(grid, d, rng.offset(k).generator())
    return out


# ---------------------------------------------------------------------------
# fractional Brownian motion


class CirculantEmbeddingWarning(RuntimeWarning):
    pass


def fbm_covariance(s, t, H: float):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return 0.5 * (s ** (2 * H) + t ** (2 * H) - np.abs(t - s) ** (2 * H))


@lru_cache(maxsize=16)
def _cholesky_factor(nodes_bytes: bytes, H: float) -> np.ndarray:
    nodes = np.frombuffer(nodes_bytes)[1:]
    cov = fbm_covariance(nodes[:, None], nodes[None, :], H)
    return linalg.cholesky(cov, lower=True)


@lru_cache(maxsize=16)
def _circulant_sqrt_eigs(n: int, dt: float, H: float) -> np.ndarray | None:
    k = np.arange(n + 1, dtype=float)
    gamma = 0.5 * dt ** (2 * H) * (
        np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H)
    )
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        return None
    return np.sqrt(np.clip(lam, 0.0, None) / row.size)


def _fbm_draw(grid: TimeGrid, H: float, gen: np.random.Generator, method: str, dim: int) -> np.ndarray:
    n = grid.n
    vals = np.zeros((n + 1, dim))
    if method == "circulant":
        sq = _circulant_sqrt_eigs(n, float(grid.dt[0]), float(H))
        if sq is None:
            warnings.warn(
                "circulant embedding is not positive; falling back to Cholesky",
                CirculantEmbeddingWarning,
                stacklevel=3,
            )
            method = "cholesky"
        else:
            w = gen.standard_normal((2, 2 * n, dim))
            y = np.fft.fft(sq[:, None] * (w[0] + 1j * w[1]), axis=0)
            np.cumsum(y[:n].real, axis=0, out=vals[1:])
            return vals
    if method == "cholesky":
        L = _cholesky_factor(grid.nodes.tobytes(), float(H))
        vals[1:] = L @ gen.standard_normal((n, dim))
        return vals
    raise ValueError(f"unknown fBm method {method!r}")


def sample_fbm(
    grid: TimeGrid,
    H: float,
    rng: RngSpec,
    method: str = "circulant",
    dim: int = 1,
) -> GridPath:
    """Fractional Brownian motion with Hurst index ``H``, independent components.

    ``cholesky`` is exact on any grid; ``circulant`` (Davies-Harte embedding)
    is exact in law on uniform grids and falls back to Cholesky, with a
    :class:`CirculantEmbeddingWarning`, when the embedding is not positive.
    """
    if not 0 < H < 1:
        raise ValueError(f"Hurst index must lie in (0, 1), got {H}")
    if method == "circulant" and not grid.is_uniform:
        raise ValueError("circulant embedding needs a uniform grid")
    return GridPath(grid, _fbm_draw(grid, H, rng.generator(), method, dim))


def fbm_paths(
    grid: TimeGrid,
    H: float,
    rng: RngSpec,
    count: int,
    method: str = "circulant",
    dim: int = 1,
) -> np.ndarray:
    """Node values of ``count`` consecutive streams, shape ``(count, n + 1, dim)``."""
    if method == "circulant" and not grid.is_uniform:
        raise ValueError("circulant embedding needs a uniform grid")
    return np.stack([_fbm_draw(grid, H, rng.offset(k).generator(), method, dim) for k in range(count)])


# ---------------------------------------------------------------------------
# areas


def ito_area(B: GridPath, convention: str = "ito") -> TwoIndexMap:
    """Second level of ``B`` with the sub-cell Lévy area set to zero.

    Cell value ``dB dB^T / 2`` (Stratonovich), minus ``dt I / 2`` for Itô.
    """
    JointLiftConfig(convention)
    inc = B.increments
    cells = 0.5 * inc[:, :, None] * inc[:, None, :]
    if convention == "ito":
        cells = cells - 0.5 * B.grid.dt[:, None, None] * np.eye(B.dim)
    return TwoIndexMap(B.grid, cells, rule="chen", left=B.values)


def _check_grids(Z: GridPath, B: GridPath):
    if not Z.grid.same_as(B.grid):
        raise ValueError("Z and B must share a grid")


def cross_area_z_db(Z: GridPath, B: GridPath) -> TwoIndexMap:
    """``int_s^t (Z_r - Z_s) dB_r`` as a left-point (Wiener-Itô) sum.

    Each cell contributes nothing on its own; Chen composition reproduces
    ``sum_k (Z_{t_k} - Z_s) (x) dB_k`` on every pair.
    """
    _check_grids(Z, B)
    cells = np.zeros((Z.grid.n, Z.dim, B.dim))
    return TwoIndexMap(Z.grid, cells, rule="chen", left=Z.values, right=B.values)


def cross_area_direct(Z: GridPath, B: GridPath, s: int, t: int) -> np.ndarray:
    """Direct left-point sum ``sum_{s<=k<t} (Z_k - Z_s) (x) (B_{k+1} - B_k)``."""
    _check_grids(Z, B)
    base = Z.values[s:t] - Z.values[s]
    return base.T @ (B.values[s + 1 : t + 1] - B.values[s:t])


class _PartsMap(TwoIndexMap):
    """``int dB dZ := dB (x) dZ - (int dZ dB)^T`` evaluated literally."""

    def __init__(self, B: GridPath, Z: GridPath, zdb: TwoIndexMap):
        inc_b, inc_z = B.increments, Z.increments
        cells = inc_b[:, :, None] * inc_z[:, None, :] - np.swapaxes(zdb.cells, 1, 2)
        super().__init__(B.grid, cells, rule="chen", left=B.values, right=Z.values)
        object.__setattr__(self, "_zdb", zdb)

    def value(self, s, t, method="sequential"):
        db = self.left[t] - self.left[s]
        dz = self.right[t] - self.right[s]
        return db[:, None] * dz[None, :] - self._zdb.value(s, t, method).T

    def row(self, s):
        db = self.left[s:] - self.left[s]
        dz = self.right[s:] - self.right[s]
        return db[:, :, None] * dz[:, None, :] - np.swapaxes(self._zdb.row(s), 1, 2)


def cross_area_b_dz(Z: GridPath, B: GridPath) -> TwoIndexMap:
    """``int_s^t (B_r - B_s) dZ_r``, defined as ``dB (x) dZ - (int dZ dB)^T``."""
    _check_grids(Z, B)
    return _PartsMap(B, Z, cross_area_z_db(Z, B))


# ---------------------------------------------------------------------------
# joint lift of (B, Z)


def joint_cell(
    db: np.ndarray,
    dz: np.ndarray,
    zz_cell: np.ndarray,
    dt,
    convention: str = "ito",
) -> tuple[np.ndarray, np.ndarray]:
    """First and second level of one joint cell, batched over leading axes.

    ``db`` has shape ``(..., d)``, ``dz`` ``(J,)`` and ``zz_cell`` ``(J, J)``.
    The returned area has blocks ``[[BB, int dB dZ], [int dZ dB, ZZ]]`` with
    the Brownian coordinates first; the left-point ``int dZ dB`` cell is zero.
    """
    d = db.shape[-1]
    J = dz.shape[-1]
    lead = db.shape[:-1]
    first = np.concatenate([db, np.broadcast_to(dz, lead + (J,))], axis=-1)
    A = np.zeros(lead + (d + J, d + J))
    A[..., :d, :d] = 0.5 * db[..., :, None] * db[..., None, :]
    if convention == "ito":
        A[..., :d, :d] -= 0.5 * np.asarray(dt)[..., None, None] * np.eye(d)
    elif convention != "stratonovich":
        raise ValueError(f"unknown convention {convention!r}")
    A[..., :d, d:] = db[..., :, None] * dz[None, :]
    A[..., d:, d:] = zz_cell
    return first, A


def joint_lift(
    zlift: RoughLift,
    B: GridPath,
    config: JointLiftConfig | None = None,
) -> RoughLift:
    """Rough path over ``(B, Z)`` with Brownian coordinates first."""
    config = config or JointLiftConfig()
    if not zlift.grid.same_as(B.grid):
        raise ValueError("driver and Brownian path must share a grid")
    grid = B.grid
    d, J = B.dim, zlift.dim
    db = B.increments
    cells = np.zeros((grid.n, d + J, d + J))
    cells[:, :d, :d] = 0.5 * db[:, :, None] * db[:, None, :]
    if config.bb_convention == "ito":
        cells[:, :d, :d] -= 0.5 * grid.dt[:, None, None] * np.eye(d)
    cells[:, :d, d:] = db[:, :, None] * zlift.first.increments[:, None, :]
    cells[:, d:, d:] = zlift.second.cells
    vals = np.hstack([B.values, zlift.first.values])
    first = GridPath(grid, vals)
    return RoughLift(first, TwoIndexMap(grid, cells, rule="chen", left=vals), min(zlift.alpha, 0.5))
