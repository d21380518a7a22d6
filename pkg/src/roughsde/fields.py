"""Drift and driver vector fields.

Every callable is vectorised over leading axes: ``beta(x)`` maps states of
shape ``(..., d)`` to ``(..., d, J)`` (column ``j`` is the field ``beta_j``),
``jacobian(x)`` returns ``(..., J, d, d)`` with entry ``[j, a, b] =
d beta_j^a / d x_b``, and ``drift(t, x)`` returns ``(..., d)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["VectorFieldSet", "with_identity_block", "FIELD_REGISTRY", "DRIFT_REGISTRY", "build_fields"]


def _zero_drift(t, x):
    return np.zeros_like(x)


@dataclass(frozen=True)
class VectorFieldSet:
    beta: Callable[[np.ndarray], np.ndarray]
    dim: int
    n_fields: int
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    drift: Callable[[float, np.ndarray], np.ndarray] = _zero_drift
    fd_step: float = 1e-5
    drift_bound: float | None = None

    def fields(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.beta(x), x.shape[:-1] + (self.dim, self.n_fields))

    def jac(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.jacobian is not None:
            return np.broadcast_to(
                self.jacobian(x), x.shape[:-1] + (self.n_fields, self.dim, self.dim)
            )
        return self.fd_jacobian(x)

    def fd_jacobian(self, x: np.ndarray) -> np.ndarray:
        """Central differences with step ``fd_step * (1 + |x_b|)``."""
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[:-1] + (self.n_fields, self.dim, self.dim))
        for b in range(self.dim):
            h = self.fd_step * (1.0 + np.abs(x[..., b]))
            xp = x.copy()
            xm = x.copy()
            xp[..., b] += h
            xm[..., b] -= h
            diff = (self.fields(xp) - self.fields(xm)) / (2.0 * h)[..., None, None]
            # diff[..., a, j] -> out[..., j, a, b]
            out[..., :, :, b] = np.swapaxes(diff, -1, -2)
        return out

    def u(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.drift(t, x), x.shape)

    def check_jacobian(self, probes: np.ndarray) -> float:
        """Largest excess of ``|analytic - fd|`` over ``max(1e-6, 1e-4 |J|)`` (<= 0 is a pass)."""
        if self.jacobian is None:
            return 0.0
        a = self.jac(probes)
        f = self.fd_jacobian(probes)
        tol = np.maximum(1e-6, 1e-4 * np.abs(a))
        return float(np.max(np.abs(a - f) - tol))

    def with_drift(self, drift, drift_bound=None) -> "VectorFieldSet":
        return VectorFieldSet(
            self.beta, self.dim, self.n_fields, self.jacobian, drift, self.fd_step, drift_bound
        )

    def negated(self) -> "VectorFieldSet":
        """Flip the sign of every field and of the drift."""
        return VectorFieldSet(
            lambda x: -self.fields(x),
            self.dim,
            self.n_fields,
            lambda x: -self.jac(x),
            lambda t, x: -self.u(t, x),
            self.fd_step,
            self.drift_bound,
        )

    def without_drift(self) -> "VectorFieldSet":
        return self.with_drift(_zero_drift, 0.0)


def with_identity_block(fields: VectorFieldSet, scale: float = 1.0) -> VectorFieldSet:
    """Fields ``(scale * e_1, ..., scale * e_d, beta_1, ..., beta_J)`` for the joint driver."""
    d, J = fields.dim, fields.n_fields
    eye = scale * np.eye(d)

    def beta(x):
        b = fields.fields(x)
        return np.concatenate([np.broadcast_to(eye, b.shape[:-1] + (d,)), b], axis=-1)

    def jacobian(x):
        jb = fields.jac(x)
        zeros = np.zeros(jb.shape[:-3] + (d, d, d))
        return np.concatenate([zeros, jb], axis=-3)

    return VectorFieldSet(beta, d, d + J, jacobian, fields.drift, fields.fd_step, fields.drift_bound)


# ---------------------------------------------------------------------------
# named one-dimensional fields used by the experiment runner


def _scalar_field(f, df):
    return VectorFieldSet(
        beta=lambda x: f(x)[..., None],
        dim=1,
        n_fields=1,
        jacobian=lambda x: df(x)[..., None, :, None],
    )


FIELD_REGISTRY: dict[str, Callable[[], VectorFieldSet]] = {
    "zero": lambda: _scalar_field(np.zeros_like, np.zeros_like),
    "one": lambda: _scalar_field(np.ones_like, np.zeros_like),
    "linear": lambda: _scalar_field(lambda x: x.copy(), np.ones_like),
    "sin": lambda: _scalar_field(np.sin, np.cos),
    "one_plus_half_sin": lambda: _scalar_field(lambda x: 1.0 + 0.5 * np.sin(x), lambda x: 0.5 * np.cos(x)),
}

DRIFT_REGISTRY: dict[str, tuple[Callable, float]] = {
    "zero": (_zero_drift, 0.0),
    "cos": (lambda t, x: np.cos(x), 1.0),
    "half": (lambda t, x: np.full_like(x, 0.5), 0.5),
    "tanh": (lambda t, x: np.tanh(x), 1.0),
}


def build_fields(field: str, drift: str = "zero") -> VectorFieldSet:
    """Look up a named driver field and drift."""
    try:
        fs = FIELD_REGISTRY[field]()
    except KeyError:
        raise ValueError(f"unknown vector field {field!r}; choose from {sorted(FIELD_REGISTRY)}") from None
    try:
        u, bound = DRIFT_REGISTRY[drift]
    except KeyError:
        raise ValueError(f"unknown drift {drift!r}; choose from {sorted(DRIFT_REGISTRY)}") from None
    return fs.with_drift(u, bound)
