"""Reference computations that avoid the library's own composition rules.

Each oracle is a direct sum, closed form or quadrature.  Values frozen in the
tests were produced by these functions and are recomputed where cheap.
"""

import math

import numpy as np
from scipy import integrate


def iterated_integral_direct(vals, s, t):
    """``sum_k (Z_k - Z_s) (x) dZ_k + dZ_k (x) dZ_k / 2`` over cells in ``[s, t)``.

    The exact second level of a piecewise-linear path.
    """
    vals = np.asarray(vals, dtype=float)
    m = vals.shape[1]
    out = np.zeros((m, m))
    for k in range(s, t):
        dz = vals[k + 1] - vals[k]
        out += np.outer(vals[k] - vals[s], dz) + 0.5 * np.outer(dz, dz)
    return out


def simpson_iterated_integral(func, dfunc, s, t, n_points=10**6 + 1):
    """``int_s^t (Z_r - Z_s) (x) Zdot_r dr`` by composite Simpson on ``n_points``."""
    r = np.linspace(s, t, n_points)
    z = np.stack([func(x) for x in (r,)])[0]
    dz = dfunc(r)
    base = z - z[:, :1]
    integrand = base[:, None, :] * dz[None, :, :]
    return integrate.simpson(integrand, x=r, axis=-1)


def heat_convolution(xi0, x, t, nu=0.5, shift=0.0):
    """``E[xi0(x + shift + sqrt(2 nu t) N)]`` by adaptive quadrature."""
    sd = math.sqrt(2 * nu * t)

    def f(y):
        return xi0(x + shift + sd * y) * math.exp(-0.5 * y * y) / math.sqrt(2 * math.pi)

    return integrate.quad(f, -12, 12, epsabs=1e-13, limit=200)[0]


def sin_flow(x, dz):
    """Exact flow of ``dX = sin(X) dZ`` for a geometric driver: ``tan(X/2) = tan(x/2) e^dZ``."""
    return 2 * np.arctan(np.tan(x / 2) * np.exp(dz))


def polygon_levy_area(n):
    """Signed area of the regular ``n``-gon inscribed in the unit circle."""
    return 0.5 * n * math.sin(2 * math.pi / n)
