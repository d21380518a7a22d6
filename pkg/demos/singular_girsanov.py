"""
Why the naive change of measure fails
=====================================

Absorbing the rough driver into the Brownian motion requires the density
M_T(Z) = exp(int Zdot dB - 1/2 int |Zdot|^2).  Its p-th moment is
exp(p (p - 1) / 2 int |Zdot|^2), which is harmless for smooth Z and
explodes along interpolants of a rough path.
"""

import numpy as np

from roughsde.girsanov import blowup_experiment, log_weight_smooth, moment_formula
from roughsde.rough_core import GridPath, make_uniform_grid
from roughsde.stochastic_drivers import RngSpec, brownian_increments

# %%
# Smooth driver Z_t = t/2: Monte Carlo against the closed form.
g = make_uniform_grid(1.0, 64)
Z = GridPath(g, 0.5 * g.nodes)
lw = log_weight_smooth(Z, brownian_increments(g, 1, RngSpec(4), 10**5))
for p in (1, 2):
    w = np.exp(p * lw)
    print(f"p = {p}: MC {w.mean():.4f} +- {w.std() / np.sqrt(w.size):.4f}, formula {moment_formula(Z, p):.4f}")

# %%
# Interpolants of one fBm sample with H = 0.3.  The energy grows like
# n^(2 - 2H); the second moment is reported in log space.
tab = blowup_experiment(0.3, [1, 2], range(6, 13), RngSpec(5))
print(" k      n    int |Zdot|^2   log E[M^2]")
for k, n, e, lm in zip(tab.levels, tab.n, tab.integral, tab.log_moments[:, 1]):
    print(f"{k:2d} {n:6d} {e:14.1f} {lm:12.1f}")
print("level ratios", np.round(tab.integral[1:] / tab.integral[:-1], 2), "vs 2^1.4 =", round(2**1.4, 2))
