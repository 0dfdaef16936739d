"""
How the budget shapes the uncertainty set
=========================================

Twelve planar covariates with two-dimensional outcomes. For a context
outside the covariate hull the set collapses to a single outcome at the
smallest feasible budget and opens up towards the full outcome hull as the
budget grows.
"""

import numpy as np

from contextual_ro import ScenarioSet, gamma0
from contextual_ro.uncertainty import ball_radius, coordinate_ranges

rng = np.random.default_rng(3)
X = rng.uniform(0, 1, size=(12, 2))
Y = X @ np.array([[2.0, -1.0], [0.5, 1.0]]) + 0.1 * rng.normal(size=(12, 2))
sc = ScenarioSet(x=X, h=Y)

x = np.array([1.3, 0.4])
for norm in ("inf", "one"):
    g0 = gamma0(sc, x, norm)
    print(f"\n{norm}-norm: gamma0={g0:.4f}, covering radius={ball_radius(X, x, norm):.4f}")
    for extra in (0.0, 0.05, 0.2, 0.5, 1.0, 2.0):
        r = coordinate_ranges(sc, x, g0 + extra, norm)
        print(f"  gamma0+{extra:<4}  widths={np.round(r.width, 3)}  singleton={r.singleton}")

print("\noutcome hull:", np.round(Y.min(axis=0), 3), np.round(Y.max(axis=0), 3))
