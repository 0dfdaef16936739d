"""
A one-dimensional contextual robust problem
===========================================

Two historical observations: covariate 0 came with demand 0, covariate 1
with demand 10. We buy ``z`` units up front at unit cost and pay 1 per unit
of shortfall ``max(0, h - z)`` afterwards. The context ``x`` decides which
mixtures of the two observations are plausible.
"""

import numpy as np

from contextual_ro import ContextQuery, gamma0, load_problem, solve_ccg
from contextual_ro.energy import fixture_path
from contextual_ro.oracle import oracle_d_bilevel
from contextual_ro.uncertainty import coordinate_ranges

problem = load_problem(fixture_path("running_example"))
sc = problem.scenarios

# Distance from the context to the hull of observed covariates. Inside the
# segment [0, 1] it is zero; outside it grows linearly.
for x in (0.5, 1.0, 1.5):
    print(f"x={x:4}  gamma0={gamma0(sc, [x], 'inf'):.3f}")

# Demand range as the budget grows around x = 0.5. At gamma = 0 only the
# matching mixture (h = 5) survives; from 0.5 on the whole segment [0, 10] does.
for g in (0.0, 0.1, 0.25, 0.5, 2.0):
    r = coordinate_ranges(sc, [0.5], g)
    print(f"gamma={g:4}  h in [{r.lo[0]:5.2f}, {r.hi[0]:5.2f}]  singleton={r.singleton}")

# Worst-case shortfall for a fixed order of 2 units.
res = oracle_d_bilevel(problem, [2.0], ContextQuery([0.5], gamma=0.5))
print("worst shortfall at z=2:", round(res.value, 6), "weights:", np.round(res.theta, 3))

# Full two-stage solve. Inside the segment gamma0 = 0, so a 10% margin keeps the
# single matching mixture h = 10 x; ordering ahead costs the same as a shortfall,
# so the optimal cost is that demand.
for x in (0.2, 0.5, 0.9):
    sol, pool = solve_ccg(problem, ContextQuery([x], delta=0.1))
    print(f"x={x}  z*={sol.z[0]:.3f}  cost={sol.objective:.3f}  iterations={sol.iterations}")
