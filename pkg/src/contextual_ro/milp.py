"""Best-first branch-and-bound over binary variables.

Every node is an LP relaxation solved by :func:`contextual_ro.lp.solve_lp`;
binaries are branched by fixing their bounds. There are no cuts, presolve or
primal heuristics.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InputError
from .lp import LinearProgram, solve_lp

INTEGRALITY_TOL = 1e-6


@dataclass(frozen=True)
class MixedBinaryProgram:
    lp: LinearProgram
    binary: tuple[int, ...]
    sense: str = "min"

    def __post_init__(self):
        binary = tuple(int(i) for i in self.binary)
        if any(i < 0 or i >= self.lp.n for i in binary):
            raise InputError("binary index out of range")
        if self.sense not in ("min", "max"):
            raise InputError(f"sense must be 'min' or 'max', got {self.sense!r}")
        idx = list(binary)
        if np.any(self.lp.lb[idx] < 0) or np.any(self.lp.ub[idx] > 1):
            lb = self.lp.lb.copy()
            ub = self.lp.ub.copy()
            lb[idx] = np.maximum(lb[idx], 0.0)
            ub[idx] = np.minimum(ub[idx], 1.0)
            object.__setattr__(self, "lp", self.lp.with_bounds(lb, ub))
        object.__setattr__(self, "binary", binary)


@dataclass(frozen=True)
class MilpResult:
    status: str  # optimal | infeasible | unbounded | gap_not_closed | node_limit
    x: np.ndarray | None
    objective: float
    bound: float
    nodes: int


def _minimisation(p: MixedBinaryProgram) -> tuple[LinearProgram, float]:
    if p.sense == "min":
        return p.lp, 1.0
    lp = p.lp
    return LinearProgram(-lp.c, lp.A_eq, lp.b_eq, lp.A_in, lp.b_in, lp.lb, lp.ub), -1.0


def _fix(lp: LinearProgram, idx, values) -> LinearProgram:
    lb = lp.lb.copy()
    ub = lp.ub.copy()
    lb[idx] = values
    ub[idx] = values
    return lp.with_bounds(lb, ub)


def solve_milp(
    p: MixedBinaryProgram,
    gap_tol: float = 1e-6,
    node_limit: int = 20000,
    trace: Callable[[str], None] | None = None,
) -> MilpResult:
    """Solve ``p`` by best-first branch-and-bound.

    Branches on the most fractional binary (lowest index on ties). Stops when
    the best open relaxation bound is within ``gap_tol * (1 + |incumbent|)``
    of the incumbent. When ``node_limit`` nodes have been explored the
    incumbent is returned with status ``"gap_not_closed"`` and the proven bound.
    """
    lp, sign = _minimisation(p)
    idx = np.array(p.binary, dtype=int)
    counter = itertools.count()
    nodes = 0
    incumbent, inc_x = np.inf, None

    def closes(bound):
        return incumbent < np.inf and bound >= incumbent - gap_tol * (1.0 + abs(incumbent))

    def result(status, bound):
        if inc_x is None:
            return MilpResult(status, None, np.nan, sign * bound, nodes)
        return MilpResult(status, inc_x, sign * incumbent, sign * bound, nodes)

    root = solve_lp(lp)
    if root.status == "infeasible":
        return MilpResult("infeasible", None, np.nan, np.nan, 1)
    if root.status == "unbounded":
        return MilpResult("unbounded", None, np.nan, sign * -np.inf, 1)
    heap = [(root.objective, next(counter), lp.lb, lp.ub, root)]
    while heap:
        if nodes >= node_limit:
            best = min(heap[0][0], incumbent)
            return result("gap_not_closed" if inc_x is not None else "node_limit", best)
        bound, _, lb, ub, sol = heapq.heappop(heap)
        if closes(bound):
            heapq.heappush(heap, (bound, -1, lb, ub, sol))
            break
        nodes += 1
        xb = sol.x[idx]
        frac = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
        if trace is not None:
            trace(f"node={nodes} bound={sign * bound:.10g} incumbent={sign * incumbent:.10g} "
                  f"max_frac={frac.max(initial=0.0):.3g} open={len(heap)}")
        if np.all(frac <= INTEGRALITY_TOL):
            fixed = solve_lp(_fix(lp.with_bounds(lb, ub), idx, np.round(xb)))
            if fixed.status == "optimal" and fixed.objective < incumbent:
                incumbent, inc_x = fixed.objective, fixed.x
                inc_x[idx] = np.round(inc_x[idx])
            continue
        k = int(np.argmax(frac))
        j = idx[k]
        for value in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            clb[j] = cub[j] = value
            child = solve_lp(lp.with_bounds(clb, cub))
            if child.status != "optimal" or closes(child.objective):
                continue
            heapq.heappush(heap, (child.objective, next(counter), clb, cub, child))
    if inc_x is None:
        return MilpResult("infeasible", None, np.nan, np.nan, nodes)
    best = min(heap[0][0], incumbent) if heap else incumbent
    return result("optimal", best)


def solve_by_enumeration(p: MixedBinaryProgram) -> MilpResult:
    """Reference solver: fix every binary pattern and solve the remaining LP.

    Exponential in the number of binaries; intended as a test oracle.
    """
    lp, sign = _minimisation(p)
    idx = list(p.binary)
    best, best_x = np.inf, None
    count = 0
    for pattern in itertools.product((0.0, 1.0), repeat=len(idx)):
        count += 1
        sol = solve_lp(_fix(lp, idx, np.array(pattern)))
        if sol.status == "unbounded":
            return MilpResult("unbounded", None, np.nan, sign * -np.inf, count)
        if sol.status == "optimal" and sol.objective < best:
            best, best_x = sol.objective, sol.x
    if best_x is None:
        return MilpResult("infeasible", None, np.nan, np.nan, count)
    return MilpResult("optimal", best_x, sign * best, sign * best, count)
