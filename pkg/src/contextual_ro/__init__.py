"""Contextual robust optimisation with scenario-based conditional uncertainty sets.

The main entry points are :func:`solve_ccg` / :func:`warm_start_solve` for
two-stage problems with uncertain right-hand sides,
:func:`solve_objective_uncertainty` for uncertain recourse costs, the set
queries in :mod:`contextual_ro.uncertainty`, and the energy scheduling model in
:mod:`contextual_ro.energy`.
"""

from .ccg import (
    CcgOptions,
    CutEntry,
    CutPool,
    empty_pool,
    merge_pools,
    pool_load,
    pool_save,
    solve_ccg,
    solve_objective_uncertainty,
    warm_start_solve,
)
from .errors import ContextualROError, EmptyUncertaintySet, InputError
from .lp import LinearProgram, LpSolution, solve_lp
from .milp import MixedBinaryProgram, solve_milp
from .model import (
    ContextQuery,
    FirstStage,
    ScenarioSet,
    Solution,
    TwoStageProblem,
    UncertaintyKind,
    load_problem,
    save_problem,
    validate_problem,
)
from .oracle import OracleResult, oracle_bruteforce, oracle_d_bilevel, oracle_p_bilevel, oracle_scenario_scan
from .settings import DEFAULT, Settings
from .uncertainty import contains, coordinate_ranges, gamma0, resolve_budget

__version__ = "0.1.0"

__all__ = [
    "CcgOptions", "CutEntry", "CutPool", "empty_pool", "merge_pools", "pool_load", "pool_save",
    "solve_ccg", "solve_objective_uncertainty", "warm_start_solve",
    "ContextualROError", "EmptyUncertaintySet", "InputError",
    "LinearProgram", "LpSolution", "solve_lp", "MixedBinaryProgram", "solve_milp",
    "ContextQuery", "FirstStage", "ScenarioSet", "Solution", "TwoStageProblem", "UncertaintyKind",
    "load_problem", "save_problem", "validate_problem",
    "OracleResult", "oracle_bruteforce", "oracle_d_bilevel", "oracle_p_bilevel", "oracle_scenario_scan",
    "DEFAULT", "Settings", "contains", "coordinate_ranges", "gamma0", "resolve_budget",
]
