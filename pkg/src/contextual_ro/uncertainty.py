"""Scenario-based conditional uncertainty sets.

For a context ``x`` and budget ``gamma`` the set is::

    { sum_s theta_s y_s : theta in simplex, || sum_s theta_s x_s - x || <= gamma }

Categorical covariates always get a zero budget. They are handled by keeping
only the scenarios whose categorical components equal those of ``x``; the ball
is then applied to the continuous components alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyUncertaintySet, InputError
from .lp import LinearProgram, solve_lp
from .model import ContextQuery, ScenarioSet
from .settings import DEFAULT, Settings

NORMS = ("inf", "one")


def _check_norm(norm: str) -> str:
    if norm not in NORMS:
        raise InputError(f"norm must be one of {NORMS}, got {norm!r}")
    return norm


@dataclass(frozen=True)
class Conditioned:
    """Scenarios that survive the categorical match, with continuous covariates."""

    rows: np.ndarray  # indices into the original scenario set
    X: np.ndarray  # len(rows) x d_continuous
    x: np.ndarray  # continuous part of the context

    @property
    def empty(self) -> bool:
        return self.rows.size == 0


def condition(scenarios: ScenarioSet, x) -> Conditioned:
    """Restrict to scenarios matching ``x`` on every categorical component."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != scenarios.d_x:
        raise InputError(f"context has {x.size} components, scenarios have d_x={scenarios.d_x}")
    cat = scenarios.categorical
    match = np.all(scenarios.x[:, cat] == x[cat], axis=1)
    rows = np.flatnonzero(match)
    return Conditioned(rows, scenarios.x[np.ix_(rows, ~cat)], x[~cat])


def ball_radius(X, x, norm) -> float:
    """Largest distance from ``x`` to a row of ``X``; ``0`` for no columns."""
    if X.size == 0:
        return 0.0
    dev = np.abs(X - x)
    return float(np.max(dev.max(axis=1) if norm == "inf" else dev.sum(axis=1)))


def ball_rows(X, x, gamma, norm):
    """Linear rows over ``(theta, t)`` encoding ``||X.T theta - x|| <= gamma``.

    Returns ``(A_in, b_in, n_aux)``; ``n_aux`` auxiliary ``t >= 0`` columns
    follow ``theta`` (only for the 1-norm). No rows are returned when the ball
    already contains every ``X[s]``, since by convexity it then holds for every
    ``theta`` in the simplex; this includes ``gamma = inf``.
    """
    S, d = X.shape
    if d == 0 or gamma >= ball_radius(X, x, norm):
        return np.zeros((0, S)), np.zeros(0), 0
    if norm == "inf":
        return np.vstack([X.T, -X.T]), np.concatenate([x + gamma, gamma - x]), 0
    I = np.eye(d)
    A = np.block([
        [X.T, -I],
        [-X.T, -I],
        [np.zeros((1, S)), np.ones((1, d))],
    ])
    return A, np.concatenate([x, -x, [gamma]]), d


def gamma0_conditioned(cond: Conditioned, norm: str = "inf") -> float:
    """Distance from ``cond.x`` to the hull of ``cond.X`` (``inf`` if no rows)."""
    norm = _check_norm(norm)
    if cond.empty:
        return np.inf
    S, d = cond.X.shape
    if d == 0:
        return 0.0
    n_t = 1 if norm == "inf" else d
    c = np.concatenate([np.zeros(S), np.ones(n_t)])
    T = -np.ones((d, 1)) if norm == "inf" else -np.eye(d)
    A_in = np.block([[cond.X.T, T], [-cond.X.T, T]])
    b_in = np.concatenate([cond.x, -cond.x])
    A_eq = np.concatenate([np.ones(S), np.zeros(n_t)])[None, :]
    sol = solve_lp(LinearProgram(c, A_eq, [1.0], A_in, b_in))
    return max(0.0, float(sol.objective))


def gamma0(scenarios: ScenarioSet, x, norm: str = "inf") -> float:
    """Smallest budget for which the conditional set is nonempty.

    Computed by one LP over the simplex. ``inf`` when no scenario matches the
    categorical components of ``x``.
    """
    if scenarios.S < 1:
        raise InputError("scenario set is empty")
    return gamma0_conditioned(condition(scenarios, x), norm)


@dataclass(frozen=True)
class BudgetSpec:
    gamma0: float
    gamma: float
    component_budget: np.ndarray  # 0 on categorical components
    conditioned: Conditioned
    norm: str = "inf"

    @property
    def unconditional(self) -> bool:
        return not np.isfinite(self.gamma)


def resolve_budget(scenarios: ScenarioSet, query: ContextQuery, settings: Settings = DEFAULT) -> BudgetSpec:
    """Turn a query into a concrete budget, failing when the set would be empty.

    Budgets within ``settings.budget_snap_tol * (1 + gamma0)`` of ``gamma0``
    are set to ``gamma0`` exactly.

    ``gamma = inf`` means no conditioning at all: every scenario is kept and the
    categorical match is skipped.
    """
    if query.gamma is not None and not np.isfinite(query.gamma):
        rows = np.arange(scenarios.S)
        cond = Conditioned(rows, np.zeros((scenarios.S, 0)), np.zeros(0))
        g0 = gamma0(scenarios, query.x, query.norm)
        budget = np.where(scenarios.categorical, 0.0, np.inf)
        return BudgetSpec(g0, np.inf, budget, cond, query.norm)
    cond = condition(scenarios, query.x)
    g0 = gamma0_conditioned(cond, query.norm)
    if not np.isfinite(g0):
        raise EmptyUncertaintySet(
            np.nan, g0, "no scenario matches the categorical components of the context (gamma0=inf)"
        )
    if query.gamma is not None:
        g = float(query.gamma)
    else:
        g = (1.0 + (query.delta or 0.0)) * g0
    if g < g0 - settings.feas_tol:
        raise EmptyUncertaintySet(g, g0, f"uncertainty set is empty: gamma={g:.10g} < gamma0={g0:.10g}")
    if g - g0 <= settings.budget_snap_tol * (1.0 + g0):
        g = g0
    budget = np.where(scenarios.categorical, 0.0, g)
    return BudgetSpec(g0, g, budget, cond, query.norm)


def _theta_lp(cond: Conditioned, gamma: float, norm: str, c_theta, Y=None, y=None) -> LinearProgram:
    S = cond.rows.size
    A_in, b_in, n_aux = ball_rows(cond.X, cond.x, gamma, norm)
    c = np.concatenate([c_theta, np.zeros(n_aux)])
    eq = [np.concatenate([np.ones(S), np.zeros(n_aux)])[None, :]]
    rhs = [np.ones(1)]
    if Y is not None:
        eq.append(np.hstack([Y.T, np.zeros((Y.shape[1], n_aux))]))
        rhs.append(np.asarray(y, dtype=float))
    return LinearProgram(c, np.vstack(eq), np.concatenate(rhs), A_in, b_in)


def contains(scenarios: ScenarioSet, x, gamma: float, norm: str, y_candidate) -> bool:
    """Membership test for ``y_candidate`` by one LP feasibility solve."""
    norm = _check_norm(norm)
    if gamma < 0:
        raise InputError("gamma must be nonnegative")
    cond = condition(scenarios, x) if np.isfinite(gamma) else Conditioned(
        np.arange(scenarios.S), np.zeros((scenarios.S, 0)), np.zeros(0))
    if cond.empty:
        return False
    Y = scenarios.y[cond.rows]
    y = np.asarray(y_candidate, dtype=float).reshape(-1)
    if y.size != Y.shape[1]:
        raise InputError(f"candidate has {y.size} entries, scenarios carry d_y={Y.shape[1]}")
    sol = solve_lp(_theta_lp(cond, gamma, norm, np.zeros(cond.rows.size), Y, y))
    return sol.status == "optimal"


@dataclass(frozen=True)
class Ranges:
    lo: np.ndarray
    hi: np.ndarray
    singleton: bool

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo


def coordinate_ranges(
    scenarios: ScenarioSet, x, gamma: float, norm: str = "inf", settings: Settings = DEFAULT
) -> Ranges:
    """Per-coordinate extent of the set, from ``2 * d_y`` LPs."""
    norm = _check_norm(norm)
    query = ContextQuery(x, norm=norm, gamma=gamma)
    spec = resolve_budget(scenarios, query, settings)
    cond = spec.conditioned
    Y = scenarios.y[cond.rows]
    if spec.gamma >= ball_radius(cond.X, cond.x, norm):
        # budget inactive: the set is the convex hull of the matching data
        lo, hi = Y.min(axis=0), Y.max(axis=0)
        return Ranges(lo, hi, bool(np.all(hi - lo <= settings.singleton_tol)))
    lo, hi = np.empty(Y.shape[1]), np.empty(Y.shape[1])
    for j in range(Y.shape[1]):
        lo[j] = solve_lp(_theta_lp(cond, spec.gamma, norm, Y[:, j])).objective
        hi[j] = -solve_lp(_theta_lp(cond, spec.gamma, norm, -Y[:, j])).objective
    singleton = bool(np.all(hi - lo <= settings.singleton_tol))
    return Ranges(lo, hi, singleton)
