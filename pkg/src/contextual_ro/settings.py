"""Numeric tolerances shared by every solver in the package."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Settings:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-6
    # Phase-I optimum above this declares an LP infeasible.
    phase1_tol: float = 1e-7
    # Coordinate ranges narrower than this count as a single point.
    singleton_tol: float = 1e-7
    pi_tol: float = 1e-7
    # Budgets this close (relative to 1 + gamma0) to gamma0 are set to gamma0;
    # smaller margins sit inside the Phase-I feasibility tolerance.
    budget_snap_tol: float = 1e-6


DEFAULT = Settings()
