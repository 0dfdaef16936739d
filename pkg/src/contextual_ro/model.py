"""Problem data for two-stage contextual robust programs.

A problem is::

    min_{z in Z}  c @ z + max_{y in Y(x)} min_{u >= 0} { q @ u : W u = h - T z }

where the uncertain data ``y`` are convex combinations of scenario values of
``h`` (and possibly ``T``), or of the recourse cost ``q``. Covariates ``x`` are
stored exactly as given: the norm balls used for conditioning are scale
sensitive, so any normalisation is the caller's responsibility.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError
from .lp import LinearProgram, solve_lp


class UncertaintyKind(str, enum.Enum):
    RHS_H_ONLY = "rhs_h_only"
    RHS_H_AND_T = "rhs_h_and_T"
    OBJECTIVE_Q = "objective_q"

    @property
    def is_rhs(self) -> bool:
        return self is not UncertaintyKind.OBJECTIVE_Q


def _frozen(a, ndim=None, name="array"):
    if a is None:
        return None
    try:
        arr = np.array(a, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name}: ragged or non-numeric data ({exc})") from None
    if ndim is not None and arr.ndim != ndim:
        if arr.size == 0 and ndim == 2:
            arr = arr.reshape(0, 0)
        else:
            raise InputError(f"{name}: expected {ndim} dimensions, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScenarioSet:
    """Paired covariate / uncertainty observations ``{(x_s, y_s)}``.

    ``h`` is ``S x d_h``; ``T`` (optional) is ``S x d_h x d_z``; ``q``
    (optional) is ``S x d_u``. ``categorical`` flags covariate columns whose
    budget is always zero.
    """

    x: np.ndarray
    h: np.ndarray | None = None
    T: np.ndarray | None = None
    q: np.ndarray | None = None
    categorical: np.ndarray | None = None

    def __post_init__(self):
        x = _frozen(self.x, 2, "scenarios.x")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "h", _frozen(self.h, 2, "scenarios.h"))
        object.__setattr__(self, "T", _frozen(self.T, 3, "scenarios.T"))
        object.__setattr__(self, "q", _frozen(self.q, 2, "scenarios.q"))
        cat = np.zeros(x.shape[1], dtype=bool) if self.categorical is None else np.array(self.categorical, dtype=bool).reshape(-1)
        cat.setflags(write=False)
        object.__setattr__(self, "categorical", cat)

    @property
    def S(self) -> int:
        return self.x.shape[0]

    @property
    def d_x(self) -> int:
        return self.x.shape[1]

    @property
    def y(self) -> np.ndarray:
        """Uncertain data of each scenario flattened into one row."""
        parts = [a.reshape(self.S, -1) for a in (self.h, self.T, self.q) if a is not None]
        if not parts:
            return np.zeros((self.S, 0))
        return np.hstack(parts)

    def subset(self, rows) -> "ScenarioSet":
        rows = np.asarray(rows, dtype=int)
        pick = lambda a: None if a is None else a[rows]
        return ScenarioSet(self.x[rows], pick(self.h), pick(self.T), pick(self.q), self.categorical)

    def drop_columns(self, keep) -> "ScenarioSet":
        keep = np.asarray(keep, dtype=bool)
        return ScenarioSet(self.x[:, keep], self.h, self.T, self.q, self.categorical[keep])


@dataclass(frozen=True)
class FirstStage:
    """Polyhedron ``Z`` over the first-stage vector ``z`` (default ``z >= 0``)."""

    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def lp(self, c) -> LinearProgram:
        return LinearProgram(c, self.A_eq, self.b_eq, self.A_in, self.b_in, self.lb, self.ub)


@dataclass(frozen=True)
class TwoStageProblem:
    """Full instance: first-stage data, recourse data and scenarios.

    ``T`` holds the technology matrix when it is not uncertain; ``h`` holds the
    right-hand side when only the recourse cost is uncertain.
    """

    c: np.ndarray
    Z: FirstStage
    q: np.ndarray | None
    W: np.ndarray
    scenarios: ScenarioSet
    kind: UncertaintyKind = UncertaintyKind.RHS_H_ONLY
    T: np.ndarray | None = None
    h: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "c", _frozen(self.c, 1, "c"))
        object.__setattr__(self, "q", _frozen(self.q, 1, "q"))
        object.__setattr__(self, "W", _frozen(self.W, 2, "W"))
        object.__setattr__(self, "T", _frozen(self.T, 2, "T"))
        object.__setattr__(self, "h", _frozen(self.h, 1, "h"))
        object.__setattr__(self, "kind", UncertaintyKind(self.kind))

    @property
    def d_z(self) -> int:
        return self.c.size

    @property
    def d_h(self) -> int:
        return self.W.shape[0]

    @property
    def d_u(self) -> int:
        return self.W.shape[1]

    def h_s(self) -> np.ndarray:
        if self.scenarios.h is not None:
            return np.asarray(self.scenarios.h)
        return np.broadcast_to(self.h, (self.scenarios.S, self.d_h))

    def T_s(self) -> np.ndarray:
        if self.scenarios.T is not None:
            return np.asarray(self.scenarios.T)
        T = self.T if self.T is not None else np.zeros((self.d_h, self.d_z))
        return np.broadcast_to(T, (self.scenarios.S, self.d_h, self.d_z))

    def q_s(self) -> np.ndarray:
        if self.scenarios.q is not None:
            return np.asarray(self.scenarios.q)
        return np.broadcast_to(self.q, (self.scenarios.S, self.d_u))

    def rhs_s(self, z) -> np.ndarray:
        """``h_s - T_s z`` for every scenario, shape ``S x d_h``."""
        return self.h_s() - np.einsum("sij,j->si", self.T_s(), np.asarray(z, dtype=float))

    def with_scenarios(self, scenarios: ScenarioSet) -> "TwoStageProblem":
        return TwoStageProblem(self.c, self.Z, self.q, self.W, scenarios, self.kind, self.T, self.h)


@dataclass(frozen=True)
class ContextQuery:
    """One conditioning request.

    Give either an explicit ``gamma`` or a relative ``delta`` meaning
    ``gamma = (1 + delta) * gamma0``; with neither, ``delta = 0``.
    ``gamma = inf`` drops the conditioning (plain scenario hull).
    """

    x: np.ndarray
    norm: str = "inf"
    gamma: float | None = None
    delta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x, 1, "context.x"))
        norm = {"inf": "inf", "one": "one", "1": "one", "l1": "one", "linf": "inf"}.get(str(self.norm).lower())
        if norm is None:
            raise InputError(f"norm must be 'inf' or 'one', got {self.norm!r}")
        object.__setattr__(self, "norm", norm)
        if self.gamma is not None and self.delta is not None:
            raise InputError("give either gamma or delta, not both")
        if self.gamma is not None and not (self.gamma >= 0):
            raise InputError(f"gamma must be nonnegative, got {self.gamma}")
        if self.delta is not None and not (self.delta >= 0):
            raise InputError(f"delta must be nonnegative, got {self.delta}")

    @property
    def dual_norm(self) -> str:
        return "one" if self.norm == "inf" else "inf"


@dataclass(frozen=True)
class Solution:
    z: np.ndarray | None
    objective: float
    alpha: float
    lb_trace: tuple[float, ...] = ()
    ub_trace: tuple[float, ...] = ()
    iterations: int = 0
    status: str = "optimal"  # optimal | iteration_limit | infeasible
    oracle_calls: int = 0
    gamma: float = np.nan
    gamma0: float = np.nan

    def to_dict(self) -> dict:
        f = lambda v: None if v is None or not np.isfinite(v) else float(v)
        return {
            "status": self.status,
            "objective": f(self.objective),
            "alpha": f(self.alpha),
            "z": None if self.z is None else [float(v) for v in self.z],
            "iterations": self.iterations,
            "oracle_calls": self.oracle_calls,
            "gamma": f(self.gamma),
            "gamma0": f(self.gamma0),
            "lb_trace": [f(v) for v in self.lb_trace],
            "ub_trace": [f(v) for v in self.ub_trace],
        }


@dataclass(frozen=True)
class Diagnostic:
    invariant: str
    message: str
    index: tuple = ()

    def __str__(self):
        where = f" at {self.index}" if self.index else ""
        return f"[{self.invariant}]{where} {self.message}"


def validate_problem(p: TwoStageProblem) -> list[Diagnostic]:
    """Check every structural invariant of ``p``; an empty list means valid."""
    out: list[Diagnostic] = []
    add = lambda inv, msg, *idx: out.append(Diagnostic(inv, msg, tuple(idx)))
    sc = p.scenarios
    S, d_z, d_h, d_u = sc.S, p.d_z, p.d_h, p.d_u

    if S < 1:
        add("scenario_count", "scenario set is empty")
    if sc.categorical.size != sc.d_x:
        add("dimension", f"categorical mask has {sc.categorical.size} entries, x has {sc.d_x} columns", "categorical")
    for name, arr in (("c", p.c), ("W", p.W), ("q", p.q), ("T", p.T), ("h", p.h),
                      ("scenarios.x", sc.x), ("scenarios.h", sc.h), ("scenarios.T", sc.T), ("scenarios.q", sc.q)):
        if arr is not None and not np.all(np.isfinite(arr)):
            bad = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
            add("finite", f"{name} contains a non-finite entry", name, *bad)

    kind = p.kind
    if kind.is_rhs:
        if sc.q is not None:
            add("uncertainty_kind", "q-scenarios given for a right-hand-side problem (mixed uncertainty unsupported)", "scenarios.q")
        if sc.h is None:
            add("uncertainty_kind", "right-hand-side problem without h scenarios", "scenarios.h")
        if p.q is None or p.q.size != d_u:
            add("dimension", f"q must have d_u={d_u} entries", "q")
        if kind is UncertaintyKind.RHS_H_ONLY:
            if sc.T is not None:
                add("uncertainty_kind", "T scenarios given but kind is rhs_h_only", "scenarios.T")
            if p.T is not None and p.T.shape != (d_h, d_z):
                add("dimension", f"T has shape {p.T.shape}, expected {(d_h, d_z)}", "T")
        else:
            if sc.T is None:
                add("uncertainty_kind", "kind rhs_h_and_T requires T scenarios", "scenarios.T")
            elif sc.T.shape != (S, d_h, d_z):
                add("dimension", f"scenarios.T has shape {sc.T.shape}, expected {(S, d_h, d_z)}", "scenarios.T")
    else:
        if sc.h is not None or sc.T is not None:
            add("uncertainty_kind", "objective-uncertain problem carries h/T scenarios", "scenarios")
        if sc.q is None:
            add("uncertainty_kind", "objective_q problem without q scenarios", "scenarios.q")
        elif sc.q.shape[1] != d_u:
            add("dimension", f"q scenarios have length {sc.q.shape[1]}, expected d_u={d_u}", "scenarios.q")
        if p.h is None or p.h.size != d_h:
            add("dimension", f"fixed h must have d_h={d_h} entries", "h")
        if p.T is not None and p.T.shape != (d_h, d_z):
            add("dimension", f"T has shape {p.T.shape}, expected {(d_h, d_z)}", "T")

    for name, arr in (("scenarios.h", sc.h), ("scenarios.T", sc.T), ("scenarios.q", sc.q)):
        if arr is not None and arr.shape[0] != S:
            add("dimension", f"{name} has {arr.shape[0]} rows, x has {S}", name)
    if sc.h is not None and sc.h.shape[1] != d_h:
        add("dimension", f"h_s has length {sc.h.shape[1]}, expected d_h={d_h}", "scenarios.h")

    for j in np.flatnonzero(sc.categorical):
        col = sc.x[:, j]
        if np.any(np.abs(col - np.round(col)) > 0):
            add("categorical", "categorical covariate holds non-integer codes", "scenarios.x", int(j))

    dims_ok = not any(d.invariant in ("dimension", "finite") for d in out)
    if dims_ok:
        try:
            sol = solve_lp(p.Z.lp(np.zeros(d_z)))
        except InputError as exc:
            add("dimension", f"first-stage block malformed: {exc}", "Z")
        else:
            if sol.status == "infeasible":
                add("first_stage_feasible", "first stage infeasible: Z is empty", "Z")
    return out


# --- recourse standardisation -------------------------------------------------

@dataclass(frozen=True)
class RawRecourse:
    """Recourse LP as modelled: ``min q u`` s.t. ``W u (sense) h - T z``, ``lb <= u <= ub``.

    ``senses`` holds one of ``"<="``, ``"=="``, ``">="`` per row.
    """

    q: np.ndarray
    W: np.ndarray
    senses: tuple[str, ...]
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "q", _frozen(self.q, 1, "q"))
        object.__setattr__(self, "W", _frozen(self.W, 2, "W"))
        senses = tuple({"=": "==", "<": "<=", ">": ">="}.get(s, s) for s in self.senses)
        if any(s not in ("<=", "==", ">=") for s in senses) or len(senses) != self.W.shape[0]:
            raise InputError("senses must list one of '<=', '==', '>=' per row")
        object.__setattr__(self, "senses", senses)
        n = self.q.size
        object.__setattr__(self, "lb", np.zeros(n) if self.lb is None else _frozen(self.lb, 1, "lb"))
        object.__setattr__(self, "ub", np.full(n, np.inf) if self.ub is None else _frozen(self.ub, 1, "ub"))


@dataclass(frozen=True)
class StandardRecourse:
    """Equality-form recourse ``W u = map_h(h) - map_T(T) z, u >= 0``."""

    W: np.ndarray
    q: np.ndarray
    row_map: np.ndarray  # standard rows x raw rows
    h_const: np.ndarray
    col_map: np.ndarray  # raw variables x standard columns
    n_raw_rows: int = field(default=0)

    def map_h(self, h_raw) -> np.ndarray:
        return self.row_map @ np.asarray(h_raw, dtype=float) + self.h_const

    def map_T(self, T_raw) -> np.ndarray:
        return self.row_map @ np.asarray(T_raw, dtype=float)

    def recover(self, u_std) -> np.ndarray:
        return self.col_map @ np.asarray(u_std, dtype=float)


def to_standard_recourse(raw: RawRecourse) -> StandardRecourse:
    """Rewrite ``raw`` with equality rows and nonnegative columns.

    Inequality rows gain a zero-cost slack. Variables with a zero lower bound
    are kept; any other variable is split into ``u+ - u-`` and its finite
    bounds become rows with their own slacks.
    """
    m, n = raw.W.shape
    cols = []  # (raw var, sign)
    bound_rows = []  # (coefficients over raw vars, rhs)
    for j in range(n):
        lo, hi = raw.lb[j], raw.ub[j]
        if lo == 0.0:
            cols.append((j, 1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
            if np.isfinite(lo):
                bound_rows.append((j, -1.0, -lo))
        if np.isfinite(hi):
            bound_rows.append((j, 1.0, hi))
    n_cols = len(cols)
    col_map = np.zeros((n, n_cols))
    for k, (j, s) in enumerate(cols):
        col_map[j, k] = s
    W_cols = raw.W @ col_map
    n_slack_rows = sum(1 for s in raw.senses if s != "==")
    n_b = len(bound_rows)
    m_std = m + n_b
    N = n_cols + n_slack_rows + n_b
    W = np.zeros((m_std, N))
    W[:m, :n_cols] = W_cols
    k = n_cols
    for i, s in enumerate(raw.senses):
        if s == "<=":
            W[i, k] = 1.0
            k += 1
        elif s == ">=":
            W[i, k] = -1.0
            k += 1
    h_const = np.zeros(m_std)
    for r, (j, s, rhs) in enumerate(bound_rows):
        W[m + r, :n_cols] = s * col_map[j]
        W[m + r, k] = 1.0
        k += 1
        h_const[m + r] = rhs
    q = np.concatenate([raw.q @ col_map, np.zeros(N - n_cols)])
    row_map = np.zeros((m_std, m))
    row_map[:m, :m] = np.eye(m)
    full_col_map = np.zeros((n, N))
    full_col_map[:, :n_cols] = col_map
    for a in (W, q, row_map, h_const, full_col_map):
        a.setflags(write=False)
    return StandardRecourse(W, q, row_map, h_const, full_col_map, m)


# --- JSON interchange ----------------------------------------------------------

def _reject_constant(name):
    raise InputError(f"non-finite number {name!r} in JSON input")


def _bounds_out(a):
    return None if a is None else [None if not np.isfinite(v) else float(v) for v in a]


def _bounds_in(a, fill):
    if a is None:
        return None
    return np.array([fill if v is None else float(v) for v in a], dtype=float)


def _mat(a):
    return None if a is None else np.asarray(a).tolist()


def problem_to_dict(p: TwoStageProblem) -> dict:
    sc = p.scenarios
    return {
        "format_version": 1,
        "uncertainty_kind": p.kind.value,
        "dimensions": {"d_z": p.d_z, "d_u": p.d_u, "d_h": p.d_h, "d_x": sc.d_x, "S": sc.S},
        "c": _mat(p.c),
        "Z": {
            "A_eq": _mat(p.Z.A_eq), "b_eq": _mat(p.Z.b_eq),
            "A_in": _mat(p.Z.A_in), "b_in": _mat(p.Z.b_in),
            "lb": _bounds_out(None if p.Z.lb is None else np.asarray(p.Z.lb, dtype=float)),
            "ub": _bounds_out(None if p.Z.ub is None else np.asarray(p.Z.ub, dtype=float)),
        },
        "q": _mat(p.q),
        "W": _mat(p.W),
        "T": _mat(p.T),
        "h": _mat(p.h),
        "scenarios": {
            "x": _mat(sc.x), "h": _mat(sc.h), "T": _mat(sc.T), "q": _mat(sc.q),
            "categorical": [bool(v) for v in sc.categorical],
        },
    }


def problem_from_dict(d: dict) -> TwoStageProblem:
    missing = [k for k in ("c", "Z", "q", "W", "scenarios", "uncertainty_kind") if k not in d]
    if missing:
        raise InputError(f"problem document missing keys: {missing}")
    Zd = d["Z"] or {}
    Z = FirstStage(
        Zd.get("A_eq"), Zd.get("b_eq"), Zd.get("A_in"), Zd.get("b_in"),
        _bounds_in(Zd.get("lb"), -np.inf), _bounds_in(Zd.get("ub"), np.inf),
    )
    s = d["scenarios"]
    if "x" not in s:
        raise InputError("scenarios.x is required")
    sc = ScenarioSet(s["x"], s.get("h"), s.get("T"), s.get("q"), s.get("categorical"))
    try:
        kind = UncertaintyKind(d["uncertainty_kind"])
    except ValueError:
        raise InputError(f"unknown uncertainty_kind {d['uncertainty_kind']!r}") from None
    p = TwoStageProblem(d["c"], Z, d["q"], d["W"], sc, kind, d.get("T"), d.get("h"))
    dims = d.get("dimensions")
    if dims:
        actual = {"d_z": p.d_z, "d_u": p.d_u, "d_h": p.d_h, "d_x": sc.d_x, "S": sc.S}
        for key, val in dims.items():
            if key in actual and actual[key] != val:
                raise InputError(f"dimensions.{key}={val} disagrees with data ({actual[key]})")
    return p


def load_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def load_problem(path) -> TwoStageProblem:
    return problem_from_dict(load_json(path))


def save_problem(p: TwoStageProblem, path) -> None:
    Path(path).write_text(json.dumps(problem_to_dict(p), indent=1))


def finite_or_none(v):
    return None if v is None or not math.isfinite(v) else float(v)
