"""Dense two-phase primal simplex.

Problems are stated as::

    min  c @ x
    s.t. A_eq @ x == b_eq
         A_in @ x <= b_in
         lb <= x <= ub          (entries of lb/ub may be infinite)

and are converted internally to ``A x = b, x >= 0``: variables are shifted
onto a finite bound, reflected when only an upper bound exists, and split
into a difference of two nonnegative columns when free. Finite upper bounds
become rows with their own slack.

Dual values follow the Lagrangian sign convention of a minimisation problem:
the multiplier of a ``<=`` row is nonpositive, and
``A_eq.T @ y_eq + A_in.T @ y_in + reduced_costs == c``.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, LpStalled
from .settings import DEFAULT, Settings

_PIVOT_TOL = 1e-9
_HARRIS_TOL = 1e-9
_REFACTOR_EVERY = 40
_trace_counter = itertools.count()


def _as_matrix(A, n):
    if A is None:
        return np.zeros((0, n))
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1) if A.size else np.zeros((0, n))
    return A


def _as_vector(b, m):
    if b is None:
        return np.zeros(m)
    return np.asarray(b, dtype=float).reshape(-1)


@dataclass(frozen=True)
class LinearProgram:
    """A minimisation LP with equality rows, ``<=`` rows and variable bounds.

    Bounds default to ``x >= 0``.
    """

    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        n = c.size
        A_eq = _as_matrix(self.A_eq, n)
        A_in = _as_matrix(self.A_in, n)
        b_eq = _as_vector(self.b_eq, A_eq.shape[0])
        b_in = _as_vector(self.b_in, A_in.shape[0])
        lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).reshape(-1)
        ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).reshape(-1)
        if A_eq.shape != (b_eq.size, n) or A_in.shape != (b_in.size, n):
            raise InputError(
                f"inconsistent LP dimensions: c has {n} entries, "
                f"A_eq {A_eq.shape} / b_eq {b_eq.shape}, A_in {A_in.shape} / b_in {b_in.shape}"
            )
        if lb.size != n or ub.size != n:
            raise InputError(f"bounds must have {n} entries")
        for name, arr in (("c", c), ("A_eq", A_eq), ("b_eq", b_eq), ("A_in", A_in), ("b_in", b_in)):
            if not np.all(np.isfinite(arr)):
                raise InputError(f"non-finite coefficient in {name}")
        if np.any(np.isnan(lb)) or np.any(np.isnan(ub)) or np.any(lb == np.inf) or np.any(ub == -np.inf):
            raise InputError("invalid variable bounds")
        for name, arr in (("c", c), ("A_eq", A_eq), ("b_eq", b_eq), ("A_in", A_in),
                          ("b_in", b_in), ("lb", lb), ("ub", ub)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.c.size

    def with_bounds(self, lb=None, ub=None) -> "LinearProgram":
        return LinearProgram(
            self.c, self.A_eq, self.b_eq, self.A_in, self.b_in,
            self.lb if lb is None else lb, self.ub if ub is None else ub,
        )


@dataclass(frozen=True)
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float = np.nan
    y_eq: np.ndarray | None = None
    y_in: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    dual_objective: float = np.nan
    # Infeasible: (y_eq, y_in) proving infeasibility, see ``farkas_value``.
    farkas: tuple[np.ndarray, np.ndarray] | None = None
    # Unbounded: direction r with c @ r < 0 keeping every row satisfied.
    ray: np.ndarray | None = None
    iterations: int = 0
    basis: tuple[int, ...] = field(default=(), repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def farkas_value(lp: LinearProgram, y_eq, y_in) -> float:
    """Objective of a dual ray; strictly positive for a valid infeasibility proof.

    Returns ``-inf`` when the ray violates a sign condition (``y_in <= 0`` and
    reduced costs pointing only at finite bounds).
    """
    y_eq = np.asarray(y_eq, dtype=float)
    y_in = np.asarray(y_in, dtype=float)
    if np.any(y_in > 1e-9):
        return -np.inf
    d = -(lp.A_eq.T @ y_eq + lp.A_in.T @ y_in)
    val = lp.b_eq @ y_eq + lp.b_in @ y_in
    for j, dj in enumerate(d):
        if dj > 1e-9:
            if not np.isfinite(lp.lb[j]):
                return -np.inf
            val += lp.lb[j] * dj
        elif dj < -1e-9:
            if not np.isfinite(lp.ub[j]):
                return -np.inf
            val += lp.ub[j] * dj
    return float(val)


class _StandardForm:
    """``A x = b, x >= 0`` image of a LinearProgram plus the map back."""

    def __init__(self, lp: LinearProgram):
        n = lp.n
        cols = []
        offset = np.zeros(n)
        bounded = []
        for j in range(n):
            lo, hi = lp.lb[j], lp.ub[j]
            if lo == hi:
                # Fixed columns become constants so their coefficients do not
                # distort the row scaling below.
                offset[j] = lo
            elif np.isfinite(lo):
                offset[j] = lo
                cols.append((j, 1.0))
                if np.isfinite(hi):
                    bounded.append((len(cols) - 1, hi - lo))
            elif np.isfinite(hi):
                offset[j] = hi
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        ns = len(cols)
        to_orig = np.zeros((n, ns))
        for k, (j, s) in enumerate(cols):
            to_orig[j, k] = s
        m_eq, m_in, m_b = lp.A_eq.shape[0], lp.A_in.shape[0], len(bounded)
        m = m_eq + m_in + m_b
        N = ns + m_in + m_b
        A = np.zeros((m, N))
        b = np.zeros(m)
        A[:m_eq, :ns] = lp.A_eq @ to_orig
        b[:m_eq] = lp.b_eq - lp.A_eq @ offset
        r = m_eq
        A[r:r + m_in, :ns] = lp.A_in @ to_orig
        A[r:r + m_in, ns:ns + m_in] = np.eye(m_in)
        b[r:r + m_in] = lp.b_in - lp.A_in @ offset
        r += m_in
        for k, (col, rhs) in enumerate(bounded):
            A[r + k, col] = 1.0
            A[r + k, ns + m_in + k] = 1.0
            b[r + k] = rhs
        self.A, self.b = A, b
        self.c = np.concatenate([to_orig.T @ lp.c, np.zeros(m_in + m_b)])
        self.to_orig, self.offset = to_orig, offset
        self.ns, self.m_eq, self.m_in, self.m_b = ns, m_eq, m_in, m_b
        # Columns that can start a basis: slacks of rows with b >= 0.
        self.slack_of_row = {}
        for i in range(m_in):
            self.slack_of_row[m_eq + i] = ns + i
        for k in range(m_b):
            self.slack_of_row[m_eq + m_in + k] = ns + m_in + k

    def to_x(self, x_std):
        return self.offset + self.to_orig @ x_std[: self.ns]


class _Tableau:
    def __init__(self, A, b, basis):
        self.A = A
        self.b = b
        self.basis = list(basis)
        self.since = 0
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basis]
        try:
            self.T = np.linalg.solve(B, np.column_stack([self.A, self.b]))
        except np.linalg.LinAlgError:
            if not hasattr(self, "T"):
                raise
        self.since = 0

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.basis[r] = j
        self.since += 1
        if self.since >= _REFACTOR_EVERY:
            self.refactor()


def _simplex(tab: _Tableau, c, n_allowed, max_iter, iters):
    """Run primal simplex on ``tab`` with costs ``c``.

    Only the first ``n_allowed`` columns may enter. Returns ``("optimal", None)``
    or ``("unbounded", entering_column)`` and the iteration count so far.
    """
    m, N = tab.T.shape[0], tab.T.shape[1] - 1
    opt_tol = 1e-9 * max(1.0, float(np.max(np.abs(c), initial=0.0)))
    degenerate = 0
    bland = False
    bland_after = 5 * (m + N)
    while True:
        T = tab.T
        d = c[:n_allowed] - c[tab.basis] @ T[:, :n_allowed]
        d[[k for k in tab.basis if k < n_allowed]] = 0.0
        cand = np.flatnonzero(d < -opt_tol)
        if cand.size == 0:
            if tab.since > 0:
                tab.refactor()
                continue
            return "optimal", None, iters
        j = int(cand[0]) if bland else int(cand[np.argmin(d[cand])])
        col = T[:, j]
        pos = np.flatnonzero(col > _PIVOT_TOL * max(1.0, float(np.max(np.abs(col)))))
        if pos.size == 0:
            if tab.since > 0:
                tab.refactor()
                continue
            return "unbounded", j, iters
        rhs = np.maximum(T[pos, -1], 0.0)
        if bland:
            ratios = rhs / col[pos]
            rmin = ratios.min()
            ties = pos[ratios <= rmin + 1e-12 * (1.0 + rmin)]
            r = int(ties[np.argmin(np.asarray(tab.basis)[ties])])
        else:
            # Harris two-pass: relax the bounds slightly, then take the
            # largest pivot among rows whose exact ratio fits under the relaxed one.
            relaxed = ((rhs + _HARRIS_TOL) / col[pos]).min()
            ratios = rhs / col[pos]
            fits = pos[ratios <= relaxed]
            r = int(fits[np.argmax(col[fits])])
            rmin = rhs[np.flatnonzero(pos == r)[0]] / col[r]
        if rmin <= 1e-12:
            degenerate += 1
            if degenerate > bland_after:
                bland = True
        tab.pivot(r, j)
        iters += 1
        if iters > max_iter:
            raise LpStalled(f"simplex exceeded {max_iter} pivots")


def _trace(tab: _Tableau, label: str):
    target = os.environ.get("DDCRO_LP_TRACE")
    if not target:
        return
    directory = target if os.path.isdir(target) else "."
    path = os.path.join(directory, f"lp_trace_{os.getpid()}_{next(_trace_counter)}_{label}.csv")
    np.savetxt(path, tab.T, delimiter=",", header="basis=" + " ".join(map(str, tab.basis)))


def _equilibrate(A, rounds: int = 3):
    """Row and column factors bringing every nonzero row and column max to about one."""
    m, N = A.shape
    rs, cs = np.ones(m), np.ones(N)
    absA = np.abs(A)
    for _ in range(rounds):
        rmax = np.max(absA * rs[:, None] * cs[None, :], axis=1, initial=0.0)
        rs = np.where(rmax > 0, rs / np.where(rmax > 0, rmax, 1.0), rs)
        cmax = np.max(absA * rs[:, None] * cs[None, :], axis=0, initial=0.0)
        cs = np.where(cmax > 0, cs / np.where(cmax > 0, cmax, 1.0), cs)
    return rs, cs


def solve_lp(lp: LinearProgram, settings: Settings = DEFAULT, max_iter: int | None = None) -> LpSolution:
    """Solve ``lp`` to optimality, or certify infeasibility / unboundedness.

    Pivoting uses Dantzig's rule and falls back to Bland's rule after
    ``5 * (rows + cols)`` degenerate pivots. Exceeding ``max_iter`` raises
    :class:`LpStalled`.
    """
    sf = _StandardForm(lp)
    # Row then column equilibration. Duals only see the row factors ``rs``;
    # primal values and rays are multiplied by the column factors ``cs``.
    rs, cs = _equilibrate(sf.A)
    A, b = sf.A * rs[:, None] * cs[None, :], sf.b * rs
    c = sf.c * cs
    m, N = A.shape
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000

    # Phase I.
    sign = np.where(b < 0, -1.0, 1.0)
    A1 = A * sign[:, None]
    b1 = b * sign
    basis = []
    art_rows = []
    for i in range(m):
        k = sf.slack_of_row.get(i)
        if k is not None and sign[i] > 0:
            basis.append(k)
        else:
            basis.append(N + len(art_rows))
            art_rows.append(i)
    n_art = len(art_rows)
    art = np.zeros((m, n_art))
    art[art_rows, np.arange(n_art)] = 1.0
    A1 = np.hstack([A1, art])
    c1 = np.concatenate([np.zeros(N), np.ones(n_art)])
    iters = 0
    keep = np.arange(m)
    if m == 0:
        basis = []
    if n_art:
        tab = _Tableau(A1, b1, basis)
        _, _, iters = _simplex(tab, c1, N + n_art, max_iter, iters)
        phase1 = float(c1[tab.basis] @ tab.T[:, -1])
        if phase1 > settings.phase1_tol:
            y1 = np.linalg.solve(A1[:, tab.basis].T, c1[tab.basis])
            y = sign * y1 * rs
            _trace(tab, "infeasible")
            return LpSolution(
                "infeasible",
                farkas=(y[: sf.m_eq].copy(), y[sf.m_eq: sf.m_eq + sf.m_in].copy()),
                iterations=iters,
            )
        # Drive zero-level artificials out of the basis; drop redundant rows.
        redundant = []
        for r in range(m):
            if tab.basis[r] < N:
                continue
            row = tab.T[r, :N]
            k = int(np.argmax(np.abs(row)))
            if abs(row[k]) > 1e-9:
                tab.pivot(r, k)
            else:
                redundant.append(r)
        keep = np.array([r for r in range(m) if r not in redundant], dtype=int)
        basis = [tab.basis[r] for r in keep]

    A2 = A[keep]
    b2 = b[keep]
    if len(keep):
        tab = _Tableau(A2, b2, basis)
        status, entering, iters = _simplex(tab, c, N, max_iter, iters)
    else:
        tab = None
        d = c
        neg = np.flatnonzero(d < -1e-12)
        status, entering = ("unbounded", int(neg[0])) if neg.size else ("optimal", None)

    if status == "unbounded":
        r_std = np.zeros(N)
        r_std[entering] = 1.0
        if tab is not None:
            r_std[tab.basis] = -tab.T[:, entering]
        r_std *= cs
        ray = sf.to_orig @ r_std[: sf.ns]
        if tab is not None:
            _trace(tab, "unbounded")
        return LpSolution("unbounded", ray=ray, iterations=iters)

    x_std = np.zeros(N)
    y_std = np.zeros(m)
    if tab is not None:
        tab.refactor()
        B = A2[:, tab.basis]
        x_B = np.linalg.solve(B, b2)
        x_std[tab.basis] = np.maximum(x_B, 0.0) * cs[tab.basis]
        y_std[keep] = np.linalg.solve(B.T, c[tab.basis])
        y_std *= rs
        _trace(tab, "optimal")
    x = sf.to_x(x_std)
    x = np.clip(x, lp.lb, lp.ub)
    y_eq = y_std[: sf.m_eq]
    y_in = np.minimum(y_std[sf.m_eq: sf.m_eq + sf.m_in], 0.0)
    red = lp.c - lp.A_eq.T @ y_eq - lp.A_in.T @ y_in
    dual = float(lp.b_eq @ y_eq + lp.b_in @ y_in)
    scale = 1e-9 * max(1.0, float(np.max(np.abs(lp.c), initial=0.0)))
    for j, dj in enumerate(red):
        if dj > scale and np.isfinite(lp.lb[j]):
            dual += lp.lb[j] * dj
        elif dj < -scale and np.isfinite(lp.ub[j]):
            dual += lp.ub[j] * dj
    return LpSolution(
        "optimal",
        x=x,
        objective=float(lp.c @ x),
        y_eq=y_eq.copy(),
        y_in=y_in.copy(),
        reduced_costs=red,
        dual_objective=dual,
        iterations=iters,
        basis=tuple(tab.basis) if tab is not None else (),
    )
