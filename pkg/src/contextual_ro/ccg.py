"""Column-and-constraint generation for contextual two-stage robust programs.

The master problem is ``min c z + alpha`` over ``Z`` plus one block of rows per
oracle call. Two master flavours are available:

* ``classical``: each worst-case realisation ``(h_k, T_k)`` brings a copy of
  the recourse variables, ``alpha >= q u_k``, ``W u_k = h_k - T_k z``.
* ``contextual``: each dual vertex ``pi_k`` brings multipliers ``(rho_k,
  gamma_k)`` with ``alpha >= rho_k + x gamma_k + budget * ||gamma_k||_*`` and
  ``rho_k + x_s gamma_k >= pi_k (h_s - T_s z)`` for every scenario. These rows
  depend on the context only through ``x`` and the budget, so the stored
  ``pi_k`` stay valid for any later context (see :func:`warm_start_solve`).
"""

from __future__ import annotations

import datetime
import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import CcgStalled, FingerprintMismatch, InputError, PoolCorrupt, PoolValidationError
from .lp import LinearProgram, solve_lp
from .model import ContextQuery, Solution, TwoStageProblem
from .oracle import oracle_d_bilevel, oracle_p_bilevel, oracle_scenario_scan, recourse_value
from .settings import DEFAULT, Settings
from .uncertainty import BudgetSpec, ball_rows, resolve_budget

POOL_FORMAT_VERSION = 1
DEDUP_TOL = 1e-9


# --- cut pools ----------------------------------------------------------------

@dataclass(frozen=True)
class CutEntry:
    pi: tuple[float, ...]
    source_context: tuple[float, ...]
    source_iteration: int
    created_at: str | None = None

    def to_dict(self) -> dict:
        return {
            "pi": list(self.pi),
            "source_context": list(self.source_context),
            "source_iteration": self.source_iteration,
            "created_at": self.created_at,
        }


def problem_fingerprint(p: TwoStageProblem) -> str:
    """Hash of everything that fixes the dual polyhedron and the cut layout.

    Covers ``W``, ``q``, the covariate dimension and the categorical mask. The
    scenario values are deliberately excluded: cut rows are rebuilt from the
    current scenarios whenever a stored ``pi`` is reused.
    """
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(p.W, dtype=float).tobytes())
    h.update(np.ascontiguousarray(p.q, dtype=float).tobytes())
    h.update(repr((p.W.shape, p.scenarios.d_x, tuple(bool(v) for v in p.scenarios.categorical))).encode())
    return h.hexdigest()


@dataclass(frozen=True)
class CutPool:
    fingerprint: str
    entries: tuple[CutEntry, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def pis(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, 0))
        return np.array([e.pi for e in self.entries])

    def contains(self, pi) -> bool:
        pi = np.asarray(pi, dtype=float)
        return any(np.max(np.abs(np.asarray(e.pi) - pi), initial=0.0) <= DEDUP_TOL for e in self.entries)

    def with_entry(self, entry: CutEntry) -> "CutPool":
        if self.contains(entry.pi):
            return self
        return CutPool(self.fingerprint, self.entries + (entry,))

    def to_dict(self) -> dict:
        return {
            "format_version": POOL_FORMAT_VERSION,
            "fingerprint": self.fingerprint,
            "entries": [e.to_dict() for e in self.entries],
        }


def empty_pool(p: TwoStageProblem) -> CutPool:
    return CutPool(problem_fingerprint(p))


def validate_pool(pool: CutPool, p: TwoStageProblem, settings: Settings = DEFAULT) -> None:
    """Raise unless ``pool`` belongs to ``p`` and every ``pi`` is dual feasible."""
    fp = problem_fingerprint(p)
    if pool.fingerprint != fp:
        raise FingerprintMismatch(
            f"cut pool fingerprint {pool.fingerprint[:12]}... does not match problem {fp[:12]}..."
        )
    for k, e in enumerate(pool.entries):
        pi = np.asarray(e.pi, dtype=float)
        if pi.size != p.d_h:
            raise PoolValidationError(f"entry {k}: pi has {pi.size} entries, expected {p.d_h}", k, None)
        viol = p.W.T @ pi - p.q
        if np.any(viol > settings.pi_tol):
            row = int(np.argmax(viol))
            raise PoolValidationError(
                f"entry {k}: W.T pi <= q violated at row {row} by {viol[row]:.3g}", k, row
            )


def merge_pools(a: CutPool, b: CutPool) -> CutPool:
    """Union of two pools for the same problem, deduplicated by ``pi``."""
    if a.fingerprint != b.fingerprint:
        raise FingerprintMismatch("cannot merge pools of different problems")
    out = a
    for e in b.entries:
        out = out.with_entry(e)
    return out


def pool_save(pool: CutPool, path) -> None:
    Path(path).write_text(json.dumps(pool.to_dict(), indent=1) + "\n")


def pool_from_dict(doc) -> CutPool:
    try:
        if doc.get("format_version") != POOL_FORMAT_VERSION:
            raise PoolCorrupt(f"unsupported pool format_version {doc.get('format_version')!r}")
        fp = doc["fingerprint"]
        if not isinstance(fp, str):
            raise PoolCorrupt("fingerprint must be a string")
        entries = []
        for e in doc["entries"]:
            pi = tuple(float(v) for v in e["pi"])
            ctx = tuple(float(v) for v in e["source_context"])
            if not all(np.isfinite(pi)) or not all(np.isfinite(ctx)):
                raise PoolCorrupt("non-finite number in pool entry")
            entries.append(CutEntry(pi, ctx, int(e["source_iteration"]), e.get("created_at")))
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise PoolCorrupt(f"malformed cut pool: {exc!r}") from None
    return CutPool(fp, tuple(entries))


def pool_load(path, p: TwoStageProblem, settings: Settings = DEFAULT) -> CutPool:
    """Read a pool file and check it against ``p``.

    Raises :class:`PoolCorrupt`, :class:`FingerprintMismatch` or
    :class:`PoolValidationError` depending on what is wrong.
    """
    try:
        doc = json.loads(Path(path).read_text(), parse_constant=_reject)
    except json.JSONDecodeError as exc:
        raise PoolCorrupt(f"{path}: not valid JSON ({exc})") from None
    pool = pool_from_dict(doc)
    validate_pool(pool, p, settings)
    return pool


def _reject(token):
    raise PoolCorrupt(f"non-finite number {token!r} in pool file")


# --- options and bookkeeping ----------------------------------------------------

@dataclass(frozen=True)
class CcgOptions:
    gap_tol: float = 1e-6
    max_iterations: int = 200
    master_kind: str = "contextual"
    warm_pool: CutPool | None = None
    oracle: str = "d"
    node_limit: int = 20000
    timestamps: bool = False
    scan_unconditional: bool = True

    def __post_init__(self):
        if not self.gap_tol > 0:
            raise InputError("gap_tol must be positive")
        if self.master_kind not in ("classical", "contextual"):
            raise InputError(f"master_kind must be 'classical' or 'contextual', got {self.master_kind!r}")
        if self.oracle not in ("d", "p"):
            raise InputError(f"oracle must be 'd' or 'p', got {self.oracle!r}")
        if self.max_iterations < 1:
            raise InputError("max_iterations must be at least 1")


@dataclass(frozen=True)
class RealisationLog:
    """Worst-case realisations found by a classical-master run (not reusable)."""

    h: tuple[np.ndarray, ...] = ()
    T: tuple[np.ndarray, ...] = ()

    def __len__(self) -> int:
        return len(self.h)


@dataclass(frozen=True)
class CcgTrace:
    """Per-iteration record kept next to a :class:`~contextual_ro.model.Solution`."""

    z: tuple[np.ndarray, ...]
    alpha: tuple[float, ...]
    oracle_values: tuple[float, ...]
    violations: tuple[float, ...]


# --- master problem -------------------------------------------------------------

class _Master:
    """Master LP over ``(z, alpha, block variables...)`` grown one block at a time."""

    def __init__(self, p: TwoStageProblem, spec: BudgetSpec, q_nonneg: bool):
        self.p = p
        self.spec = spec
        Z = p.Z.lp(p.c)
        self.d_z = p.d_z
        self.n = p.d_z + 1
        self.c = [np.asarray(p.c, dtype=float), np.array([1.0])]
        self.lb = [Z.lb, np.array([0.0 if q_nonneg else -np.inf])]
        self.ub = [Z.ub, np.array([np.inf])]
        self.eq = [(Z.A_eq, Z.b_eq)]
        self.ineq = [(Z.A_in, Z.b_in)]
        self.blocks = 0
        rows = spec.conditioned.rows
        self.h_s = p.h_s()[rows]
        self.T_s = p.T_s()[rows]
        self.X = spec.conditioned.X
        self.x = spec.conditioned.x

    def _widen(self, k):
        """Append ``k`` new columns; returns the slice they occupy."""
        start = self.n
        self.n += k
        return slice(start, self.n)

    def _pad(self, A):
        return np.hstack([A, np.zeros((A.shape[0], self.n - A.shape[1]))])

    def add_realisation(self, h, T):
        """Classical block: copy of the recourse with a fixed realisation."""
        p = self.p
        u = self._widen(p.d_u)
        self.c.append(np.zeros(p.d_u))
        self.lb.append(np.zeros(p.d_u))
        self.ub.append(np.full(p.d_u, np.inf))
        A_eq = np.zeros((p.d_h, self.n))
        A_eq[:, : self.d_z] = T
        A_eq[:, u] = p.W
        self.eq.append((A_eq, np.asarray(h, dtype=float)))
        A_in = np.zeros((1, self.n))
        A_in[0, self.d_z] = -1.0
        A_in[0, u] = p.q
        self.ineq.append((A_in, np.zeros(1)))
        self.blocks += 1

    def add_dual_vertex(self, pi):
        """Contextual block: multipliers of the scenario-mixing LP for ``pi``."""
        pi = np.asarray(pi, dtype=float)
        S, d = self.X.shape
        g = self.spec.gamma
        use_gamma = np.isfinite(g) and d > 0
        one_norm = self.spec.norm == "one"
        n_g = (2 * d + (1 if one_norm else 0)) if use_gamma else 0
        cols = self._widen(1 + n_g)
        rho = cols.start
        gp = slice(rho + 1, rho + 1 + d)
        gm = slice(rho + 1 + d, rho + 1 + 2 * d)
        tau = rho + 1 + 2 * d
        c = np.zeros(1 + n_g)
        lb = np.zeros(1 + n_g)
        lb[0] = -np.inf
        self.c.append(c)
        self.lb.append(lb)
        self.ub.append(np.full(1 + n_g, np.inf))

        rows, rhs = [], []
        r = np.zeros(self.n)
        r[self.d_z] = -1.0
        r[rho] = 1.0
        if use_gamma:
            r[gp] = self.x
            r[gm] = -self.x
            if one_norm:
                r[tau] = g
            else:
                r[gp] += g
                r[gm] += g
        rows.append(r)
        rhs.append(0.0)
        piT = np.einsum("i,sij->sj", pi, self.T_s)
        pih = self.h_s @ pi
        for s in range(S):
            r = np.zeros(self.n)
            r[: self.d_z] = -piT[s]
            r[rho] = -1.0
            if use_gamma:
                r[gp] = -self.X[s]
                r[gm] = self.X[s]
            rows.append(r)
            rhs.append(-pih[s])
        if use_gamma and one_norm:
            for j in range(d):
                r = np.zeros(self.n)
                r[gp.start + j] = 1.0
                r[gm.start + j] = 1.0
                r[tau] = -1.0
                rows.append(r)
                rhs.append(0.0)
        self.ineq.append((np.array(rows), np.array(rhs)))
        self.blocks += 1

    def solve(self, with_alpha=True):
        c = np.concatenate(self.c)
        if not with_alpha:
            c[self.d_z] = 0.0
        lb = np.concatenate(self.lb)
        ub = np.concatenate(self.ub)
        A_eq = np.vstack([self._pad(A) for A, _ in self.eq])
        b_eq = np.concatenate([b for _, b in self.eq])
        A_in = np.vstack([self._pad(A) for A, _ in self.ineq])
        b_in = np.concatenate([b for _, b in self.ineq])
        return solve_lp(LinearProgram(c, A_eq, b_eq, A_in, b_in, lb, ub))


def _run_oracle(p, z, query, opts, settings, spec):
    if opts.scan_unconditional and not np.isfinite(spec.gamma):
        return oracle_scenario_scan(p, z, query, settings)
    fn = oracle_d_bilevel if opts.oracle == "d" else oracle_p_bilevel
    return fn(p, z, query, settings, node_limit=opts.node_limit)


def _first_stage_point(master: _Master):
    """Iteration-0 master without alpha: ``min c z`` over ``Z``."""
    sol = master.solve(with_alpha=False)
    if sol.status == "infeasible":
        return None, None
    if sol.status == "unbounded":
        feas = solve_lp(master.p.Z.lp(np.zeros(master.p.d_z)))
        return feas.x, -np.inf
    return sol.x[: master.d_z], float(master.p.c @ sol.x[: master.d_z])


def solve_ccg(
    p: TwoStageProblem,
    query: ContextQuery,
    opts: CcgOptions = CcgOptions(),
    settings: Settings = DEFAULT,
):
    """Master-oracle loop until the bound gap closes.

    Returns ``(Solution, pool)``; the pool is a :class:`CutPool` for the
    contextual master and a :class:`RealisationLog` for the classical one.
    The upper bound is the best ``c z + Q(z, x)`` seen so far and the returned
    ``z`` is the iterate that attained it.
    """
    sol, pool, _ = _ccg(p, query, opts, settings)
    return sol, pool


def _ccg(p, query, opts, settings):
    if not p.kind.is_rhs:
        raise InputError("solve_ccg needs right-hand-side uncertainty; use solve_objective_uncertainty")
    spec = resolve_budget(p.scenarios, query, settings)
    contextual = opts.master_kind == "contextual"
    q_nonneg = bool(np.all(p.q >= 0))
    master = _Master(p, spec, q_nonneg)
    fp = problem_fingerprint(p)
    pool: CutPool | RealisationLog = CutPool(fp) if contextual else RealisationLog()

    lb_trace, ub_trace = [], []
    zs, alphas, qvals, viols = [], [], [], []
    if opts.warm_pool is not None and contextual:
        validate_pool(opts.warm_pool, p, settings)
        pool = opts.warm_pool
        for e in pool.entries:
            master.add_dual_vertex(e.pi)

    if master.blocks:
        m = master.solve()
        if m.status == "infeasible":
            return _infeasible(spec), pool, None
        if m.status == "unbounded":
            z, LB = _first_stage_point(master)
            alpha = -np.inf
        else:
            z, alpha, LB = m.x[: p.d_z], float(m.x[p.d_z]), float(m.objective)
    else:
        z, LB = _first_stage_point(master)
        if z is None:
            return _infeasible(spec), pool, None
        alpha = 0.0 if q_nonneg else -np.inf
        if not q_nonneg:
            LB = -np.inf
    UB, best_z, best_alpha = np.inf, z, np.nan
    calls = 0
    status = "iteration_limit"
    it = 0
    for it in range(1, opts.max_iterations + 1):
        res = _run_oracle(p, z, query, opts, settings, spec)
        calls += 1
        total = float(p.c @ z + res.value)
        if total < UB:
            UB, best_z, best_alpha = total, z.copy(), float(res.value)
        zs.append(z.copy())
        alphas.append(alpha)
        qvals.append(float(res.value))
        lb_trace.append(LB)
        ub_trace.append(UB)
        if UB - LB <= opts.gap_tol * (1.0 + abs(UB)):
            status = "optimal"
            break
        if it == opts.max_iterations:
            break
        if contextual:
            cut = _cut_value(p, spec, res.pi, z)
        else:
            T_k = res.T_star if p.scenarios.T is not None else (p.T if p.T is not None else np.zeros((p.d_h, p.d_z)))
            cut = recourse_value(p, res.h_star - T_k @ z)
        violation = cut - alpha
        viols.append(violation)
        if not violation >= opts.gap_tol:
            raise CcgStalled(
                f"iteration {it}: new cut is not violated at the incumbent "
                f"(cut={cut:.10g}, Q={res.value:.10g}, alpha={alpha:.10g}, gap={UB - LB:.3g})"
            )
        if contextual:
            if not pool.contains(res.pi):
                stamp = datetime.datetime.now(datetime.timezone.utc).isoformat() if opts.timestamps else None
                pool = pool.with_entry(CutEntry(tuple(map(float, res.pi)), tuple(map(float, query.x)), it, stamp))
            master.add_dual_vertex(res.pi)
        else:
            master.add_realisation(res.h_star, T_k)
            pool = RealisationLog(pool.h + (res.h_star,), pool.T + (T_k,))
        m = master.solve()
        if m.status != "optimal":
            raise CcgStalled(f"master LP became {m.status} at iteration {it}")
        z, alpha = m.x[: p.d_z], float(m.x[p.d_z])
        LB = max(LB, float(m.objective))

    sol = Solution(
        z=best_z,
        objective=UB,
        alpha=best_alpha,
        lb_trace=tuple(lb_trace),
        ub_trace=tuple(ub_trace),
        iterations=it,
        status=status,
        oracle_calls=calls,
        gamma=spec.gamma,
        gamma0=spec.gamma0,
    )
    trace = CcgTrace(tuple(zs), tuple(alphas), tuple(qvals), tuple(viols))
    return sol, pool, trace


def _infeasible(spec):
    return Solution(None, np.nan, np.nan, status="infeasible", gamma=spec.gamma, gamma0=spec.gamma0)


def warm_start_solve(
    p: TwoStageProblem,
    query: ContextQuery,
    pool: CutPool,
    opts: CcgOptions = CcgOptions(),
    settings: Settings = DEFAULT,
):
    """Contextual CCG whose first master already holds every pooled ``pi``.

    The pooled rows are rebuilt with the new context and the current
    scenarios. Raises :class:`FingerprintMismatch` for a pool from another
    problem.
    """
    if not isinstance(pool, CutPool):
        raise InputError("warm starts need a CutPool from a contextual-master run")
    if opts.master_kind != "contextual":
        raise InputError("warm starts require master_kind='contextual'")
    return solve_ccg(p, query, replace(opts, warm_pool=pool), settings)


def solve_ccg_traced(p, query, opts=CcgOptions(), settings=DEFAULT):
    """Like :func:`solve_ccg` but also returns the per-iteration :class:`CcgTrace`."""
    return _ccg(p, query, opts, settings)


def _cut_value(p: TwoStageProblem, spec: BudgetSpec, pi, z) -> float:
    rows = spec.conditioned.rows
    v = p.rhs_s(z)[rows] @ np.asarray(pi, dtype=float)
    S = rows.size
    A_in, b_in, n_t = ball_rows(spec.conditioned.X, spec.conditioned.x, spec.gamma, spec.norm)
    c = np.concatenate([-v, np.zeros(n_t)])
    A_eq = np.concatenate([np.ones(S), np.zeros(n_t)])[None, :]
    sol = solve_lp(LinearProgram(c, A_eq, [1.0], A_in, b_in))
    return -sol.objective


def cut_lower_bound(p: TwoStageProblem, query: ContextQuery, pi, z, settings: Settings = DEFAULT) -> float:
    """Smallest ``alpha`` compatible with the rows of one stored ``pi`` at ``z``.

    Evaluated through the scenario-weight LP ``max sum_s theta_s pi (h_s - T_s z)``
    over the conditional weight polytope, which is the LP dual of the
    multiplier rows.
    """
    return _cut_value(p, resolve_budget(p.scenarios, query, settings), pi, z)


# --- objective uncertainty ------------------------------------------------------

def solve_objective_uncertainty(
    p: TwoStageProblem, query: ContextQuery, settings: Settings = DEFAULT
) -> Solution:
    """Single LP for problems whose recourse cost ``q`` is uncertain.

    The inner maximisation over scenario weights is replaced by its LP dual::

        min  c z + rho + x gamma + budget * ||gamma||_*
        s.t. W u = h - T z,  rho + x_s gamma >= q_s u  for every scenario,
             u >= 0, z in Z.
    """
    if p.kind.is_rhs:
        raise InputError("solve_objective_uncertainty needs kind 'objective_q'")
    spec = resolve_budget(p.scenarios, query, settings)
    rows = spec.conditioned.rows
    Qs = p.q_s()[rows]
    X, x = spec.conditioned.X, spec.conditioned.x
    S, d = X.shape
    g = spec.gamma
    use_gamma = np.isfinite(g) and d > 0
    one_norm = spec.norm == "one"
    n_g = (2 * d + (1 if one_norm else 0)) if use_gamma else 0
    Z = p.Z.lp(p.c)
    d_z, d_u, d_h = p.d_z, p.d_u, p.d_h
    # columns: z | u | rho | gamma+ | gamma- | tau
    o_u, o_rho = d_z, d_z + d_u
    o_gp, o_gm = o_rho + 1, o_rho + 1 + d
    o_tau = o_rho + 1 + 2 * d
    n = o_rho + 1 + n_g
    c = np.zeros(n)
    c[:d_z] = p.c
    c[o_rho] = 1.0
    if use_gamma:
        c[o_gp:o_gp + d] = x
        c[o_gm:o_gm + d] = -x
        if one_norm:
            c[o_tau] = g
        else:
            c[o_gp:o_gp + 2 * d] += g
    T = p.T if p.T is not None else np.zeros((d_h, d_z))
    A_eq = np.zeros((Z.A_eq.shape[0] + d_h, n))
    A_eq[: Z.A_eq.shape[0], :d_z] = Z.A_eq
    A_eq[Z.A_eq.shape[0]:, :d_z] = T
    A_eq[Z.A_eq.shape[0]:, o_u:o_rho] = p.W
    b_eq = np.concatenate([Z.b_eq, p.h])
    rows_in = [np.hstack([Z.A_in, np.zeros((Z.A_in.shape[0], n - d_z))])]
    rhs_in = [Z.b_in]
    blk = np.zeros((S, n))
    blk[:, o_u:o_rho] = Qs
    blk[:, o_rho] = -1.0
    if use_gamma:
        blk[:, o_gp:o_gp + d] = -X
        blk[:, o_gm:o_gm + d] = X
    rows_in.append(blk)
    rhs_in.append(np.zeros(S))
    if use_gamma and one_norm:
        blk = np.zeros((d, n))
        blk[:, o_gp:o_gp + d] = np.eye(d)
        blk[:, o_gm:o_gm + d] = np.eye(d)
        blk[:, o_tau] = -1.0
        rows_in.append(blk)
        rhs_in.append(np.zeros(d))
    lb = np.concatenate([Z.lb, np.zeros(d_u), [-np.inf], np.zeros(n_g)])
    ub = np.concatenate([Z.ub, np.full(d_u + 1 + n_g, np.inf)])
    sol = solve_lp(LinearProgram(c, A_eq, b_eq, np.vstack(rows_in), np.concatenate(rhs_in), lb, ub))
    if sol.status == "infeasible":
        return _infeasible(spec)
    if sol.status == "unbounded":
        raise InputError("objective-uncertainty LP is unbounded: worst-case recourse cost unbounded below")
    z = sol.x[:d_z]
    obj = float(sol.objective)
    alpha = obj - float(p.c @ z)
    return Solution(z, obj, alpha, (obj,), (obj,), 1, "optimal", 0, spec.gamma, spec.gamma0)
