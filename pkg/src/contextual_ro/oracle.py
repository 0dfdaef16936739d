"""Worst-case recourse value ``Q(z, x)`` over the conditional uncertainty set.

Three evaluators are provided for right-hand-side uncertainty:

* :func:`oracle_p_bilevel` keeps the recourse LP in primal form and replaces
  it by its optimality conditions, one complementarity binary per recourse
  column.
* :func:`oracle_d_bilevel` maximises over dual vertices ``pi`` of the recourse
  problem; for fixed ``pi`` the worst mixture of scenarios is an LP whose own
  dual carries the context ``x`` in its objective. Complementarity binaries
  are needed only for the scenario weights and the budget rows.
* :func:`oracle_bruteforce` enumerates the vertices of the weight polytope and
  solves the recourse LP at each one (small instances only).

Both MILP oracles pick big-M constants from the data, verify complementarity
after the solve and double every constant (up to five times) when the optimum
sits within 1% of one of them.
"""

from __future__ import annotations

import functools
import itertools
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BigMTooSmall,
    IncompleteRecourse,
    InputError,
    LimitReached,
    UnboundedOracle,
)
from .lp import LinearProgram, LpSolution, solve_lp
from .milp import MixedBinaryProgram, solve_milp
from .model import ContextQuery, TwoStageProblem, UncertaintyKind
from .settings import DEFAULT, Settings
from .uncertainty import BudgetSpec, ball_rows, resolve_budget

MAX_ESCALATIONS = 5
TIGHT_FRACTION = 0.99
COMPLEMENTARITY_TOL = 1e-6
BRUTE_MAX_S = 8
BRUTE_MAX_DX = 3


@dataclass(frozen=True)
class OracleResult:
    """Worst case found by an oracle.

    ``theta`` is indexed by the full scenario set (zeros on scenarios removed
    by the categorical match). ``rho`` and ``gamma_vec`` are the multipliers of
    the scenario-mixing LP; ``value == rho + x @ gamma_vec + gamma *
    dual_norm(gamma_vec) + offset``; ``offset`` is ``pi`` applied to the mean
    kept right-hand side (minus ``T z`` when the technology matrix is fixed).
    """

    value: float
    pi: np.ndarray
    theta: np.ndarray
    h_star: np.ndarray
    T_star: np.ndarray
    rho: float = np.nan
    gamma_vec: np.ndarray | None = None
    offset: float = 0.0
    method: str = ""
    nodes: int = 0
    escalations: int = 0
    vertices: int = 0
    big_m: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        f = lambda a: None if a is None else np.asarray(a, dtype=float).tolist()
        return {
            "method": self.method,
            "value": float(self.value),
            "pi": f(self.pi),
            "theta": f(self.theta),
            "h_star": f(self.h_star),
            "T_star": f(self.T_star),
            "rho": None if not np.isfinite(self.rho) else float(self.rho),
            "gamma_vec": f(self.gamma_vec),
            "offset": float(self.offset),
            "nodes": self.nodes,
            "escalations": self.escalations,
            "vertices": self.vertices,
        }


def recourse_lp(p: TwoStageProblem, rhs, q=None) -> LpSolution:
    """Solve ``min q u  s.t.  W u = rhs, u >= 0``; duals of the rows are ``pi``."""
    q = p.q if q is None else q
    return solve_lp(LinearProgram(q, p.W, rhs))


def recourse_value(p: TwoStageProblem, rhs) -> float:
    sol = recourse_lp(p, rhs)
    if sol.status == "infeasible":
        return np.inf
    if sol.status == "unbounded":
        return -np.inf
    return sol.objective


@functools.lru_cache(maxsize=64)
def _dual_box_cached(W_bytes, q_bytes, m, n):
    W = np.frombuffer(W_bytes).reshape(m, n)
    q = np.frombuffer(q_bytes)
    lo, hi = np.empty(m), np.empty(m)
    for i in range(m):
        e = np.zeros(m)
        e[i] = 1.0
        for sign, out in ((1.0, lo), (-1.0, hi)):
            sol = solve_lp(LinearProgram(sign * e, A_in=W.T, b_in=q, lb=np.full(m, -np.inf)))
            if sol.status == "infeasible":
                raise InputError("recourse dual feasible set {pi : W.T pi <= q} is empty")
            out[i] = sign * sol.objective if sol.status == "optimal" else -sign * np.inf
    lo.setflags(write=False)
    hi.setflags(write=False)
    return lo, hi


def dual_box(W, q) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate extent of ``{pi : W.T pi <= q}`` (infinite where unbounded)."""
    W = np.ascontiguousarray(W, dtype=float)
    q = np.ascontiguousarray(q, dtype=float)
    return _dual_box_cached(W.tobytes(), q.tobytes(), *W.shape)


@dataclass
class _Instance:
    """Right-hand sides and covariates of the scenarios kept for this query."""

    p: TwoStageProblem
    z: np.ndarray
    spec: BudgetSpec
    rows: np.ndarray
    R: np.ndarray  # scenario right-hand sides h_s - T_s z, S_c x d_h
    X: np.ndarray
    x: np.ndarray
    h_only: bool
    Tz: np.ndarray

    @property
    def S(self) -> int:
        return self.rows.size

    def full_theta(self, theta_c) -> np.ndarray:
        theta = np.zeros(self.p.scenarios.S)
        theta[self.rows] = np.clip(theta_c, 0.0, None)
        return theta

    def star(self, theta):
        h = theta @ self.p.h_s()
        T = np.einsum("s,sij->ij", theta, self.p.T_s())
        return h, T


def _prepare(p: TwoStageProblem, z, query: ContextQuery, settings: Settings) -> _Instance:
    if not p.kind.is_rhs:
        raise InputError("oracles require right-hand-side uncertainty; use the objective-uncertainty solver")
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != p.d_z:
        raise InputError(f"z has {z.size} entries, expected d_z={p.d_z}")
    spec = resolve_budget(p.scenarios, query, settings)
    rows = spec.conditioned.rows
    h_only = p.kind is UncertaintyKind.RHS_H_ONLY
    T = p.T if p.T is not None else np.zeros((p.d_h, p.d_z))
    Tz = T @ z if h_only else np.zeros(p.d_h)
    R = p.rhs_s(z)[rows]
    return _Instance(p, z, spec, rows, R, spec.conditioned.X, spec.conditioned.x, h_only, Tz)


def _check_scenarios(inst: _Instance):
    """Solve the recourse LP at every kept scenario; returns their dual vectors."""
    pis = []
    for k, r in enumerate(inst.R):
        sol = recourse_lp(inst.p, r)
        if sol.status == "infeasible":
            theta = inst.full_theta(np.eye(inst.S)[k])
            raise IncompleteRecourse(
                f"recourse infeasible at scenario {int(inst.rows[k])}", theta
            )
        if sol.status == "unbounded":
            raise UnboundedOracle("recourse LP unbounded below: {pi : W.T pi <= q} is empty")
        pis.append(sol.y_eq)
    return np.array(pis)


@dataclass
class _PiBounds:
    lo: np.ndarray
    hi: np.ndarray
    heuristic_lo: np.ndarray  # bound sides that came from the fallback rule
    heuristic_hi: np.ndarray
    scale: float  # max |pi_i| admitted


def _pi_bounds(inst: _Instance, factor: float) -> _PiBounds:
    lo, hi = dual_box(inst.p.W, inst.p.q)
    hlo, hhi = ~np.isfinite(lo), ~np.isfinite(hi)
    if hlo.any() or hhi.any():
        pis = _check_scenarios(inst)
        fallback = 10.0 * (1.0 + np.max(np.abs(pis))) * factor
        lo = np.where(hlo, -fallback, lo)
        hi = np.where(hhi, fallback, hi)
    scale = float(max(np.max(np.abs(lo), initial=0.0), np.max(np.abs(hi), initial=0.0)))
    return _PiBounds(lo.copy(), hi.copy(), hlo, hhi, scale)


def _pi_tight(pi, b: _PiBounds) -> bool:
    span = TIGHT_FRACTION * np.maximum(np.abs(b.lo), np.abs(b.hi))
    return bool(np.any(b.heuristic_lo & (pi <= -span)) or np.any(b.heuristic_hi & (pi >= span)))


def _diameter(X, norm) -> float:
    if X.shape[0] < 2 or X.shape[1] == 0:
        return 0.0
    D = np.abs(X[:, None, :] - X[None, :, :])
    return float(np.max(D.max(axis=2) if norm == "inf" else D.sum(axis=2)))


def _hull_depth(X, x) -> float:
    """Radius of the largest 1-norm ball around ``x`` inside the hull of the rows of ``X``.

    Found by shooting a ray from ``x`` along each signed coordinate axis; the
    hull contains the cross-polytope spanned by the shortest of the ``2 d``
    hits. Zero when ``x`` is on the boundary or outside.
    """
    S, d = X.shape
    if d == 0 or S < 2:
        return 0.0
    A_eq = np.vstack([np.hstack([X.T, np.zeros((d, 1))]), np.concatenate([np.ones(S), [0.0]])[None, :]])
    c = np.zeros(S + 1)
    c[-1] = -1.0
    depth = np.inf
    for j in range(d):
        for sign in (1.0, -1.0):
            A = A_eq.copy()
            A[j, -1] = -sign
            sol = solve_lp(LinearProgram(c, A, np.concatenate([x, [1.0]])))
            if sol.status != "optimal":
                return 0.0
            depth = min(depth, -sol.objective)
    return max(0.0, float(depth))


def _ball_slack_bounds(inst: _Instance, gamma, norm) -> np.ndarray:
    """Upper bounds on the slack of every budget row over the weight polytope."""
    X, x = inst.X, inst.x
    d = X.shape[1]
    if norm == "inf":
        return np.concatenate([x + gamma - X.min(axis=0), gamma - x + X.max(axis=0)])
    dev = np.max(np.abs(X - x), axis=0)
    return np.concatenate([gamma + dev, gamma + dev, [gamma]]) if d else np.zeros(0)


def _trace_fn():
    if os.environ.get("DDCRO_ORACLE_TRACE"):
        return lambda line: print(line, file=sys.stderr)
    return None


def _solve(mbp: MixedBinaryProgram, node_limit):
    res = solve_milp(mbp, gap_tol=DEFAULT.gap_tol, node_limit=node_limit, trace=_trace_fn())
    if res.status == "infeasible":
        raise IncompleteRecourse("oracle MILP infeasible: recourse is not complete over the set")
    if res.status == "unbounded":
        raise UnboundedOracle("oracle MILP unbounded: recourse infeasible for some realisation")
    if res.status != "optimal":
        raise LimitReached(f"oracle MILP stopped at the node limit ({res.status}, {res.nodes} nodes)")
    return res


def _confirm_value(inst: _Instance, theta_c, milp_value, settings):
    """Re-solve the recourse LP at the worst mixture; returns (value, pi, consistent)."""
    rhs = theta_c @ inst.R
    sol = recourse_lp(inst.p, rhs)
    if sol.status == "infeasible":
        raise IncompleteRecourse("recourse infeasible at the worst-case mixture", inst.full_theta(theta_c))
    if sol.status == "unbounded":
        raise UnboundedOracle("recourse LP unbounded below at the worst-case mixture")
    ok = abs(sol.objective - milp_value) <= 1e-6 * (1.0 + abs(sol.objective))
    return sol.objective, sol.y_eq, ok


def _clean_weights(theta):
    """Zero out weights at solver-noise level and renormalise onto the simplex."""
    theta = np.where(theta > DEFAULT.pi_tol, theta, 0.0)
    return theta / theta.sum()


def _smallest_multipliers(lp: LinearProgram, res, first_binary: int, lam: slice | None, bound: float,
                          pi: slice | None = None, pi_scale: float = 1.0):
    """Among solutions with the incumbent's binaries and value, take the least multiplier mass.

    Near ``gamma0`` the follower's dual has almost flat directions, and an
    unbounded dual polyhedron lets ``pi`` slide along recession directions that
    leave the value unchanged. Without this step the LP may park either on its
    big-M bound for no gain, which would look like a binding constant.
    ``pi`` (when given) is pulled towards zero through ``|pi_i| <= a_i``.
    """
    n = lp.n
    k = 0 if pi is None else pi.stop - pi.start
    lb = np.concatenate([lp.lb, np.zeros(k)])
    ub = np.concatenate([lp.ub, np.full(k, np.inf)])
    fixed = np.round(res.x[first_binary:])
    lb[first_binary:n] = ub[first_binary:n] = fixed
    c = np.zeros(n + k)
    if lam is not None:
        c[lam] = 1.0 / max(bound, 1.0)
    c[n:] = 1.0 / max(pi_scale, 1.0)
    floor = res.objective - 1e-9 * (1.0 + abs(res.objective))
    rows = [np.hstack([lp.A_in, np.zeros((lp.A_in.shape[0], k))]),
            np.concatenate([-lp.c, np.zeros(k)])[None, :]]
    rhs = [lp.b_in, [-floor]]
    if k:
        blk = np.zeros((2 * k, n + k))
        idx = np.arange(k)
        blk[idx, pi.start + idx] = 1.0
        blk[k + idx, pi.start + idx] = -1.0
        blk[idx, n + idx] = -1.0
        blk[k + idx, n + idx] = -1.0
        rows.append(blk)
        rhs.append(np.zeros(2 * k))
    A_eq = np.hstack([lp.A_eq, np.zeros((lp.A_eq.shape[0], k))])
    sol = solve_lp(LinearProgram(c, A_eq, lp.b_eq, np.vstack(rows), np.concatenate(rhs), lb, ub))
    return sol.x[:n] if sol.optimal else res.x


def _singleton_result(inst, method):
    """Budget-free shortcut: only one scenario survives conditioning."""
    theta_c = np.ones(1)
    sol = recourse_lp(inst.p, inst.R[0])
    if sol.status != "optimal":
        raise IncompleteRecourse("recourse infeasible at the only admissible scenario", inst.full_theta(theta_c))
    theta = inst.full_theta(theta_c)
    h, T = inst.star(theta)
    return OracleResult(sol.objective, sol.y_eq, theta, h, T, method=method)


def oracle_d_bilevel(
    p: TwoStageProblem,
    z,
    query: ContextQuery,
    settings: Settings = DEFAULT,
    node_limit: int = 20000,
) -> OracleResult:
    """Worst-case recourse value by the dual-vertex MILP.

    The leader picks ``pi`` with ``W.T pi <= q``; the follower mixes scenarios
    to maximise ``sum_s theta_s pi @ r_s`` within the budget. The follower is
    replaced by its optimality conditions: dual feasibility of the
    ``(rho, lambda)`` multipliers, primal feasibility of ``theta``, and
    big-M complementarity with one binary per scenario and per budget row.
    With a fixed technology matrix the ``-pi @ T z`` term is moved to the
    leader objective so the follower only sees ``pi @ h_s``.
    """
    inst = _prepare(p, z, query, settings)
    if inst.S == 1:
        return _singleton_result(inst, "d_bilevel")
    spec = inst.spec
    gamma, norm = spec.gamma, spec.norm
    S, d_h, d_x = inst.S, p.d_h, inst.X.shape[1]
    Gfull, g, n_t = ball_rows(inst.X, inst.x, gamma, norm)
    L = g.size
    G, H = Gfull[:, :S], Gfull[:, S:]
    Rf = p.h_s()[inst.rows] if inst.h_only else inst.R  # follower right-hand sides
    # Weights sum to one, so a common shift of the follower values moves into
    # the leader objective; centring keeps the big-M constants small.
    centre = Rf.mean(axis=0)
    Rf = Rf - centre
    lead = centre - inst.Tz if inst.h_only else centre
    diam = _diameter(inst.X, norm)
    # A 1-norm ball of radius r inside the hull bounds the follower multipliers
    # in the same way as budget slack does; the inf-norm loses a factor d.
    depth = _hull_depth(inst.X, inst.x) if L else 0.0
    if norm == "inf" and d_x:
        depth /= d_x
    slack_g = _ball_slack_bounds(inst, gamma, norm) if L else np.zeros(0)

    factor, escalations = 1.0, 0
    while True:
        pb = _pi_bounds(inst, factor)
        V = pb.scale * float(np.max(np.abs(Rf).sum(axis=1)))
        if L:
            margin = gamma - spec.gamma0 + depth
            floor = 1e-3 * (diam + 1.0)
            lam_bound = factor * 2.0 * (V + 1.0) / max(margin, floor)
        else:
            lam_bound = 0.0
        m_slack = factor * 1.1 * (2.0 * V + diam * lam_bound + 1.0)
        m_g = factor * 1.1 * (slack_g + 1.0)

        # columns: theta | t | rho | lambda | pi | B | C
        o_t = S
        o_rho = o_t + n_t
        o_lam = o_rho + 1
        o_pi = o_lam + L
        o_B = o_pi + d_h
        o_C = o_B + S
        n = o_C + L

        c = np.zeros(n)
        c[o_rho] = 1.0
        c[o_lam:o_pi] = g
        c[o_pi:o_B] = lead

        A_eq, b_eq, A_in, b_in = [], [], [], []

        def row():
            return np.zeros(n)

        r = row()
        r[:S] = 1.0
        A_eq.append(r)
        b_eq.append(1.0)
        for j in range(n_t):
            r = row()
            r[o_lam:o_pi] = H[:, j]
            A_eq.append(r)
            b_eq.append(0.0)
        for l in range(L):
            r = row()
            r[:S] = G[l]
            r[o_t:o_rho] = H[l]
            A_in.append(r)
            b_in.append(g[l])
        for s in range(S):
            # follower slack rho + G_s.lam - pi.r_s in [0, M B_s]
            r = row()
            r[o_rho] = 1.0
            r[o_lam:o_pi] = G[:, s]
            r[o_pi:o_B] = -Rf[s]
            A_in.append(-r)
            b_in.append(0.0)
            r2 = r.copy()
            r2[o_B + s] = -m_slack
            A_in.append(r2)
            b_in.append(0.0)
            r = row()
            r[s] = 1.0
            r[o_B + s] = 1.0
            A_in.append(r)
            b_in.append(1.0)
        for l in range(L):
            r = row()
            r[o_lam + l] = 1.0
            r[o_C + l] = -lam_bound
            A_in.append(r)
            b_in.append(0.0)
            r = row()
            r[:S] = -G[l]
            r[o_t:o_rho] = -H[l]
            r[o_C + l] = m_g[l]
            A_in.append(r)
            b_in.append(m_g[l] - g[l])
        for j in range(p.d_u):
            r = row()
            r[o_pi:o_B] = p.W[:, j]
            A_in.append(r)
            b_in.append(p.q[j])

        lb = np.zeros(n)
        ub = np.full(n, np.inf)
        ub[:S] = 1.0
        if n_t:
            ub[o_t:o_rho] = gamma
        lb[o_rho] = -np.inf
        ub[o_lam:o_pi] = lam_bound
        lb[o_pi:o_B] = pb.lo
        ub[o_pi:o_B] = pb.hi
        ub[o_B:] = 1.0
        lp = LinearProgram(c, np.array(A_eq), np.array(b_eq), np.array(A_in), np.array(b_in), lb, ub)
        res = _solve(MixedBinaryProgram(lp, tuple(range(o_B, n)), "max"), node_limit)
        xv = res.x
        unbounded_pi = bool(pb.heuristic_lo.any() or pb.heuristic_hi.any())
        if L or unbounded_pi:
            xv = _smallest_multipliers(lp, res, o_B, slice(o_lam, o_pi) if L else None, lam_bound,
                                       slice(o_pi, o_B) if unbounded_pi else None, pb.scale)
        theta_c = _clean_weights(xv[:S])
        lam = xv[o_lam:o_pi]
        rho = xv[o_rho]
        pi = xv[o_pi:o_B]
        follower_slack = rho + G.T @ lam - Rf @ pi
        if np.any(theta_c * follower_slack > COMPLEMENTARITY_TOL * (1.0 + abs(res.objective))):
            raise BigMTooSmall("complementarity between scenario weights and follower slacks violated")
        value, pi_lp, consistent = _confirm_value(inst, theta_c, res.objective, settings)
        tight = (
            _pi_tight(pi, pb)
            or (L and np.any(lam >= TIGHT_FRACTION * lam_bound))
            or np.any(follower_slack >= TIGHT_FRACTION * m_slack)
            or not consistent
        )
        if not tight:
            break
        if escalations >= MAX_ESCALATIONS:
            raise BigMTooSmall(
                f"big-M constants still binding after {MAX_ESCALATIONS} doublings "
                f"(pi bound {pb.scale:.3g}, multiplier bound {lam_bound:.3g})"
            )
        factor *= 2.0
        escalations += 1

    theta = inst.full_theta(theta_c)
    h, T = inst.star(theta)
    gamma_vec = np.zeros(p.scenarios.d_x)
    cont = ~p.scenarios.categorical
    if L:
        gamma_vec[cont] = lam[:d_x] - lam[d_x:2 * d_x]
    offset = float(pi @ lead)
    return OracleResult(
        value=value, pi=pi, theta=theta, h_star=h, T_star=T, rho=float(rho),
        gamma_vec=gamma_vec, offset=offset, method="d_bilevel", nodes=res.nodes,
        escalations=escalations,
        big_m={"pi": pb.scale, "multiplier": lam_bound, "slack": m_slack},
    )


@functools.lru_cache(maxsize=64)
def _primal_box_cached(W_bytes, m, n, R_bytes, s, G_bytes, g_bytes, L, n_t):
    """Largest value of each recourse column over all admissible mixtures."""
    W = np.frombuffer(W_bytes).reshape(m, n)
    R = np.frombuffer(R_bytes).reshape(s, m)
    G = np.frombuffer(G_bytes).reshape(L, s + n_t)
    g = np.frombuffer(g_bytes)
    # columns: u | theta | t
    A_eq = np.vstack([
        np.hstack([W, -R.T, np.zeros((m, n_t))]),
        np.concatenate([np.zeros(n), np.ones(s), np.zeros(n_t)])[None, :],
    ])
    b_eq = np.concatenate([np.zeros(m), [1.0]])
    A_in = np.hstack([np.zeros((L, n)), G])
    out = np.empty(n)
    for j in range(n):
        c = np.zeros(n + s + n_t)
        c[j] = -1.0
        sol = solve_lp(LinearProgram(c, A_eq, b_eq, A_in, g))
        out[j] = -sol.objective if sol.status == "optimal" else np.inf
    return out


def oracle_p_bilevel(
    p: TwoStageProblem,
    z,
    query: ContextQuery,
    settings: Settings = DEFAULT,
    node_limit: int = 20000,
) -> OracleResult:
    """Worst-case recourse value with the recourse LP kept in primal form.

    The leader chooses scenario weights within the budget; the recourse LP
    ``min q u  s.t.  W u = sum_s theta_s r_s`` is replaced by primal
    feasibility, dual feasibility ``W.T pi <= q`` and one complementarity
    binary per recourse column. Equality rows need no binary.
    """
    inst = _prepare(p, z, query, settings)
    if inst.S == 1:
        return _singleton_result(inst, "p_bilevel")
    spec = inst.spec
    gamma, norm = spec.gamma, spec.norm
    S, d_h, d_u = inst.S, p.d_h, p.d_u
    Gfull, g, n_t = ball_rows(inst.X, inst.x, gamma, norm)
    L = g.size
    if L == 0:
        Gfull = np.zeros((0, S + n_t))
    R = np.ascontiguousarray(inst.R)
    u_box = _primal_box_cached(
        np.ascontiguousarray(p.W).tobytes(), d_h, d_u, R.tobytes(), S,
        np.ascontiguousarray(Gfull).tobytes(), np.ascontiguousarray(g, dtype=float).tobytes(), L, n_t,
    )
    heur_u = ~np.isfinite(u_box)
    if heur_u.any():
        sols = [recourse_lp(p, r) for r in R]
        for k, sol in enumerate(sols):
            if sol.status == "infeasible":
                raise IncompleteRecourse(f"recourse infeasible at scenario {int(inst.rows[k])}",
                                         inst.full_theta(np.eye(S)[k]))
        u_scale = 10.0 * (1.0 + max(np.max(np.abs(sol.x)) for sol in sols if sol.optimal))
    else:
        u_scale = 0.0

    factor, escalations = 1.0, 0
    while True:
        pb = _pi_bounds(inst, factor)
        m_u = np.where(heur_u, u_scale * factor, 1.1 * u_box + 1e-6)
        m_rc = factor * 1.1 * (p.q + pb.scale * np.abs(p.W).sum(axis=0) + 1.0)

        # columns: theta | t | u | pi | b
        o_u = S + n_t
        o_pi = o_u + d_u
        o_b = o_pi + d_h
        n = o_b + d_u
        c = np.zeros(n)
        c[o_u:o_pi] = p.q

        A_eq = np.zeros((1 + d_h, n))
        A_eq[0, :S] = 1.0
        A_eq[1:, :S] = -R.T
        A_eq[1:, o_u:o_pi] = p.W
        b_eq = np.concatenate([[1.0], np.zeros(d_h)])
        blocks, rhs = [], []
        if L:
            blk = np.zeros((L, n))
            blk[:, :S + n_t] = Gfull
            blocks.append(blk)
            rhs.append(g)
        blk = np.zeros((d_u, n))
        blk[:, o_pi:o_b] = p.W.T
        blocks.append(blk)
        rhs.append(p.q)
        blk = np.zeros((d_u, n))
        blk[:, o_u:o_pi] = np.eye(d_u)
        blk[:, o_b:] = -np.diag(m_u)
        blocks.append(blk)
        rhs.append(np.zeros(d_u))
        blk = np.zeros((d_u, n))
        blk[:, o_pi:o_b] = -p.W.T
        blk[:, o_b:] = np.diag(m_rc)
        blocks.append(blk)
        rhs.append(m_rc - p.q)
        lb = np.zeros(n)
        ub = np.full(n, np.inf)
        ub[:S] = 1.0
        if n_t:
            ub[S:o_u] = gamma
        ub[o_u:o_pi] = m_u
        lb[o_pi:o_b] = pb.lo
        ub[o_pi:o_b] = pb.hi
        ub[o_b:] = 1.0
        lp = LinearProgram(c, A_eq, b_eq, np.vstack(blocks), np.concatenate(rhs), lb, ub)
        res = _solve(MixedBinaryProgram(lp, tuple(range(o_b, n)), "max"), node_limit)
        xv = res.x
        if pb.heuristic_lo.any() or pb.heuristic_hi.any():
            xv = _smallest_multipliers(lp, res, o_b, None, 1.0, slice(o_pi, o_b), pb.scale)
        theta_c = _clean_weights(xv[:S])
        u = xv[o_u:o_pi]
        pi = xv[o_pi:o_b]
        rc = p.q - p.W.T @ pi
        if np.any(u * rc > COMPLEMENTARITY_TOL * (1.0 + abs(res.objective))):
            raise BigMTooSmall("complementarity between recourse columns and reduced costs violated")
        value, pi_lp, consistent = _confirm_value(inst, theta_c, res.objective, settings)
        tight = (
            _pi_tight(pi, pb)
            or np.any(heur_u & (u >= TIGHT_FRACTION * m_u))
            or np.any(rc >= TIGHT_FRACTION * m_rc)
            or not consistent
        )
        if not tight:
            break
        if escalations >= MAX_ESCALATIONS:
            raise BigMTooSmall(f"big-M constants still binding after {MAX_ESCALATIONS} doublings")
        factor *= 2.0
        escalations += 1

    theta = inst.full_theta(theta_c)
    h, T = inst.star(theta)
    return OracleResult(
        value=value, pi=pi_lp, theta=theta, h_star=h, T_star=T, method="p_bilevel",
        nodes=res.nodes, escalations=escalations,
        big_m={"pi": pb.scale, "u": float(np.max(m_u, initial=0.0))},
    )


def weight_vertices(X, x, gamma, norm, tol=1e-9) -> np.ndarray:
    """All vertices of ``{theta in simplex : ||X.T theta - x|| <= gamma}``.

    Each vertex is the solution of ``S - 1`` active inequalities together with
    ``sum(theta) = 1``. The 1-norm ball is written with its ``2^d`` sign
    inequalities so no auxiliary variables are needed.
    """
    X = np.asarray(X, dtype=float)
    S, d = X.shape
    rows = [-np.eye(S)]
    rhs = [np.zeros(S)]
    if np.isfinite(gamma) and d:
        if norm == "inf":
            rows += [X.T, -X.T]
            rhs += [x + gamma, gamma - x]
        else:
            signs = np.array(list(itertools.product((-1.0, 1.0), repeat=d)))
            rows.append(signs @ X.T)
            rhs.append(gamma + signs @ x)
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    if S == 1:
        return np.ones((1, 1)) if np.all(A @ np.ones(1) <= b + tol) else np.zeros((0, 1))
    combos = np.array(list(itertools.combinations(range(A.shape[0]), S - 1)))
    M = np.empty((len(combos), S, S))
    M[:, 0, :] = 1.0
    M[:, 1:, :] = A[combos]
    rhs_b = np.empty((len(combos), S))
    rhs_b[:, 0] = 1.0
    rhs_b[:, 1:] = b[combos]
    ok = np.abs(np.linalg.det(M)) > 1e-10
    thetas = np.linalg.solve(M[ok], rhs_b[ok][..., None])[..., 0]
    feas = np.all(thetas @ A.T <= b + tol, axis=1)
    thetas = thetas[feas]
    if thetas.size == 0:
        return thetas.reshape(0, S)
    thetas = np.round(thetas / tol) * tol
    uniq = np.unique(thetas, axis=0)
    return np.clip(uniq, 0.0, None)


def oracle_bruteforce(p: TwoStageProblem, z, query: ContextQuery, settings: Settings = DEFAULT) -> OracleResult:
    """Maximise the recourse value over every vertex of the weight polytope.

    Valid because the recourse value is convex in its right-hand side, so the
    maximum over the polytope is attained at a vertex.
    """
    inst = _prepare(p, z, query, settings)
    if inst.S > BRUTE_MAX_S or inst.X.shape[1] > BRUTE_MAX_DX:
        raise InputError(
            f"brute-force oracle limited to S <= {BRUTE_MAX_S} and d_x <= {BRUTE_MAX_DX} "
            f"(got S={inst.S}, d_x={inst.X.shape[1]})"
        )
    verts = weight_vertices(inst.X, inst.x, inst.spec.gamma, inst.spec.norm)
    if verts.shape[0] == 0:
        raise InputError("weight polytope has no vertex")
    best, best_sol, best_theta = -np.inf, None, None
    for v in verts:
        sol = recourse_lp(p, v @ inst.R)
        if sol.status == "infeasible":
            raise IncompleteRecourse("recourse infeasible at a vertex of the set", inst.full_theta(v))
        if sol.status == "unbounded":
            raise UnboundedOracle("recourse LP unbounded below")
        if sol.objective > best:
            best, best_sol, best_theta = sol.objective, sol, v
    theta = inst.full_theta(best_theta)
    h, T = inst.star(theta)
    return OracleResult(best, best_sol.y_eq, theta, h, T, method="bruteforce", vertices=verts.shape[0])


def oracle_scenario_scan(p: TwoStageProblem, z, query: ContextQuery, settings: Settings = DEFAULT) -> OracleResult:
    """Exact oracle for an infinite budget: the best single scenario.

    Without the covariate constraint the weights range over the whole simplex,
    whose vertices are the individual scenarios, and the recourse value is
    convex in the mixture.
    """
    inst = _prepare(p, z, query, settings)
    if np.isfinite(inst.spec.gamma):
        raise InputError("scenario scan is only exact for an infinite budget")
    best, best_k, best_pi = -np.inf, -1, None
    for k, r in enumerate(inst.R):
        sol = recourse_lp(p, r)
        if sol.status == "infeasible":
            raise IncompleteRecourse(f"recourse infeasible at scenario {int(inst.rows[k])}",
                                     inst.full_theta(np.eye(inst.S)[k]))
        if sol.status == "unbounded":
            raise UnboundedOracle("recourse LP unbounded below: {pi : W.T pi <= q} is empty")
        if sol.objective > best:
            best, best_k, best_pi = sol.objective, k, sol.y_eq
    theta = inst.full_theta(np.eye(inst.S)[best_k])
    h, T = inst.star(theta)
    return OracleResult(best, best_pi, theta, h, T, rho=best, gamma_vec=np.zeros(p.scenarios.d_x),
                        method="scenario_scan", vertices=inst.S)


ORACLES = {"p": oracle_p_bilevel, "d": oracle_d_bilevel, "brute": oracle_bruteforce, "scan": oracle_scenario_scan}
