"""Independent brute-force references used by the test-suite.

Nothing in here calls the simplex code it is meant to check.
"""

import itertools

import numpy as np


def lp_vertex_enumeration(c, A_eq, b_eq, A_in, b_in, lb, ub, tol=1e-9, chunk=20000):
    """Minimise ``c @ x`` by enumerating every vertex of a bounded polyhedron.

    All bounds must be finite. Returns ``(objective, x)`` or ``(None, None)``
    when no vertex is feasible.
    """
    n = len(c)
    rows = [A_in, np.eye(n), -np.eye(n)]
    rhs = [b_in, ub, -lb]
    G = np.vstack(rows)
    g = np.concatenate(rhs)
    k = n - A_eq.shape[0]
    best, best_x = None, None
    combos = itertools.combinations(range(G.shape[0]), k)
    while True:
        batch = list(itertools.islice(combos, chunk))
        if not batch:
            break
        idx = np.array(batch, dtype=int).reshape(len(batch), k)
        M = np.concatenate([np.broadcast_to(A_eq, (len(batch),) + A_eq.shape), G[idx]], axis=1)
        r = np.concatenate([np.broadcast_to(b_eq, (len(batch), len(b_eq))), g[idx]], axis=1)
        det = np.linalg.det(M)
        ok = np.abs(det) > 1e-9
        if not ok.any():
            continue
        X = np.linalg.solve(M[ok], r[ok][..., None])[..., 0]
        feas = np.all(X @ G.T <= g + tol, axis=1)
        if A_eq.shape[0]:
            feas &= np.all(np.abs(X @ A_eq.T - b_eq) <= tol, axis=1)
        if not feas.any():
            continue
        vals = X[feas] @ c
        i = int(np.argmin(vals))
        if best is None or vals[i] < best:
            best, best_x = float(vals[i]), X[feas][i]
    return best, best_x


def enumerate_binaries_min(c, A_eq, b_eq, A_in, b_in, lb, ub, binary):
    """Exhaustive binary enumeration with every pattern solved by vertex enumeration."""
    best = None
    for pattern in itertools.product((0.0, 1.0), repeat=len(binary)):
        lo, hi = lb.copy(), ub.copy()
        lo[list(binary)] = pattern
        hi[list(binary)] = pattern
        val, _ = lp_vertex_enumeration(c, A_eq, b_eq, A_in, b_in, lo, hi)
        if val is not None and (best is None or val < best):
            best = val
    return best


def grid_minimise(f, lo, hi, step):
    grid = np.arange(lo, hi + step / 2, step)
    vals = np.array([f(z) for z in grid])
    i = int(np.argmin(vals))
    return float(vals[i]), float(grid[i])


def polytope_vertices(A_eq, b_eq, G, g, tol=1e-9):
    """Vertices of ``{v : A_eq v = b_eq, G v <= g}`` by brute-force active sets."""
    n = A_eq.shape[1]
    k = n - A_eq.shape[0]
    out = []
    for idx in itertools.combinations(range(G.shape[0]), k):
        M = np.vstack([A_eq, G[list(idx)]])
        if abs(np.linalg.det(M)) <= 1e-10:
            continue
        v = np.linalg.solve(M, np.concatenate([b_eq, g[list(idx)]]))
        if np.all(G @ v <= g + tol):
            out.append(v)
    if not out:
        return np.zeros((0, n))
    V = np.unique(np.round(np.array(out), 10), axis=0)
    return V


def mixture_vertices(X, x, gamma, norm):
    """Vertices of the scenario weights whose covariate mixture is within ``gamma`` of ``x``."""
    X = np.asarray(X, dtype=float)
    S, d = X.shape
    G, g = [-np.eye(S)], [np.zeros(S)]
    if np.isfinite(gamma) and d:
        if norm == "inf":
            G += [X.T, -X.T]
            g += [x + gamma, gamma - x]
        else:
            for signs in itertools.product((-1.0, 1.0), repeat=d):
                s = np.array(signs)
                G.append((X @ s)[None, :])
                g.append(np.array([gamma + s @ x]))
    return polytope_vertices(np.ones((1, S)), np.ones(1), np.vstack(G), np.concatenate(g))


def _z_bounds(p):
    lb = np.zeros(p.d_z) if p.Z.lb is None else np.asarray(p.Z.lb, dtype=float)
    ub = np.full(p.d_z, np.inf) if p.Z.ub is None else np.asarray(p.Z.ub, dtype=float)
    return list(zip(lb, [None if not np.isfinite(u) else u for u in ub]))


def robust_by_vertices(p, x, gamma, norm="inf"):
    """Extensive robust LP with one recourse copy per weight vertex (scipy HiGHS)."""
    from scipy.optimize import linprog

    V = mixture_vertices(p.scenarios.x, np.asarray(x, dtype=float), gamma, norm)
    H, Ts = p.h_s(), p.T_s()
    nv, d_z, d_u, d_h = len(V), p.d_z, p.d_u, p.d_h
    n = d_z + 1 + nv * d_u
    c = np.zeros(n)
    c[:d_z] = p.c
    c[d_z] = 1.0
    A_eq = np.zeros((nv * d_h, n))
    b_eq = np.zeros(nv * d_h)
    A_ub = np.zeros((nv, n))
    for k, th in enumerate(V):
        u = slice(d_z + 1 + k * d_u, d_z + 1 + (k + 1) * d_u)
        A_eq[k * d_h:(k + 1) * d_h, :d_z] = np.einsum("s,sij->ij", th, Ts)
        A_eq[k * d_h:(k + 1) * d_h, u] = p.W
        b_eq[k * d_h:(k + 1) * d_h] = th @ H
        A_ub[k, d_z] = -1.0
        A_ub[k, u] = p.q
    bounds = _z_bounds(p) + [(None, None)] + [(0, None)] * (nv * d_u)
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(nv), A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    assert res.status == 0, res.message
    return res.fun


def objective_uncertainty_by_vertices(p, x, gamma, norm="inf"):
    """Epigraph LP over enumerated weight vertices for an uncertain recourse cost."""
    from scipy.optimize import linprog

    V = mixture_vertices(p.scenarios.x, np.asarray(x, dtype=float), gamma, norm)
    Qv = V @ p.q_s()
    d_z, d_u = p.d_z, p.d_u
    T = p.T if p.T is not None else np.zeros((p.d_h, d_z))
    c = np.r_[p.c, 1.0, np.zeros(d_u)]
    A_ub = np.hstack([np.zeros((len(V), d_z)), -np.ones((len(V), 1)), Qv])
    A_eq = np.hstack([T, np.zeros((p.d_h, 1)), p.W])
    bounds = _z_bounds(p) + [(None, None)] + [(0, None)] * d_u
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(len(V)), A_eq=A_eq, b_eq=p.h, bounds=bounds, method="highs")
    assert res.status == 0, res.message
    return res.fun
