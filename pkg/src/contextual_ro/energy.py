"""Hour-ahead energy and reserve scheduling on a DC network.

First stage, per period: dispatch ``p``, up/down reserves, line flows ``f``
and bus angles ``beta`` against the expected renewable output. Second stage:
re-dispatch within the reserves, new flows, and penalised load shedding and
renewable spillage once the renewable output is revealed. Renewable output is
the uncertain right-hand side; the context is the previous hour's output
(continuous) plus an hour-of-day one-hot block (categorical).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .ccg import CcgOptions, CutPool, empty_pool, solve_ccg, warm_start_solve
from .errors import InputError
from .model import ContextQuery, FirstStage, ScenarioSet, TwoStageProblem, UncertaintyKind
from .oracle import recourse_lp
from .settings import DEFAULT, Settings

HOURS_PER_DAY = 24
LOLP_FRACTION = 1e-3
PWS_FRACTION = 1e-3
CONTEXT_MODES = ("ar1", "dummy", "ar1+dummy")


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    susceptance: float
    capacity: float


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    ramp_up: float
    ramp_dn: float
    cost: float
    cost_up: float
    cost_dn: float


@dataclass(frozen=True)
class NetworkInstance:
    n_buses: int
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    renewable_buses: tuple[int, ...]
    demand: np.ndarray  # periods x buses, MW
    expected_renewable: np.ndarray  # periods x renewables, MW
    penalty_shed: float
    penalty_spill: float
    reference_bus: int = 0
    initial_output: np.ndarray | None = None

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def n_renewables(self) -> int:
        return len(self.renewable_buses)

    @property
    def periods(self) -> int:
        return self.demand.shape[0]

    def gen_array(self, name: str) -> np.ndarray:
        return np.array([getattr(g, name) for g in self.generators], dtype=float)

    def gen_incidence(self) -> np.ndarray:
        G = np.zeros((self.n_buses, self.n_gen))
        for k, g in enumerate(self.generators):
            G[g.bus, k] = 1.0
        return G

    def renewable_incidence(self) -> np.ndarray:
        E = np.zeros((self.n_buses, self.n_renewables))
        for k, b in enumerate(self.renewable_buses):
            E[b, k] = 1.0
        return E

    def line_incidence(self) -> np.ndarray:
        """Net inflow at each bus per unit of flow (``+1`` at the receiving end)."""
        A = np.zeros((self.n_buses, self.n_lines))
        for k, ln in enumerate(self.lines):
            A[ln.from_bus, k] = -1.0
            A[ln.to_bus, k] = 1.0
        return A

    def susceptance_matrix(self) -> np.ndarray:
        """``f = B beta`` with ``f_l = b_l (beta_from - beta_to)``."""
        B = np.zeros((self.n_lines, self.n_buses))
        for k, ln in enumerate(self.lines):
            B[k, ln.from_bus] = ln.susceptance
            B[k, ln.to_bus] = -ln.susceptance
        return B


# --- loading and validation -------------------------------------------------------

def _components(n, edges):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    groups: dict[int, list[int]] = {}
    for v in range(n):
        groups.setdefault(find(v), []).append(v)
    return sorted(groups.values())


def _num(doc, key, path, *, nonneg=False):
    if key not in doc:
        raise InputError(f"{path}.{key}: missing")
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
        raise InputError(f"{path}.{key}: expected a finite number, got {v!r}")
    if nonneg and v < 0:
        raise InputError(f"{path}.{key}: must be >= 0, got {v}")
    return float(v)


def _bus(doc, key, path, n):
    v = doc.get(key)
    if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v < n:
        raise InputError(f"{path}.{key}: expected a bus index in [0, {n}), got {v!r}")
    return v


def _matrix(doc, key, cols, what):
    try:
        M = np.array(doc[key], dtype=float)
    except KeyError:
        raise InputError(f"{key}: missing") from None
    except (TypeError, ValueError):
        raise InputError(f"{key}: expected a periods x {what} numeric matrix") from None
    if M.ndim != 2 or M.shape[1] != cols or M.shape[0] == 0:
        raise InputError(f"{key}: expected shape (periods, {cols}), got {M.shape}")
    if not np.all(np.isfinite(M)) or np.any(M < 0):
        raise InputError(f"{key}: entries must be finite and >= 0")
    return M


def network_from_dict(doc: dict) -> NetworkInstance:
    """Build and check a :class:`NetworkInstance`; errors name the offending field."""
    if not isinstance(doc, dict):
        raise InputError("network file must hold a JSON object")
    n = doc.get("buses")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise InputError(f"buses: expected a positive integer, got {n!r}")
    lines = []
    for i, ln in enumerate(doc.get("lines", [])):
        path = f"lines[{i}]"
        a, b = _bus(ln, "from", path, n), _bus(ln, "to", path, n)
        if a == b:
            raise InputError(f"{path}: line connects bus {a} to itself")
        sus = _num(ln, "susceptance", path)
        if sus <= 0:
            raise InputError(f"{path}.susceptance: must be > 0, got {sus}")
        lines.append(Line(a, b, sus, _num(ln, "capacity", path, nonneg=True)))
    gens = []
    for i, g in enumerate(doc.get("generators", [])):
        path = f"generators[{i}]"
        vals = {k: _num(g, k, path, nonneg=True)
                for k in ("p_min", "p_max", "ramp_up", "ramp_dn", "cost", "cost_up", "cost_dn")}
        if vals["p_min"] > vals["p_max"]:
            raise InputError(f"{path}: p_min {vals['p_min']} exceeds p_max {vals['p_max']}")
        gens.append(Generator(_bus(g, "bus", path, n), **vals))
    if not gens:
        raise InputError("generators: at least one generator is required")
    ren = tuple(_bus(r, "bus", f"renewables[{i}]", n) for i, r in enumerate(doc.get("renewables", [])))
    comps = _components(n, [(ln.from_bus, ln.to_bus) for ln in lines])
    if len(comps) > 1:
        raise InputError(f"disconnected graph: components {comps}")
    demand = _matrix(doc, "demand", n, "buses")
    if ren:
        ybar = _matrix(doc, "expected_renewable", len(ren), "renewables")
    else:
        ybar = np.zeros((demand.shape[0], 0))
    if ybar.shape[0] != demand.shape[0]:
        raise InputError(f"expected_renewable: {ybar.shape[0]} periods but demand has {demand.shape[0]}")
    costs = [g.cost for g in gens]
    shed = doc.get("penalty_shed")
    spill = doc.get("penalty_spill")
    shed = 10.0 * max(costs) if shed is None else _num(doc, "penalty_shed", "network")
    spill = 0.5 * min(costs) if spill is None else _num(doc, "penalty_spill", "network")
    if not shed > max(costs):
        raise InputError(f"penalty_shed: must exceed the largest generator cost {max(costs)}, got {shed}")
    if spill < 0:
        raise InputError(f"penalty_spill: must be >= 0, got {spill}")
    ref = doc.get("reference_bus", 0)
    if not isinstance(ref, int) or not 0 <= ref < n:
        raise InputError(f"reference_bus: expected a bus index, got {ref!r}")
    init = doc.get("initial_output")
    if init is not None:
        init = np.array(init, dtype=float)
        if init.shape != (len(gens),):
            raise InputError(f"initial_output: expected {len(gens)} entries, got shape {init.shape}")
    return NetworkInstance(n, tuple(lines), tuple(gens), ren, demand, ybar, float(shed), float(spill), ref, init)


def network_to_dict(net: NetworkInstance) -> dict:
    return {
        "buses": net.n_buses,
        "reference_bus": net.reference_bus,
        "lines": [{"from": l.from_bus, "to": l.to_bus, "susceptance": l.susceptance, "capacity": l.capacity}
                  for l in net.lines],
        "generators": [asdict(g) for g in net.generators],
        "renewables": [{"bus": b} for b in net.renewable_buses],
        "demand": net.demand.tolist(),
        "expected_renewable": net.expected_renewable.tolist(),
        "penalty_shed": net.penalty_shed,
        "penalty_spill": net.penalty_spill,
        "initial_output": None if net.initial_output is None else net.initial_output.tolist(),
    }


def load_network(path) -> NetworkInstance:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc})") from None
    return network_from_dict(doc)


def fixture_path(name: str) -> Path:
    """Path of a bundled data file: ``three_bus``, ``single_bus`` or ``running_example``."""
    p = Path(__file__).parent / "data" / f"{name}.json"
    if not p.exists():
        raise InputError(f"no bundled network named {name!r}")
    return p


def _is_number(text) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_history(path):
    """Read an hourly renewable-output CSV (header row, one column per unit).

    An optional ``hour`` column gives the hour of day of each row; otherwise
    row ``i`` is taken to be hour ``i mod 24``. Returns ``(Y, hours, names)``.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty history file")
    header = [h.strip() for h in rows[0]]
    if all(_is_number(h) for h in header):
        raise InputError(f"{path}: first row is numeric; a header row naming the units is required")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric entry ({exc}); is the header row missing?") from None
    if data.size == 0:
        raise InputError(f"{path}: no data rows")
    if "hour" in header:
        k = header.index("hour")
        hours = data[:, k].astype(int) % HOURS_PER_DAY
        data = np.delete(data, k, axis=1)
        header = header[:k] + header[k + 1:]
    else:
        hours = np.arange(len(data)) % HOURS_PER_DAY
    if not np.all(np.isfinite(data)) or np.any(data < 0):
        raise InputError(f"{path}: outputs must be finite and >= 0")
    return data, hours, header


def save_history(path, Y, names=None):
    names = names or [f"unit{k}" for k in range(Y.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        w.writerows([[repr(float(v)) for v in row] for row in Y])


def synthetic_history(net: NetworkInstance, hours: int, seed: int = 0, persistence: float = 0.8,
                      noise: float = 0.25, capacity=None) -> np.ndarray:
    """AR(1) renewable outputs around the network's hourly expected profile.

    ``persistence`` sets how strongly the previous hour predicts the next one,
    which is what makes the lagged context informative.
    """
    rng = np.random.default_rng(seed)
    prof = net.expected_renewable
    cap = np.asarray(capacity if capacity is not None else 2.0 * prof.max(axis=0), dtype=float)
    Y = np.zeros((hours, net.n_renewables))
    y = prof[0].copy()
    for i in range(hours):
        mean = prof[i % prof.shape[0]]
        y = mean + persistence * (y - mean) + noise * cap * rng.normal(size=net.n_renewables)
        y = np.clip(y, 0.0, cap)
        Y[i] = y
    return Y


# --- stage problem ---------------------------------------------------------------

@dataclass(frozen=True)
class StageLayout:
    """Column ranges of the first-stage and recourse vectors."""

    p: slice
    r_up: slice
    r_dn: slice
    f: slice
    beta: slice
    dp: slice  # re-dispatch up
    dm: slice  # re-dispatch down
    shed: slice
    spill: slice
    fw_p: slice
    fw_m: slice
    bw_p: slice
    bw_m: slice
    balance_rows: slice
    spill_rows: slice


def stage_layout(net: NetworkInstance) -> StageLayout:
    g, l, b = net.n_gen, net.n_lines, net.n_buses
    nb = b - 1
    o = np.cumsum([0, g, g, g, l, b])
    u = np.cumsum([0, g, g, b, b, l, l, nb, nb])
    # recourse rows: balance | flow | up | dn | cap+ | cap- | shed | spill
    r = np.cumsum([0, b, l, g, g, l, l, b, b])
    return StageLayout(
        p=slice(o[0], o[1]), r_up=slice(o[1], o[2]), r_dn=slice(o[2], o[3]),
        f=slice(o[3], o[4]), beta=slice(o[4], o[5]),
        dp=slice(u[0], u[1]), dm=slice(u[1], u[2]), shed=slice(u[2], u[3]), spill=slice(u[3], u[4]),
        fw_p=slice(u[4], u[5]), fw_m=slice(u[5], u[6]), bw_p=slice(u[6], u[7]), bw_m=slice(u[7], u[8]),
        balance_rows=slice(r[0], r[1]), spill_rows=slice(r[7], r[8]),
    )


def _recourse(net: NetworkInstance):
    """``W``, ``q``, constant ``h``, the map from renewable output into ``h``, and fixed ``T``."""
    L = stage_layout(net)
    g, l, b = net.n_gen, net.n_lines, net.n_buses
    G, A, E = net.gen_incidence(), net.line_incidence(), net.renewable_incidence()
    Bm = np.delete(net.susceptance_matrix(), net.reference_bus, axis=1)
    F = np.array([ln.capacity for ln in net.lines])
    n_struct = L.bw_m.stop
    n_slack = g + g + l + l + b + b
    d_h = b + l + g + g + l + l + b + b
    d_u = n_struct + n_slack
    d_z = L.beta.stop
    W = np.zeros((d_h, d_u))
    h0 = np.zeros(d_h)
    Hy = np.zeros((d_h, net.n_renewables))
    T = np.zeros((d_h, d_z))
    row = 0
    # nodal balance with the realised output
    W[row:row + b, L.dp] = G
    W[row:row + b, L.dm] = -G
    W[row:row + b, L.fw_p] = A
    W[row:row + b, L.fw_m] = -A
    W[row:row + b, L.spill] = -np.eye(b)
    W[row:row + b, L.shed] = np.eye(b)
    Hy[row:row + b] = -E
    T[row:row + b, L.p] = G
    row += b
    # post-realisation flows follow the angles
    W[row:row + l, L.fw_p] = np.eye(l)
    W[row:row + l, L.fw_m] = -np.eye(l)
    W[row:row + l, L.bw_p] = -Bm
    W[row:row + l, L.bw_m] = Bm
    row += l
    slack = n_struct

    def bounded(coef, width, rhs_const=None, T_block=None, Hy_block=None):
        nonlocal row, slack
        for cols, val in coef:
            W[row:row + width, cols] = val
        W[row:row + width, slack:slack + width] = np.eye(width)
        if rhs_const is not None:
            h0[row:row + width] = rhs_const
        if T_block is not None:
            T[row:row + width, T_block] = -np.eye(width)
        if Hy_block is not None:
            Hy[row:row + width] = Hy_block
        row += width
        slack += width

    bounded([(L.dp, np.eye(g)), (L.dm, -np.eye(g))], g, T_block=L.r_up)  # delta <= r_up
    bounded([(L.dp, -np.eye(g)), (L.dm, np.eye(g))], g, T_block=L.r_dn)  # -delta <= r_dn
    bounded([(L.fw_p, np.eye(l)), (L.fw_m, -np.eye(l))], l, rhs_const=F)
    bounded([(L.fw_p, -np.eye(l)), (L.fw_m, np.eye(l))], l, rhs_const=F)
    bounded([(L.shed, np.eye(b))], b)  # shed <= demand, demand added per period
    bounded([(L.spill, np.eye(b))], b, Hy_block=E)  # spill <= available renewable
    q = np.zeros(d_u)
    q[L.shed] = net.penalty_shed
    q[L.spill] = net.penalty_spill
    return W, q, h0, Hy, T


def _period_row(net: NetworkInstance, t: int) -> int:
    return int(t) % net.periods


def stage_rhs(net: NetworkInstance, t: int, Y) -> np.ndarray:
    """Recourse right-hand side ``h`` for renewable outputs ``Y`` (one row per realisation)."""
    _, _, h0, Hy, _ = _recourse_cached(net)
    L = stage_layout(net)
    D = net.demand[_period_row(net, t)]
    h = np.array(h0)
    h[L.balance_rows] += D
    b, l, g = net.n_buses, net.n_lines, net.n_gen
    shed_rows = slice(b + l + 2 * g + 2 * l, b + l + 2 * g + 2 * l + b)
    h[shed_rows] = D
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    return h[None, :] + Y @ Hy.T


_RECOURSE_CACHE: dict[int, tuple] = {}


def _recourse_cached(net):
    key = id(net)
    hit = _RECOURSE_CACHE.get(key)
    if hit is None or hit[0] is not net:
        hit = (net, _recourse(net))
        _RECOURSE_CACHE[key] = hit
    return hit[1]


def first_stage(net: NetworkInstance, t: int, prev_p) -> FirstStage:
    L = stage_layout(net)
    g, l, b = net.n_gen, net.n_lines, net.n_buses
    d_z = L.beta.stop
    G, A, E = net.gen_incidence(), net.line_incidence(), net.renewable_incidence()
    Bm = net.susceptance_matrix()
    row = _period_row(net, t)
    D, ybar = net.demand[row], net.expected_renewable[row]
    pmin, pmax = net.gen_array("p_min"), net.gen_array("p_max")
    Rup, Rdn = net.gen_array("ramp_up"), net.gen_array("ramp_dn")
    F = np.array([ln.capacity for ln in net.lines])
    A_eq = np.zeros((b + l, d_z))
    A_eq[:b, L.p] = G
    A_eq[:b, L.f] = A
    A_eq[b:, L.f] = np.eye(l)
    A_eq[b:, L.beta] = -Bm
    b_eq = np.concatenate([D - E @ ybar, np.zeros(l)])
    A_in = np.zeros((4 * g, d_z))
    I = np.eye(g)
    A_in[:g, L.p], A_in[:g, L.r_dn] = -I, I  # p - r_dn >= p_min
    A_in[g:2 * g, L.p], A_in[g:2 * g, L.r_up] = I, I  # p + r_up <= p_max
    A_in[2 * g:3 * g, L.p], A_in[2 * g:3 * g, L.r_up] = I, I  # ramp up
    A_in[3 * g:, L.p], A_in[3 * g:, L.r_dn] = -I, I  # ramp down
    b_in = np.concatenate([-pmin, pmax, Rup + prev_p, Rdn - prev_p])
    lb = np.concatenate([np.zeros(g), np.zeros(g), np.zeros(g), -F, np.full(b, -np.inf)])
    ub = np.concatenate([np.full(g, np.inf), Rup, Rdn, F, np.full(b, np.inf)])
    lb[L.beta.start + net.reference_bus] = ub[L.beta.start + net.reference_bus] = 0.0
    return FirstStage(A_eq, b_eq, A_in, b_in, lb, ub)


def build_stage_problem(net: NetworkInstance, t: int, prev_p, scenarios: ScenarioSet) -> TwoStageProblem:
    """Two-stage problem for period ``t``.

    ``scenarios.h`` holds renewable outputs (one column per unit); they are
    mapped here into recourse right-hand sides. ``prev_p`` is the previous
    period's dispatch used by the ramp rows.
    """
    prev_p = np.asarray(prev_p, dtype=float).reshape(-1)
    pmin, pmax = net.gen_array("p_min"), net.gen_array("p_max")
    if prev_p.size != net.n_gen:
        raise InputError(f"prev_p has {prev_p.size} entries, expected {net.n_gen}")
    if np.any(prev_p < pmin - 1e-9) or np.any(prev_p > pmax + 1e-9):
        raise InputError("prev_p outside generator limits")
    if scenarios.h is None or scenarios.h.shape[1] != net.n_renewables:
        raise InputError(f"scenario outputs must have {net.n_renewables} columns")
    W, q, _, _, T = _recourse_cached(net)
    H = stage_rhs(net, t, scenarios.h)
    sc = ScenarioSet(scenarios.x, H, None, None, scenarios.categorical)
    c = np.concatenate([net.gen_array("cost"), net.gen_array("cost_up"), net.gen_array("cost_dn"),
                        np.zeros(net.n_lines + net.n_buses)])
    return TwoStageProblem(c, first_stage(net, t, prev_p), q, W, sc, UncertaintyKind.RHS_H_ONLY, T)


def completeness_diagnostics(net: NetworkInstance) -> list[str]:
    """Buses where a renewable shortfall may exceed what shedding can absorb.

    Shedding at a bus is capped by its demand, so the recourse is complete
    whenever expected renewable output at each bus stays within the bus demand.
    """
    E = net.renewable_incidence()
    out = []
    for t in range(net.periods):
        excess = E @ net.expected_renewable[t] - net.demand[t]
        for bus in np.flatnonzero(excess > 1e-9):
            out.append(f"period {t}, bus {bus}: expected renewable exceeds demand by {excess[bus]:.6g} MW")
    return out


# --- schedules and rolling runs ---------------------------------------------------

@dataclass(frozen=True)
class PeriodSchedule:
    t: int
    p: np.ndarray
    r_up: np.ndarray
    r_dn: np.ndarray
    f: np.ndarray
    beta: np.ndarray
    alpha: float
    objective: float
    gamma: float
    gamma0: float
    iterations: int
    oracle_calls: int

    @property
    def first_stage_cost(self) -> float:
        return self.objective - self.alpha

    def to_dict(self) -> dict:
        d = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}
        for k in ("gamma", "gamma0"):
            d[k] = d[k] if np.isfinite(d[k]) else None
        return d


def schedule_from_dict(doc: dict) -> PeriodSchedule:
    """Inverse of :meth:`PeriodSchedule.to_dict` (``None`` budgets read back as infinite)."""
    try:
        vec = {k: np.asarray(doc[k], dtype=float).reshape(-1) for k in ("p", "r_up", "r_dn", "f", "beta")}
        num = {k: np.inf if doc[k] is None else float(doc[k]) for k in ("gamma", "gamma0")}
        return PeriodSchedule(int(doc["t"]), **vec, alpha=float(doc["alpha"]), objective=float(doc["objective"]),
                              iterations=int(doc["iterations"]), oracle_calls=int(doc["oracle_calls"]), **num)
    except KeyError as exc:
        raise InputError(f"schedule record missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise InputError(f"schedule record malformed ({exc})") from None


def schedule_from_solution(net: NetworkInstance, t: int, sol) -> PeriodSchedule:
    L = stage_layout(net)
    z = sol.z
    return PeriodSchedule(t, z[L.p].copy(), z[L.r_up].copy(), z[L.r_dn].copy(), z[L.f].copy(),
                          z[L.beta].copy(), float(sol.alpha), float(sol.objective), float(sol.gamma),
                          float(sol.gamma0), sol.iterations, sol.oracle_calls)


def schedule_residuals(net: NetworkInstance, s: PeriodSchedule, prev_p) -> dict[str, float]:
    """Largest violation of each first-stage constraint group at a schedule."""
    row = _period_row(net, s.t)
    G, A, E, B = net.gen_incidence(), net.line_incidence(), net.renewable_incidence(), net.susceptance_matrix()
    pmin, pmax = net.gen_array("p_min"), net.gen_array("p_max")
    F = np.array([ln.capacity for ln in net.lines])
    pos = lambda v: float(np.max(v, initial=0.0))
    return {
        "balance": float(np.max(np.abs(G @ s.p + A @ s.f - net.demand[row] + E @ net.expected_renewable[row]),
                                initial=0.0)),
        "kirchhoff": float(np.max(np.abs(s.f - B @ s.beta), initial=0.0)),
        "limits": max(pos(pmin + s.r_dn - s.p), pos(s.p + s.r_up - pmax)),
        "flows": pos(np.abs(s.f) - F),
        "reserves": max(pos(-s.r_up), pos(-s.r_dn), pos(s.r_up - net.gen_array("ramp_up")),
                        pos(s.r_dn - net.gen_array("ramp_dn"))),
        "ramps": max(pos(s.p + s.r_up - net.gen_array("ramp_up") - prev_p),
                     pos(prev_p - net.gen_array("ramp_dn") - s.p + s.r_dn)),
    }


def build_contexts(Y, hours, mode: str = "ar1+dummy"):
    """Covariates for each history row ``i >= 1`` (row ``i`` uses output at ``i - 1``).

    Returns ``(X, categorical)`` where ``X[i]`` is the context of row ``i``;
    row 0 has no lag and is filled with its own output.
    """
    if mode not in CONTEXT_MODES:
        raise InputError(f"context mode must be one of {CONTEXT_MODES}, got {mode!r}")
    Y = np.asarray(Y, dtype=float)
    lag = np.vstack([Y[:1], Y[:-1]])
    blocks, cat = [], []
    if "ar1" in mode:
        blocks.append(lag)
        cat += [False] * Y.shape[1]
    if "dummy" in mode:
        blocks.append(np.eye(HOURS_PER_DAY)[np.asarray(hours) % HOURS_PER_DAY])
        cat += [True] * HOURS_PER_DAY
    return np.hstack(blocks), np.array(cat)


def window_scenarios(Y, X, categorical, tau: int, window_len: int) -> ScenarioSet:
    """Trailing window of (context, output) pairs ending just before row ``tau``."""
    lo = tau - window_len
    if lo < 1:
        raise InputError(f"window of {window_len} rows before row {tau} reaches past the first lagged row")
    return ScenarioSet(x=X[lo:tau], h=Y[lo:tau], categorical=categorical)


@dataclass
class RollingResult:
    schedules: list[PeriodSchedule]
    pool_sizes: list[int]
    pool: CutPool | None
    cold_schedules: list[PeriodSchedule] | None = None
    realized: np.ndarray | None = None
    contexts: list[np.ndarray] = field(default_factory=list)
    # raw solver output per period, with bound traces
    solutions: list = field(default_factory=list)
    cold_solutions: list = field(default_factory=list)

    @property
    def oracle_calls(self) -> list[int]:
        return [s.oracle_calls for s in self.schedules]

    @property
    def cold_oracle_calls(self) -> list[int] | None:
        return None if self.cold_schedules is None else [s.oracle_calls for s in self.cold_schedules]

    @property
    def total_objective(self) -> float:
        return float(sum(s.objective for s in self.schedules))


def rolling_run(
    net: NetworkInstance,
    history,
    window_len: int,
    delta: float | None = 0.1,
    opts: CcgOptions = CcgOptions(),
    *,
    horizon: int = HOURS_PER_DAY,
    hours=None,
    context: str = "ar1+dummy",
    norm: str = "inf",
    warm: bool = True,
    paired_cold: bool = False,
    settings: Settings = DEFAULT,
    progress=None,
) -> RollingResult:
    """Sequential hour-ahead schedules over ``horizon`` periods.

    Period ``k`` decides history row ``tau = window_len + 1 + k`` using the
    ``window_len`` rows before it as scenarios and row ``tau - 1`` as the
    lagged context; row 0 only serves as the first lag. When the history
    also contains the decided rows they are returned as ``realized``.
    ``delta=None`` drops conditioning (infinite budget).
    The ``"ar1"`` context alone usually puts the lagged output inside the
    scenario hull, so the budget is zero and the worst-case MILPs get slow;
    ``"ar1+dummy"`` restricts each period to the same hour and stays fast.
    With ``warm`` the cut pool is threaded through the periods; with
    ``paired_cold`` every period's stage problem is also solved from scratch
    for comparison (the dispatch path follows the warm run).
    """
    Y = np.asarray(history, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != net.n_renewables:
        raise InputError(f"history must be hours x {net.n_renewables}")
    if len(Y) < window_len + horizon:
        raise InputError(f"history has {len(Y)} rows; need at least window_len + horizon = {window_len + horizon}")
    hours = np.arange(len(Y)) % HOURS_PER_DAY if hours is None else np.asarray(hours)
    X, cat = build_contexts(Y, hours, context)
    prev = net.initial_output if net.initial_output is not None else net.gen_array("p_min")
    pool = None
    schedules, cold, sizes, ctxs = [], [] if paired_cold else None, [], []
    sols, cold_sols = [], []
    for k in range(horizon):
        tau = window_len + 1 + k
        sc = window_scenarios(Y, X, cat, tau, window_len)
        hour = int(hours[tau - 1] + 1) % HOURS_PER_DAY
        parts = []
        if "ar1" in context:
            parts.append(Y[tau - 1])
        if "dummy" in context:
            parts.append(np.eye(HOURS_PER_DAY)[hour])
        x_t = np.concatenate(parts)
        if delta is None:
            query = ContextQuery(x_t, norm=norm, gamma=np.inf)
        else:
            query = ContextQuery(x_t, norm=norm, delta=delta)
        p = build_stage_problem(net, hour, prev, sc)
        try:
            if warm:
                pool = pool if pool is not None else empty_pool(p)
                sol, pool = warm_start_solve(p, query, pool, opts, settings)
            else:
                sol, _ = solve_ccg(p, query, opts, settings)
        except Exception as exc:
            exc.args = (f"period {k} (hour {hour}): {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            raise
        if sol.status != "optimal":
            raise InputError(f"period {k} (hour {hour}): solve ended with status {sol.status}")
        s = schedule_from_solution(net, hour, sol)
        schedules.append(s)
        sols.append(sol)
        sizes.append(len(pool) if pool is not None else 0)
        ctxs.append(x_t)
        prev = s.p
        if paired_cold:
            csol, _ = solve_ccg(p, query, replace(opts, warm_pool=None), settings)
            if csol.status != "optimal":
                raise InputError(f"period {k} (hour {hour}): cold solve ended with status {csol.status}")
            cold.append(schedule_from_solution(net, hour, csol))
            cold_sols.append(csol)
        if progress is not None:
            progress(k, s)
    first, end = window_len + 1, window_len + 1 + horizon
    realized = Y[first:end] if end <= len(Y) else None
    return RollingResult(schedules, sizes, pool, cold, realized, ctxs, sols, cold_sols)


# --- out-of-sample evaluation ------------------------------------------------------

@dataclass(frozen=True)
class OutOfSampleReport:
    total_cost: float
    first_stage_cost: float
    imbalance_cost: float
    lolp: float
    pws: float
    shed: np.ndarray
    spill: np.ndarray
    hourly_cost: np.ndarray
    lolp_hours: np.ndarray
    pws_hours: np.ndarray

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}


def realized_recourse(net: NetworkInstance, s: PeriodSchedule, y):
    """Cheapest re-dispatch of schedule ``s`` once output ``y`` is known."""
    W, q, _, _, T = _recourse_cached(net)
    z = np.concatenate([s.p, s.r_up, s.r_dn, s.f, s.beta])
    h = stage_rhs(net, s.t, y)[0]
    p = TwoStageProblem(np.zeros(z.size), FirstStage(), q, W,
                        ScenarioSet(x=np.zeros((1, 1)), h=h[None, :]), UncertaintyKind.RHS_H_ONLY, T)
    return recourse_lp(p, h - T @ z)


def evaluate_oos(schedules, realized_y, net: NetworkInstance) -> OutOfSampleReport:
    """Re-dispatch every committed schedule against the realised outputs.

    An hour counts toward LOLP when shedding exceeds 0.1% of that hour's load
    and toward PWS when spillage exceeds 0.1% of the available renewable output.
    """
    Yr = np.atleast_2d(np.asarray(realized_y, dtype=float))
    if Yr.shape != (len(schedules), net.n_renewables):
        raise InputError(f"realized_y must be {len(schedules)} x {net.n_renewables}, got {Yr.shape}")
    L = stage_layout(net)
    shed, spill, cost = np.zeros(len(schedules)), np.zeros(len(schedules)), np.zeros(len(schedules))
    first = 0.0
    for k, (s, y) in enumerate(zip(schedules, Yr)):
        sol = realized_recourse(net, s, y)
        if not sol.optimal:
            raise InputError(f"hour {k}: realised re-dispatch LP is {sol.status}")
        shed[k] = float(np.sum(sol.x[L.shed]))
        spill[k] = float(np.sum(sol.x[L.spill]))
        cost[k] = float(sol.objective)
        first += s.first_stage_cost
    load = net.demand[[_period_row(net, s.t) for s in schedules]].sum(axis=1)
    avail = Yr.sum(axis=1)
    lolp_h = shed > LOLP_FRACTION * load
    pws_h = spill > PWS_FRACTION * avail
    n = max(len(schedules), 1)
    return OutOfSampleReport(
        total_cost=first + float(cost.sum()), first_stage_cost=first, imbalance_cost=float(cost.sum()),
        lolp=float(lolp_h.sum() / n), pws=float(pws_h.sum() / n),
        shed=shed, spill=spill, hourly_cost=cost, lolp_hours=lolp_h, pws_hours=pws_h,
    )


def write_report_json(report: OutOfSampleReport, path, extra: dict | None = None) -> None:
    doc = report.to_dict()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def write_report_csv(report: OutOfSampleReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["hour", "shed", "spill", "cost"])
        for k in range(len(report.shed)):
            w.writerow([k, repr(float(report.shed[k])), repr(float(report.spill[k])),
                        repr(float(report.hourly_cost[k]))])
