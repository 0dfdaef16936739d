"""Command-line front end.

Every subcommand writes machine-readable JSON (or CSV files) and reports
failures as a one-line JSON object on standard error. Exit codes: 0 success,
1 input or library error, 2 infeasible, 3 iteration, node or pivot limit.

Subcommands::

    gamma0  --problem P.json --context X.json [--norm inf]
    ranges  --problem P.json --context X.json --gamma G
    oracle  --method {p,d,brute,scan} --problem P.json --context X.json --z Z.json
    solve   --problem P.json --context X.json [--master contextual] [--warm pool.json] [--save-pool pool.json]
    energy history --network net.json --hours N --seed K --out h.csv
    energy run  --network net.json --history h.csv --window N --delta 0.1 --out dir/
    energy eval --schedules dir/ --realized r.csv [--out report.json]

``--config run.json`` supplies any flag by its long name (dashes or
underscores); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import ccg, energy
from .errors import ContextualROError, FirstStageInfeasible, InputError, LimitReached, LpStalled
from .model import ContextQuery, UncertaintyKind, load_json, load_problem
from .oracle import ORACLES
from .uncertainty import coordinate_ranges, gamma0

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_LIMIT = 0, 1, 2, 3

log = logging.getLogger("contextual_ro")


class _Parser(argparse.ArgumentParser):
    """Argument errors become :class:`InputError` so they share the JSON error path."""

    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


def _add_query(sp):
    sp.add_argument("--problem", required=True, help="problem JSON file")
    sp.add_argument("--context", help="JSON list, or object with x and optional norm/delta/gamma")
    sp.add_argument("--x", help="context as comma-separated numbers (overrides --context)")
    sp.add_argument("--norm", choices=["inf", "one"])
    sp.add_argument("--delta", type=float)
    sp.add_argument("--gamma", type=float, help="explicit budget; 'inf' drops conditioning")


def _add_ccg(sp):
    sp.add_argument("--gap-tol", type=float, default=1e-6)
    sp.add_argument("--max-iterations", type=int, default=200)
    sp.add_argument("--oracle", choices=["d", "p"], default="d")
    sp.add_argument("--node-limit", type=int, default=20000)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    root = _Parser(prog="contextual-ro", description="Contextual robust optimisation toolkit.")
    root.add_argument("--config", help="JSON file of flag values; command-line flags win")
    root.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = root.add_subparsers(dest="command", required=True, parser_class=_Parser)
    leaves = {}

    sp = sub.add_parser("gamma0", help="smallest budget with a nonempty set")
    _add_query(sp)
    leaves["gamma0"] = sp

    sp = sub.add_parser("ranges", help="per-coordinate extent of the uncertainty set")
    _add_query(sp)
    leaves["ranges"] = sp

    sp = sub.add_parser("oracle", help="worst-case recourse value at a fixed first stage")
    _add_query(sp)
    sp.add_argument("--method", choices=sorted(ORACLES), default="d")
    sp.add_argument("--z", required=True, help="JSON list, or object with key z")
    sp.add_argument("--node-limit", type=int, default=20000)
    leaves["oracle"] = sp

    sp = sub.add_parser("solve", help="full robust solve")
    _add_query(sp)
    _add_ccg(sp)
    sp.add_argument("--master", choices=["classical", "contextual"], default="contextual")
    sp.add_argument("--warm", help="cut pool to start from")
    sp.add_argument("--save-pool", help="write the grown cut pool here")
    leaves["solve"] = sp

    ep = sub.add_parser("energy", help="hour-ahead energy and reserve scheduling")
    esub = ep.add_subparsers(dest="energy_command", required=True, parser_class=_Parser)

    sp = esub.add_parser("history", help="synthetic renewable history with lag dependence")
    sp.add_argument("--network", required=True)
    sp.add_argument("--hours", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--persistence", type=float, default=0.8)
    sp.add_argument("--out", required=True)
    leaves["energy history"] = sp

    sp = esub.add_parser("run", help="rolling hour-ahead schedules")
    sp.add_argument("--network", required=True)
    sp.add_argument("--history", required=True, help="CSV, header row, one column per renewable unit")
    sp.add_argument("--window", type=int, required=True)
    sp.add_argument("--delta", type=float, default=0.1)
    sp.add_argument("--unconditional", action="store_true", help="infinite budget (plain scenario hull)")
    sp.add_argument("--horizon", type=int, default=energy.HOURS_PER_DAY)
    sp.add_argument("--context-mode", choices=energy.CONTEXT_MODES, default="ar1+dummy")
    sp.add_argument("--norm", choices=["inf", "one"], default="inf")
    sp.add_argument("--cold", action="store_true", help="no pool carried between periods")
    sp.add_argument("--paired-cold", action="store_true", help="also solve every period from scratch")
    sp.add_argument("--out", required=True, help="output directory")
    _add_ccg(sp)
    leaves["energy run"] = sp

    sp = esub.add_parser("eval", help="out-of-sample re-dispatch of saved schedules")
    sp.add_argument("--schedules", required=True, help="directory written by 'energy run'")
    sp.add_argument("--realized", required=True, help="CSV of realised outputs, one row per period")
    sp.add_argument("--network", help="defaults to the network saved with the schedules")
    sp.add_argument("--out", help="report JSON path (CSV written next to it)")
    leaves["energy eval"] = sp
    return root, leaves


def _leaf_name(ns) -> str:
    return "energy " + ns.energy_command if ns.command == "energy" else ns.command


def parse_args(argv) -> argparse.Namespace:
    root, leaves = build_parser()
    pre = _Parser(add_help=False)
    pre.add_argument("--config")
    config = pre.parse_known_args(argv)[0].config
    cfg = {}
    if config:
        cfg = load_json(config)
        if not isinstance(cfg, dict):
            raise InputError(f"{config}: config must be a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        for leaf in leaves.values():
            for action in leaf._actions:
                if action.dest in cfg:
                    action.default = cfg[action.dest]
                    action.required = False
    ns = root.parse_args(argv)
    known = {a.dest for a in leaves[_leaf_name(ns)]._actions}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise InputError(f"{config}: unknown options {unknown} for '{_leaf_name(ns)}'")
    return ns


# --- helpers -----------------------------------------------------------------------

def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=1, allow_nan=False) + "\n")


def _vector(path, key) -> np.ndarray:
    doc = load_json(path)
    if isinstance(doc, dict):
        if key not in doc:
            raise InputError(f"{path}: expected a list or an object with key {key!r}")
        doc = doc[key]
    try:
        return np.asarray(doc, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise InputError(f"{path}: {key} must be a list of numbers") from None


def _query(ns) -> ContextQuery:
    opts = {}
    if ns.context is not None:
        doc = load_json(ns.context)
        if isinstance(doc, dict):
            opts = {k: doc[k] for k in ("x", "norm", "delta", "gamma") if doc.get(k) is not None}
        else:
            opts["x"] = doc
    if ns.x is not None:
        try:
            opts["x"] = [float(v) for v in str(ns.x).split(",")]
        except ValueError:
            raise InputError(f"--x: expected comma-separated numbers, got {ns.x!r}") from None
    if "x" not in opts:
        raise InputError("give the context with --context or --x")
    try:
        opts["x"] = np.asarray(opts["x"], dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise InputError("context x must be a list of numbers") from None
    if ns.norm is not None:
        opts["norm"] = ns.norm
    # A budget flag replaces whatever budget the context file carried.
    if ns.gamma is not None:
        opts.pop("delta", None)
        opts["gamma"] = ns.gamma
    if ns.delta is not None:
        opts.pop("gamma", None)
        opts["delta"] = ns.delta
    if "gamma" in opts:
        try:
            opts["gamma"] = float(opts["gamma"])  # the string "inf" is allowed in JSON
        except (TypeError, ValueError):
            raise InputError(f"gamma must be a number or 'inf', got {opts['gamma']!r}") from None
    if "gamma" not in opts and "delta" not in opts:
        opts["delta"] = 0.1
    return ContextQuery(**opts)


def _ccg_options(ns, **extra) -> ccg.CcgOptions:
    return ccg.CcgOptions(gap_tol=ns.gap_tol, max_iterations=ns.max_iterations, oracle=ns.oracle,
                          node_limit=ns.node_limit, **extra)


def _status_code(status: str) -> int:
    return {"optimal": EXIT_OK, "infeasible": EXIT_INFEASIBLE}.get(status, EXIT_LIMIT)


# --- subcommands ---------------------------------------------------------------------

def cmd_gamma0(ns) -> int:
    p = load_problem(ns.problem)
    q = _query(ns)
    g = gamma0(p.scenarios, q.x, q.norm)
    if not math.isfinite(g):
        log.warning("no scenario matches the categorical components of the context")
    _emit(g if math.isfinite(g) else None)
    return EXIT_OK


def cmd_ranges(ns) -> int:
    p = load_problem(ns.problem)
    q = _query(ns)
    if q.gamma is None:
        g = (1.0 + q.delta) * gamma0(p.scenarios, q.x, q.norm)
    else:
        g = q.gamma
    r = coordinate_ranges(p.scenarios, q.x, g, q.norm)
    _emit({"gamma": g if math.isfinite(g) else None, "lo": r.lo.tolist(), "hi": r.hi.tolist(),
           "singleton": r.singleton})
    return EXIT_OK


def cmd_oracle(ns) -> int:
    p = load_problem(ns.problem)
    z = _vector(ns.z, "z")
    fn = ORACLES[ns.method]
    kwargs = {"node_limit": ns.node_limit} if ns.method in ("p", "d") else {}
    _emit(fn(p, z, _query(ns), **kwargs).to_dict())
    return EXIT_OK


def cmd_solve(ns) -> int:
    p = load_problem(ns.problem)
    q = _query(ns)
    if p.kind is UncertaintyKind.OBJECTIVE_Q:
        if ns.warm or ns.save_pool:
            raise InputError("cut pools apply to right-hand-side uncertainty only")
        sol = ccg.solve_objective_uncertainty(p, q)
        _emit(sol.to_dict())
        return _status_code(sol.status)
    opts = _ccg_options(ns, master_kind=ns.master)
    if ns.warm:
        pool = ccg.pool_load(ns.warm, p)
        sol, pool = ccg.warm_start_solve(p, q, pool, opts)
    else:
        sol, pool = ccg.solve_ccg(p, q, opts)
    if ns.save_pool:
        if not isinstance(pool, ccg.CutPool):
            raise InputError("--save-pool needs the contextual master; classical realisations are not reusable")
        ccg.pool_save(pool, ns.save_pool)
    doc = sol.to_dict()
    doc["pool_size"] = len(pool)
    _emit(doc)
    return _status_code(sol.status)


def cmd_energy_history(ns) -> int:
    net = energy.load_network(ns.network)
    if ns.hours < 1:
        raise InputError("--hours must be positive")
    Y = energy.synthetic_history(net, ns.hours, ns.seed, ns.persistence)
    energy.save_history(ns.out, Y)
    _emit({"rows": int(Y.shape[0]), "units": int(Y.shape[1]), "path": str(ns.out)})
    return EXIT_OK


def cmd_energy_run(ns) -> int:
    net = energy.load_network(ns.network)
    Y, hours, names = energy.load_history(ns.history)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    progress = (lambda k, s: log.info("period %d hour %d objective %.6f oracle calls %d",
                                      k, s.t, s.objective, s.oracle_calls))
    run = energy.rolling_run(
        net, Y, ns.window, None if ns.unconditional else ns.delta, _ccg_options(ns),
        horizon=ns.horizon, hours=hours, context=ns.context_mode, norm=ns.norm,
        warm=not ns.cold, paired_cold=ns.paired_cold, progress=progress,
    )
    (out / "network.json").write_text(json.dumps(energy.network_to_dict(net), indent=1) + "\n")
    (out / "schedules.json").write_text(json.dumps([s.to_dict() for s in run.schedules], indent=1) + "\n")
    summary = {
        "periods": len(run.schedules),
        "total_objective": run.total_objective,
        "oracle_calls": run.oracle_calls,
        "pool_sizes": run.pool_sizes,
        "context": ns.context_mode,
        "delta": None if ns.unconditional else ns.delta,
        "window": ns.window,
    }
    if run.pool is not None:
        ccg.pool_save(run.pool, out / "pool.json")
    if run.cold_schedules is not None:
        (out / "cold_schedules.json").write_text(
            json.dumps([s.to_dict() for s in run.cold_schedules], indent=1) + "\n")
        summary["cold_oracle_calls"] = run.cold_oracle_calls
        summary["max_cold_gap"] = float(max(abs(a.objective - b.objective)
                                            for a, b in zip(run.schedules, run.cold_schedules)))
    if run.realized is not None:
        energy.save_history(out / "realized.csv", run.realized, names)
        rep = energy.evaluate_oos(run.schedules, run.realized, net)
        energy.write_report_json(rep, out / "report.json")
        energy.write_report_csv(rep, out / "report.csv")
        summary.update(lolp=rep.lolp, pws=rep.pws, oos_total_cost=rep.total_cost)
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    _emit(summary)
    return EXIT_OK


def cmd_energy_eval(ns) -> int:
    d = Path(ns.schedules)
    net = energy.load_network(ns.network or d / "network.json")
    docs = load_json(d / "schedules.json")
    if not isinstance(docs, list):
        raise InputError(f"{d / 'schedules.json'}: expected a list of schedules")
    schedules = [energy.schedule_from_dict(s) for s in docs]
    Y, _, _ = energy.load_history(ns.realized)
    rep = energy.evaluate_oos(schedules, Y[: len(schedules)], net)
    out = Path(ns.out) if ns.out else d / "report.json"
    energy.write_report_json(rep, out)
    energy.write_report_csv(rep, out.with_suffix(".csv"))
    _emit(rep.to_dict())
    return EXIT_OK


COMMANDS = {
    "gamma0": cmd_gamma0,
    "ranges": cmd_ranges,
    "oracle": cmd_oracle,
    "solve": cmd_solve,
    "energy history": cmd_energy_history,
    "energy run": cmd_energy_run,
    "energy eval": cmd_energy_eval,
}


def _fail(code: str, message: str, exit_code: int, **extra) -> int:
    doc = {"error": code, "message": " ".join(str(message).split())}
    doc.update(extra)
    sys.stderr.write(json.dumps(doc) + "\n")
    return exit_code


def run(argv=None) -> int:
    """Run one subcommand; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns = parse_args(argv)
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, stream=sys.stderr,
                            format="%(levelname)s %(message)s")
        return COMMANDS[_leaf_name(ns)](ns)
    except FileNotFoundError as exc:
        return _fail("not_found", f"no such file: {exc.filename}", EXIT_ERROR, path=str(exc.filename))
    except FirstStageInfeasible as exc:
        return _fail(exc.code, exc, EXIT_INFEASIBLE)
    except (LimitReached, LpStalled) as exc:
        return _fail(exc.code, exc, EXIT_LIMIT)
    except ContextualROError as exc:
        return _fail(exc.code, exc, EXIT_ERROR)
    except OSError as exc:
        return _fail("io_error", exc, EXIT_ERROR)


def main() -> None:
    sys.exit(run())
