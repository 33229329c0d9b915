"""Command-line interface.

Exit codes: 0 success, 1 failed property check, 2 parse or validation error,
3 solver nonconvergence (including the B&B node limit), 4 infeasible scenario.
``DFN_THREADS`` caps the number of worker processes used by ``report``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .barrier import BarrierSettings
from .checks import SUITES
from .errors import (BarrierNonconvergence, InfeasibleScenario, MaxIterationsExceeded, NodeLimit, NotConverged,
                     ParseError, SolverError, ValidationError)
from .io import data_path, load_network
from .nf_solver import NewtonSettings, solve_nf
from .report import GapEntry, entry_from_results, report_gap_table
from .throughput_energy import EnergySettings, solve_throughput_energy
from .throughput_micp import BnbSettings, solve_micp

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 1, 2, 3, 4
log = logging.getLogger("dfn")


class UsageError(Exception):
    """Invalid option values detected after argparse (exit code 2)."""


def _positive(kind):
    def parse(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a valid {kind.__name__}: {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return parse


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--units", choices=("pressure", "potential"), default=None,
                        help="units of node values in the input file (overrides meta.units)")
    common.add_argument("--seed", type=int, default=0, help="seed for randomised suites")
    common.add_argument("--smooth-eps", type=_positive(float), default=1e-8,
                        help="cap for g' near zero potential drops")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="dfn", description="Dissipative flow network solver.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve-nf", parents=[common], help="solve the NF equations for the file's injections")
    s.add_argument("input")
    s.add_argument("--grad-tol", type=_positive(float), default=1e-10)
    s.add_argument("--max-iter", type=_positive(int), default=200)
    s.add_argument("--output", help="write the solution as JSON")

    m = sub.add_parser("maxflow", parents=[common], help="maximise throughput")
    m.add_argument("input")
    m.add_argument("--method", choices=("energy", "micp", "both"), default="both")
    m.add_argument("--with-compressors", action="store_true",
                   help="treat every edge with b_lo < b_hi as a variable compressor")
    m.add_argument("--column", help="apply the named bound column from meta.columns")
    m.add_argument("--formulation", choices=("1", "2"), default="2")
    m.add_argument("--big-m", type=_positive(float), default=1e4)
    m.add_argument("--epsilon", type=_positive(float), default=1e-6)
    m.add_argument("--max-outer", type=_positive(int), default=500)
    m.add_argument("--gap-tol", type=_positive(float), default=1e-6)
    m.add_argument("--node-limit", type=_positive(int), default=10**6)
    m.add_argument("--seed-upper", metavar="FILE", help="JSON with a known feasible objective")
    m.add_argument("--output", help="write results as JSON")

    c = sub.add_parser("check", parents=[common], help="run randomised property suites")
    for name in SUITES:
        c.add_argument(f"--{name}", action="store_true")
    c.add_argument("--trials", type=_positive(int), default=None, help="trials per suite")

    r = sub.add_parser("report", parents=[common], help="upper/lower bound gap table")
    r.add_argument("input", nargs="?", help="network file (defaults to the shipped 16-node example)")
    r.add_argument("--results", help="render precomputed entries from JSON instead of solving")
    r.add_argument("--compression", choices=("off", "on", "both"), default="off")
    r.add_argument("--format", choices=("text", "csv"), default="text")
    r.add_argument("--gap-tol", type=_positive(float), default=1e-6)
    r.add_argument("--node-limit", type=_positive(int), default=10**6)
    r.add_argument("--big-m", type=_positive(float), default=1e4)
    r.add_argument("--output", help="write the table to a file")
    return p


def _threads() -> int:
    raw = os.environ.get("DFN_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"DFN_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"DFN_THREADS must be a positive integer, got {raw!r}")
    return n


def _labelled(names, values):
    return {str(k): float(v) for k, v in zip(names, values)}


def _prepare(doc, column: str | None, compressors: bool | None):
    """Apply a bound column; ``compressors`` True/False forces boosts variable/fixed, None keeps the file."""
    net, sc = doc.network, doc.scenario
    if column is not None:
        match = [c for c in doc.columns if c.label == column]
        if not match:
            raise UsageError(f"no column {column!r}; available: {[c.label for c in doc.columns]}")
        net, sc = match[0].apply(net, sc)
    if compressors:
        sc = replace(sc, b_is_variable=sc.b_hi > sc.b_lo)
    elif compressors is not None:
        sc = sc.with_variable_b(False)
    return net, sc


def _energy_settings(args, newton) -> EnergySettings:
    return EnergySettings(method=f"formulation{getattr(args, 'formulation', '2')}",
                          epsilon=getattr(args, "epsilon", 1e-6), big_m=args.big_m,
                          max_outer=getattr(args, "max_outer", 500), newton=newton)


def _bnb_settings(args) -> BnbSettings:
    return BnbSettings(abs_gap_tol=args.gap_tol, rel_gap_tol=args.gap_tol, max_nodes=args.node_limit,
                       barrier=BarrierSettings())


def _energy_json(net, sol, seconds):
    return {"objective": sol.objective, "feasible": sol.feasible, "status": sol.status,
            "delivered": sol.delivered, "penalty_gap": sol.penalty_gap, "max_violation": sol.max_violation,
            "kkt_residual": sol.kkt_residual, "outer_iterations": sol.outer_iterations, "seconds": seconds,
            "x": _labelled(net.node_names, sol.x), "pi": _labelled(net.node_names, sol.pi),
            "b": _labelled(net.edge_names, sol.b), "phi": _labelled(net.edge_names, sol.phi)}


def _micp_json(net, res, seconds):
    out = {"lower_bound": res.lower_bound, "objective": res.objective, "status": res.status,
           "nodes_explored": res.nodes_explored, "seconds": seconds}
    if res.best_point is not None:
        pt = res.best_point
        out.update(x=_labelled(net.node_names, pt.x), pi=_labelled(net.node_names, pt.pi),
                   phi=_labelled(net.edge_names, pt.phi), b=_labelled(net.edge_names, pt.b),
                   directions={str(k): int(s) for k, s in zip(net.edge_names, res.best_assignment.s)})
    return out


def _read_seed_upper(path) -> float:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    if isinstance(data, dict):
        data = data.get("objective", data.get("energy", {}).get("objective") if isinstance(
            data.get("energy"), dict) else None)
    if isinstance(data, bool) or not isinstance(data, (int, float)):
        raise ParseError(f"{path}: expected a number or an object with an 'objective'")
    return float(data)


def _emit(text: str, output: str | None):
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_solve_nf(args) -> int:
    doc = load_network(args.input, args.units)
    if doc.injections is None:
        raise UsageError("the input file defines no injections ('q' on nodes)")
    net = doc.network
    settings = NewtonSettings(grad_tol=args.grad_tol, max_iter=args.max_iter, smooth_eps=args.smooth_eps)
    sol = solve_nf(net, doc.injections, None, settings)
    q = net.full_injections(doc.injections)
    result = {"iterations": sol.iterations, "kkt_residual": sol.kkt_residual,
              "dual_value": sol.dual_value, "primal_value": sol.primal_value,
              "slack_injection": float(q[0]),
              "pi": _labelled(net.node_names, sol.pi), "phi": _labelled(net.edge_names, sol.phi)}
    if args.output:
        _emit(json.dumps(result, indent=2) + "\n", args.output)
    print(f"converged in {sol.iterations} Newton iterations, KKT residual {sol.kkt_residual:.3e}")
    print(f"derived slack injection {q[0]:.6g}")
    for k, v in result["pi"].items():
        print(f"  pi[{k}] = {v:.10g}")
    for k, v in result["phi"].items():
        print(f"  phi[{k}] = {v:.10g}")
    return EXIT_OK


def cmd_maxflow(args) -> int:
    doc = load_network(args.input, args.units)
    net, sc = _prepare(doc, args.column, True if args.with_compressors else None)
    newton = NewtonSettings(smooth_eps=args.smooth_eps)
    result = {"instance": str(args.input), "column": args.column, "with_compressors": args.with_compressors}
    code = EXIT_OK
    energy = micp = None
    if args.method in ("energy", "both"):
        t0 = time.perf_counter()
        try:
            energy = solve_throughput_energy(net, sc, _energy_settings(args, newton))
        except NotConverged as exc:
            result["energy"] = {"error": str(exc)}
            if exc.best is not None:
                result["energy"] = {**_energy_json(net, exc.best, time.perf_counter() - t0), "error": str(exc)}
            code = EXIT_SOLVER
        else:
            result["energy"] = _energy_json(net, energy, time.perf_counter() - t0)
            print(f"energy heuristic: objective {energy.objective:.10g} ({energy.status}), "
                  f"delivered {energy.delivered:.6g}")
    if args.method in ("micp", "both"):
        seed = _read_seed_upper(args.seed_upper) if args.seed_upper else None
        if seed is None and energy is not None:
            seed = energy.objective
        t0 = time.perf_counter()
        try:
            micp = solve_micp(net, sc, _bnb_settings(args), seed_upper=seed)
        except NodeLimit as exc:
            result["micp"] = {**_micp_json(net, exc.result, time.perf_counter() - t0), "error": str(exc)}
            print(f"MIQP: node limit reached, lower bound {exc.result.lower_bound:.10g}")
            code = max(code, EXIT_SOLVER)
        else:
            result["micp"] = _micp_json(net, micp, time.perf_counter() - t0)
            if micp.status == "infeasible":
                print("MIQP relaxation infeasible")
                code = EXIT_INFEASIBLE
            else:
                print(f"MIQP lower bound: {micp.lower_bound:.10g} ({micp.nodes_explored} nodes)")
    if energy is not None and micp is not None and micp.status == "optimal":
        gap = energy.objective - micp.lower_bound
        result["gap"] = gap
        print(f"gap: {gap:.6g}" + ("  (certified optimal)" if abs(gap) <= args.gap_tol * (1 + abs(gap)) else ""))
    if args.output:
        _emit(json.dumps(result, indent=2) + "\n", args.output)
    return code


def cmd_check(args) -> int:
    names = [n for n in SUITES if getattr(args, n)] or list(SUITES)
    rng = np.random.default_rng(args.seed)
    ok = True
    for name in names:
        kw = {} if args.trials is None else {"trials": args.trials}
        res = SUITES[name](rng, **kw)
        print(res.line())
        ok &= res.passed
    return EXIT_OK if ok else EXIT_CHECK


def _solve_column(path, units, label, compressors, big_m, gap_tol, node_limit, smooth_eps):
    """One report column: energy upper bound then MICP lower bound (runs in a worker)."""
    doc = load_network(path, units)
    net, sc = _prepare(doc, label, compressors)
    newton = NewtonSettings(smooth_eps=smooth_eps)
    energy = micp = None
    e_err = m_err = None
    try:
        energy = solve_throughput_energy(net, sc, EnergySettings(big_m=big_m, newton=newton))
    except (InfeasibleScenario, NotConverged, SolverError) as exc:
        e_err = f"energy heuristic: {exc}"
        energy = getattr(exc, "best", None)
    seed = energy.objective if energy is not None and energy.feasible else None
    try:
        micp = solve_micp(net, sc, BnbSettings(abs_gap_tol=gap_tol, rel_gap_tol=gap_tol, max_nodes=node_limit),
                          seed_upper=seed)
    except NodeLimit as exc:
        micp, m_err = exc.result, f"MIQP: {exc}"
    except (ValidationError, SolverError) as exc:
        m_err = f"MIQP: {exc}"
    return entry_from_results(label or "file bounds", energy, micp, e_err, m_err)


def _entries_from_json(path) -> list:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    entries = data.get("entries") if isinstance(data, dict) else data
    if not isinstance(entries, list):
        raise ParseError(f"{path}: expected a list of entries")
    out = []
    for k, e in enumerate(entries):
        if not isinstance(e, dict) or "label" not in e:
            raise ParseError(f"{path}: entry {k} needs a 'label'")
        out.append(GapEntry(str(e["label"]), e.get("heuristic"), e.get("lower"), e.get("reference"),
                            e.get("heuristic_status", "certified" if e.get("heuristic") is not None
                                  else "infeasible"),
                            e.get("lower_status", "optimal" if e.get("lower") is not None else "failed"),
                            list(e.get("notes", []))))
    return out, (data.get("title", "") if isinstance(data, dict) else "")


def cmd_report(args) -> int:
    if args.results:
        entries, title = _entries_from_json(args.results)
        table = report_gap_table(entries, title=title)
        _emit(table.to_csv() if args.format == "csv" else table.to_text(), args.output)
        return EXIT_OK
    path = args.input or str(data_path("gas16.json"))
    doc = load_network(path, args.units)
    labels = [c.label for c in doc.columns] or [None]
    modes = {"off": [False], "on": [True], "both": [False, True]}[args.compression]
    jobs = [(path, args.units, lab, comp, args.big_m, args.gap_tol, args.node_limit, args.smooth_eps)
            for comp in modes for lab in labels]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_solve_column, *zip(*jobs)))
    else:
        entries = [_solve_column(*j) for j in jobs]
    text = []
    for k, comp in enumerate(modes):
        chunk = entries[k * len(labels):(k + 1) * len(labels)]
        title = f"{doc.meta.get('name', Path(path).stem)}: " + ("with compression" if comp else "without compression")
        table = report_gap_table(chunk, title=title)
        text.append(table.to_csv() if args.format == "csv" else table.to_text())
    _emit("\n".join(text), args.output)
    return EXIT_OK


COMMANDS = {"solve-nf": cmd_solve_nf, "maxflow": cmd_maxflow, "check": cmd_check, "report": cmd_report}


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    np.random.seed(args.seed)
    try:
        return COMMANDS[args.command](args)
    except (ParseError, ValidationError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleScenario as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (MaxIterationsExceeded, NotConverged, BarrierNonconvergence, SolverError) as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
