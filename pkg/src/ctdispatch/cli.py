"""Command-line front end.

Subcommands::

    ctdispatch solve SYSTEM [--output TRAJ]
    ctdispatch compare SYSTEM --resolution MIN [--csv FILE]
    ctdispatch sample TRAJ [--step MIN]
    ctdispatch verify SYSTEM TRAJ
    ctdispatch regions SYSTEM [--range S T]

Exit codes: 0 success, 1 usage or input error, 2 infeasible, 3 iteration
limit reached, 4 verification failed.
"""
import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import (NUM_FORMAT, comparison_csv, comparison_report, comparison_rows,
                       price_difference, revenue_discrepancy)
from .discrete import discrete_dispatch
from .errors import (DispatchError, InfeasibleDispatch, InfeasiblePoint, MaxIterationsExceeded,
                     ParseError, ValidationError)
from .model import load_system
from .mplp import dump_regions, explore_regions
from .orchestrator import SolveConfig, run
from .trajectory import (PiecewiseTrajectory, UpdatingRange, assemble_parametric_model,
                         load_trajectory, save_trajectory)
from .verifier import adaptive_dispatch, hourly_dispatch, verify

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_MAX_ITERATIONS = 3
EXIT_CHECK_FAILED = 4

SAMPLE_STEP = 0.01

# flag name -> SolveConfig field
CONFIG_FLAGS = {
    "tol": "mismatch_tol",
    "price_tol": "price_tol",
    "grid_step": "grid_step",
    "max_iterations": "max_iterations",
    "region_cap": "region_cap",
    "lp_tol": "lp_tol",
    "explore": "explore",
    "seed": "seed",
}
OTHER_KEYS = {"resolution", "sample_step", "step", "output", "csv", "log"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage, which is our infeasible code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(value):
    return format(float(value), NUM_FORMAT)


def _add_solver_flags(p):
    p.add_argument("--tol", type=float, help="endpoint mismatch tolerance in MW (default 0.001)")
    p.add_argument("--price-tol", type=float, help="price tolerance in $/MWh (default 1e-6)")
    p.add_argument("--grid-step", type=float, help="root bracketing grid step in minutes")
    p.add_argument("--max-iterations", type=int, help="iteration limit (default 200)")
    p.add_argument("--region-cap", type=int, help="critical region cap per range")
    p.add_argument("--lp-tol", type=float, help="LP feasibility and optimality tolerance")
    p.add_argument("--explore", choices=("path", "full"), help="region exploration mode")
    p.add_argument("--seed", type=int, help="seed for degeneracy perturbations")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with default flag values")
    common.add_argument("--log-level", default="INFO", help="diagnostics level on stderr")
    parser = _Parser(prog="ctdispatch", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", parents=[common], help="build continuous-time trajectories")
    p.add_argument("system", type=Path)
    p.add_argument("--output", type=Path, help="trajectory file (default SYSTEM.trajectory.json)")
    p.add_argument("--log", type=Path, help="write the iteration log as JSON")
    _add_solver_flags(p)

    p = sub.add_parser("compare", parents=[common], help="compare with a discrete-time dispatch")
    p.add_argument("system", type=Path)
    p.add_argument("--resolution", type=float, help="discrete step in minutes (default 5)")
    p.add_argument("--sample-step", type=float, help="CSV sampling step in minutes (default 0.01)")
    p.add_argument("--csv", type=Path, help="price CSV (default SYSTEM.compare.csv)")
    p.add_argument("--output", type=Path, help="report file (default stdout)")
    _add_solver_flags(p)

    p = sub.add_parser("sample", parents=[common], help="sample a trajectory file on a uniform grid")
    p.add_argument("trajectory", type=Path)
    p.add_argument("--step", type=float, help="sampling step in minutes (default 0.01)")
    p.add_argument("--output", type=Path, help="CSV file (default stdout)")

    p = sub.add_parser("verify", parents=[common], help="check a trajectory against a system")
    p.add_argument("system", type=Path)
    p.add_argument("trajectory", type=Path)
    p.add_argument("--output", type=Path, help="write the structured report as JSON")
    _add_solver_flags(p)

    p = sub.add_parser("regions", parents=[common], help="dump the critical regions of one updating range")
    p.add_argument("system", type=Path)
    p.add_argument("--range", nargs=2, type=float, metavar=("S", "T"),
                   help="updating range in minutes (default: the horizon)")
    p.add_argument("--output", type=Path, help="region file (default stdout)")
    _add_solver_flags(p)
    return parser


def _apply_config(args):
    """Fill unset flags from ``--config``; explicit flags win."""
    if args.config is None:
        return
    try:
        data = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"config {args.config}: {exc}") from None
    if not isinstance(data, dict):
        raise ParseError(f"config {args.config}: expected an object")
    for key, value in data.items():
        key = key.replace("-", "_")
        if key not in CONFIG_FLAGS and key not in OTHER_KEYS:
            raise UsageError(f"config {args.config}: unknown key {key!r}")
        if hasattr(args, key) and getattr(args, key) is None:
            if key in ("output", "csv", "log"):
                value = Path(value)
            setattr(args, key, value)


def solve_config(args):
    kwargs = {}
    for flag, name in CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            kwargs[name] = value
    try:
        return SolveConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _write_text(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _default_path(system_path, suffix):
    return Path(Path(system_path).stem + suffix)


def _iteration_log(solution):
    return [{"iteration": r.iteration,
             "ranges": [[a, b] for a, b in r.ranges],
             "new_endpoints": list(r.new_endpoints),
             "max_mismatch": None if np.isnan(r.max_mismatch) else r.max_mismatch,
             "n_endpoints": r.n_endpoints,
             "ramp_violations": r.ramp_violations,
             "price_inconsistencies": r.price_inconsistencies}
            for r in solution.log]


def cmd_solve(args):
    system = load_system(args.system, screen=False)
    config = solve_config(args)
    solution = run(system, config)
    traj = solution.trajectory
    traj = PiecewiseTrajectory(traj.segments, traj.load, traj.unit_ids,
                               {"iterations": solution.iterations, "cost": solution.cost,
                                "converged": solution.report.converged})
    out = args.output or _default_path(args.system, ".trajectory.json")
    save_trajectory(traj, out, system)
    if args.log is not None:
        args.log.write_text(json.dumps(_iteration_log(solution), indent=1) + "\n")
    logger.info("converged after %d iterations: %d endpoints, cost %s $ -> %s",
                solution.iterations, len(solution.endpoints), fmt(solution.cost), out)
    return EXIT_OK


def cmd_compare(args):
    system = load_system(args.system, screen=False)
    config = solve_config(args)
    resolution = 5.0 if args.resolution is None else args.resolution
    step = SAMPLE_STEP if args.sample_step is None else args.sample_step
    if step <= 0:
        raise UsageError("--sample-step must be positive")
    solution = run(system, config)
    traj = solution.trajectory
    discrete = discrete_dispatch(system, resolution, method=config.lp_method)
    diff = price_difference(traj, discrete.lmp, tol=config.price_tol)
    revenues = revenue_discrepancy(diff, traj)
    report = comparison_report(traj, discrete, diff, revenues, traj.unit_ids)
    report["continuous_cost"] = fmt(solution.cost)
    rows = comparison_rows(traj, discrete.lmp, step)
    csv_path = args.csv or _default_path(args.system, ".compare.csv")
    Path(csv_path).write_text(comparison_csv(rows))
    _write_text(json.dumps(report, indent=1, sort_keys=True) + "\n", args.output)
    logger.info("%d spans with price differences; %d CSV rows -> %s",
                len(diff.spans), len(rows), csv_path)
    return EXIT_OK


def sample_csv(traj, step):
    """CSV of ``t, D, x_k..., lambda`` with left-limit prices at endpoints."""
    n = int(round((traj.end - traj.start) / step))
    if n < 1 or abs(n * step - (traj.end - traj.start)) > 1e-9 * max(1.0, traj.end):
        raise UsageError(f"step {step} does not divide the horizon")
    times = np.linspace(traj.start, traj.end, n + 1)
    D, X, lam = traj.sample(times)
    ids = traj.unit_ids or tuple(f"x{k + 1}" for k in range(X.shape[1]))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "D", *ids, "lambda"])
    for i, t in enumerate(times):
        writer.writerow([fmt(t), fmt(D[i]), *(fmt(x) for x in X[i]), fmt(lam[i])])
    return buf.getvalue()


def cmd_sample(args):
    traj, _ = load_trajectory(args.trajectory)
    step = SAMPLE_STEP if args.step is None else args.step
    if step <= 0:
        raise UsageError("--step must be positive")
    _write_text(sample_csv(traj, step), args.output)
    return EXIT_OK


def cmd_verify(args):
    system = load_system(args.system, screen=False)
    traj, _ = load_trajectory(args.trajectory)
    if len(traj.segments[0].b) != system.n_units:
        raise ValidationError(f"trajectory has {len(traj.segments[0].b)} units, "
                              f"system has {system.n_units}")
    if traj.start != system.horizon[0] or traj.end != system.horizon[1]:
        raise ValidationError("trajectory and system horizons differ")
    # the system file is authoritative: verify against its load, not the embedded one
    traj = PiecewiseTrajectory(traj.segments, system.load, traj.unit_ids)
    config = solve_config(args)
    report = verify(system, traj, mismatch_tol=config.mismatch_tol, price_tol=config.price_tol,
                    grid_step=config.grid_step, method=config.lp_method)
    sys.stdout.write(report.format_table() + "\n")
    if args.output is not None:
        args.output.write_text(json.dumps(report.to_dict(), indent=1) + "\n")
    return EXIT_OK if report.converged else EXIT_CHECK_FAILED


def cmd_regions(args):
    system = load_system(args.system, screen=False)
    config = solve_config(args)
    S, T = system.horizon
    s_u, t_u = (S, T) if args.range is None else args.range
    if not S <= s_u < t_u <= T:
        raise UsageError(f"range [{s_u}, {t_u}] is not inside the horizon [{S}, {T}]")
    hourly = hourly_dispatch(system, method=config.lp_method)
    ends = sorted({S, s_u, t_u, T})
    X = adaptive_dispatch(system, ends, pinned={len(ends) - 1: hourly.X[-1]},
                          method=config.lp_method).X
    rng = UpdatingRange(s_u, t_u, X[ends.index(s_u)], X[ends.index(t_u)])
    plp = assemble_parametric_model(system, rng)
    seed_t = s_u + min(0.01, 0.5 * (t_u - s_u))
    try:
        regions = explore_regions(plp, np.array([seed_t, float(system.load.value(seed_t))]),
                                  tol=config.lp_tol, cap=config.region_cap,
                                  rng=np.random.default_rng(config.seed))
    except InfeasiblePoint as exc:
        raise InfeasibleDispatch(str(exc)) from None
    out = dump_regions(regions)
    out["range"] = [s_u, t_u]
    out["theta_domain"] = np.asarray(plp.theta_domain).tolist()
    out["row_labels"] = list(plp.row_labels)
    _write_text(json.dumps(out, indent=1) + "\n", args.output)
    logger.info("%d critical regions on [%s, %s]", len(regions), fmt(s_u), fmt(t_u))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "compare": cmd_compare, "sample": cmd_sample,
            "verify": cmd_verify, "regions": cmd_regions}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger("ctdispatch.lp_core").setLevel(logging.WARNING)
    try:
        _apply_config(args)
        return COMMANDS[args.command](args)
    except InfeasibleDispatch as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except MaxIterationsExceeded as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_MAX_ITERATIONS
    except (UsageError, ParseError, ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DispatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
