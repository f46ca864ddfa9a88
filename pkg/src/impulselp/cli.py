"""Command-line entry point.

Exit codes: 0 success, 1 oracle or self-test failure, 2 infeasible problem,
64 configuration or usage error, 70 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from .classifier import ClassificationError
from .config import ConfigError, load_problem
from .extensions import aggregate_measure, metric_selftest
from .lp import LPError
from .mdp import build_mdp
from .pipeline import SolveOptions, _fmt, _num, classify, solve
from .problem import DomainError
from .strategy import monte_carlo_values, simulate
from .verify import EnumerationTooLarge, crosscheck

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INFEASIBLE = 2
EXIT_USAGE = 64
EXIT_INTERNAL = 70


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _extended(text: str) -> float:
    v = float(text)
    if math.isnan(v):
        raise argparse.ArgumentTypeError("nan is not allowed")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="impulselp", description="Constrained impulse control via occupation-measure programs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and diagnostics to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def with_solver_flags(sp):
        sp.add_argument("config", help="problem document (JSON)")
        sp.add_argument("--tol", type=float, default=1e-12, help="value-iteration tolerance (default: %(default)g)")
        sp.add_argument("--tol-v", type=float, default=None,
                        help="threshold defining V = {w > tol_v} (default: 1e-9 * (1 + max one-step cost))")
        sp.add_argument("--max-iter", type=_positive_int, default=None,
                        help="value-iteration sweep limit (default: 10 |S| |B| + 1000)")

    s = sub.add_parser("solve", help="solve a problem and print the report")
    with_solver_flags(s)
    s.add_argument("--json-out", metavar="PATH", help="also write the machine-readable report")
    s.add_argument("--dump-lp", metavar="PATH", help="write the restricted program in text form")
    s.add_argument("--verify", action="store_true", help="cross-check the value with brute-force oracles")

    s = sub.add_parser("simulate", help="simulate the optimal strategy")
    with_solver_flags(s)
    s.add_argument("--seed", type=int, default=0, help="generator key (default: %(default)s)")
    s.add_argument("--runs", type=_positive_int, default=1,
                   help="1 prints a trace; more prints Monte-Carlo estimates (default: %(default)s)")
    s.add_argument("--max-impulses", type=_positive_int, default=10_000, help="per-run impulse limit (default: %(default)s)")
    s.add_argument("--horizon", type=_extended, default=math.inf, help="per-run time limit (default: inf)")
    s.add_argument("--json-out", metavar="PATH", help="write estimates as JSON")

    s = sub.add_parser("verify", help="bracket the program value with independent oracles")
    with_solver_flags(s)
    s.add_argument("--sample", type=_positive_int, default=None,
                   help="evaluate this many random deterministic maps instead of all of them")

    s = sub.add_parser("classify", help="print w, V and f*")
    with_solver_flags(s)

    s = sub.add_parser("aggregate", help="print the aggregated occupation measure as tab-separated atoms")
    with_solver_flags(s)
    s.add_argument("--h", type=float, default=1e-3, help="time step (default: %(default)g)")
    s.add_argument("--horizon", type=float, default=10.0, help="cut-off for infinite waits (default: %(default)g)")
    s.add_argument("--full", action="store_true",
                   help="aggregate the strategy's occupation on all states, not only the program measure on V")

    s = sub.add_parser("metric-selftest", help="property checks of the time-extended metric")
    s.add_argument("--samples", type=_positive_int, default=10_000, help="random triples (default: %(default)s)")
    s.add_argument("--seed", type=int, default=0, help="(default: %(default)s)")
    return p


def _options(args, **extra) -> SolveOptions:
    if not args.tol > 0:
        raise UsageError("--tol must be > 0")
    if args.tol_v is not None and not args.tol_v > 0:
        raise UsageError("--tol-v must be > 0")
    return SolveOptions(tol=args.tol, tol_v=args.tol_v, max_iter=args.max_iter, **extra)


def _load(args):
    try:
        problem = load_problem(args.config)
        return problem, build_mdp(problem)
    except (ConfigError, DomainError, OSError) as exc:
        raise UsageError(str(exc)) from exc
    except ValueError as exc:
        raise UsageError(f"{args.config}: {exc}") from exc


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(str(exc)) from exc


def cmd_solve(args) -> int:
    _, mdp = _load(args)
    report = solve(mdp, _options(args, verify=args.verify, dump_lp=args.dump_lp))
    print(report.table())
    if args.json_out:
        _write(args.json_out, report.to_json())
    if report.status == "infeasible":
        return EXIT_INFEASIBLE
    if report.oracle is not None and not report.oracle.passed:
        return EXIT_FAIL
    return EXIT_OK


def cmd_simulate(args) -> int:
    _, mdp = _load(args)
    if not args.horizon > 0:
        raise UsageError("--horizon must be > 0")
    report = solve(mdp, _options(args))
    if report.status != "optimal":
        print("status infeasible: nothing to simulate")
        return EXIT_INFEASIBLE
    if args.runs == 1:
        tr = simulate(mdp, report.strategy, seed=args.seed, max_impulses=args.max_impulses,
                      time_horizon=args.horizon)
        header = "i\tx_prev\ttheta\ta\tx_next\t" + "\t".join(f"dcost_{j}" for j in range(mdp.J + 1))
        print(header)
        print("\n".join(tr.lines(mdp)))
        print(f"# terminated: {tr.termination}")
        totals = tr.total_costs()
        doc = {"seed": args.seed, "runs": 1, "termination": tr.termination,
               "totals": [_num(v) for v in totals] if len(totals) else [0.0] * (mdp.J + 1)}
    else:
        mc = monte_carlo_values(mdp, report.strategy, seed=args.seed, n_runs=args.runs,
                                max_impulses=args.max_impulses, time_horizon=args.horizon)
        exact = report.performance.values
        print(f"runs {mc.runs}  seed {args.seed}  truncated runs {mc.truncated_runs}")
        print("criterion    estimate         stderr           exact            |diff|/stderr")
        for j in range(mdp.J + 1):
            diff = abs(mc.values[j] - exact[j])
            z = diff / mc.stderr[j] if mc.stderr[j] > 0 else (0.0 if diff == 0 else math.inf)
            print(f"  {j:<10} {_fmt(mc.values[j]):<16} {_fmt(mc.stderr[j]):<16} {_fmt(exact[j]):<16} {_fmt(z)}")
        doc = {"seed": args.seed, "runs": mc.runs, "truncated_runs": mc.truncated_runs,
               "estimate": [_num(v) for v in mc.values], "stderr": [_num(v) for v in mc.stderr],
               "exact": [_num(v) for v in exact]}
    if args.json_out:
        _write(args.json_out, json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    _, mdp = _load(args)
    report = solve(mdp, _options(args))
    lp_value = report.value if report.status == "optimal" else math.inf
    try:
        oracle = crosscheck(mdp, lp_value, sample=args.sample)
    except EnumerationTooLarge as exc:
        raise UsageError(str(exc)) from exc
    print(oracle.table())
    return EXIT_OK if oracle.passed else EXIT_FAIL


def cmd_classify(args) -> int:
    _, mdp = _load(args)
    value, vset, fstar = classify(mdp, _options(args))
    print(f"value iteration: {value.iterations} sweeps, residual {value.residual:.3g}, tol_v {vset.tol_v:.3g}")
    print("state\tw\tin_V\tf*")
    for x in range(mdp.n_states):
        print(f"{mdp.state_label(x)}\t{_fmt(value.w[x])}\t{'yes' if vset.membership[x] else 'no'}\t"
              f"{mdp.actions.label(fstar.choice[x])}")
    return EXIT_OK


def cmd_aggregate(args) -> int:
    _, mdp = _load(args)
    if not (args.h > 0 and args.horizon > 0):
        raise UsageError("--h and --horizon must be > 0")
    report = solve(mdp, _options(args))
    if report.status != "optimal":
        print("status infeasible: no measure to aggregate")
        return EXIT_INFEASIBLE
    if args.full or report.lp_solution is None:
        mu = report.occupation
    else:
        mu = report.lp_solution.mu
    if mu.infinite:
        raise UsageError("the occupation measure has infinite mass; aggregate the program measure instead")
    eta = aggregate_measure(mu, mdp, h=args.h, horizon=args.horizon)
    print("state\taction\tweight")
    for x, a, w in eta.atoms(mdp):
        print(f"{x}\t{a}\t{w:.12g}")
    if eta.truncated:
        print(f"# truncated: infinite waits counted up to T = {args.horizon:g}")
    return EXIT_OK


def cmd_metric_selftest(args) -> int:
    r = metric_selftest(samples=args.samples, seed=args.seed)
    print(f"samples                  {r.samples}")
    print(f"symmetry max violation   {r.symmetry_max:.3g}")
    print(f"negativity max           {r.negativity_max:.3g}")
    print(f"rho(p, p) max            {r.identity_max:.3g}")
    print(f"distinct-pair min        {r.separation_min:.3g}")
    print(f"triangle slack min       {r.triangle_slack_min:.3g}")
    print(f"convergence regimes      {'pass' if r.convergence_ok else 'fail'}")
    print(f"verdict                  {'pass' if r.passed else 'fail'}")
    return EXIT_OK if r.passed else EXIT_FAIL


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "verify": cmd_verify, "classify": cmd_classify,
            "aggregate": cmd_aggregate, "metric-selftest": cmd_metric_selftest}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ClassificationError, LPError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - the exit-code contract covers everything else
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
