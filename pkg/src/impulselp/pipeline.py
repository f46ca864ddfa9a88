"""End-to-end solve: classification, restricted program, strategy extraction, checks."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .classifier import (AggregateValue, DeterministicStationaryStrategy, VSet, aggregate_value_iteration,
                         compute_V, extract_fstar)
from .config import load_problem, problem_from_dict
from .lp import LinearProgram, LPSolution, OccupationMeasure, build_restricted_lp, dump_lp, solve_lp
from .mdp import FiniteMDP, build_mdp
from .problem import Problem
from .strategy import (CertificateReport, PerformanceVector, StationaryStrategy, _reachable, disintegrate,
                       evaluate_performance, exact_occupation, transition_matrix,
                       validate_optimality_certificate)
from .verify import EnumerationTooLarge, OracleReport, crosscheck

BUDGET_TOL = 1e-6


@dataclass(frozen=True)
class SolveOptions:
    tol: float = 1e-12              # value-iteration sup-norm stopping tolerance
    tol_v: float | None = None      # threshold for V; None = 1e-9 (1 + max one-step cost)
    max_iter: int | None = None
    verify: bool = False
    verify_sample: int | None = None
    dump_lp: str | None = None


@dataclass
class SolveReport:
    name: str
    status: str                     # "optimal" | "infeasible"
    value: float
    mdp: FiniteMDP = field(repr=False)
    aggregate: AggregateValue = field(repr=False)
    vset: VSet = field(repr=False)
    fstar: DeterministicStationaryStrategy = field(repr=False)
    strategy: StationaryStrategy | None = field(repr=False)
    occupation: OccupationMeasure | None = field(repr=False)     # full occupation of the strategy
    performance: PerformanceVector | None
    certificate: CertificateReport
    shortcut: bool                  # x0 outside V: no program solved
    lp: LinearProgram | None = field(default=None, repr=False)
    lp_solution: LPSolution | None = field(default=None, repr=False)
    oracle: OracleReport | None = None
    oracle_error: str | None = None
    timings: dict = field(default_factory=dict)

    @property
    def budget_slack(self) -> np.ndarray:
        if self.performance is None:
            return np.full(self.mdp.J, math.nan)
        return self.mdp.budgets - self.performance.values[1:]

    def strategy_rows(self) -> list[tuple[int, list[tuple[int, float]]]]:
        """Rows of the strategy at states it can visit from x0."""
        if self.strategy is None:
            return []
        reach = _reachable(transition_matrix(self.mdp, self.strategy) > 0, self.mdp.x0)
        reach[self.mdp.delta] = False
        return [(int(x), [(int(b), float(self.strategy.rows[x, b])) for b in self.strategy.support(x)])
                for x in np.flatnonzero(reach)]

    def flags(self) -> dict:
        mdp = self.mdp
        reach = np.zeros(mdp.n_states, dtype=bool)
        if self.strategy is not None:
            reach = _reachable(transition_matrix(mdp, self.strategy) > 0, mdp.x0)
        used = self.strategy.rows > 0 if self.strategy is not None else np.zeros((mdp.n_states, mdp.n_actions), bool)
        trunc = bool(mdp.truncated is not None and np.any(mdp.truncated & (used & reach[:, None])[None]))
        return {
            "grid_points": None if mdp.grid is None else int(len(mdp.grid)),
            "projection_displacement": mdp.projection_displacement,
            "cost_truncated": trunc,
            "value_iteration_converged": bool(self.aggregate.converged),
            "value_iteration_iterations": int(self.aggregate.iterations),
            "tol_v": self.vset.tol_v,
            "borderline_states": [mdp.state_label(x) for x in self.vset.borderline],
            "infinite_occupation": bool(self.occupation is not None and self.occupation.infinite),
        }

    def to_dict(self) -> dict:
        mdp = self.mdp
        doc = {
            "name": self.name,
            "status": self.status,
            "value": _num(self.value),
            "x0": mdp.state_label(mdp.x0),
            "x0_outside_V": self.shortcut,
            "classification": [
                {"state": mdp.state_label(x), "w": _num(self.aggregate.w[x]), "in_V": bool(self.vset.membership[x]),
                 "fstar": mdp.actions.label(self.fstar.choice[x])}
                for x in range(mdp.n_states)],
            "strategy": [
                {"state": mdp.state_label(x), "actions": {mdp.actions.label(b): _num(p) for b, p in row}}
                for x, row in self.strategy_rows()],
            "performance": None if self.performance is None else [_num(v) for v in self.performance.values],
            "budgets": [_num(d) for d in mdp.budgets],
            "budget_slack": [_num(s) for s in self.budget_slack],
            "certificate": {"certified": self.certificate.is_certified, "reasons": list(self.certificate.reasons)},
            "flags": {k: _num(v) if isinstance(v, float) else v for k, v in self.flags().items()},
        }
        if self.lp is not None:
            doc["program"] = {"columns": self.lp.n_columns, "balance_rows": len(self.lp.row_states),
                              "budget_rows": int(self.lp.A_ub.shape[0]), "dropped_columns": self.lp.dropped,
                              "pivots": None if self.lp_solution is None else self.lp_solution.iterations}
        if self.oracle is not None:
            o = self.oracle
            doc["oracle"] = {"verdict": o.verdict, "unconstrained": _num(o.unconstrained),
                             "deterministic_feasible": _num(o.deterministic_feasible),
                             "lagrangian": _num(o.lagrangian), "mixture": _num(o.mixture),
                             "maps": o.maps, "exhaustive": o.exhaustive, "witnesses": dict(sorted(o.witnesses.items()))}
        elif self.oracle_error is not None:
            doc["oracle"] = {"verdict": "unavailable", "reason": self.oracle_error}
        return doc

    def to_json(self) -> str:
        """Machine-readable report; wall-clock timings are left out so reruns are byte-identical."""
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def table(self) -> str:
        mdp = self.mdp
        lines = [f"problem      {self.name}",
                 f"status       {self.status}",
                 f"value        {_fmt(self.value)}"]
        if self.shortcut:
            lines.append("note         x0 is outside V: zero total cost is attainable, no program solved")
        lines.append("")
        V = [mdp.state_label(x) for x in self.vset.indices]
        shown = V if len(V) <= 20 else V[:20] + [f"... ({len(V)} states)"]
        lines.append(f"V            {{{', '.join(shown)}}}")
        lines.append(f"w(x0)        {_fmt(self.aggregate.w[mdp.x0])}")
        rows = self.strategy_rows()
        if rows:
            lines += ["", "strategy (states visited from x0)"]
            for x, row in rows:
                acts = ", ".join(f"{mdp.actions.label(b)}: {_fmt(p)}" for b, p in row)
                lines.append(f"  {mdp.state_label(x):<14} {acts}")
        if self.performance is not None:
            lines += ["", "criterion    V_j              budget           slack"]
            for j, v in enumerate(self.performance.values):
                if j == 0:
                    lines.append(f"  0          {_fmt(v):<16} -                -")
                else:
                    d = mdp.budgets[j - 1]
                    lines.append(f"  {j:<10} {_fmt(v):<16} {_fmt(d):<16} {_fmt(d - v)}")
        lines += ["", f"certificate  {'certified' if self.certificate.is_certified else 'NOT certified'}"]
        lines += [f"  - {r}" for r in self.certificate.reasons]
        if self.oracle is not None:
            lines += ["", "oracle", *("  " + s for s in self.oracle.table().splitlines())]
        elif self.oracle_error is not None:
            lines += ["", f"oracle       unavailable: {self.oracle_error}"]
        fl = self.flags()
        lines += ["", "flags"] + [f"  {k:<28} {v}" for k, v in fl.items()]
        if self.timings:
            lines += ["", "timings (s)"] + [f"  {k:<28} {v:.4f}" for k, v in self.timings.items()]
        return "\n".join(lines)


def _num(v):
    """Report number: 12 significant digits, ``"inf"`` for infinities, ``None`` for nan."""
    if v is None:
        return None
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    r = float(f"{v:.12g}")
    return 0.0 if r == 0 else r


def _fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.12g}"


def classify(mdp: FiniteMDP, options: SolveOptions = SolveOptions()):
    value = aggregate_value_iteration(mdp, tol=options.tol, max_iter=options.max_iter)
    vset = compute_V(value, options.tol_v, mdp.delta)
    return value, vset, extract_fstar(mdp, value, vset)


def solve(problem: Problem | FiniteMDP | dict, options: SolveOptions = SolveOptions()) -> SolveReport:
    clock = {}
    t0 = time.perf_counter()
    if isinstance(problem, dict):
        problem = problem_from_dict(problem)
    mdp = problem if isinstance(problem, FiniteMDP) else build_mdp(problem)
    name = getattr(mdp.problem, "name", None) or "problem"
    clock["build"] = time.perf_counter() - t0

    t = time.perf_counter()
    value, vset, fstar = classify(mdp, options)
    clock["classify"] = time.perf_counter() - t

    if not vset.membership[mdp.x0]:
        strat = StationaryStrategy.deterministic(fstar, mdp.n_actions)
        occ = exact_occupation(mdp, strat)
        perf = evaluate_performance(mdp, occ)
        reasons = []
        if np.any(perf.values > vset.tol_v):
            reasons.append(f"f* from x0 accrues cost {perf.values.tolist()}")
        report = SolveReport(name, "optimal", 0.0, mdp, value, vset, fstar, strat, occ, perf,
                             CertificateReport(not reasons, tuple(reasons), 0.0), True)
        _attach_oracle(report, options, 0.0)
        clock["total"] = time.perf_counter() - t0
        report.timings = clock
        return report

    t = time.perf_counter()
    lp = build_restricted_lp(mdp, vset)
    if options.dump_lp:
        dump_lp(lp, options.dump_lp)
    sol = solve_lp(lp)
    clock["program"] = time.perf_counter() - t

    if sol.status != "optimal":
        report = SolveReport(name, "infeasible", math.nan, mdp, value, vset, fstar, None, None, None,
                             CertificateReport(False, ("no feasible strategy",)), False, lp, sol)
        _attach_oracle(report, options, math.inf)
        clock["total"] = time.perf_counter() - t0
        report.timings = clock
        return report

    t = time.perf_counter()
    strat = disintegrate(sol.mu, vset, fstar)
    occ = exact_occupation(mdp, strat)
    perf = evaluate_performance(mdp, occ)
    cert = validate_optimality_certificate(mdp, vset, strat, sol)
    if cert.is_certified:
        over = [j for j in range(1, mdp.J + 1) if perf.values[j] > mdp.budgets[j - 1] + BUDGET_TOL]
        if over:
            cert = CertificateReport(False, tuple(f"budget {j} exceeded by the full occupation" for j in over),
                                     cert.objective)
    clock["strategy"] = time.perf_counter() - t
    report = SolveReport(name, "optimal", float(sol.value), mdp, value, vset, fstar, strat, occ, perf, cert,
                         False, lp, sol)
    _attach_oracle(report, options, float(sol.value))
    clock["total"] = time.perf_counter() - t0
    report.timings = clock
    return report


def _attach_oracle(report: SolveReport, options: SolveOptions, lp_value: float) -> None:
    if not options.verify:
        return
    try:
        report.oracle = crosscheck(report.mdp, lp_value, sample=options.verify_sample)
    except EnumerationTooLarge as exc:
        report.oracle_error = str(exc)


def solve_problem(path, options: SolveOptions = SolveOptions()) -> SolveReport:
    return solve(load_problem(path), options)
