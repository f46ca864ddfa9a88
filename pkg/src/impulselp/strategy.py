"""Stationary strategies: extraction from measures, exact occupation, simulation, certificates."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .classifier import DeterministicStationaryStrategy, VSet
from .lp import LPSolution, OccupationMeasure, _dot_cost, measure_residuals
from .mdp import FiniteMDP

RADIUS_FLAG = 1.0 - 1e-10
POWER_STEPS = 200


@dataclass(frozen=True)
class StationaryStrategy:
    rows: np.ndarray   # (S, B), each row a probability vector

    def __post_init__(self):
        r = np.asarray(self.rows, dtype=float)
        if r.ndim != 2:
            raise ValueError("strategy rows must form a 2-d array")
        if np.any(r < 0):
            raise ValueError("negative strategy probability")
        bad = np.flatnonzero(np.abs(r.sum(axis=1) - 1.0) > 1e-12)
        if bad.size:
            raise ValueError(f"strategy rows {bad.tolist()} do not sum to 1")
        object.__setattr__(self, "rows", r)

    @classmethod
    def deterministic(cls, f: DeterministicStationaryStrategy, n_actions: int) -> "StationaryStrategy":
        return cls(f.rows(n_actions))

    def support(self, x: int) -> np.ndarray:
        return np.flatnonzero(self.rows[x] > 0)


@dataclass(frozen=True)
class PerformanceVector:
    values: np.ndarray
    stderr: np.ndarray | None = None
    truncated_runs: int = 0
    runs: int = 0

    def __getitem__(self, j):
        return self.values[j]

    def __len__(self):
        return len(self.values)


def disintegrate(mu: OccupationMeasure, vset: VSet, fstar: DeterministicStationaryStrategy) -> StationaryStrategy:
    """Normalise ``mu`` row-wise on V; Dirac at ``f*`` elsewhere and on zero-mass rows."""
    w = np.asarray(mu.weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("occupation measure has negative weights")
    rows = fstar.rows(w.shape[1])
    for x in vset.indices:
        row = w[x]
        if np.isinf(row).any():
            row = np.isinf(row).astype(float)
        m = row.sum()
        if m > 0:
            rows[x] = row / m
            # renormalise away rounding so rows sum to 1 within 1e-12
            rows[x] /= rows[x].sum()
    return StationaryStrategy(rows)


def _support_mask(mdp: FiniteMDP, support) -> np.ndarray:
    if support is None:
        mask = np.ones(mdp.n_states, dtype=bool)
        mask[mdp.delta] = False
        return mask
    if isinstance(support, VSet):
        return support.membership.copy()
    return np.asarray(support, dtype=bool).copy()


def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        x = frontier.pop()
        for y in np.flatnonzero(adj[x] & ~seen):
            seen[y] = True
            frontier.append(int(y))
    return seen


def transition_matrix(mdp: FiniteMDP, strategy: StationaryStrategy) -> np.ndarray:
    """``P[x, y] = sum_b row_x(b) 1{next(x, b) = y}`` over all MDP states."""
    P = np.zeros((mdp.n_states, mdp.n_states))
    for x in range(mdp.n_states):
        np.add.at(P[x], mdp.next[x], strategy.rows[x])
    return P


def exact_occupation(mdp: FiniteMDP, strategy: StationaryStrategy, x0: int | None = None,
                     support=None) -> OccupationMeasure:
    """Expected visit counts of (state, action) pairs while the chain stays in ``support``.

    ``support`` is a :class:`VSet`, a boolean mask, or ``None`` for all non-cemetery
    states.  Solves ``m = e_x0 + P^T m`` on the support; states in recurrent
    classes that the mass cannot leave get ``m = inf``.
    """
    x0 = mdp.x0 if x0 is None else x0
    mask = _support_mask(mdp, support)
    S, B = mdp.n_states, mdp.n_actions
    weights = np.zeros((S, B))
    if not mask[x0]:
        return OccupationMeasure(weights, mask, 0.0)
    P = transition_matrix(mdp, strategy)
    idx = np.flatnonzero(mask)
    Pm = P[np.ix_(idx, idx)]
    pos = {int(x): i for i, x in enumerate(idx)}
    reach = _reachable(Pm > 0, pos[x0])
    R = np.flatnonzero(reach)
    PR = Pm[np.ix_(R, R)]

    # bottom strongly connected components: mass entering them never leaves
    n_comp, label = connected_components(csr_matrix(PR > 0), directed=True, connection="strong")
    leak = 1.0 - PR.sum(axis=1)
    closed = np.ones(n_comp, dtype=bool)
    for i in range(len(R)):
        if leak[i] > 1e-12 or np.any((PR[i] > 0) & (label != label[i])):
            closed[label[i]] = False
    recurrent = closed[label]

    v = np.ones(len(R))
    for _ in range(POWER_STEPS):
        v = PR @ v
    radius = float(v.max() ** (1.0 / POWER_STEPS)) if len(R) and v.max() > 0 else 0.0
    if (radius >= RADIUS_FLAG) != bool(recurrent.any()):
        warnings.warn(f"spectral radius estimate {radius:.12f} disagrees with the recurrence check",
                      RuntimeWarning, stacklevel=2)

    m = np.zeros(len(R))
    m[recurrent] = np.inf
    T = np.flatnonzero(~recurrent)
    if T.size:
        e = np.zeros(len(R))
        e[int(np.searchsorted(R, pos[x0]))] = 1.0
        PT = PR[np.ix_(T, T)]
        m[T] = np.linalg.solve(np.eye(T.size) - PT.T, e[T])
        m[T] = np.maximum(m[T], 0.0)
    full = np.zeros(S)
    full[idx[R]] = m
    rows = strategy.rows
    with np.errstate(invalid="ignore"):
        weights = np.where(rows > 0, full[:, None] * rows, 0.0)
    weights[~mask] = 0.0
    return OccupationMeasure(weights, mask, radius)


def evaluate_performance(mdp: FiniteMDP, mu: OccupationMeasure) -> PerformanceVector:
    """``V_j = sum cost_j(x, b) mu(x, b)`` with ``inf * 0 = 0``."""
    return PerformanceVector(np.array([_dot_cost(mdp.cost[j], mu.weights) for j in range(mdp.J + 1)]))


def outperforms(p1, p2, tol: float = 0.0) -> bool:
    a = np.asarray(getattr(p1, "values", p1), dtype=float)
    b = np.asarray(getattr(p2, "values", p2), dtype=float)
    if a.shape != b.shape:
        raise ValueError("performance vectors of different length")
    return bool(np.all(a <= b + tol))


# ---------------------------------------------------------------------------
# Simulation


def uniform_stream(seed: int, run: int) -> np.random.Generator:
    """Counter-based stream: the k-th draw is a pure function of (seed, run, k)."""
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(run)]))


@dataclass(frozen=True)
class TraceRecord:
    i: int
    x_prev: int
    theta: float
    action: str
    x_next: int
    costs: tuple[float, ...]


@dataclass(frozen=True)
class Trace:
    records: tuple[TraceRecord, ...]
    termination: str          # "reached Delta" | "impulse-count limit" | "time-horizon limit"
    seed: int
    run: int = 0

    def total_costs(self) -> np.ndarray:
        if not self.records:
            return np.zeros(0)
        return np.sum([r.costs for r in self.records], axis=0)

    def lines(self, mdp: FiniteMDP) -> list[str]:
        """One tab-separated line per impulse: i, x_prev, theta, a, x_next, dcost_0..dcost_J."""
        out = []
        for r in self.records:
            theta = "inf" if r.theta == math.inf else f"{r.theta:.12g}"
            costs = "\t".join(f"{c:.12g}" for c in r.costs)
            out.append(f"{r.i}\t{mdp.state_label(r.x_prev)}\t{theta}\t{r.action}\t{mdp.state_label(r.x_next)}\t{costs}")
        return out


def _sample(cum: np.ndarray, u: float) -> int:
    b = int(np.searchsorted(cum, u, side="right"))
    return min(b, len(cum) - 1)


def simulate(mdp: FiniteMDP, strategy: StationaryStrategy, seed: int = 0, max_impulses: int = 10_000,
             time_horizon: float = math.inf, run: int = 0, _cum: np.ndarray | None = None) -> Trace:
    """One trajectory from x0 until the cemetery, ``max_impulses`` or ``time_horizon``."""
    if max_impulses < 1 or not time_horizon > 0:
        raise ValueError("limits must be positive")
    cum = np.cumsum(strategy.rows, axis=1) if _cum is None else _cum
    rng = uniform_stream(seed, run)
    thetas = mdp.actions.theta_of
    x = mdp.x0
    clock = 0.0
    records = []
    termination = "impulse-count limit"
    for i in range(1, max_impulses + 1):
        b = _sample(cum[x], rng.random())
        theta = float(thetas[b])
        y = int(mdp.next[x, b])
        records.append(TraceRecord(i, x, theta, mdp.actions.decode(b)[1], y, tuple(mdp.cost[:, x, b].tolist())))
        x = y
        if x == mdp.delta:
            termination = "reached Delta"
            break
        clock += theta
        if clock > time_horizon:
            termination = "time-horizon limit"
            break
    return Trace(tuple(records), termination, seed, run)


def monte_carlo_values(mdp: FiniteMDP, strategy: StationaryStrategy, seed: int = 0, n_runs: int = 1000,
                       max_impulses: int = 10_000, time_horizon: float = math.inf) -> PerformanceVector:
    """Mean and standard error of per-run total costs; runs are reduced in index order."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    cum = np.cumsum(strategy.rows, axis=1)
    totals = np.zeros((n_runs, mdp.J + 1))
    truncated = 0
    for r in range(n_runs):
        tr = simulate(mdp, strategy, seed, max_impulses, time_horizon, run=r, _cum=cum)
        totals[r] = tr.total_costs()
        truncated += tr.termination != "reached Delta"
    # criteria on which every run agrees are reported exactly, free of summation round-off
    constant = np.all(totals == totals[0], axis=0)
    with np.errstate(invalid="ignore"):
        mean = np.where(constant, totals[0], totals.mean(axis=0))
        se = totals.std(axis=0, ddof=1) / math.sqrt(n_runs) if n_runs > 1 else np.zeros(mdp.J + 1)
    se = np.where(constant, 0.0, np.where(np.isnan(se), np.inf, se))
    return PerformanceVector(mean, se, truncated, n_runs)


# ---------------------------------------------------------------------------
# Certificates


@dataclass(frozen=True)
class CertificateReport:
    is_certified: bool
    reasons: tuple[str, ...] = field(default_factory=tuple)
    objective: float = math.nan


def validate_optimality_certificate(mdp: FiniteMDP, vset: VSet, strategy: StationaryStrategy,
                                    lp_solution: LPSolution, tol: float = 1e-6,
                                    balance_tol: float = 1e-8) -> CertificateReport:
    """Check that ``strategy`` matches the program optimum on V and is cost-free off V."""
    if lp_solution.status != "optimal":
        return CertificateReport(False, ("program not solved to optimality",))
    reasons = []
    occ = exact_occupation(mdp, strategy, support=vset)
    if occ.infinite:
        reasons.append("occupation measure on V has infinite mass")
        objective = math.inf
    else:
        res = measure_residuals(mdp, vset.membership, occ)
        objective = res.objective
        if abs(objective - lp_solution.value) > tol:
            reasons.append(f"objective {objective:.12g} != {lp_solution.value:.12g}")
        if res.balance_max > balance_tol:
            reasons.append(f"balance residual {res.balance_max:.3g} > {balance_tol:g}")
        for j, s in enumerate(res.budget_slack, start=1):
            if s < -tol:
                reasons.append(f"budget {j} exceeded by {-s:.6g}")

    total = mdp.total_cost()
    reach = _reachable(transition_matrix(mdp, strategy) > 0, mdp.x0)
    for x in np.flatnonzero(reach & ~vset.membership):
        for b in strategy.support(x):
            if total[x, b] > vset.tol_v:
                reasons.append(f"clause (ii): {mdp.actions.label(b)} at {mdp.state_label(x)} costs {total[x, b]:.6g}")
            elif vset.membership[mdp.next[x, b]]:
                reasons.append(f"clause (ii): {mdp.actions.label(b)} at {mdp.state_label(x)} re-enters V")
    return CertificateReport(not reasons, tuple(reasons), objective)
