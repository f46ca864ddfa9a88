"""Occupation-measure linear program restricted to the positive-cost set V.

Variables are ``mu(x, b)`` for ``x`` in V and admissible ``b``; one balance row
per state of V and one budget row per constraint::

    sum_b mu(x, b) - sum_{(y, b): y in V, next(y, b) = x} mu(y, b) = 1{x = x0}
    sum_{(x, b)} cost_j(x, b) mu(x, b) <= d_j
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .classifier import VSet
from .mdp import FiniteMDP
from .simplex import FEAS_TOL, PIVOT_TOL, SimplexError, simplex

log = logging.getLogger(__name__)

MASS_WARNING = 1e12


@dataclass(frozen=True)
class OccupationMeasure:
    """Weights ``mu[x, b]`` over all MDP states and actions.

    ``support`` marks the states the measure is defined on (V, or all of X);
    weights outside it are zero.  Entries may be ``inf`` when a strategy
    revisits a state forever.
    """

    weights: np.ndarray
    support: np.ndarray
    spectral_radius: float | None = None

    @property
    def infinite(self) -> bool:
        return bool(np.isinf(self.weights).any())

    def state_mass(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def total_mass(self) -> float:
        return float(self.weights.sum())

    def atoms(self):
        """Nonzero ``(x, b, weight)`` triples in index order."""
        xs, bs = np.nonzero(self.weights)
        return [(int(x), int(b), float(self.weights[x, b])) for x, b in zip(xs, bs)]


@dataclass(frozen=True)
class LinearProgram:
    mdp: FiniteMDP = field(repr=False)
    vset: VSet = field(repr=False)
    row_states: np.ndarray        # V states, one balance row each
    columns: np.ndarray           # (n, 2) array of (state, action)
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    c: np.ndarray
    dropped: int                  # columns removed for infinite cost
    empty_rows: tuple[int, ...] = ()

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    def measure(self, x: np.ndarray) -> OccupationMeasure:
        w = np.zeros((self.mdp.n_states, self.mdp.n_actions))
        if len(self.columns):
            w[self.columns[:, 0], self.columns[:, 1]] = x
        return OccupationMeasure(w, self.vset.membership.copy())


@dataclass(frozen=True)
class LPSolution:
    status: str                   # "optimal" | "infeasible"
    mu: OccupationMeasure | None
    value: float
    activities: np.ndarray        # budget-row left-hand sides
    iterations: int
    pivot_log: list = field(default_factory=list, repr=False)


class LPError(RuntimeError):
    def __init__(self, message: str, pivot_log: list):
        super().__init__(message)
        self.pivot_log = pivot_log


def build_restricted_lp(mdp: FiniteMDP, vset: VSet) -> LinearProgram:
    if not vset.membership[mdp.x0]:
        raise ValueError("x0 is outside V; the problem value is 0 and no program is needed")
    V = vset.indices
    row_of = {int(x): i for i, x in enumerate(V)}
    finite = np.all(np.isfinite(mdp.cost), axis=0)
    cols = [(int(x), b) for x in V for b in range(mdp.n_actions) if finite[x, b]]
    dropped = int(len(V) * mdp.n_actions - len(cols))
    n = len(cols)
    A_eq = np.zeros((len(V), n))
    for k, (x, b) in enumerate(cols):
        A_eq[row_of[x], k] += 1.0
        y = int(mdp.next[x, b])
        if y in row_of:
            A_eq[row_of[y], k] -= 1.0
    b_eq = np.zeros(len(V))
    b_eq[row_of[mdp.x0]] = 1.0
    columns = np.array(cols, dtype=int).reshape(-1, 2)
    A_ub = np.array([[mdp.cost[j, x, b] for (x, b) in cols] for j in range(1, mdp.J + 1)]).reshape(mdp.J, n)
    c = np.array([mdp.cost[0, x, b] for (x, b) in cols])
    counts = np.bincount(columns[:, 0], minlength=mdp.n_states) if n else np.zeros(mdp.n_states, int)
    empty = tuple(int(x) for x in V if counts[x] == 0)
    if empty:
        log.warning("balance rows without admissible columns: %s", [mdp.state_label(x) for x in empty])
    return LinearProgram(mdp=mdp, vset=vset, row_states=V, columns=columns, A_eq=A_eq, b_eq=b_eq,
                         A_ub=A_ub, b_ub=mdp.budgets.copy(), c=c, dropped=dropped, empty_rows=empty)


def solve_lp(lp: LinearProgram, pivot_tol: float = PIVOT_TOL, feas_tol: float = FEAS_TOL) -> LPSolution:
    try:
        res = simplex(lp.c, lp.A_eq, lp.b_eq, lp.A_ub, lp.b_ub, pivot_tol=pivot_tol, feas_tol=feas_tol)
    except SimplexError as exc:
        raise LPError(str(exc), exc.pivot_log) from exc
    if res.status != "optimal":
        return LPSolution("infeasible", None, np.nan, np.full(lp.mdp.J, np.nan), res.iterations, res.pivot_log)
    mu = lp.measure(res.x)
    if mu.weights.max(initial=0.0) > MASS_WARNING:
        log.warning("occupation weight %.3g exceeds %.0e; check tol_v", mu.weights.max(), MASS_WARNING)
    return LPSolution("optimal", mu, res.value, lp.A_ub @ res.x, res.iterations, res.pivot_log)


@dataclass(frozen=True)
class Residuals:
    balance_max: float
    budget_slack: np.ndarray      # d_j - activity_j; negative means violated
    objective: float


def _dot_cost(cost: np.ndarray, w: np.ndarray) -> float:
    zero = (w == 0) | (cost == 0)
    prod = np.where(zero, 0.0, np.where(zero, 1.0, cost) * np.where(zero, 1.0, w))
    return float(prod.sum())


def measure_residuals(mdp: FiniteMDP, in_v: np.ndarray, mu: OccupationMeasure) -> Residuals:
    """Residuals of ``mu`` restricted to ``in_v`` x B against the restricted program's rows."""
    w = np.where(in_v[:, None], mu.weights, 0.0)
    out = w.sum(axis=1)
    inflow = np.zeros(mdp.n_states)
    np.add.at(inflow, mdp.next.ravel(), w.ravel())
    rhs = np.zeros(mdp.n_states)
    rhs[mdp.x0] = 1.0
    with np.errstate(invalid="ignore"):
        r = np.abs(out - inflow - rhs)[in_v]
    r = np.where(np.isnan(r), np.inf, r)
    balance = float(r.max()) if r.size else 0.0
    act = np.array([_dot_cost(mdp.cost[j], w) for j in range(1, mdp.J + 1)])
    return Residuals(balance, mdp.budgets - act, _dot_cost(mdp.cost[0], w))


def lp_residuals(lp: LinearProgram, mu: OccupationMeasure) -> Residuals:
    """Balance-row and budget residuals of ``mu`` restricted to V x B."""
    return measure_residuals(lp.mdp, lp.vset.membership, mu)


def dump_lp(lp: LinearProgram, path) -> None:
    """Write the program as plain text (see README, "LP dump format")."""
    mdp = lp.mdp
    lines = ["# impulselp restricted occupation-measure program", "sense min",
             f"columns {lp.n_columns}"]
    for k, (x, b) in enumerate(lp.columns):
        lines.append(f"col {k} state={mdp.state_label(x)} action={mdp.actions.label(b)} cost={float(lp.c[k])!r}")
    lines.append(f"eq_rows {len(lp.row_states)}")
    for i, x in enumerate(lp.row_states):
        terms = " ".join(f"{k}:{float(lp.A_eq[i, k])!r}" for k in np.flatnonzero(lp.A_eq[i]))
        lines.append(f"eq {i} state={mdp.state_label(x)} rhs={float(lp.b_eq[i])!r} | {terms}")
    lines.append(f"ub_rows {lp.A_ub.shape[0]}")
    for j in range(lp.A_ub.shape[0]):
        terms = " ".join(f"{k}:{float(lp.A_ub[j, k])!r}" for k in np.flatnonzero(lp.A_ub[j]))
        lines.append(f"ub {j + 1} rhs={float(lp.b_ub[j])!r} | {terms}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
