"""Minimal aggregate total cost, the positive-cost set V and the zero-cost selector f*."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .mdp import FiniteMDP

log = logging.getLogger(__name__)


class ClassificationError(RuntimeError):
    pass


@dataclass(frozen=True)
class AggregateValue:
    w: np.ndarray
    iterations: int
    residual: float
    converged: bool
    scale: float          # largest finite one-step aggregate cost, for the default tol_V

    def default_tol_v(self) -> float:
        return 1e-9 * (1.0 + self.scale)


@dataclass(frozen=True)
class VSet:
    membership: np.ndarray
    tol_v: float
    # states with 0 < w <= tol_v, placed in the complement
    borderline: tuple[int, ...] = ()

    def __contains__(self, x: int) -> bool:
        return bool(self.membership[x])

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.membership)


@dataclass(frozen=True)
class DeterministicStationaryStrategy:
    choice: np.ndarray

    def rows(self, n_actions: int) -> np.ndarray:
        r = np.zeros((len(self.choice), n_actions))
        r[np.arange(len(self.choice)), self.choice] = 1.0
        return r


def _infinite_states(total: np.ndarray, nxt: np.ndarray) -> np.ndarray:
    """States from which every path has infinite total cost.

    A path has finite cost iff it uses finite-cost actions and ends in a
    zero-cost cycle, so: Z = greatest set closed under some zero-cost action,
    F = states that reach Z through finite-cost actions.
    """
    zero = total == 0
    Z = np.ones(len(total), dtype=bool)
    while True:
        Z_new = np.any(zero & Z[nxt], axis=1)
        if np.array_equal(Z_new, Z):
            break
        Z = Z_new
    finite = np.isfinite(total)
    F = Z.copy()
    while True:
        F_new = F | np.any(finite & F[nxt], axis=1)
        if np.array_equal(F_new, F):
            break
        F = F_new
    return ~F


def aggregate_value_iteration(mdp: FiniteMDP, tol: float = 1e-12, max_iter: int | None = None,
                              weights=None, quiet: bool = False) -> AggregateValue:
    """Value iteration from ``w = 0`` for ``min_b [sum_j weights_j cost_j(x, b) + w(next(x, b))]``.

    ``weights`` defaults to all ones (the aggregate cost).  States that cannot
    reach a zero-cost cycle are pinned to ``inf`` after every sweep; this keeps
    the iterates monotone and lets the remaining states converge.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if max_iter is None:
        max_iter = 10 * mdp.n_states * mdp.n_actions + 1000
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    total = mdp.total_cost(weights)
    fin = total[np.isfinite(total)]
    scale = float(fin.max()) if fin.size else 0.0
    nxt = mdp.next
    dead = _infinite_states(total, nxt)
    w = np.zeros(mdp.n_states)
    residual = np.inf
    k = 0
    for k in range(1, max_iter + 1):
        w_new = np.min(total + w[nxt], axis=1)
        w_new[dead] = np.inf
        both_inf = np.isinf(w_new) & np.isinf(w)
        with np.errstate(invalid="ignore"):
            diff = np.where(both_inf, 0.0, np.abs(w_new - w))
        residual = float(diff.max()) if diff.size else 0.0
        w = w_new
        if residual < tol:
            break
    converged = residual < tol
    if not converged and not quiet:
        log.warning("value iteration stopped at max_iter=%d with residual %.3g", max_iter, residual)
    return AggregateValue(w=w, iterations=k, residual=residual, converged=converged, scale=scale)


def compute_V(value: AggregateValue, tol_v: float | None = None, delta: int | None = None) -> VSet:
    """``V = {x : w(x) > tol_v}``; the cemetery (last state by default) is forced out."""
    if tol_v is None:
        tol_v = value.default_tol_v()
    if not tol_v > 0:
        raise ValueError("tol_v must be > 0")
    member = value.w > tol_v
    member[len(member) - 1 if delta is None else delta] = False
    border = tuple(int(i) for i in np.flatnonzero((value.w > 0) & (value.w <= tol_v)))
    if border:
        log.warning("states %s have 0 < w <= tol_v and are classified outside V", border)
    return VSet(membership=member, tol_v=float(tol_v), borderline=border)


def bellman_q(mdp: FiniteMDP, w: np.ndarray, weights=None) -> np.ndarray:
    return mdp.total_cost(weights) + w[mdp.next]


def extract_fstar(mdp: FiniteMDP, value: AggregateValue, vset: VSet) -> DeterministicStationaryStrategy:
    """Greedy selector; on the complement of V it must incur zero cost and stay there."""
    q = bellman_q(mdp, value.w)
    choice = np.argmin(q, axis=1)  # first minimizer = smallest action index
    total = mdp.total_cost()
    for x in np.flatnonzero(~vset.membership):
        b = choice[x]
        if total[x, b] > vset.tol_v:
            raise ClassificationError(
                f"f*({mdp.state_label(x)}) = {mdp.actions.label(b)} costs {total[x, b]:.6g} > tol_v "
                f"outside V (tol_v mis-set or value iteration not converged)")
        if vset.membership[mdp.next[x, b]]:
            raise ClassificationError(
                f"f*({mdp.state_label(x)}) = {mdp.actions.label(b)} leads back into V "
                f"(tol_v mis-set or value iteration not converged)")
    return DeterministicStationaryStrategy(choice=choice)
