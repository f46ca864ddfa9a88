"""Brute-force oracles for small instances.

None of these call the simplex: deterministic maps are evaluated by
following their orbits, and the Lagrangian bound uses value iteration.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .classifier import aggregate_value_iteration
from .mdp import FiniteMDP

ENUMERATION_GUARD = 10 ** 7
CHUNK = 1 << 16
LAMBDA_CAP = 1000
SCAN_MAX_ITER = 200_000
BRACKET_TOL = 1e-6


class EnumerationTooLarge(ValueError):
    pass


def reachable_states(mdp: FiniteMDP, x0: int | None = None) -> np.ndarray:
    """Non-cemetery states reachable from ``x0`` under some action sequence."""
    x0 = mdp.x0 if x0 is None else x0
    seen = np.zeros(mdp.n_states, dtype=bool)
    seen[x0] = True
    stack = [x0]
    while stack:
        x = stack.pop()
        for y in np.unique(mdp.next[x]):
            if not seen[y]:
                seen[y] = True
                stack.append(int(y))
    seen[mdp.delta] = False
    return np.flatnonzero(seen)


def _distinct_actions(mdp: FiniteMDP, x: int) -> np.ndarray:
    """One representative (smallest index) per class of actions with equal successor and costs."""
    keep, seen = [], set()
    for b in range(mdp.n_actions):
        key = (int(mdp.next[x, b]),) + tuple(mdp.cost[:, x, b].tolist())
        if key not in seen:
            seen.add(key)
            keep.append(b)
    return np.array(keep, dtype=int)


def orbit_values(mdp: FiniteMDP, choice, x0: int | None = None) -> np.ndarray:
    """Exact ``V_j`` of the deterministic map ``choice`` (one action per state) from ``x0``.

    The orbit is eventually periodic; a cycle with positive cost in criterion
    ``j`` makes ``V_j`` infinite.
    """
    x = mdp.x0 if x0 is None else x0
    choice = np.asarray(choice, dtype=int)
    total = np.zeros(mdp.J + 1)
    first = {}
    path = []
    while x != mdp.delta and x not in first:
        first[x] = len(path)
        b = int(choice[x])
        path.append(mdp.cost[:, x, b])
        x = int(mdp.next[x, b])
    if path:
        total = np.sum(path, axis=0)
    if x != mdp.delta:
        cycle = np.sum(path[first[x]:], axis=0)
        total = np.where(cycle > 0, np.inf, total)
    return total


@dataclass(frozen=True)
class Enumeration:
    """All deterministic maps over ``states``; ``values[k]`` belongs to map ``k``.

    Map ``k`` picks ``options[i][digit_i(k)]`` at ``states[i]``, digits in mixed
    radix with the first state least significant.
    """

    states: np.ndarray
    options: tuple[np.ndarray, ...]
    values: np.ndarray
    exhaustive: bool = True
    indices: np.ndarray | None = None     # map indices when sampled

    def __len__(self) -> int:
        return len(self.values)

    def choice(self, k: int) -> dict[int, int]:
        idx = int(self.indices[k]) if self.indices is not None else int(k)
        out = {}
        for x, opts in zip(self.states, self.options):
            idx, d = divmod(idx, len(opts))
            out[int(x)] = int(opts[d])
        return out

    def items(self):
        for k in range(len(self.values)):
            yield self.choice(k), self.values[k]

    def describe(self, mdp: FiniteMDP, k: int) -> str:
        return ", ".join(f"{mdp.state_label(x)}->{mdp.actions.label(b)}" for x, b in self.choice(k).items())


def _evaluate_chunk(mdp: FiniteMDP, states, options, radices, idx: np.ndarray, x0: int) -> np.ndarray:
    n = len(states)
    pos = np.full(mdp.n_states, -1)
    pos[states] = np.arange(n)
    # action table per map: (M, n)
    acts = np.empty((idx.size, n), dtype=int)
    rem = idx.copy()
    for i in range(n):
        rem, d = np.divmod(rem, radices[i])
        acts[:, i] = options[i][d]
    M = idx.size
    rows = np.arange(M)
    x = np.full(M, x0)
    acc = np.zeros((M, mdp.J + 1))
    tail = np.zeros((M, mdp.J + 1))
    delta = mdp.delta
    # after n + 1 steps every orbit is either absorbed or inside its cycle;
    # the next n + 1 steps cover the whole cycle at least once
    for step in range(2 * (n + 1)):
        alive = x != delta
        if not alive.any():
            break
        xa = x[alive]
        b = acts[rows[alive], pos[xa]]
        c = mdp.cost[:, xa, b].T
        acc[alive] += c
        if step > n:
            tail[alive] += c
        x[alive] = mdp.next[xa, b]
    return np.where(tail > 0, np.inf, acc)


def enumerate_deterministic_values(mdp: FiniteMDP, x0: int | None = None,
                                   max_maps: int = ENUMERATION_GUARD, sample: int | None = None,
                                   seed: int = 0, merge: bool = True) -> Enumeration:
    """Exact performance vectors of every deterministic stationary map.

    Only states reachable from ``x0`` matter.  With ``merge`` (the default),
    actions with the same successor and costs at a state are merged, which
    leaves the set of attainable vectors unchanged.  If the number of maps exceeds
    ``max_maps``, :class:`EnumerationTooLarge` is raised unless ``sample``
    asks for that many uniformly drawn maps instead.
    """
    x0 = mdp.x0 if x0 is None else x0
    states = reachable_states(mdp, x0)
    options = tuple(_distinct_actions(mdp, int(x)) if merge else np.arange(mdp.n_actions)
                    for x in states)
    radices = np.array([len(o) for o in options], dtype=np.int64)
    count = math.prod(int(r) for r in radices)
    indices = None
    if sample is not None:
        rng = np.random.default_rng(seed)
        indices = np.sort(rng.integers(0, count, size=int(sample))) if count > sample else np.arange(count)
    elif count > max_maps:
        raise EnumerationTooLarge(
            f"{count} deterministic maps exceed the guard of {max_maps}; pass sample=N for sampled enumeration")
    if x0 == mdp.delta or not len(states):
        return Enumeration(states, options, np.zeros((1, mdp.J + 1)), True, None)
    todo = indices if indices is not None else np.arange(count, dtype=np.int64)
    parts = [_evaluate_chunk(mdp, states, options, radices, todo[i:i + CHUNK], x0)
             for i in range(0, len(todo), CHUNK)]
    exhaustive = indices is None or len(indices) == count
    return Enumeration(states, options, np.vstack(parts), exhaustive, None if exhaustive else indices)


def default_lambda_grid(J: int, cap: int = LAMBDA_CAP) -> np.ndarray:
    """Per constraint ``{0} U {2^k : k = -6..6}``; the product grid thinned to ``cap`` points."""
    if J == 0:
        return np.zeros((1, 0))
    axis = [0.0] + [2.0 ** k for k in range(-6, 7)]
    total = len(axis) ** J
    if total <= cap:
        return np.array(list(itertools.product(axis, repeat=J)))
    keep = np.unique(np.linspace(0, total - 1, cap).round().astype(np.int64))
    out = np.empty((keep.size, J))
    for col in range(J - 1, -1, -1):
        keep, d = np.divmod(keep, len(axis))
        out[:, col] = np.asarray(axis)[d]
    return out


@dataclass(frozen=True)
class LagrangianBound:
    bound: float
    lam: np.ndarray
    values: np.ndarray     # dual function at each grid point
    converged: bool        # every value iteration met its tolerance


def lagrangian_scan(mdp: FiniteMDP, x0: int | None = None, budgets=None, lambda_grid=None) -> LagrangianBound:
    """``max_lambda [min_pi V_0 + sum lambda_j V_j - sum lambda_j d_j]`` over the grid.

    Value iteration approaches each scalarized optimum from below, so even an
    unconverged run yields a valid (looser) bound.
    """
    x0 = mdp.x0 if x0 is None else x0
    d = mdp.budgets if budgets is None else np.asarray(budgets, dtype=float)
    grid = default_lambda_grid(mdp.J) if lambda_grid is None else np.asarray(lambda_grid, dtype=float).reshape(-1, mdp.J)
    if len(grid) == 0:
        raise ValueError("lambda grid is empty")
    if np.any(grid < 0):
        raise ValueError("Lagrange multipliers must be nonnegative")
    vals = np.empty(len(grid))
    converged = True
    for k, lam in enumerate(grid):
        vi = aggregate_value_iteration(mdp, weights=np.concatenate([[1.0], lam]), max_iter=SCAN_MAX_ITER,
                                       quiet=True)
        converged &= vi.converged
        w = vi.w[x0]
        vals[k] = w - float(lam @ d) if math.isfinite(w) else math.inf
    best = int(np.argmax(vals))
    return LagrangianBound(float(vals[best]), grid[best], vals, converged)


def pareto_front(values: np.ndarray) -> np.ndarray:
    """Indices of finite, non-dominated rows (first occurrence of duplicates)."""
    finite = np.flatnonzero(np.all(np.isfinite(values), axis=1))
    if finite.size == 0:
        return finite
    v = values[finite]
    _, first = np.unique(v, axis=0, return_index=True)
    cand = finite[np.sort(first)]
    order = cand[np.lexsort(values[cand].T[::-1])]
    kept: list[int] = []
    for i in order:
        row = values[i]
        if kept:
            K = values[kept]
            if np.any(np.all(K <= row, axis=1)):
                continue
        kept.append(int(i))
    return np.array(sorted(kept), dtype=int)


@dataclass(frozen=True)
class MixtureBound:
    value: float
    pair: tuple[int, int] | None      # enumeration indices
    weight: float                     # weight on the first member


def best_feasible_mixture(values: np.ndarray, budgets) -> MixtureBound:
    """Cheapest feasible convex combination of at most two performance vectors."""
    d = np.asarray(budgets, dtype=float)
    front = pareto_front(values)
    if front.size == 0:
        return MixtureBound(math.inf, None, math.nan)
    P = values[front]
    best = MixtureBound(math.inf, None, math.nan)
    feas = np.all(P[:, 1:] <= d + 1e-12, axis=1)
    if feas.any():
        k = int(np.argmin(np.where(feas, P[:, 0], np.inf)))
        best = MixtureBound(float(P[k, 0]), (int(front[k]), int(front[k])), 1.0)
    n = len(P)
    for i in range(n):
        p, q = P[i], P[i + 1:]
        if not len(q):
            break
        # t p + (1 - t) q <= d  <=>  t (p - q) <= d - q
        lo, hi = np.zeros(len(q)), np.ones(len(q))
        diff = p[1:] - q[:, 1:]
        room = d - q[:, 1:]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = room / diff
        for j in range(diff.shape[1]):
            pos, neg, zero = diff[:, j] > 0, diff[:, j] < 0, diff[:, j] == 0
            hi = np.where(pos, np.minimum(hi, ratio[:, j]), hi)
            lo = np.where(neg, np.maximum(lo, ratio[:, j]), lo)
            hi = np.where(zero & (room[:, j] < -1e-12), -1.0, hi)
        ok = lo <= hi + 1e-15
        if not ok.any():
            continue
        slope = p[0] - q[:, 0]
        t = np.clip(np.where(slope > 0, lo, hi), 0.0, 1.0)
        val = np.where(ok, t * p[0] + (1 - t) * q[:, 0], np.inf)
        k = int(np.argmin(val))
        if val[k] < best.value:
            best = MixtureBound(float(val[k]), (int(front[i]), int(front[i + 1 + k])), float(t[k]))
    return best


@dataclass(frozen=True)
class OracleReport:
    unconstrained: float          # best enumerated V_0, ignoring budgets
    lp_value: float
    lagrangian: float
    mixture: float
    deterministic_feasible: float
    verdict: str                  # "pass" | "fail"
    exhaustive: bool
    maps: int
    witnesses: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    @property
    def bracket_width(self) -> float:
        return self.mixture - self.lagrangian

    def table(self) -> str:
        def f(v):
            return "inf" if v == math.inf else f"{v:.12g}"
        rows = [("lp value", f(self.lp_value)),
                ("enumeration best (unconstrained)", f(self.unconstrained)),
                ("best feasible deterministic", f(self.deterministic_feasible)),
                ("lagrangian lower bound", f(self.lagrangian)),
                ("best feasible mixture", f(self.mixture)),
                ("bracket width", f(self.bracket_width)),
                ("maps evaluated", f"{self.maps}{'' if self.exhaustive else ' (sampled)'}")]
        rows += [(f"witness {k}", str(v)) for k, v in sorted(self.witnesses.items())]
        rows.append(("verdict", self.verdict))
        w = max(len(r[0]) for r in rows)
        return "\n".join(f"{k:<{w}}  {v}" for k, v in rows)


def crosscheck(mdp: FiniteMDP, lp_value: float, x0: int | None = None, budgets=None,
               lambda_grid=None, sample: int | None = None, tol: float = BRACKET_TOL) -> OracleReport:
    """Bracket ``lp_value`` between independent oracles.

    With no budgets the value must match the enumeration optimum; otherwise
    ``lagrangian - tol <= lp_value <= mixture + tol``.  An infeasible program
    (``nan`` or ``inf``) passes only if no feasible mixture exists.  A sampled enumeration
    yields only an upper bound, so it can only certify ``lp_value`` from above.
    """
    x0 = mdp.x0 if x0 is None else x0
    d = mdp.budgets if budgets is None else np.asarray(budgets, dtype=float)
    if math.isnan(lp_value):
        lp_value = math.inf     # infeasible program
    enum = enumerate_deterministic_values(mdp, x0, sample=sample)
    V = enum.values
    k_best = int(np.argmin(V[:, 0]))
    unconstrained = float(V[k_best, 0])
    feas = np.all(V[:, 1:] <= d + 1e-12, axis=1) & np.isfinite(V[:, 0])
    det = float(V[feas, 0].min()) if feas.any() else math.inf
    witnesses = {"unconstrained": enum.describe(mdp, k_best)}
    if feas.any():
        k = int(np.flatnonzero(feas)[np.argmin(V[feas, 0])])
        witnesses["deterministic"] = enum.describe(mdp, k)
    if mdp.J == 0:
        lag = float(aggregate_value_iteration(mdp, weights=[1.0]).w[x0])
        mix = unconstrained
        if enum.exhaustive:
            ok = abs(lp_value - unconstrained) <= tol or lp_value == unconstrained
        else:
            ok = lp_value <= unconstrained + tol and lag - tol <= lp_value
    else:
        lb = lagrangian_scan(mdp, x0, d, lambda_grid)
        lag = lb.bound
        witnesses["lambda"] = "(" + ", ".join(f"{v:g}" for v in lb.lam) + ")"
        mb = best_feasible_mixture(V, d)
        mix = mb.value
        if mb.pair is not None:
            i, j = mb.pair
            witnesses["mixture"] = (f"{mb.weight:.6g} * [{enum.describe(mdp, i)}] + "
                                    f"{1 - mb.weight:.6g} * [{enum.describe(mdp, j)}]")
        ok = lag - tol <= lp_value <= mix + tol
    return OracleReport(unconstrained, float(lp_value), lag, mix, det, "pass" if ok else "fail",
                        enum.exhaustive, len(V), witnesses)
