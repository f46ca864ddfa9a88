"""Finite total-cost MDP built from an impulse-control problem.

States are the (discretized) problem states plus an absorbing, costless
cemetery.  Actions are pairs (waiting time, impulse) from a finite grid,
ordered theta-major: ``b = theta_index * n_impulses + impulse_index``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .problem import INF, FiniteSpace, Problem, flow_eval, integrate_gradual


class _Cemetery:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Delta"

    def __reduce__(self):
        return (_Cemetery, ())


CEMETERY = _Cemetery()


@dataclass(frozen=True)
class ActionGrid:
    thetas: tuple[float, ...]
    impulses: tuple[str, ...]

    def __post_init__(self):
        thetas = tuple(sorted(float(t) for t in self.thetas))
        if len(set(thetas)) != len(thetas):
            raise ValueError("duplicate waiting times in theta grid")
        if not thetas or thetas[0] != 0.0 or thetas[-1] != INF:
            raise ValueError("theta grid must contain 0 and inf")
        if any(t < 0 or math.isnan(t) for t in thetas):
            raise ValueError("waiting times must be nonnegative")
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "impulses", tuple(self.impulses))

    def __len__(self) -> int:
        return len(self.thetas) * len(self.impulses)

    def decode(self, b: int) -> tuple[float, str]:
        k, i = divmod(int(b), len(self.impulses))
        return self.thetas[k], self.impulses[i]

    def index(self, theta: float, impulse: str) -> int:
        return self.thetas.index(float(theta)) * len(self.impulses) + self.impulses.index(impulse)

    @property
    def theta_of(self) -> np.ndarray:
        return np.repeat(np.asarray(self.thetas), len(self.impulses))

    def label(self, b: int) -> str:
        t, a = self.decode(b)
        return f"({'inf' if t == INF else f'{t:g}'},{a})"


@dataclass(frozen=True, eq=False)
class FiniteMDP:
    states: tuple
    actions: ActionGrid
    next: np.ndarray            # (S, B) successor index
    cost: np.ndarray            # (J+1, S, B), entries in [0, inf]
    x0: int
    budgets: np.ndarray
    projection_displacement: float = 0.0
    truncated: np.ndarray | None = None
    problem: Problem | None = field(default=None, repr=False)
    grid: np.ndarray | None = field(default=None, repr=False)

    @property
    def delta(self) -> int:
        return len(self.states) - 1

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def J(self) -> int:
        return self.cost.shape[0] - 1

    def state_index(self, x) -> int:
        if x is CEMETERY:
            return self.delta
        if self.grid is not None:
            return project(self.grid, float(x))[0]
        return self.states.index(x)

    def state_label(self, i: int) -> str:
        s = self.states[i]
        return "Delta" if s is CEMETERY else (f"{s:.12g}" if isinstance(s, float) else str(s))

    def total_cost(self, weights=None) -> np.ndarray:
        """``sum_j weights[j] * cost_j`` with ``0 * inf = 0``."""
        w = np.ones(self.J + 1) if weights is None else np.asarray(weights, dtype=float)
        out = np.zeros(self.cost.shape[1:])
        for j in range(self.J + 1):
            if w[j] != 0:
                out = out + w[j] * self.cost[j]
        return out


def project(grid: np.ndarray, y: float) -> tuple[int, float]:
    """Nearest grid point (ties go to the lower point) and the displacement."""
    k = int(np.searchsorted(grid, y))
    if k == 0:
        return 0, abs(grid[0] - y)
    if k == len(grid):
        return len(grid) - 1, abs(y - grid[-1])
    lo, hi = y - grid[k - 1], grid[k] - y
    return (k - 1, lo) if lo <= hi else (k, hi)


def build_mdp(problem: Problem, theta_grid: Sequence[float] | None = None, grid_points: int | None = None,
              **integration: Any) -> FiniteMDP:
    """Reformulate ``problem`` as a finite MDP.

    ``integration`` is forwarded to :func:`integrate_gradual` (``step``,
    ``horizon``, ``tail_tol``, ``method``).
    """
    thetas = theta_grid if theta_grid is not None else problem.theta_grid
    if thetas is None:
        raise ValueError("no theta grid given")
    actions = ActionGrid(tuple(thetas), problem.actions)

    if isinstance(problem.space, FiniteSpace):
        grid = None
        xs = list(problem.space.labels)
    else:
        n = grid_points if grid_points is not None else problem.grid_points
        if n is None or n < 2:
            raise ValueError("interval problems need grid_points >= 2")
        grid = np.linspace(problem.space.lo, problem.space.hi, n)
        xs = [float(g) for g in grid]

    def locate(y) -> tuple[int, float]:
        if grid is None:
            return problem.space.index(y), 0.0
        return project(grid, float(y))

    S = len(xs) + 1
    B = len(actions)
    J = problem.J
    nxt = np.full((S, B), S - 1, dtype=int)
    cost = np.zeros((J + 1, S, B))
    trunc = np.zeros((J + 1, S, B), dtype=bool)
    worst = 0.0
    for i, x in enumerate(xs):
        for b in range(B):
            theta, a = actions.decode(b)
            for j in range(J + 1):
                r = integrate_gradual(problem, j, x, theta, **integration)
                trunc[j, i, b] = r.truncated
                c = r.value
                if theta < INF:
                    # impulse cost at the un-projected pre-jump point
                    c = c + float(problem.costs[j].impulse(flow_eval(problem.flow, x, theta), a))
                cost[j, i, b] = c
            if theta < INF:
                k, disp = locate(problem.impulse(flow_eval(problem.flow, x, theta), a))
                nxt[i, b] = k
                worst = max(worst, disp)

    x0, disp0 = locate(problem.x0)
    if grid is not None and disp0 > (grid[1] - grid[0]):
        raise ValueError(f"grid too coarse: x0 = {problem.x0} projects {disp0:g} away")
    if np.any(cost < 0) or np.any(np.isnan(cost)):
        raise ValueError("negative or undefined one-step cost")
    return FiniteMDP(states=tuple(xs) + (CEMETERY,), actions=actions, next=nxt, cost=cost, x0=x0,
                     budgets=np.asarray(problem.budgets, dtype=float), projection_displacement=float(worst),
                     truncated=trunc, problem=problem, grid=grid)


def transition(mdp: FiniteMDP, x: int, b: int) -> int:
    return int(mdp.next[x, b])


def one_step_cost(mdp: FiniteMDP, j: int, x: int, b: int) -> float:
    return float(mdp.cost[j, x, b])
