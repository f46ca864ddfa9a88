"""Small reference instances (as config documents) and a seeded random generator."""
from __future__ import annotations

import copy

import numpy as np

INF_TOKEN = "inf"

# Two states, one impulse that always lands in s1, where waiting forever is free.
E1 = {
    "name": "E1",
    "states": ["s0", "s1"],
    "actions": ["a"],
    "flow": {"kind": "identity"},
    "impulse_map": {"s0": {"a": "s1"}, "s1": {"a": "s1"}},
    "costs": [{"gradual": {"s0": 1.0, "s1": 0.0}, "impulse": {"a": 2.0}}],
    "budgets": [],
    "x0": "s0",
    "theta_grid": [0, 1, INF_TOKEN],
}

# One budget; each deterministic choice of impulse is lopsided, so the best
# feasible policy randomizes between the two impulses.
E2 = {
    "name": "E2",
    "states": ["s0", "s1"],
    "actions": ["a1", "a2"],
    "flow": {"kind": "identity"},
    "impulse_map": {"s0": {"a1": "s1", "a2": "s1"}, "s1": {"a1": "s1", "a2": "s1"}},
    "costs": [
        {"gradual": {"s0": 1.0, "s1": 0.0}, "impulse": {"a1": 10.0, "a2": 0.0}},
        {"gradual": 0.0, "impulse": {"a1": 0.0, "a2": 10.0}},
    ],
    "budgets": [5.0],
    "x0": "s0",
    "theta_grid": [0, 1, INF_TOKEN],
}

# E2 with a small constraint cost on a1 and a zero budget: nothing is feasible.
E2_STRICT = copy.deepcopy(E2)
E2_STRICT["name"] = "E2-strict"
E2_STRICT["costs"][1]["impulse"]["a1"] = 1.0
E2_STRICT["budgets"] = [0.0]

# Exponential decay on [0, 2], running cost x, reset to 0 for 0.1.
E3 = {
    "name": "E3",
    "states": {"interval": [0.0, 2.0]},
    "actions": ["reset"],
    "flow": {"kind": "exponential-decay", "rate": 1.0},
    "impulse_map": {"reset": {"kind": "reset", "value": 0.0}},
    "costs": [{"gradual": [0.0, 1.0], "impulse": {"reset": [0.1]}}],
    "budgets": [],
    "x0": 1.0,
    "theta_grid": [0, 0.5, 1, 2, INF_TOKEN],
    "discretization": {"grid_points": 201},
}

# Everything is free; the only impulse loops in zero time.
T1 = {
    "name": "T1",
    "states": ["s"],
    "actions": ["a"],
    "flow": {"kind": "identity"},
    "impulse_map": {"s": {"a": "s"}},
    "costs": [{"gradual": {"s": 0.0}, "impulse": {"a": 0.0}}],
    "budgets": [],
    "x0": "s",
    "theta_grid": [0, INF_TOKEN],
}

REFERENCE = {"E1": E1, "E2": E2, "E2-strict": E2_STRICT, "E3": E3, "T1": T1}


def reference(name: str) -> dict:
    return copy.deepcopy(REFERENCE[name])


def _sparse(rng: np.random.Generator, n: int, p_zero: float, scale: float) -> list[float]:
    vals = np.round(rng.uniform(0.0, scale, size=n), 2)
    return [0.0 if z else float(v) for z, v in zip(rng.random(n) < p_zero, vals)]


def random_instance(seed: int, J: int = 0, max_states: int = 6, max_actions: int = 3,
                    max_thetas: int = 4) -> dict:
    """Random identity-flow instance with a finite optimal value.

    Sizes are drawn uniformly up to the given maxima; the theta grid always
    contains 0 and inf.  Draws are rejected until x0 can reach a state with
    zero running cost, which makes waiting forever there free.  Budgets are
    drawn from [0.5, 6] and may leave the instance infeasible.
    """
    rng = np.random.default_rng(seed)
    while True:
        n = int(rng.integers(2, max_states + 1))
        m = int(rng.integers(1, max_actions + 1))
        k = int(rng.integers(2, max_thetas + 1))
        states = [f"x{i}" for i in range(n)]
        actions = [f"a{i}" for i in range(m)]
        inner = sorted(set(np.round(rng.uniform(0.1, 3.0, size=k - 2), 1).tolist()))
        thetas = [0] + inner + [INF_TOKEN]
        table = {x: {a: states[int(rng.integers(n))] for a in actions} for x in states}
        costs = []
        for j in range(J + 1):
            gradual = _sparse(rng, n, 0.4 if j == 0 else 0.5, 3.0)
            impulse = _sparse(rng, m, 0.3, 5.0)
            costs.append({"gradual": dict(zip(states, gradual)), "impulse": dict(zip(actions, impulse))})
        free = {x for x in states if all(c["gradual"][x] == 0 for c in costs)}
        # reachable set from x0 over all impulses (identity flow: jumps only)
        seen, stack = {states[0]}, [states[0]]
        while stack:
            y = stack.pop()
            for a in actions:
                z = table[y][a]
                if z not in seen:
                    seen.add(z)
                    stack.append(z)
        if free & seen:
            break
    budgets = [float(np.round(rng.uniform(0.5, 6.0), 2)) for _ in range(J)]
    return {
        "name": f"random-{seed}",
        "states": states,
        "actions": actions,
        "flow": {"kind": "identity"},
        "impulse_map": table,
        "costs": costs,
        "budgets": budgets,
        "x0": states[0],
        "theta_grid": thetas,
    }
