"""Aggregated occupation measures and the metric on the time-extended state space."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lp import OccupationMeasure
from .mdp import CEMETERY, FiniteMDP, project
from .problem import INF, flow_eval

BOX = "□"


@dataclass(frozen=True)
class AggregatedMeasure:
    """``impulse[x, a]`` holds eta(x, a); ``flow[x]`` holds eta(x, box)."""

    impulse: np.ndarray
    flow: np.ndarray
    finite_flow: np.ndarray      # flow part contributed by finite waiting times only
    h: float
    horizon: float
    truncated: bool

    def atoms(self, mdp: FiniteMDP):
        out = []
        for x in range(self.flow.size):
            for a, label in enumerate(mdp.actions.impulses):
                if self.impulse[x, a]:
                    out.append((mdp.state_label(x), label, float(self.impulse[x, a])))
            if self.flow[x]:
                out.append((mdp.state_label(x), BOX, float(self.flow[x])))
        return out


def _steps_below(length: float, h: float) -> int:
    """Number of k >= 0 with k*h < length."""
    if length <= 0:
        return 0
    n = int(math.ceil(length / h))
    while n > 0 and (n - 1) * h >= length:
        n -= 1
    while n * h < length:
        n += 1
    return n


def aggregate_measure(mu: OccupationMeasure, mdp: FiniteMDP, h: float = 1e-3, horizon: float = 10.0) -> AggregatedMeasure:
    """Time-and-impulse footprint of ``mu`` on states x (impulses + box).

    Each atom (x, theta, a, w) adds ``w`` at (phi(x, theta), a) when theta is
    finite, and ``w*h`` at (phi(x, k h), box) for every ``k h < min(theta, horizon)``.
    Atoms with theta = inf only contribute up to ``horizon`` and set ``truncated``.
    """
    if not h > 0 or not horizon > 0:
        raise ValueError("h and horizon must be > 0")
    problem = mdp.problem
    if problem is None:
        raise ValueError("aggregation needs the MDP's source problem")
    n_x = mdp.n_states - 1
    n_a = len(mdp.actions.impulses)
    imp = np.zeros((n_x, n_a))
    flow = np.zeros(n_x)
    finite_flow = np.zeros(n_x)
    truncated = False

    def where(y) -> int:
        if mdp.grid is not None:
            return project(mdp.grid, float(y))[0]
        return mdp.states.index(y)

    for x, b, w in mu.atoms():
        if x == mdp.delta:
            continue
        if not math.isfinite(w):
            raise ValueError("cannot aggregate an atom of infinite weight")
        theta, a = mdp.actions.decode(b)
        state = mdp.states[x]
        if theta < INF:
            imp[where(flow_eval(problem.flow, state, theta)), b % n_a] += w
        else:
            truncated = True
        n = _steps_below(min(theta, horizon), h)
        if n == 0:
            continue
        u = np.arange(n) * h
        if mdp.grid is not None:
            ys = np.asarray(problem.flow.evaluate(state, u), dtype=float) * np.ones(n)
            k = np.searchsorted(mdp.grid, ys)
            k = np.clip(k, 1, len(mdp.grid) - 1)
            lower = (ys - mdp.grid[k - 1]) <= (mdp.grid[k] - ys)
            cells = np.where(lower, k - 1, k)
        else:
            cells = np.array([where(flow_eval(problem.flow, state, t)) for t in u])
        target = finite_flow if theta < INF else None
        np.add.at(flow, cells, w * h)
        if target is not None:
            np.add.at(target, cells, w * h)
    return AggregatedMeasure(imp, flow, finite_flow, h, horizon, truncated)


def finite_theta_mass(mu: OccupationMeasure, mdp: FiniteMDP) -> float:
    """``sum theta * w`` over the finite-theta atoms of ``mu``."""
    thetas = mdp.actions.theta_of
    return float(sum(thetas[b] * w for x, b, w in mu.atoms() if x != mdp.delta and thetas[b] < INF))


# ---------------------------------------------------------------------------
# Metric on ([0, inf) x X) + {(inf, Delta)}


def g_map(s: float) -> float:
    """``1 / (1 + 1/s)`` with ``g(0) = 0`` and ``g(inf) = 1``."""
    s = float(s)
    if math.isnan(s) or s < 0:
        raise ValueError(f"g is defined on [0, inf], got {s}")
    if s == INF:
        return 1.0
    return s / (1.0 + s)


@dataclass(frozen=True)
class AuxPoint:
    s: float
    x: object

    def __post_init__(self):
        s = float(self.s)
        if math.isnan(s) or s < 0:
            raise ValueError("time coordinate must be in [0, inf]")
        if (s == INF) != (self.x is CEMETERY):
            raise ValueError("the cemetery appears exactly at s = inf")
        object.__setattr__(self, "s", s)

    @property
    def is_cemetery(self) -> bool:
        return self.s == INF


def euclidean(x, y) -> float:
    return abs(float(x) - float(y))


def bounded(rho: Callable) -> Callable:
    """``2 rho / (1 + rho)``: a topologically equivalent metric bounded by 2."""
    def wrapped(x, y):
        d = rho(x, y)
        return 2.0 * d / (1.0 + d)
    return wrapped


def _one_minus_gmax(s1: float, s2: float) -> float:
    s = max(s1, s2)
    return 0.0 if s == INF else 1.0 / (1.0 + s)


def _gdiff(s1: float, s2: float) -> float:
    if s1 == s2:
        return 0.0
    if s1 == INF or s2 == INF:
        return 1.0 / (1.0 + min(s1, s2))
    return abs(s1 - s2) / ((1.0 + s1) * (1.0 + s2))


def rho_hat(p1: AuxPoint, p2: AuxPoint, rho_x: Callable = euclidean, wrap: bool = True) -> float:
    """Distance on the time-extended space.

    ``rho_x(x1, x2) (1 - max(g(s1), g(s2))) + |g(s1) - g(s2)|`` with the first
    term taken as 0 whenever a cemetery point is involved.  The base metric is
    passed through :func:`bounded` unless ``wrap=False``, in which case it must
    already be bounded by 2.
    """
    second = _gdiff(p1.s, p2.s)
    if p1.is_cemetery or p2.is_cemetery:
        return second
    d = rho_x(p1.x, p2.x)
    if wrap:
        d = 2.0 * d / (1.0 + d)
    elif d > 2.0:
        raise ValueError(f"base metric value {d} exceeds 2; use wrap=True")
    return d * _one_minus_gmax(p1.s, p2.s) + second


def rho_hat_array(s1, x1, s2, x2) -> np.ndarray:
    """Vectorised ``rho_hat`` on the unit interval with the wrapped Euclidean metric.

    ``s = inf`` rows denote the cemetery (their ``x`` is ignored).
    """
    s1, s2 = np.asarray(s1, dtype=float), np.asarray(s2, dtype=float)
    d = np.abs(np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float))
    d = 2.0 * d / (1.0 + d)
    smax, smin = np.maximum(s1, s2), np.minimum(s1, s2)
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = np.where(np.isinf(smax), 0.0, 1.0 / (1.0 + smax))
        gd = np.where(s1 == s2, 0.0,
                      np.where(np.isinf(smax), 1.0 / (1.0 + smin),
                               np.abs(s1 - s2) / ((1.0 + s1) * (1.0 + s2))))
    return np.where(np.isinf(smax), 0.0, d * factor) + gd


@dataclass(frozen=True)
class MetricSelfTest:
    samples: int
    symmetry_max: float
    negativity_max: float
    identity_max: float         # largest rho(p, p)
    separation_min: float       # smallest rho(p, q) over distinct pairs
    triangle_slack_min: float
    convergence_ok: bool
    passed: bool


def _random_points(rng: np.random.Generator, n: int):
    kind = rng.integers(0, 4, size=n)
    s = rng.exponential(2.0, size=n)
    s = np.where(kind == 0, 0.0, s)                 # s = 0 exercises g(0) = 0
    s = np.where(kind == 1, np.inf, s)              # cemetery
    s = np.where(kind == 2, rng.exponential(1e3, size=n), s)
    x = rng.uniform(0.0, 1.0, size=n)
    return s, x


def metric_selftest(samples: int = 10_000, seed: int = 0, sequences: int = 100) -> MetricSelfTest:
    """Seeded check of the metric axioms and the convergence characterization."""
    rng = np.random.default_rng(seed)
    (s1, x1), (s2, x2), (s3, x3) = (_random_points(rng, samples) for _ in range(3))
    # duplicate some points so equal pairs and coincident triples occur
    dup = rng.random(samples) < 0.1
    s2, x2 = np.where(dup, s1, s2), np.where(dup, x1, x2)
    d12, d21 = rho_hat_array(s1, x1, s2, x2), rho_hat_array(s2, x2, s1, x1)
    d13, d32 = rho_hat_array(s1, x1, s3, x3), rho_hat_array(s3, x3, s2, x2)
    symmetry = float(np.max(np.abs(d12 - d21)))
    negativity = float(max(0.0, -min(d12.min(), d13.min(), d32.min())))
    identity = float(np.max(rho_hat_array(s1, x1, s1, x1)))
    same = (s1 == s2) & (np.isinf(s1) | (x1 == x2))
    separation = float(d12[~same].min()) if (~same).any() else math.inf
    slack = float(np.min(d13 + d32 - d12))
    conv = convergence_checks(rng, sequences)
    ok = (symmetry == 0.0 and negativity == 0.0 and identity == 0.0 and separation > 1e-12
          and slack >= -1e-12 and conv)
    return MetricSelfTest(samples, symmetry, negativity, identity, separation, slack, conv, ok)


def convergence_checks(rng: np.random.Generator, sequences: int = 100, length: int = 2000) -> bool:
    """Sampled sequences for both convergence regimes.

    Regime 1: s_n increasing to inf with arbitrary x_n approaches the cemetery,
    bounded s_n does not.
    Regime 2: (s_n, x_n) -> (s, x) finite converges; perturbing either
    coordinate away from its limit breaks convergence.
    """
    n = np.arange(1, length + 1, dtype=float)
    for _ in range(sequences):
        growth = rng.uniform(0.5, 3.0)
        s_n = rng.uniform(0, 5) + n ** growth
        x_n = rng.uniform(0, 1, size=length)
        d = rho_hat_array(s_n, x_n, np.full(length, np.inf), np.zeros(length))
        # distance to the cemetery is 1 / (1 + s_n) whatever x_n does
        if not (np.allclose(d, 1.0 / (1.0 + s_n), rtol=1e-12, atol=0) and np.all(np.diff(d) < 0)):
            return False
        # bounded s_n never gets there
        s_b = rng.uniform(0, 5) * (1 - 1 / (n + 1))
        d_b = rho_hat_array(s_b, x_n, np.full(length, np.inf), np.zeros(length))
        if not d_b.min() >= 1.0 / (1.0 + s_b.max()) - 1e-15:
            return False

        s, x = rng.uniform(0, 10), rng.uniform(0, 1)
        s_n = s + rng.choice([-1, 1]) * np.minimum(s, 1.0) / n
        x_n = np.clip(x + rng.uniform(-1, 1, size=length) / n, 0, 1)
        d = rho_hat_array(s_n, x_n, np.full(length, s), np.full(length, x))
        if not d[-1] < 1e-3:
            return False
        # x_n oscillating away from x: distance stays bounded below
        x_bad = np.where(np.arange(length) % 2 == 0, x_n, np.clip(x + 0.5 * np.sign(0.5 - x), 0, 1))
        d_bad = rho_hat_array(s_n, x_bad, np.full(length, s), np.full(length, x))
        if not d_bad[1::2].min() > 0.1 / (1.0 + s + 1.0):
            return False
        # s_n drifting away from s
        d_far = rho_hat_array(s + 1.0 + 0 * n, x_n, np.full(length, s), np.full(length, x))
        if not d_far.min() > 0:
            return False
    return True
