"""Impulse-control problem primitives: state spaces, flows, impulse maps and costs.

A problem is the tuple {X, A, flow, impulse map, costs, budgets, x0}.  States of a
finite problem are string labels; states of an interval problem are floats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, NamedTuple, Sequence

import numpy as np
from numpy.polynomial import Polynomial

INF = math.inf


class DomainError(ValueError):
    """A state or time outside the domain of a flow or problem."""


# ---------------------------------------------------------------------------
# State spaces


@dataclass(frozen=True)
class FiniteSpace:
    labels: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        if not labels:
            raise ValueError("finite state space must be nonempty")
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate state labels")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(labels)})

    def __contains__(self, x) -> bool:
        try:
            return x in self._index
        except TypeError:
            return False

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, x) -> int:
        try:
            return self._index[x]
        except (KeyError, TypeError):
            raise DomainError(f"state {x!r} is not in the state space") from None

    def distance(self, x, y) -> float:
        return 0.0 if x == y else 1.0


@dataclass(frozen=True)
class IntervalSpace:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    def __contains__(self, x) -> bool:
        try:
            x = float(x)
        except (TypeError, ValueError):
            return False
        return self.lo <= x <= self.hi

    def clip(self, x):
        return np.clip(x, self.lo, self.hi)

    def distance(self, x, y) -> float:
        return abs(float(x) - float(y))


# ---------------------------------------------------------------------------
# Flows


class Flow:
    """Deterministic uncontrolled motion ``phi(x, t)`` with ``phi(x, 0) = x``."""

    kind = "abstract"

    def __init__(self, space):
        self.space = space

    def evaluate(self, x, t):
        raise NotImplementedError

    def limit(self, x):
        """The ``t -> inf`` limit of ``phi(x, t)``."""
        raise DomainError(f"{self.kind} flow has no limit at t = inf")

    def __call__(self, x, t):
        return flow_eval(self, x, t)


class IdentityFlow(Flow):
    kind = "identity"

    def evaluate(self, x, t):
        if np.ndim(t) and not isinstance(self.space, FiniteSpace):
            return np.broadcast_to(np.asarray(x, dtype=float), np.shape(t)).copy()
        return x

    def limit(self, x):
        return x


class TabulatedFlow(Flow):
    """Flow on a finite space given by one state map per tabulated time.

    Between tabulated times the flow is piecewise constant: ``phi(x, u)`` equals
    the map at the largest tabulated time not exceeding ``u``.
    """

    kind = "tabulated"

    def __init__(self, space: FiniteSpace, times: Sequence[float], maps: Sequence[Mapping[str, str]]):
        super().__init__(space)
        times = [float(t) for t in times]
        if len(times) != len(maps) or not times:
            raise ValueError("tabulated flow needs one map per time")
        if times[0] != 0.0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("tabulated times must start at 0 and increase strictly")
        if any(not math.isfinite(t) for t in times):
            raise ValueError("tabulated times must be finite")
        table = np.empty((len(times), len(space)), dtype=int)
        for k, m in enumerate(maps):
            for i, s in enumerate(space.labels):
                if s not in m:
                    raise ValueError(f"tabulated map at t={times[k]} misses state {s!r}")
                table[k, i] = space.index(m[s])
        if not np.array_equal(table[0], np.arange(len(space))):
            raise ValueError("tabulated map at t=0 must be the identity")
        self.times = np.asarray(times)
        self.table = table

    def _slot(self, t: float) -> int:
        return int(np.searchsorted(self.times, t, side="right")) - 1

    def evaluate(self, x, t):
        return self.space.labels[self.table[self._slot(t), self.space.index(x)]]

    def limit(self, x):
        return self.space.labels[self.table[-1, self.space.index(x)]]


class ExponentialDecayFlow(Flow):
    """``phi(x, t) = x exp(-rate t)``, clipped to the interval."""

    kind = "exponential-decay"

    def __init__(self, space: IntervalSpace, rate: float):
        super().__init__(space)
        if not rate >= 0:
            raise ValueError("decay rate must be >= 0")
        self.rate = float(rate)

    def evaluate(self, x, t):
        return self.space.clip(np.asarray(x, dtype=float) * np.exp(-self.rate * np.asarray(t, dtype=float)))

    def limit(self, x):
        if self.rate == 0:
            return float(x)
        return float(self.space.clip(0.0))


class LinearDriftFlow(Flow):
    """``phi(x, t) = x + velocity t``, clipped to the interval."""

    kind = "linear-drift"

    def __init__(self, space: IntervalSpace, velocity: float):
        super().__init__(space)
        self.velocity = float(velocity)

    def evaluate(self, x, t):
        return self.space.clip(np.asarray(x, dtype=float) + self.velocity * np.asarray(t, dtype=float))

    def limit(self, x):
        if self.velocity == 0:
            return float(x)
        bound = self.space.hi if self.velocity > 0 else self.space.lo
        if not math.isfinite(bound):
            raise DomainError("linear drift on an unbounded interval has no fixed point")
        return float(bound)


class CallableFlow(Flow):
    """Caller-supplied flow ``func(x, t)``; optional ``limit_func(x)`` for t = inf."""

    kind = "callable"

    def __init__(self, space, func: Callable, limit_func: Callable | None = None):
        super().__init__(space)
        self.func = func
        self.limit_func = limit_func

    def evaluate(self, x, t):
        if np.ndim(t):
            return np.array([self.func(x, float(u)) for u in np.ravel(t)])
        return self.func(x, t)

    def limit(self, x):
        if self.limit_func is None:
            raise DomainError("callable flow has no limit function")
        return self.limit_func(x)


def flow_eval(flow: Flow, x, t):
    """Evaluate ``phi(x, t)`` for ``t`` in ``[0, inf]``."""
    if x not in flow.space:
        raise DomainError(f"state {x!r} outside the flow domain")
    t = float(t)
    if math.isnan(t) or t < 0:
        raise DomainError(f"time must be in [0, inf], got {t}")
    if t == 0:
        return x
    if t == INF:
        return flow.limit(x)
    y = flow.evaluate(x, t)
    return float(y) if isinstance(flow.space, IntervalSpace) else y


class SemigroupReport(NamedTuple):
    max_violation: float
    passed: bool


def _semigroup_triples(flow: Flow, sample_count: int, rng: np.random.Generator, t_max: float):
    space = flow.space
    if isinstance(flow, TabulatedFlow):
        times = list(flow.times)
        pairs = [(t, s) for t in times for s in times if t + s in times]
        triples = [(x, t, s) for x in space.labels for (t, s) in pairs]
        if len(triples) <= sample_count:
            return triples
        pick = rng.integers(len(triples), size=sample_count)
        return [triples[i] for i in pick]
    if isinstance(space, FiniteSpace):
        xs = [space.labels[i] for i in rng.integers(len(space), size=sample_count)]
    else:
        lo = space.lo if math.isfinite(space.lo) else -10.0
        hi = space.hi if math.isfinite(space.hi) else 10.0
        xs = rng.uniform(lo, hi, size=sample_count).tolist()
    ts = rng.uniform(0.0, t_max, size=sample_count).tolist()
    ss = rng.uniform(0.0, t_max, size=sample_count).tolist()
    return list(zip(xs, ts, ss))


def check_semigroup(flow: Flow, sample_count: int = 1000, tol: float = 1e-9, seed: int = 0,
                    t_max: float = 10.0) -> SemigroupReport:
    """Largest violation of ``phi(x, t+s) = phi(phi(x, s), t)`` over seeded samples.

    Tabulated flows are checked on their time grid only; when the grid admits no
    more than ``sample_count`` triples all of them are checked.
    """
    if sample_count < 1 or not tol > 0:
        raise ValueError("need sample_count >= 1 and tol > 0")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x, t, s in _semigroup_triples(flow, sample_count, rng, t_max):
        lhs = flow_eval(flow, x, t + s)
        rhs = flow_eval(flow, flow_eval(flow, x, s), t)
        worst = max(worst, flow.space.distance(lhs, rhs))
    return SemigroupReport(worst, worst <= tol)


# ---------------------------------------------------------------------------
# Cost rates and impulse primitives


class TabulatedRate:
    """Gradual cost rate on a finite space."""

    def __init__(self, values: Mapping[str, float]):
        self.values = {k: float(v) for k, v in values.items()}

    def __call__(self, x) -> float:
        return self.values[x]


class PolynomialRate:
    """Gradual cost rate ``sum_k coef[k] x**k`` on an interval."""

    def __init__(self, coef: Sequence[float]):
        self.poly = Polynomial(np.asarray(coef, dtype=float))

    def __call__(self, x):
        return self.poly(x)


def _poly_at(poly: Polynomial, x: float) -> float:
    if math.isfinite(x):
        return float(poly(x))
    if poly.degree() == 0:
        return float(poly.coef[0])
    lead = poly.coef[-1] * (1 if x > 0 or poly.degree() % 2 == 0 else -1)
    return math.inf if lead > 0 else -math.inf


def _poly_min_on(poly: Polynomial, lo: float, hi: float) -> float:
    scale = float(np.max(np.abs(poly.coef))) if poly.coef.size else 0.0
    if scale == 0:
        return 0.0
    # drop relatively negligible leading terms; they make the root finder overflow
    poly = poly.trim(1e-14 * scale)
    pts = [lo, hi]
    d = poly.deriv()
    if d.degree() >= 1:
        pts += [r.real for r in np.atleast_1d(d.roots()) if abs(r.imag) < 1e-12 and lo <= r.real <= hi]
    return min(_poly_at(poly, p) for p in pts)


class TableImpulseCost:
    """``C^I(x, a)`` from ``{action: value}`` or ``{action: {state: value}}``."""

    def __init__(self, table: Mapping[str, Any]):
        self.table = {}
        for a, v in table.items():
            self.table[a] = {k: float(c) for k, c in v.items()} if isinstance(v, Mapping) else float(v)

    def __call__(self, x, a) -> float:
        v = self.table[a]
        return v[x] if isinstance(v, dict) else v


class PolynomialImpulseCost:
    """``C^I(x, a)`` as a polynomial in ``x`` per action."""

    def __init__(self, coefs: Mapping[str, Sequence[float]]):
        self.polys = {a: Polynomial(np.atleast_1d(np.asarray(c, dtype=float))) for a, c in coefs.items()}

    def __call__(self, x, a):
        return self.polys[a](x)


class TableImpulseMap:
    """``l(x, a)`` on a finite space from ``{state: {action: state}}``."""

    def __init__(self, table: Mapping[str, Mapping[str, str]]):
        self.table = {x: dict(row) for x, row in table.items()}

    def __call__(self, x, a):
        return self.table[x][a]


class AffineImpulseMap:
    """``l(x, a) = clip(scale_a x + offset_a)`` on an interval."""

    def __init__(self, space: IntervalSpace, params: Mapping[str, tuple[float, float]]):
        self.space = space
        self.params = {a: (float(s), float(o)) for a, (s, o) in params.items()}

    def __call__(self, x, a):
        s, o = self.params[a]
        return float(self.space.clip(s * float(x) + o))


@dataclass(frozen=True)
class CriterionCost:
    """Costs of one criterion: gradual rate ``C^g_j`` and impulse cost ``C^I_j``.

    ``antiderivative(x, theta)``, if given, must return the exact value of
    ``int_0^theta C^g_j(phi(x, u)) du`` (``inf`` allowed).
    """

    gradual: Callable
    impulse: Callable
    antiderivative: Callable | None = None


@dataclass(frozen=True)
class Problem:
    space: FiniteSpace | IntervalSpace
    actions: tuple[str, ...]
    flow: Flow
    impulse_map: Callable
    costs: tuple[CriterionCost, ...]
    budgets: tuple[float, ...]
    x0: Any
    theta_grid: tuple[float, ...] | None = None
    grid_points: int | None = None
    name: str = "problem"

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "costs", tuple(self.costs))
        object.__setattr__(self, "budgets", tuple(float(d) for d in self.budgets))
        if not self.actions or len(set(self.actions)) != len(self.actions):
            raise ValueError("actions must be a nonempty list of distinct labels")
        if not self.costs:
            raise ValueError("at least the objective cost (j = 0) is required")
        if len(self.budgets) != len(self.costs) - 1:
            raise ValueError(f"{len(self.costs) - 1} constraints but {len(self.budgets)} budgets")
        if any(not (d >= 0 and math.isfinite(d)) for d in self.budgets):
            raise ValueError("budgets must be finite and >= 0")
        if self.x0 not in self.space:
            raise DomainError(f"initial state {self.x0!r} not in the state space")
        if self.flow.space != self.space:
            raise ValueError("flow domain differs from the problem state space")
        if isinstance(self.space, FiniteSpace):
            self._validate_finite()
        else:
            self._validate_interval()

    @property
    def J(self) -> int:
        return len(self.costs) - 1

    @property
    def is_finite(self) -> bool:
        return isinstance(self.space, FiniteSpace)

    def impulse(self, x, a):
        return self.impulse_map(x, a)

    def _validate_finite(self):
        for x in self.space.labels:
            for a in self.actions:
                y = self.impulse_map(x, a)
                if y not in self.space:
                    raise DomainError(f"impulse map sends ({x!r}, {a!r}) to {y!r} outside X")
        for j, c in enumerate(self.costs):
            for x in self.space.labels:
                if not c.gradual(x) >= 0:
                    raise ValueError(f"negative gradual cost for j={j} at {x!r}")
                for a in self.actions:
                    if not c.impulse(x, a) >= 0:
                        raise ValueError(f"negative impulse cost for j={j} at ({x!r}, {a!r})")

    def _validate_interval(self):
        lo, hi = self.space.lo, self.space.hi
        for j, c in enumerate(self.costs):
            if isinstance(c.gradual, PolynomialRate) and _poly_min_on(c.gradual.poly, lo, hi) < -1e-12:
                raise ValueError(f"gradual cost polynomial for j={j} is negative on [{lo}, {hi}]")
            if isinstance(c.impulse, PolynomialImpulseCost):
                for a, p in c.impulse.polys.items():
                    if _poly_min_on(p, lo, hi) < -1e-12:
                        raise ValueError(f"impulse cost polynomial for j={j}, action {a!r} is negative")


# ---------------------------------------------------------------------------
# Gradual cost integral


class Integral(NamedTuple):
    value: float
    truncated: bool = False
    exact: bool = True


def _closed_form(flow: Flow, rate, x, theta: float) -> float | None:
    if isinstance(flow, IdentityFlow) and isinstance(rate, (TabulatedRate, PolynomialRate)):
        r = float(rate(x))
        if theta == INF:
            return INF if r > 0 else 0.0
        return r * theta
    if isinstance(flow, TabulatedFlow) and isinstance(rate, TabulatedRate):
        i = flow.space.index(x)
        edges = np.append(flow.times, INF)
        total = 0.0
        for k in range(len(flow.times)):
            a, b = edges[k], min(edges[k + 1], theta)
            if b <= a:
                break
            r = rate(flow.space.labels[flow.table[k, i]])
            if r > 0:
                total += r * (b - a)
        return total
    if isinstance(rate, PolynomialRate):
        if isinstance(flow, ExponentialDecayFlow):
            return _decay_poly_integral(flow, rate.poly, float(x), theta)
        if isinstance(flow, LinearDriftFlow):
            return _drift_poly_integral(flow, rate.poly, float(x), theta)
    return None


def _const_tail(r: float, length: float) -> float:
    if length <= 0:
        return 0.0
    if length == INF:
        return INF if r > 0 else 0.0
    return r * length


def _decay_poly_integral(flow: ExponentialDecayFlow, poly: Polynomial, x: float, theta: float) -> float:
    c = flow.rate
    if c == 0 or x == 0:
        return _const_tail(float(poly(x)), theta)
    lo, hi = flow.space.lo, flow.space.hi
    # time at which the decaying orbit hits a clipping bound (0 outside [lo, hi])
    bound = lo if x > 0 else hi
    hit = INF
    if (x > 0 and lo > 0) or (x < 0 and hi < 0):
        hit = math.log(x / bound) / c
    free = min(theta, hit)
    total = 0.0
    for k, p in enumerate(poly.coef):
        if p == 0:
            continue
        if k == 0:
            total += _const_tail(p, free) if p > 0 else p * free
        elif free == INF:
            total += p * x**k / (k * c)
        else:
            total += p * x**k * -math.expm1(-k * c * free) / (k * c)
    if theta > hit:
        total += _const_tail(float(poly(bound)), theta - hit)
    return max(total, 0.0)


def _drift_poly_integral(flow: LinearDriftFlow, poly: Polynomial, x: float, theta: float) -> float:
    v = flow.velocity
    if v == 0:
        return _const_tail(float(poly(x)), theta)
    bound = flow.space.hi if v > 0 else flow.space.lo
    hit = (bound - x) / v if math.isfinite(bound) else INF
    free = min(theta, hit)
    if free == INF:
        return 0.0 if not np.any(poly.coef) else INF
    along = poly(Polynomial([x, v])).integ()
    total = float(along(free) - along(0.0))
    if theta > hit:
        total += _const_tail(float(poly(bound)), theta - hit)
    return max(total, 0.0)


def _rate_along(flow: Flow, rate, x, u: np.ndarray) -> np.ndarray:
    if isinstance(flow.space, IntervalSpace) and not isinstance(flow, CallableFlow):
        return np.asarray(rate(flow.evaluate(x, u)), dtype=float) * np.ones_like(u)
    return np.array([float(rate(flow.evaluate(x, float(t)) if t > 0 else x)) for t in u])


def _trapezoid(flow: Flow, rate, x, end: float, step: float) -> float:
    n = max(1, math.ceil(end / step))
    u = np.linspace(0.0, end, n + 1)
    return float(np.trapezoid(_rate_along(flow, rate, x, u), u))


def integrate_gradual(problem: Problem, j: int, x, theta: float, *, step: float | None = None,
                      horizon: float = 50.0, tail_tol: float = 1e-12, method: str = "auto") -> Integral:
    """``int_[0, theta) C^g_j(phi(x, u)) du`` with provenance flags.

    ``method`` is ``"auto"`` (closed form when available), ``"exact"`` or
    ``"quadrature"`` (composite trapezoid).  For ``theta = inf`` quadrature runs
    to ``horizon``; the result is ``inf`` if the rate there exceeds
    ``tail_tol``, else the truncated value with ``truncated=True``.
    """
    if not 0 <= j <= problem.J:
        raise IndexError(f"criterion index {j} out of range 0..{problem.J}")
    if x not in problem.space:
        raise DomainError(f"state {x!r} not in the state space")
    theta = float(theta)
    if math.isnan(theta) or theta < 0:
        raise DomainError(f"theta must be in [0, inf], got {theta}")
    if theta == 0:
        return Integral(0.0)
    cost = problem.costs[j]
    flow = problem.flow
    if method != "quadrature":
        if cost.antiderivative is not None:
            return Integral(float(cost.antiderivative(x, theta)))
        value = _closed_form(flow, cost.gradual, x, theta)
        if value is not None:
            return Integral(value)
        if method == "exact":
            raise ValueError("no closed form available for this flow/rate pair")
    if theta == INF:
        h = step if step is not None else min(1e-3 * horizon, 1e-2)
        tail = float(cost.gradual(flow.evaluate(x, horizon)))
        if tail > tail_tol:
            return Integral(INF, exact=False)
        return Integral(_trapezoid(flow, cost.gradual, x, horizon, h), truncated=True, exact=False)
    h = step if step is not None else min(1e-3 * theta, 1e-2)
    return Integral(_trapezoid(flow, cost.gradual, x, theta, h), exact=False)


def gradual_cost_integral(problem: Problem, j: int, x, theta: float, **kwargs) -> float:
    return integrate_gradual(problem, j, x, theta, **kwargs).value
