"""JSON problem documents.

Top-level keys::

    name            optional string
    states          list of labels, or {"interval": [lo, hi]}
    actions         list of impulse labels
    flow            {"kind": "identity"}
                    {"kind": "tabulated", "times": [...], "maps": [{state: state}, ...]}
                    {"kind": "exponential-decay", "rate": c}
                    {"kind": "linear-drift", "velocity": v}
    impulse_map     finite: {state: {action: state}}
                    interval: {action: {"kind": "reset", "value": y}
                                     | {"kind": "shift", "by": d}
                                     | {"kind": "affine", "scale": s, "offset": o}}
    costs           list indexed by criterion j = 0..J of
                    {"gradual": ..., "impulse": ..., "exact": true}
                    finite:   gradual {state: rate}; impulse {action: c} or {action: {state: c}}
                    interval: gradual [p0, p1, ...]; impulse {action: [q0, q1, ...]}
                    (polynomial coefficients, lowest degree first)
    budgets         list of J nonnegative numbers
    x0              initial state
    theta_grid      waiting-time grid; must contain 0 and "inf"
    discretization  {"grid_points": n, "theta_grid": [...]}

Errors raise :class:`ConfigError` naming the offending field (and the line for
JSON syntax errors).
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

from .problem import (
    AffineImpulseMap,
    CriterionCost,
    ExponentialDecayFlow,
    FiniteSpace,
    IdentityFlow,
    IntervalSpace,
    LinearDriftFlow,
    PolynomialImpulseCost,
    PolynomialRate,
    Problem,
    TableImpulseCost,
    TableImpulseMap,
    TabulatedFlow,
    TabulatedRate,
)

_KNOWN_KEYS = {"name", "states", "actions", "flow", "impulse_map", "costs", "budgets", "x0",
               "theta_grid", "discretization"}


class ConfigError(ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


def parse_extended(value, field: str) -> float:
    """A nonnegative number or the token ``"inf"``."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "+inf"):
            return math.inf
        raise ConfigError(f"expected a number or \"inf\", got {value!r}", field)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field)
    if math.isnan(value) or value < 0:
        raise ConfigError(f"expected a nonnegative value, got {value!r}", field)
    return float(value)


def _number(value, field: str, nonneg: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"expected a finite number, got {value!r}", field)
    if nonneg and value < 0:
        raise ConfigError(f"expected a nonnegative number, got {value!r}", field)
    return float(value)


def _require(doc: dict, key: str, typ, field: str | None = None):
    field = field or key
    if key not in doc:
        raise ConfigError("missing required key", field)
    value = doc[key]
    if not isinstance(value, typ):
        raise ConfigError(f"expected {getattr(typ, '__name__', typ)}, got {type(value).__name__}", field)
    return value


def _coefs(value, field: str) -> list[float]:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list) or not value:
        raise ConfigError("expected a nonempty list of polynomial coefficients", field)
    return [_number(c, f"{field}[{i}]") for i, c in enumerate(value)]


def _theta_grid(value, field: str) -> tuple[float, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError("expected a nonempty list", field)
    grid = sorted({parse_extended(v, f"{field}[{i}]") for i, v in enumerate(value)})
    if grid[0] != 0.0 or grid[-1] != math.inf:
        raise ConfigError("theta grid must contain 0 and \"inf\"", field)
    return tuple(grid)


def _flow(doc: dict, space):
    spec = _require(doc, "flow", dict)
    kind = spec.get("kind")
    try:
        if kind == "identity":
            return IdentityFlow(space)
        if kind in ("tabulated", "tabulated-finite"):
            if not isinstance(space, FiniteSpace):
                raise ConfigError("tabulated flows need a finite state list", "flow.kind")
            times = _require(spec, "times", list, "flow.times")
            maps = _require(spec, "maps", list, "flow.maps")
            return TabulatedFlow(space, [_number(t, f"flow.times[{i}]", True) for i, t in enumerate(times)], maps)
        if kind in ("exponential-decay", "linear-drift"):
            if not isinstance(space, IntervalSpace):
                raise ConfigError(f"{kind} flows need an interval state space", "flow.kind")
            if kind == "exponential-decay":
                return ExponentialDecayFlow(space, _number(spec.get("rate"), "flow.rate", True))
            return LinearDriftFlow(space, _number(spec.get("velocity"), "flow.velocity"))
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), "flow") from None
    raise ConfigError(f"unknown flow kind {kind!r}", "flow.kind")


def _impulse_map(doc: dict, space, actions):
    spec = _require(doc, "impulse_map", dict)
    if isinstance(space, FiniteSpace):
        for x in space.labels:
            row = _require(spec, x, dict, f"impulse_map.{x}")
            for a in actions:
                if a not in row:
                    raise ConfigError("missing action", f"impulse_map.{x}.{a}")
                if row[a] not in space:
                    raise ConfigError(f"target {row[a]!r} is not a state", f"impulse_map.{x}.{a}")
        return TableImpulseMap(spec)
    params = {}
    for a in actions:
        entry = _require(spec, a, dict, f"impulse_map.{a}")
        kind = entry.get("kind")
        f = f"impulse_map.{a}"
        if kind == "reset":
            params[a] = (0.0, _number(entry.get("value"), f + ".value"))
        elif kind == "shift":
            params[a] = (1.0, _number(entry.get("by"), f + ".by"))
        elif kind == "affine":
            params[a] = (_number(entry.get("scale"), f + ".scale"), _number(entry.get("offset", 0.0), f + ".offset"))
        else:
            raise ConfigError(f"unknown impulse map kind {kind!r}", f + ".kind")
    return AffineImpulseMap(space, params)


def _costs(doc: dict, space, actions) -> list[CriterionCost]:
    costs = _require(doc, "costs", list)
    if not costs:
        raise ConfigError("at least the objective (j = 0) is required", "costs")
    out = []
    for j, entry in enumerate(costs):
        f = f"costs[{j}]"
        if not isinstance(entry, dict):
            raise ConfigError("expected an object", f)
        gradual = entry.get("gradual", 0)
        impulse = entry.get("impulse", 0)
        if isinstance(space, FiniteSpace):
            if isinstance(gradual, (int, float)) and not isinstance(gradual, bool):
                gradual = {x: gradual for x in space.labels}
            if not isinstance(gradual, dict):
                raise ConfigError("expected {state: rate}", f + ".gradual")
            rates = {}
            for x in space.labels:
                if x not in gradual:
                    raise ConfigError("missing state", f"{f}.gradual.{x}")
                rates[x] = _number(gradual[x], f"{f}.gradual.{x}", True)
            if isinstance(impulse, (int, float)) and not isinstance(impulse, bool):
                impulse = {a: impulse for a in actions}
            if not isinstance(impulse, dict):
                raise ConfigError("expected {action: cost}", f + ".impulse")
            table = {}
            for a in actions:
                if a not in impulse:
                    raise ConfigError("missing action", f"{f}.impulse.{a}")
                v = impulse[a]
                if isinstance(v, dict):
                    for x in space.labels:
                        if x not in v:
                            raise ConfigError("missing state", f"{f}.impulse.{a}.{x}")
                    table[a] = {x: _number(v[x], f"{f}.impulse.{a}.{x}", True) for x in space.labels}
                else:
                    table[a] = _number(v, f"{f}.impulse.{a}", True)
            out.append(CriterionCost(TabulatedRate(rates), TableImpulseCost(table)))
        else:
            rate = PolynomialRate(_coefs(gradual, f + ".gradual"))
            if isinstance(impulse, (int, float)) and not isinstance(impulse, bool):
                impulse = {a: [impulse] for a in actions}
            if not isinstance(impulse, dict):
                raise ConfigError("expected {action: coefficients}", f + ".impulse")
            polys = {}
            for a in actions:
                if a not in impulse:
                    raise ConfigError("missing action", f"{f}.impulse.{a}")
                polys[a] = _coefs(impulse[a], f"{f}.impulse.{a}")
            out.append(CriterionCost(rate, PolynomialImpulseCost(polys)))
        if entry.get("exact", True) is False:
            # force quadrature by hiding the closed form behind a plain callable
            g = out[-1].gradual
            out[-1] = CriterionCost(lambda x, _g=g: _g(x), out[-1].impulse)
    return out


def problem_from_dict(doc: dict) -> Problem:
    """Build a :class:`Problem` from a parsed configuration document."""
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object")
    unknown = set(doc) - _KNOWN_KEYS
    if unknown:
        raise ConfigError("unknown key", sorted(unknown)[0])
    states = doc.get("states")
    if isinstance(states, list):
        if not states or not all(isinstance(s, str) for s in states):
            raise ConfigError("expected a nonempty list of string labels", "states")
        if len(set(states)) != len(states):
            raise ConfigError("duplicate state labels", "states")
        space = FiniteSpace(tuple(states))
    elif isinstance(states, dict) and "interval" in states:
        iv = states["interval"]
        if not isinstance(iv, list) or len(iv) != 2:
            raise ConfigError("expected [lo, hi]", "states.interval")
        lo, hi = _number(iv[0], "states.interval[0]"), _number(iv[1], "states.interval[1]")
        if not lo < hi:
            raise ConfigError("need lo < hi", "states.interval")
        space = IntervalSpace(lo, hi)
    else:
        raise ConfigError("expected a list of labels or {\"interval\": [lo, hi]}", "states")

    actions = _require(doc, "actions", list)
    if not actions or not all(isinstance(a, str) for a in actions) or len(set(actions)) != len(actions):
        raise ConfigError("expected a nonempty list of distinct string labels", "actions")

    flow = _flow(doc, space)
    lmap = _impulse_map(doc, space, actions)
    costs = _costs(doc, space, actions)
    budgets = doc.get("budgets", [])
    if not isinstance(budgets, list):
        raise ConfigError("expected a list", "budgets")
    budgets = [_number(d, f"budgets[{i}]", True) for i, d in enumerate(budgets)]
    if len(budgets) != len(costs) - 1:
        raise ConfigError(f"expected {len(costs) - 1} budgets (one per constraint), got {len(budgets)}", "budgets")

    if "x0" not in doc:
        raise ConfigError("missing required key", "x0")
    x0 = doc["x0"]
    if isinstance(space, IntervalSpace):
        x0 = _number(x0, "x0")
    if x0 not in space:
        raise ConfigError(f"{x0!r} is not a state", "x0")

    disc = doc.get("discretization", {})
    if not isinstance(disc, dict):
        raise ConfigError("expected an object", "discretization")
    grid = None
    if "theta_grid" in doc:
        grid = _theta_grid(doc["theta_grid"], "theta_grid")
    if "theta_grid" in disc:
        g2 = _theta_grid(disc["theta_grid"], "discretization.theta_grid")
        if grid is not None and g2 != grid:
            raise ConfigError("conflicts with top-level theta_grid", "discretization.theta_grid")
        grid = g2
    points = disc.get("grid_points")
    if points is not None:
        if isinstance(points, bool) or not isinstance(points, int) or points < 2:
            raise ConfigError("expected an integer >= 2", "discretization.grid_points")
    if isinstance(space, IntervalSpace) and points is None:
        raise ConfigError("interval problems need discretization.grid_points", "discretization")

    try:
        return Problem(space=space, actions=tuple(actions), flow=flow, impulse_map=lmap, costs=tuple(costs),
                       budgets=tuple(budgets), x0=x0, theta_grid=grid, grid_points=points,
                       name=str(doc.get("name", "problem")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_problem(path) -> Problem:
    """Read and validate a JSON problem document."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno) from None
    return problem_from_dict(doc)
