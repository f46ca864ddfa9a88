import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from impulselp import aggregate_value_iteration, compute_V, extract_fstar
from impulselp.classifier import ClassificationError, VSet, _infinite_states
from impulselp.instances import random_instance
from impulselp.mdp import ActionGrid, FiniteMDP, CEMETERY

from conftest import mdp_of


def test_e1_values(e1):
    v = aggregate_value_iteration(e1)
    assert v.converged
    assert v.w.tolist() == [2.0, 0.0, 0.0]
    V = compute_V(v)
    assert V.indices.tolist() == [0]
    f = extract_fstar(e1, v, V)
    assert e1.actions.label(f.choice[1]) == "(inf,a)"
    assert e1.actions.label(f.choice[e1.delta]) == "(0,a)"


def test_t1_is_all_zero_after_one_sweep(t1):
    v = aggregate_value_iteration(t1)
    assert v.iterations == 1 and np.all(v.w == 0)
    assert not compute_V(v).membership.any()


def test_e2_values(e2):
    v = aggregate_value_iteration(e2)
    V = compute_V(v)
    assert V.indices.tolist() == [0] and v.w[0] == 10.0
    assert e2.actions.label(extract_fstar(e2, v, V).choice[1]) == "(inf,a1)"


def test_e3_values(e3):
    v = aggregate_value_iteration(e3)
    assert v.w[e3.state_index(1.0)] == pytest.approx(0.1)
    assert v.w[e3.state_index(0.0)] == 0.0


def test_cemetery_always_outside_v(e1):
    v = aggregate_value_iteration(e1)
    w = v.w.copy()
    w[-1] = 5.0
    forced = compute_V(type(v)(w, v.iterations, v.residual, v.converged, v.scale))
    assert not forced.membership[-1]


def test_default_tolerances(e1):
    v = aggregate_value_iteration(e1)
    assert v.default_tol_v() == pytest.approx(1e-9 * (1 + 3.0))
    with pytest.raises(ValueError):
        compute_V(v, tol_v=0.0)
    with pytest.raises(ValueError):
        aggregate_value_iteration(e1, tol=0)
    with pytest.raises(ValueError):
        aggregate_value_iteration(e1, max_iter=0)


def _loop_mdp(cost_loop, cost_exit):
    """x loops to itself at ``cost_loop`` or leaves to the free state y at ``cost_exit``."""
    grid = ActionGrid((0.0, math.inf), ("stay", "go"))
    nxt = np.array([[0, 1, 3, 3], [1, 1, 3, 3], [2, 2, 2, 2], [3, 3, 3, 3]])
    cost = np.zeros((1, 4, 4))
    cost[0, 0] = [cost_loop, cost_exit, math.inf, math.inf]
    cost[0, 2] = [0, 0, 0, 0]
    return FiniteMDP(("x", "y", "z", CEMETERY), grid, nxt, cost, 0, np.zeros(0))


def test_slow_convergence_is_flagged_not_fatal():
    v = aggregate_value_iteration(_loop_mdp(1.0, 100.0), max_iter=10)
    assert not v.converged and v.w[0] == 10.0
    assert aggregate_value_iteration(_loop_mdp(1.0, 100.0)).w[0] == 100.0


def test_infinite_states_are_pinned():
    # x can only loop at positive cost or wait forever at infinite cost
    grid = ActionGrid((0.0, math.inf), ("a",))
    nxt = np.array([[0, 1], [1, 1]])
    cost = np.array([[[1.0, math.inf], [0.0, 0.0]]])
    mdp = FiniteMDP(("x", CEMETERY), grid, nxt, cost, 0, np.zeros(0))
    v = aggregate_value_iteration(mdp)
    assert v.converged and v.w[0] == math.inf
    assert _infinite_states(mdp.total_cost(), mdp.next).tolist() == [True, False]


def test_fstar_postcondition_violation_names_state(e1):
    v = aggregate_value_iteration(e1)
    bad = VSet(np.array([False, False, False]), 1e-9)
    with pytest.raises(ClassificationError, match="s0"):
        extract_fstar(e1, v, bad)


@pytest.mark.parametrize("seed", range(25))
def test_vc_orbits_are_free_and_closed(seed):
    mdp = mdp_of(random_instance(seed, J=1))
    v = aggregate_value_iteration(mdp)
    V = compute_V(v)
    f = extract_fstar(mdp, v, V)
    total = mdp.total_cost()
    assert np.all(v.w[~V.membership] <= V.tol_v)
    for x in np.flatnonzero(~V.membership):
        y = x
        for _ in range(mdp.n_states):
            b = f.choice[y]
            assert total[y, b] == 0.0 and not V.membership[mdp.next[y, b]]
            y = mdp.next[y, b]


@pytest.mark.parametrize("seed", range(10))
def test_iterates_are_monotone(seed):
    mdp = mdp_of(random_instance(seed))
    prev = None
    for k in range(1, 15):
        w = aggregate_value_iteration(mdp, max_iter=k, quiet=True).w
        if prev is not None:
            assert np.all(w >= prev)
        prev = w


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_fixed_point_and_shortest_path_oracle(seed):
    mdp = mdp_of(random_instance(seed))
    v = aggregate_value_iteration(mdp)
    total = mdp.total_cost()
    q = np.min(total + v.w[mdp.next], axis=1)
    fin = np.isfinite(v.w)
    assert np.allclose(q[fin], v.w[fin], atol=1e-9) and np.all(np.isinf(q[~fin]))
    # deterministic transitions: w is the cheapest path cost into a zero-cost closed set
    ref = _bellman_ford(total, mdp.next)
    assert np.allclose(v.w, ref, atol=1e-9)


def _bellman_ford(total, nxt):
    S = len(total)
    # greatest set closed under some free action
    Z = np.ones(S, bool)
    while True:
        Z2 = np.array([any(total[x, b] == 0 and Z[nxt[x, b]] for b in range(total.shape[1])) for x in range(S)])
        if np.array_equal(Z2, Z):
            break
        Z = Z2
    d = np.where(Z, 0.0, np.inf)
    for _ in range(S + 1):
        for x in range(S):
            for b in range(total.shape[1]):
                d[x] = min(d[x], total[x, b] + d[nxt[x, b]])
    return d
