import math

import numpy as np
import pytest

from impulselp import CEMETERY, ActionGrid, build_mdp, problem_from_dict
from impulselp.instances import random_instance, reference
from impulselp.mdp import one_step_cost, project, transition

from conftest import mdp_of


def b(mdp, theta, a):
    return mdp.actions.index(theta, a)


def test_action_grid_order_and_labels():
    g = ActionGrid((math.inf, 0, 1), ("a1", "a2"))
    assert g.thetas == (0.0, 1.0, math.inf)
    assert [g.label(k) for k in range(len(g))] == ["(0,a1)", "(0,a2)", "(1,a1)", "(1,a2)", "(inf,a1)", "(inf,a2)"]
    assert all(g.index(*g.decode(k)) == k for k in range(len(g)))
    assert np.array_equal(g.theta_of, [0, 0, 1, 1, math.inf, math.inf])


@pytest.mark.parametrize("thetas", [(1, math.inf), (0, 1), (0, 0, math.inf), (0, -1, math.inf)])
def test_action_grid_rejects_bad_theta_sets(thetas):
    with pytest.raises(ValueError):
        ActionGrid(thetas, ("a",))


def test_e1_tables(e1):
    s0, s1 = e1.state_index("s0"), e1.state_index("s1")
    assert e1.states[-1] is CEMETERY and e1.n_states == 3
    assert one_step_cost(e1, 0, s0, b(e1, 0, "a")) == 2.0
    assert one_step_cost(e1, 0, s0, b(e1, 1, "a")) == 3.0
    assert one_step_cost(e1, 0, s0, b(e1, math.inf, "a")) == math.inf
    assert transition(e1, s0, b(e1, 0, "a")) == s1
    assert transition(e1, s1, b(e1, math.inf, "a")) == e1.delta
    assert e1.projection_displacement == 0.0


def test_e2_constraint_cost(e2):
    assert one_step_cost(e2, 1, e2.state_index("s0"), b(e2, 0, "a2")) == 10.0


@pytest.mark.parametrize("name", ["E1", "E2", "E3", "T1"])
def test_cemetery_is_absorbing_and_free(name):
    mdp = mdp_of(reference(name))
    assert np.all(mdp.next[mdp.delta] == mdp.delta)
    assert np.all(mdp.cost[:, mdp.delta, :] == 0)
    inf_cols = mdp.actions.theta_of == math.inf
    assert np.all(mdp.next[:, inf_cols] == mdp.delta)
    assert np.all(mdp.cost >= 0)


def test_e3_jump_now(e3):
    x = e3.state_index(1.0)
    assert e3.states[x] == pytest.approx(1.0)
    assert one_step_cost(e3, 0, x, b(e3, 0, "reset")) == pytest.approx(0.1)
    assert e3.states[transition(e3, x, b(e3, 0, "reset"))] == 0.0
    assert one_step_cost(e3, 0, x, b(e3, math.inf, "reset")) == pytest.approx(1.0)
    assert len(e3.grid) == 201


def test_projection_ties_go_down():
    grid = np.array([0.0, 1.0, 2.0])
    assert project(grid, 0.5) == (0, 0.5)
    assert project(grid, 0.51)[0] == 1
    assert project(grid, -3.0) == (0, 3.0)
    assert project(grid, 2.0) == (2, 0.0)


def test_impulse_cost_uses_unprojected_point():
    # shift by 0.3 on a coarse grid: the impulse cost x^2 is charged at phi(x, theta), not at a grid point
    doc = {"states": {"interval": [0.0, 1.0]}, "actions": ["a"], "flow": {"kind": "linear-drift", "velocity": 0.25},
           "impulse_map": {"a": {"kind": "shift", "by": -0.3}},
           "costs": [{"gradual": [0.0], "impulse": {"a": [0.0, 0.0, 1.0]}}], "x0": 0.0,
           "theta_grid": [0, 1, "inf"], "discretization": {"grid_points": 3}}
    mdp = mdp_of(doc)
    x = mdp.state_index(0.5)
    assert mdp.cost[0, x, b(mdp, 1, "a")] == pytest.approx(0.75 ** 2)
    assert mdp.states[mdp.next[x, b(mdp, 1, "a")]] == 0.5      # 0.45 projects to 0.5
    assert mdp.projection_displacement == pytest.approx(0.2)    # worst case: 0.7 -> 0.5


def test_coarse_grid_rejects_x0():
    p = problem_from_dict(reference("E3"))
    with pytest.raises(ValueError):
        build_mdp(p, grid_points=1)


@pytest.mark.parametrize("seed", range(10))
def test_cost_monotone_in_theta_for_state_free_impulse_costs(seed):
    mdp = mdp_of(random_instance(seed, J=1))
    nA = len(mdp.actions.impulses)
    c = mdp.cost.reshape(mdp.J + 1, mdp.n_states, -1, nA)
    assert np.all(np.diff(c[:, :, :-1, :], axis=2) >= 0)


def test_state_labels(e3, e1):
    assert e1.state_label(e1.delta) == "Delta"
    assert e3.state_label(e3.state_index(0.01)) == "0.01"
