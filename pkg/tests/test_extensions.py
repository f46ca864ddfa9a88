import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from impulselp import solve
from impulselp.extensions import (BOX, AuxPoint, aggregate_measure, bounded, euclidean, finite_theta_mass, g_map,
                                  metric_selftest, rho_hat, rho_hat_array)
from impulselp.lp import OccupationMeasure
from impulselp.mdp import CEMETERY
from impulselp.instances import random_instance, reference

from conftest import mdp_of, program_seeds


def single_atom(mdp, state, label, weight=1.0):
    w = np.zeros((mdp.n_states, mdp.n_actions))
    b = next(i for i in range(mdp.n_actions) if mdp.actions.label(i) == label)
    w[state, b] = weight
    return OccupationMeasure(w, np.ones(mdp.n_states, dtype=bool))


# -- aggregation ------------------------------------------------------------

def test_e1_full_occupation():
    r = solve(reference("E1"))
    eta = aggregate_measure(r.occupation, r.mdp, h=1e-3, horizon=10.0)
    assert eta.atoms(r.mdp) == [("s0", "a", 1.0), ("s1", BOX, pytest.approx(10.0, abs=1e-9))]
    assert eta.truncated and eta.finite_flow.sum() == 0


def test_e1_program_measure_has_no_flow():
    r = solve(reference("E1"))
    eta = aggregate_measure(r.lp_solution.mu, r.mdp)
    assert eta.atoms(r.mdp) == [("s0", "a", 1.0)] and not eta.truncated


@pytest.mark.parametrize("theta,label", [(1, "(1,a)"), (2, "(2,a)")])
def test_single_wait_spreads_theta_over_the_state(theta, label):
    doc = reference("E1")
    doc["theta_grid"] = [0, 1, 2, "inf"]
    mdp = mdp_of(doc)
    for h in (1e-3, 0.3, 0.7):
        eta = aggregate_measure(single_atom(mdp, 0, label), mdp, h=h)
        # k h < theta for k = 0..ceil(theta/h)-1
        assert eta.flow[0] == pytest.approx(h * math.ceil(theta / h - 1e-12), abs=1e-12)
        assert abs(eta.flow[0] - theta) <= h
        assert eta.impulse[0, 0] == 1.0


def test_e3_flow_follows_the_trajectory(e3):
    # waiting 1 from x = 1 under decay: the first moment of the box part is int_0^1 e^-t dt
    eta = aggregate_measure(single_atom(e3, e3.state_index(1.0), "(1,reset)"), e3, h=1e-4)
    moment = float(e3.grid @ eta.flow)
    assert moment == pytest.approx(1 - math.exp(-1), abs=0.01)
    assert eta.impulse[int(np.argmin(abs(e3.grid - math.exp(-1)))), 0] == 1.0


@pytest.mark.parametrize("seed", program_seeds(10, J=1))
def test_mass_identity(seed):
    r = solve(random_instance(seed, J=1))
    if r.status != "optimal":
        return
    mu = r.lp_solution.mu
    h = 1e-3
    eta = aggregate_measure(mu, r.mdp, h=h)
    finite = [(b, w) for _, b, w in mu.atoms() if r.mdp.actions.theta_of[b] < math.inf]
    assert eta.impulse.sum() == pytest.approx(sum(w for _, w in finite), rel=1e-12)
    total = finite_theta_mass(mu, r.mdp)
    assert total - 1e-9 <= eta.finite_flow.sum() <= total + h * sum(w for _, w in finite) + 1e-9


def test_aggregation_rejects_bad_steps(e1):
    mu = single_atom(e1, 0, "(0,a)")
    with pytest.raises(ValueError):
        aggregate_measure(mu, e1, h=0)


# -- metric -----------------------------------------------------------------

def test_g_examples():
    assert g_map(0) == 0 and g_map(1) == 0.5 and g_map(3) == 0.75 and g_map(math.inf) == 1
    with pytest.raises(ValueError):
        g_map(-1)


def test_rho_hat_examples():
    cem = AuxPoint(math.inf, CEMETERY)
    assert rho_hat(AuxPoint(0, 0.3), cem) == 1.0
    assert rho_hat(AuxPoint(3, 0.3), cem) == 0.25
    # wrapped base distance 2*1/2 = 1, damped by 1 - g(1) = 1/2
    assert rho_hat(AuxPoint(1, 0.0), AuxPoint(1, 1.0)) == 0.5
    assert rho_hat(AuxPoint(0, 0.0), AuxPoint(1, 0.0)) == 0.5
    assert rho_hat(cem, cem) == 0.0


def test_unwrapped_base_metric_must_be_bounded():
    p, q = AuxPoint(0, 0.0), AuxPoint(0, 5.0)
    assert rho_hat(p, q, wrap=False, rho_x=bounded(euclidean)) == pytest.approx(2 * 5 / 6)
    with pytest.raises(ValueError):
        rho_hat(p, q, wrap=False)


def test_cemetery_only_at_infinity():
    with pytest.raises(ValueError):
        AuxPoint(math.inf, 0.5)
    with pytest.raises(ValueError):
        AuxPoint(1.0, CEMETERY)


times = st.one_of(st.just(0.0), st.just(math.inf), st.floats(0, 1e6), st.floats(0, 5))
points = st.tuples(times, st.floats(0, 1)).map(lambda t: AuxPoint(t[0], CEMETERY if t[0] == math.inf else t[1]))


def definition(p, q):
    """Direct evaluation through g, independent of the closed forms used by the library."""
    g1, g2 = g_map(p.s), g_map(q.s)
    if p.is_cemetery or q.is_cemetery:
        return abs(g1 - g2)
    d = abs(p.x - q.x)
    return 2 * d / (1 + d) * (1 - max(g1, g2)) + abs(g1 - g2)


@settings(max_examples=400, deadline=None)
@given(p=points, q=points)
def test_matches_definition_and_array_form(p, q):
    d = rho_hat(p, q)
    assert d == pytest.approx(definition(p, q), abs=1e-12)
    arr = rho_hat_array([p.s], [0.0 if p.is_cemetery else p.x], [q.s], [0.0 if q.is_cemetery else q.x])[0]
    assert arr == pytest.approx(d, abs=1e-15, rel=1e-12)


@settings(max_examples=400, deadline=None)
@given(p=points, q=points, r=points)
def test_metric_axioms(p, q, r):
    assert rho_hat(p, q) == rho_hat(q, p) >= 0
    assert rho_hat(p, p) == 0
    if p != q:
        assert rho_hat(p, q) > 0
    assert rho_hat(p, q) <= rho_hat(p, r) + rho_hat(r, q) + 1e-12


@given(s=st.floats(0, 1e6), x=st.floats(0, 1), y=st.floats(0, 1))
def test_distance_to_cemetery_ignores_position(s, x, y):
    cem = AuxPoint(math.inf, CEMETERY)
    assert rho_hat(AuxPoint(s, x), cem) == rho_hat(AuxPoint(s, y), cem) == pytest.approx(1 / (1 + s))


def test_selftest_passes():
    r = metric_selftest(samples=5000, seed=3, sequences=20)
    assert r.passed
    assert r.symmetry_max == 0 and r.identity_max == 0 and r.triangle_slack_min >= -1e-12
