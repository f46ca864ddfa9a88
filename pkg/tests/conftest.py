import numpy as np
import pytest

from impulselp import build_mdp, problem_from_dict
from impulselp.instances import random_instance, reference


def mdp_of(doc):
    return build_mdp(problem_from_dict(doc))


@pytest.fixture
def e1():
    return mdp_of(reference("E1"))


@pytest.fixture
def e2():
    return mdp_of(reference("E2"))


@pytest.fixture
def e3():
    return mdp_of(reference("E3"))


@pytest.fixture
def t1():
    return mdp_of(reference("T1"))


def random_mdps(seeds, J=0):
    return [mdp_of(random_instance(s, J=J)) for s in seeds]


def series_occupation(mdp, rows, support, steps=5000):
    """Visit counts by summing the first ``steps`` terms of the distribution sequence."""
    P = np.zeros((mdp.n_states, mdp.n_states))
    for x in range(mdp.n_states):
        for b in range(mdp.n_actions):
            P[x, mdp.next[x, b]] += rows[x, b]
    P = P * support[:, None] * support[None, :]
    d = np.zeros(mdp.n_states)
    d[mdp.x0] = 1.0 if support[mdp.x0] else 0.0
    m = np.zeros(mdp.n_states)
    for _ in range(steps):
        m += d
        d = d @ P
    return m[:, None] * rows


def program_seeds(count, J=0):
    """First ``count`` seeds whose x0 lies in V, so a program is actually solved."""
    from impulselp import aggregate_value_iteration, compute_V
    out, seed = [], 0
    while len(out) < count:
        mdp = mdp_of(random_instance(seed, J=J))
        if compute_V(aggregate_value_iteration(mdp)).membership[mdp.x0]:
            out.append(seed)
        seed += 1
    return out
