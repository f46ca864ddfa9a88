"""
Why a budget forces randomization
=================================

Two impulses leave s0 for the free state s1.  ``a1`` costs 10 in the
objective, ``a2`` costs 10 against a budget of 5.  Every deterministic
stationary map either pays 10 or breaks the budget; tossing a fair coin
between the two pays 5 and uses the budget exactly.
"""

import numpy as np

from impulselp import solve
from impulselp.instances import reference
from impulselp.verify import best_feasible_mixture, enumerate_deterministic_values, lagrangian_scan

report = solve(reference("E2"))
mdp = report.mdp
print(report.table())

###############################################################################
# All deterministic maps, evaluated exactly along their orbits.  Column 0 is
# the objective, column 1 the constrained criterion.

enum = enumerate_deterministic_values(mdp)
for k, (choice, v) in enumerate(enum.items()):
    tag = "feasible" if v[1] <= mdp.budgets[0] else "over budget"
    print(f"{enum.describe(mdp, k):<40} V = {v.tolist()}  {tag}")

###############################################################################
# The program value sits between a Lagrangian lower bound (value iteration on
# ``c0 + lambda c1``) and the cheapest feasible mixture of two maps.  Here the
# bracket is tight.

lag = lagrangian_scan(mdp, lambda_grid=np.linspace(0, 2, 9)[:, None])
mix = best_feasible_mixture(enum.values, mdp.budgets)
print(f"lagrangian {lag.bound:g} at lambda {lag.lam[0]:g}")
print(f"program    {report.value:g}")
print(f"mixture    {mix.value:g} (weight {mix.weight:g} on map {mix.pair[0]})")
