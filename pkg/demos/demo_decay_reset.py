"""
Resetting a decaying state
==========================

The state decays as ``x(t) = x e^{-t}`` on [0, 2] and costs ``x`` per unit of
time.  A reset to 0 costs 0.1.  Waiting from x = 1 costs ``1 - e^{-theta}``,
already 0.39 for theta = 0.5, so jumping at once and then waiting forever at
the free point 0 is optimal with total cost 0.1.
"""

import numpy as np

from impulselp import aggregate_value_iteration, compute_V, solve
from impulselp.instances import reference
from impulselp.extensions import aggregate_measure
from impulselp.lp import OccupationMeasure

report = solve(reference("E3"))
mdp = report.mdp
print(f"grid of {len(mdp.grid)} points, value {report.value:g}")

###############################################################################
# The aggregate value ``w`` (cheapest total of all criteria) is zero only at
# the rest point, so V is everything else.  The program lives on V.

value = aggregate_value_iteration(mdp)
vset = compute_V(value)
for x in (0.0, 0.01, 0.5, 1.0, 2.0):
    i = mdp.state_index(x)
    print(f"w({x:<4}) = {value.w[i]:.6f}   in V: {bool(vset.membership[i])}")

###############################################################################
# Optimal rows at the states the strategy visits.

for x, row in report.strategy_rows():
    print(mdp.state_label(x), {mdp.actions.label(b): p for b, p in row})

###############################################################################
# A deliberately slow strategy: wait 1 then reset.  Its aggregated measure
# spreads one unit of time along the trajectory from 1 towards e^{-1}.

w = np.zeros((mdp.n_states, mdp.n_actions))
b = next(i for i in range(mdp.n_actions) if mdp.actions.label(i) == "(1,reset)")
w[mdp.state_index(1.0), b] = 1.0
eta = aggregate_measure(OccupationMeasure(w, vset.membership), mdp, h=1e-3)
print(f"time mass {eta.flow.sum():.4f}, mean position {mdp.grid @ eta.flow:.4f} "
      f"(exact {1 - np.exp(-1):.4f})")
