"""
Distances when time runs to infinity
====================================

Points are pairs (s, x) of elapsed time and state, plus one cemetery point at
s = inf.  Squeezing time through ``g(s) = s / (1 + s)`` makes long waits close
to the cemetery no matter where the state is.
"""

import math

from impulselp.extensions import AuxPoint, metric_selftest, rho_hat
from impulselp.mdp import CEMETERY

cemetery = AuxPoint(math.inf, CEMETERY)
for s in (0, 1, 10, 1e3, 1e6):
    near, far = AuxPoint(s, 0.0), AuxPoint(s, 1.0)
    print(f"s = {s:<9g} to cemetery {rho_hat(near, cemetery):.3e}   "
          f"between x = 0 and x = 1 {rho_hat(near, far):.3e}")

###############################################################################
# The state part fades as s grows: two far-apart states at a late time are
# nearly indistinguishable.  The built-in self-test samples random triples and
# sequences.

r = metric_selftest(samples=10_000, seed=0)
print(r)
