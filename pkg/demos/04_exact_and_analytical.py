"""
Exact and closed-form spectral dynamics
=======================================

The singular values of a deep product can be integrated directly, without the
weights. At depth 2 with all entries observed they also follow a closed form
that carries over a task switch when the two tasks share singular vectors.
"""
import numpy as np

from critperiods import AnalyticalParams, analytical_trajectory
from critperiods.exact import analytical_compare, exact_compare

p = AnalyticalParams([4.0, 2.0, 1.0], 1e-3, tau=10.0)
for t in (0.0, 5.0, 10.0, 20.0):
    print(f"t = {t:4.1f}  a(t) = {np.round(analytical_trajectory(p, t), 3)}")

# small versions of the gd comparisons
_, met = exact_compare(n=30, ranks=(4, 2), observations=400, switch_epoch=2000,
                       post_epochs=2000)
print("exact integrator vs gd, largest gap / max s:", round(met["relative_deviation"], 5))
_, met = analytical_compare(n=30, switch_epoch=2000, post_epochs=2000)
print("closed form vs gd, worst gap per unit s:", round(met["worst_relative_deviation"], 5))
