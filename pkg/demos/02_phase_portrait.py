"""
Phase portraits and depth
=========================

A single singular mode shared by two pathways. Freezing pathway b for the
first 15 epochs lets pathway a take more of the mode, and the effect sharpens
with depth. The same freeze late in training does almost nothing.
"""
import numpy as np

from critperiods import NO_DEFICIT, DeficitSchedule, flow_field, make_rng, phase_portrait

sigma = 10.0
for depth in (2, 5, 9, 13):
    row = []
    for schedule in (DeficitSchedule.gate("b", 0, 15), DeficitSchedule.gate("b", 100, 115),
                     NO_DEFICIT):
        pp = phase_portrait(depth, sigma, 100, "unit-conserved", schedule, 0.001, 1000,
                            make_rng(0), record_every=1000)
        row.append(pp.endpoints[:, 0].mean() / sigma)
    print(f"depth {depth:2d}  share of pathway a: early {row[0]:.3f}  late {row[1]:.3f}  "
          f"none {row[2]:.3f}")

# flow arrows on a coarse grid, balanced branch q = p
grid = np.linspace(0.0, sigma, 5)
ff = flow_field(5, sigma, grid, grid)
print(ff.to_csv().splitlines()[:6])
