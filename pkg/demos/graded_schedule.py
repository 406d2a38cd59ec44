"""
A graded mesh toward a singular parameter
=========================================

When the transformed snapshots are smooth away from one parameter value
``mu_bar`` but their derivatives blow up there, a mesh that halves toward
``mu_bar`` while raising the degree on the coarse cells recovers an error
decaying like ``exp(-c sqrt(n))`` in the snapshot count ``n``. The two
finest levels use one snapshot each.
"""

import numpy as np

from hptsi import (Grid1D, SampledField, ScheduleConfig, build_models, partition_values,
                   theoretical_schedule)

grid = Grid1D.from_spacing(0.0, 1.0, 0.01)
mu_bar = 0.3
jump = (grid.x >= 0.5).astype(float)


def snapshot(mu):
    # amplitude with a square-root cusp at mu_bar
    return SampledField(grid, (1.0 + abs(mu - mu_bar) ** 0.5) * jump)


test = np.unique(np.concatenate([np.linspace(0, 1, 2001), mu_bar + np.linspace(-1e-3, 1e-3, 41)]))
truth = np.stack([snapshot(m).values for m in test])
w = grid.trapezoid_weights()

###############################################################################
# The mesh for L = 3
# ------------------

cfg = ScheduleConfig(L=3, b=1.0, mu_bar=mu_bar)
for c in theoretical_schedule(cfg, (0.0, 1.0)).cells:
    print(f"[{c.interval[0]:.4f}, {c.interval[1]:.4f}] level {c.level} {c.mode} degree {c.degree}")

###############################################################################
# Error against snapshot count
# ----------------------------

print("\n L   n   sqrt(n)   log2(error)")
for L in range(2, 7):
    part = build_models(theoretical_schedule(ScheduleConfig(L=L, b=1.0, mu_bar=mu_bar), (0, 1)),
                        snapshot)
    err = float(np.max(np.abs(partition_values(part, test) - truth) @ w))
    n = part.snapshots_used
    print(f"{L:2d} {n:3d}   {np.sqrt(n):6.3f}   {np.log2(err):8.3f}")
