"""
Refining toward a shock collision
=================================

Two Burgers shocks starting at ``x = 0`` and ``x = 1`` merge at ``t = 2/mu``.
Before and after the merge the solution family in ``t`` is one shock pair or
one shock moving at constant speed, both easy to align. Across the merge the
number of jumps changes and no transform can match them, so the adaptive
loop has to bisect the time interval toward the collision.
"""

from hptsi import (FitConfig, Grid1D, adapt, collision_time, sample, solve_front_tracking,
                   two_shock_ic)

mu = 1.5
ic = two_shock_ic(mu)
grid = Grid1D.from_spacing(-1.0, 2.5, 0.01)


def snapshot(t):
    return sample(solve_front_tracking(ic, t), grid)


###############################################################################
# The exact solution
# ------------------

t_star = collision_time(ic)
print(f"collision at t* = {t_star:.4f} (2/mu = {2 / mu:.4f})")
for t in (0.5, t_star, 1.8):
    print(f"  t={t:.3f}: shocks at {[round(s, 4) for s in solve_front_tracking(ic, t).shock_positions()]}")

###############################################################################
# Adaptive refinement in time
# ---------------------------
# Cells are bisected until every training error is below 0.02.

part = adapt(snapshot, (0.0, 2.0), 0.02, 100, FitConfig())
print(f"\nconverged: {part.converged}, snapshots used: {part.snapshots_used}")
print("cell               level  degree  training error")
for c in part.cells:
    mark = "  <- contains t*" if c.interval[0] <= t_star <= c.interval[1] else ""
    print(f"[{c.interval[0]:.4f}, {c.interval[1]:.4f}]  {c.level:5d}  {c.degree:6d}  "
          f"{c.error:.4f}{mark}")
