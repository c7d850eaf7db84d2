"""
RRT* through circular obstacles
===============================

Plan in a cluttered 200 x 200 um world, watch the incumbent cost fall as the
tree rewires, then resample the path at the nominal step length.
"""

# %%
import numpy as np

from gpmpc import planner

world = planner.World(
    bounds=(0, 0, 200, 200),
    obstacles=[((50, 50), 15), ((100, 60), 20), ((60, 120), 18), ((140, 130), 22), ((120, 30), 12), ((160, 70), 14)],
    clearance=4.0,
)
path = planner.plan((10, 10), (190, 190), world, planner.PlannerConfig(max_iters=5000, seed=0))
print(f"cost {path.cost:.2f}  waypoints {len(path.waypoints)}  straight line {np.hypot(180, 180):.2f}")

# %%
# The best start-to-goal cost never increases.
h = path.incumbent_history
first = int(np.argmax(np.isfinite(h)))
for it in (first, 500, 1000, 2000, 4999):
    print(f"iteration {it:5d}: {h[it]:.2f}")

# %%
# Uniform arc-length resampling keeps the exact goal.
ref = planner.resample_path(path.waypoints, spacing=0.3)
print(len(ref), "reference points; last", ref[-1])
