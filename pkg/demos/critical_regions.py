"""
Critical regions in the (t, D) plane
====================================

For one updating range the dispatch is a parametric LP in theta = (t, D).
Each critical region is a polygon on which the optimal active set is
fixed and dispatch and price are affine in theta.  The load trajectory
theta(t) = (t, D(t)) crosses these regions, and each crossing is a
segment endpoint.

    python3 demos/critical_regions.py
"""
from pathlib import Path

import numpy as np

from ctdispatch.model import load_system
from ctdispatch.mplp import explore_regions, locate
from ctdispatch.orchestrator import run
from ctdispatch.trajectory import assemble_parametric_model, row_kind

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"

system = load_system(FIXTURES / "twounit.json")
solution = run(system)

###############################################################################
# Over the whole hour, with boundary values from the hourly dispatch, the
# ramp cones anchored at the horizon ends never bind along theta(t): one
# region holds throughout, and the adaptive dispatch exposes the mismatch.
# The converged updating ranges are shorter.  Take the one that produced
# the middle segment.

rng = solution.range_of(solution.trajectory.segments[1])
print(f"updating range [{rng.s_u:.4f}, {rng.t_u:.4f}]")
plp = assemble_parametric_model(system, rng)
seed_t = rng.s_u + 0.01
regions = explore_regions(plp, np.array([seed_t, float(system.load.value(seed_t))]), tol=1e-8,
                          reduce="clip", rng=np.random.default_rng(0))
print(f"{len(regions)} regions over t in {plp.theta_domain[0]}, "
      f"D in ({plp.theta_domain[1][0]:.1f}, {plp.theta_domain[1][1]:.1f})\n")

for region in regions:
    active = [f"{system.units[k].id}:{kind}" for k, kind in map(row_kind, region.active_set)]
    price = float(region.dual(region.center())[0])
    t_lo, t_hi = region.vertices[:, 0].min(), region.vertices[:, 0].max()
    print(f"region {region.index}: price {price:g} $/MWh, t in [{t_lo:.2f}, {t_hi:.2f}]")
    print(f"  active rows {active}")

###############################################################################
# Walk along the load trajectory and report each change of region.

current = None
for t in np.linspace(rng.s_u, rng.t_u, 20001):
    pos = locate(regions, np.array([t, float(system.load.value(t))]))
    if pos is not None and pos != current:
        print(f"t = {t:7.3f}: enters region {regions[pos].index}")
        current = pos
