"""
Continuous-time dispatch of two units
=====================================

A cheap unit with a slow ramp and an expensive flexible unit serve a load
that rises by 80 MW over an hour.  We build the continuous-time
trajectories, look at where the price changes, and compare with a
5-minute discrete-time dispatch.

    python3 demos/two_unit_walkthrough.py
"""
from pathlib import Path

import numpy as np

from ctdispatch.analysis import price_difference, revenue_discrepancy
from ctdispatch.discrete import discrete_dispatch
from ctdispatch.model import load_system
from ctdispatch.orchestrator import run

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"

system = load_system(FIXTURES / "twounit.json")
for unit in system.units:
    print(f"{unit.id}: {unit.marginal_cost:g} $/MWh, {unit.g_min:g}-{unit.g_max:g} MW, "
          f"ramp {unit.ramp_up:g} MW/min")

###############################################################################
# Solve.  Each iteration re-traces the intervals whose endpoints moved,
# until the adaptive dispatch at the endpoints agrees with the trajectory.

solution = run(system)
print(f"\nconverged in {solution.iterations} iterations, cost {solution.cost:.4f} $")
for seg in solution.trajectory.segments:
    print(f"  [{seg.t_start:8.4f}, {seg.t_end:8.4f}]  price {seg.p_b:g} $/MWh")

###############################################################################
# Inside a segment every unit follows x_k(t) = a_t t + a_D D(t) + b.  The
# unit with a_D = 1 absorbs load changes and sets the price.

for seg in solution.trajectory.segments:
    k = int(np.argmax(seg.a_D))
    print(f"  marginal on [{seg.t_start:.2f}, {seg.t_end:.2f}]: {system.units[k].id}")

###############################################################################
# The discrete dispatch prices each 5-minute step from its own balance
# multiplier.  Where the two prices differ, units are paid differently.

disc = discrete_dispatch(system, 5.0)
print(f"\n5-min LMP changes at {disc.lmp.change_points(1e-6)} min")
diff = price_difference(solution.trajectory, disc.lmp)
for t0, t1, per_unit in revenue_discrepancy(diff, solution.trajectory):
    parts = ", ".join(f"{u.id} {v:+.2f} $" for u, v in zip(system.units, per_unit))
    print(f"  [{t0:.2f}, {t1:.2f}] min: {parts}")
