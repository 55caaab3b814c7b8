"""
A 39-unit system
================

Eight cheap units sit at maximum output, eight mid-cost units share the
ramping and the rest stay offline while the load falls by about 700 MW
over a 12th-degree polynomial profile.

    python3 demos/rts_scale.py
"""
import time
from pathlib import Path

import numpy as np

from ctdispatch.model import load_system
from ctdispatch.orchestrator import run

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"

system = load_system(FIXTURES / "rts39.json")
start = time.perf_counter()
solution = run(system)
print(f"{system.n_units} units, {solution.iterations} iterations, "
      f"{len(solution.endpoints)} endpoints, {time.perf_counter() - start:.1f} s")

###############################################################################
# The iteration log shows the endpoint set growing until the mismatch
# at every endpoint drops below tolerance.

for entry in solution.log:
    print(f"  iteration {entry.iteration}: {entry.n_endpoints} endpoints, "
          f"max mismatch {entry.max_mismatch:.3g} MW")

###############################################################################
# Every price level belongs to an online unit.

traj = solution.trajectory
_, X, _ = traj.sample(np.linspace(0.0, 60.0, 6001))
online = np.flatnonzero(X.max(axis=0) > 1e-6)
print(f"\nonline units: {[system.units[k].id for k in online]}")
for seg in traj.segments:
    owner = [u.id for u in system.units if u.marginal_cost == seg.p_b]
    print(f"  [{seg.t_start:7.3f}, {seg.t_end:7.3f}]  {seg.p_b:g} $/MWh  {owner}")
