"""
Discrete dispatch approaching the continuous-time cost
======================================================

Refining the discrete time step brings the discrete dispatch cost
toward the cost of the continuous-time trajectories.

    python3 demos/resolution_convergence.py
"""
from pathlib import Path

from ctdispatch.discrete import discrete_dispatch
from ctdispatch.model import load_system
from ctdispatch.orchestrator import run

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"

system = load_system(FIXTURES / "twounit.json")
target = run(system).cost
print(f"continuous-time cost {target:.4f} $\n")
print(f"{'step (min)':>10}  {'cost ($)':>12}  {'gap (%)':>9}")
for step in (15.0, 5.0, 1.0, 0.5, 0.1):
    cost = discrete_dispatch(system, step).cost
    print(f"{step:10g}  {cost:12.4f}  {100 * abs(cost - target) / target:9.4f}")
