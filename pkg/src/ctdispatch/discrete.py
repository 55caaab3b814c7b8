"""Uniform-resolution discrete-time dispatch and its LMP step function."""
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import MINUTES_PER_HOUR
from .verifier import adaptive_dispatch, hourly_dispatch

logger = logging.getLogger(__name__)

GRID_TOL = 1e-9


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant function, left-closed and right-open on each step.

    ``values[i]`` holds on ``[breakpoints[i], breakpoints[i + 1])``; the
    last value also covers the final breakpoint.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.size != vals.size + 1 or np.any(np.diff(bp) <= 0):
            raise ValueError("step function needs increasing breakpoints, one more than values")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(self.breakpoints, t, side="right") - 1, 0, self.values.size - 1)
        out = self.values[i]
        return out if out.ndim else float(out)

    def change_points(self, tol=0.0):
        """Breakpoints where the value changes by more than ``tol``."""
        jumps = np.abs(np.diff(self.values)) > tol
        return [float(t) for t in self.breakpoints[1:-1][jumps]]

    def to_dict(self):
        return {"breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data["breakpoints"]), np.asarray(data["values"]))


@dataclass
class DiscreteDispatch:
    endpoints: np.ndarray
    X: np.ndarray
    lmp: StepFunction
    cost: float
    resolution: float

    def to_dict(self):
        return {"resolution": self.resolution, "endpoints": self.endpoints.tolist(),
                "dispatch": self.X.tolist(), "lmp": self.lmp.to_dict(), "cost": self.cost}


def uniform_grid(start, end, resolution):
    if not resolution > 0:
        raise ValidationError(f"resolution must be positive, got {resolution}")
    n = (end - start) / resolution
    steps = int(round(n))
    if steps < 1 or abs(n - steps) > GRID_TOL * max(1.0, n):
        raise ValidationError(f"resolution {resolution} does not divide the horizon")
    return np.linspace(start, end, steps + 1)


def discrete_dispatch(system, resolution, method="auto"):
    """Dispatch on a uniform grid with LMPs in $/MWh.

    The final instant is pinned to the hourly dispatch, matching the
    boundary condition of the continuous-time solution; the balance
    multiplier at ``t_n`` divided by the step length is the LMP held
    over ``[t_n, t_n + resolution)``.
    """
    S, T = system.horizon
    t = uniform_grid(S, T, resolution)
    terminal = hourly_dispatch(system, method=method).X[-1]
    res = adaptive_dispatch(system, t, pinned={t.size - 1: terminal}, method=method)
    lmp = StepFunction(t, res.prices[:-1])
    cost = float(system.costs @ (res.X[:-1].T @ res.weights[:-1])) / MINUTES_PER_HOUR
    return DiscreteDispatch(endpoints=t, X=res.X, lmp=lmp, cost=cost, resolution=float(resolution))
