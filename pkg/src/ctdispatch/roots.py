"""Grid bracketing plus bisection for crossings of smooth functions of time."""
import logging

import numpy as np
from scipy.optimize import brentq

from .errors import RootIsolationFailure

logger = logging.getLogger(__name__)

GRID_STEP = 0.01
ROOT_XTOL = 1e-9


def time_grid(t0, t1, step=GRID_STEP):
    n = max(1, int(np.ceil((t1 - t0) / step - 1e-12)))
    return np.linspace(t0, t1, n + 1)


def first_exceedance(func, t0, t1, level=0.0, step=GRID_STEP, xtol=ROOT_XTOL, grid=None):
    """First instant in (t0, t1] where ``func`` rises above ``level``, or None.

    ``func`` must accept arrays.  Sign changes are bracketed on a uniform
    grid and refined by bisection; an excursion shorter than one grid step
    that returns below ``level`` before the next grid point is missed.
    """
    if grid is None:
        grid = time_grid(t0, t1, step)
    values = np.asarray(func(grid), dtype=float) - level
    above = values > 0
    if above[0]:
        return float(t0)
    hits = np.flatnonzero(above)
    if hits.size == 0:
        return None
    i = hits[0]
    a, b = grid[i - 1], grid[i]
    return _bisect(lambda s: float(func(np.array([s]))[0]) - level, a, b, xtol)


def crossings(func, t0, t1, level=0.0, step=GRID_STEP, xtol=ROOT_XTOL):
    """All bracketed crossings of ``level`` in [t0, t1] as (t, direction).

    Direction is +1 when ``func`` rises through ``level`` and -1 otherwise.
    Touching ``level`` without a sign change is logged and ignored.
    """
    grid = time_grid(t0, t1, step)
    values = np.asarray(func(grid), dtype=float) - level
    sign = np.sign(values)
    out = []
    for i in range(len(grid) - 1):
        if sign[i] * sign[i + 1] < 0:
            direction = 1 if sign[i + 1] > 0 else -1
            root = _bisect(lambda s: direction * (float(func(np.array([s]))[0]) - level),
                           grid[i], grid[i + 1], xtol)
            out.append((root, direction))
        elif sign[i + 1] == 0 and 0 < i + 1 < len(grid) - 1 and sign[i] == sign[i + 2]:
            logger.debug("tangential contact at t=%.9g ignored", grid[i + 1])
    return out


def _bisect(g, a, b, xtol):
    ga, gb = g(a), g(b)
    if ga > 0:
        return float(a)
    if gb <= 0:
        raise RootIsolationFailure(f"no sign change in [{a}, {b}]")
    try:
        root = brentq(g, a, b, xtol=xtol, maxiter=200)
    except (RuntimeError, ValueError) as exc:
        raise RootIsolationFailure(str(exc)) from None
    return float(root)
