"""Domain data: units, load profiles and the dispatch system.

Units of measure are fixed across the package: time in minutes, power in
MW, ramp rates in MW/min, costs and prices in $/MWh.  Integrals of
``price * power`` over minutes are divided by 60 to obtain dollars.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import Polynomial

from .errors import CapacityShortfall, OutOfHorizon, ParseError, ValidationError

MAX_LOAD_DEGREE = 16
HORIZON_TOL = 1e-9
MINUTES_PER_HOUR = 60.0


@dataclass(frozen=True)
class Unit:
    """One committed generator with a linear cost.

    ``ramp_down`` is a positive magnitude: the unit may decrease output
    by at most ``ramp_down`` MW per minute.
    """

    id: str
    marginal_cost: float
    g_min: float
    g_max: float
    ramp_up: float
    ramp_down: float

    def __post_init__(self):
        for name in ("marginal_cost", "g_min", "g_max", "ramp_up", "ramp_down"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValidationError(f"unit {self.id!r}: {name} must be a finite number")
            object.__setattr__(self, name, float(value))
        if self.g_min > self.g_max:
            raise ValidationError(f"unit {self.id!r}: g_min exceeds g_max")
        if self.ramp_up <= 0:
            raise ValidationError(f"unit {self.id!r}: ramp_up must be positive")
        if self.ramp_down <= 0:
            raise ValidationError(f"unit {self.id!r}: ramp_down must be positive")
        if self.marginal_cost < 0:
            raise ValidationError(f"unit {self.id!r}: marginal_cost must be non-negative")


@dataclass(frozen=True)
class LoadProfile:
    """Polynomial load ``D(t)``; coefficients in ascending powers of t."""

    coefficients: tuple
    horizon: tuple

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        if not coeffs:
            raise ValidationError("load: coefficients must not be empty")
        if not all(math.isfinite(c) for c in coeffs):
            raise ValidationError("load: coefficients must be finite")
        if len(coeffs) - 1 > MAX_LOAD_DEGREE:
            raise ValidationError(f"load: degree exceeds {MAX_LOAD_DEGREE}")
        if len(self.horizon) != 2:
            raise ValidationError("load: horizon must be [S, T]")
        start, end = (float(v) for v in self.horizon)
        if not (math.isfinite(start) and math.isfinite(end)) or start >= end:
            raise ValidationError("load: horizon requires S < T")
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "horizon", (start, end))
        lo = self.extrema()[0]
        if lo <= 0:
            raise ValidationError("load: D(t) must stay positive over the horizon")

    @property
    def start(self):
        return self.horizon[0]

    @property
    def end(self):
        return self.horizon[1]

    @property
    def polynomial(self):
        return Polynomial(self.coefficients)

    def value(self, t):
        return np.polynomial.polynomial.polyval(t, self.coefficients)

    __call__ = value

    def derivative(self, t):
        return self.polynomial.deriv()(t)

    def pieces(self):
        """Polynomial pieces ``(t0, t1, Polynomial)`` covering the horizon."""
        return [(self.start, self.end, self.polynomial)]

    def breakpoints(self):
        return []

    def extrema(self, t0=None, t1=None):
        """Exact (min, max) of D over ``[t0, t1]`` from derivative roots."""
        t0 = self.start if t0 is None else t0
        t1 = self.end if t1 is None else t1
        return poly_extrema(self.polynomial, t0, t1)


@dataclass(frozen=True)
class BumpedLoad:
    """A load profile plus a polynomial bump supported on ``window``.

    Used for perturbation analysis; piecewise polynomial with breakpoints
    at the window edges.  The middle piece is expressed in the bump's own
    domain so that a bump centred far from t = 0 keeps its precision.
    """

    base: LoadProfile
    window: tuple
    bump: Polynomial = field(compare=False)

    @property
    def horizon(self):
        return self.base.horizon

    @property
    def start(self):
        return self.base.start

    @property
    def end(self):
        return self.base.end

    def _inside(self, t):
        return (t > self.window[0]) & (t < self.window[1])

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = self.base.value(t) + np.where(self._inside(t), self.bump(t), 0.0)
        return out if out.ndim else float(out)

    __call__ = value

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        out = self.base.derivative(t) + np.where(self._inside(t), self.bump.deriv()(t), 0.0)
        return out if out.ndim else float(out)

    def pieces(self):
        p = self.base.polynomial
        w0, w1 = self.window
        local = p.convert(domain=self.bump.domain, window=self.bump.window)
        return [(self.start, w0, p), (w0, w1, local + self.bump), (w1, self.end, p)]

    def breakpoints(self):
        return list(self.window)

    def extrema(self, t0=None, t1=None):
        t0 = self.start if t0 is None else t0
        t1 = self.end if t1 is None else t1
        lo, hi = math.inf, -math.inf
        for a, b, poly in self.pieces():
            a, b = max(a, t0), min(b, t1)
            if a <= b:
                pl, ph = poly_extrema(poly, a, b)
                lo, hi = min(lo, pl), max(hi, ph)
        return lo, hi


def poly_extrema(poly, t0, t1):
    """Minimum and maximum of a polynomial on ``[t0, t1]``."""
    if t1 <= t0:
        value = float(poly(t0))
        return value, value
    candidates = [t0, t1]
    # work on [t0, t1] mapped to [-1, 1] so that trimming compares contributions
    deriv = poly.convert(domain=[t0, t1], window=[-1.0, 1.0]).deriv()
    deriv = deriv.trim(1e-14 * max(np.abs(deriv.coef).max(), 1e-300))
    if deriv.degree() > 0:
        for r in deriv.roots():
            if abs(r.imag) < 1e-9 and t0 < r.real < t1:
                candidates.append(r.real)
    values = poly(np.array(candidates))
    return float(values.min()), float(values.max())


@dataclass(frozen=True)
class System:
    """Committed units (order fixes the index k) and the load profile."""

    units: tuple
    load: object

    def __post_init__(self):
        units = tuple(self.units)
        if not units:
            raise ValidationError("units: at least one unit is required")
        ids = [u.id for u in units]
        if len(set(ids)) != len(ids):
            raise ValidationError("units: ids must be unique")
        object.__setattr__(self, "units", units)

    @property
    def n_units(self):
        return len(self.units)

    @property
    def horizon(self):
        return self.load.horizon

    @property
    def costs(self):
        return np.array([u.marginal_cost for u in self.units])

    @property
    def g_min(self):
        return np.array([u.g_min for u in self.units])

    @property
    def g_max(self):
        return np.array([u.g_max for u in self.units])

    @property
    def ramp_up(self):
        return np.array([u.ramp_up for u in self.units])

    @property
    def ramp_down(self):
        return np.array([u.ramp_down for u in self.units])

    def with_load(self, load):
        return System(self.units, load)


def capacity_screen(system):
    """Static check that committed capacity brackets the load.

    Ramping feasibility is left to the solvers.
    """
    lo, hi = system.load.extrema()
    if system.g_max.sum() < hi:
        raise CapacityShortfall(
            f"units: total g_max {system.g_max.sum():.6g} MW below peak load {hi:.6g} MW")
    if system.g_min.sum() > lo:
        raise CapacityShortfall(
            f"units: total g_min {system.g_min.sum():.6g} MW above minimum load {lo:.6g} MW")


def eval_load(load, t):
    """D(t), refusing instants outside the horizon."""
    _check_horizon(load, t)
    return float(load.value(t))


def eval_load_derivative(load, t):
    """D'(t) from the exact polynomial derivative."""
    _check_horizon(load, t)
    return float(load.derivative(t))


def _check_horizon(load, t):
    start, end = load.horizon
    if not (start - HORIZON_TOL <= t <= end + HORIZON_TOL):
        raise OutOfHorizon(f"t={t} outside horizon [{start}, {end}]")


_UNIT_KEYS = ("id", "marginal_cost", "g_min", "g_max", "ramp_up", "ramp_down")


def system_from_dict(data, screen=True):
    if not isinstance(data, dict) or "units" not in data or "load" not in data:
        raise ParseError("system file needs top-level 'units' and 'load'")
    units = []
    for i, raw in enumerate(data["units"]):
        if not isinstance(raw, dict):
            raise ParseError(f"units[{i}] must be an object")
        missing = [k for k in _UNIT_KEYS if k not in raw]
        if missing:
            raise ParseError(f"units[{i}] missing keys {missing}")
        units.append(Unit(str(raw["id"]), *(raw[k] for k in _UNIT_KEYS[1:])))
    load = data["load"]
    if not isinstance(load, dict) or "coefficients" not in load or "horizon" not in load:
        raise ParseError("load needs 'coefficients' and 'horizon'")
    system = System(tuple(units), load_from_dict(load))
    if screen:
        capacity_screen(system)
    return system


def load_from_dict(data):
    try:
        return LoadProfile(tuple(data["coefficients"]), tuple(data["horizon"]))
    except TypeError as exc:
        raise ParseError(f"load: {exc}") from None


def load_to_dict(load):
    return {"coefficients": list(load.coefficients), "horizon": list(load.horizon)}


def system_to_dict(system):
    return {
        "units": [{k: getattr(u, k) for k in _UNIT_KEYS} for u in system.units],
        "load": load_to_dict(system.load),
    }


def load_system(path, screen=True):
    """Read and validate a JSON system file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return system_from_dict(data, screen=screen)


def save_system(system, path):
    Path(path).write_text(json.dumps(system_to_dict(system), indent=2) + "\n")
