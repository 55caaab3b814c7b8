"""Regenerate the JSON system fixtures in this directory.

    python3 fixtures/generate.py
"""
from pathlib import Path

import numpy as np
from numpy.polynomial import Polynomial

from ctdispatch.model import LoadProfile, System, Unit, save_system

HERE = Path(__file__).resolve().parent


def smoothstep7(horizon):
    """Degree-7 monotone ramp from 0 to 1 over ``[0, horizon]``."""
    x = Polynomial([0.0, 1.0 / horizon])
    return -20 * x ** 7 + 70 * x ** 6 - 84 * x ** 5 + 35 * x ** 4


def twounit():
    """Cheap ramp-limited unit plus an expensive flexible unit.

    The load rises by 80 MW with a peak slope above the cheap unit's ramp
    rate, so the price goes 25 -> 30 -> 25 $/MWh.
    """
    load = 250.0 + 80.0 * smoothstep7(60.0)
    units = (Unit("Gen1", 25.0, 50.0, 400.0, 2.0, 2.0),
             Unit("Gen2", 30.0, 20.0, 250.0, 40.0, 40.0))
    return System(units, LoadProfile(tuple(load.coef), (0.0, 60.0)))


def constant():
    units = (Unit("Gen1", 25.0, 0.0, 200.0, 2.0, 2.0),
             Unit("Gen2", 30.0, 0.0, 200.0, 5.0, 5.0))
    return System(units, LoadProfile((150.0,), (0.0, 60.0)))


def overload():
    """Peak load above total capacity."""
    load = 250.0 + 200.0 * smoothstep7(60.0)
    units = (Unit("Gen1", 25.0, 0.0, 200.0, 2.0, 2.0),
             Unit("Gen2", 30.0, 0.0, 200.0, 5.0, 5.0))
    return System(units, LoadProfile(tuple(load.coef), (0.0, 60.0)))


def rts39():
    """39 cost-ordered units facing a one-hour load drop.

    Units 1-8 are cheap and stay at maximum output, units 9-16 share the
    ramping and units 17-39 are expensive with zero minimum output and
    stay offline.
    """
    units = []
    for k in range(8):
        units.append(Unit(f"Gen{k + 1}", 5.0 + k, 50.0, 200.0, 3.0, 3.0))
    for k in range(8):
        units.append(Unit(f"Gen{k + 9}", 20.0 + 2.0 * k, 20.0, 150.0, 3.0, 3.0))
    for k in range(23):
        units.append(Unit(f"Gen{k + 17}", 40.0 + k, 0.0, 100.0, 5.0, 5.0))
    t = np.linspace(0.0, 60.0, 241)
    shape = 1940.0 + 700.0 / (1.0 + np.exp((t - 30.0) / 12.0))
    fit = Polynomial.fit(t, shape, 12).convert()
    return System(tuple(units), LoadProfile(tuple(fit.coef), (0.0, 60.0)))


FIXTURES = {"twounit": twounit, "constant": constant, "overload": overload, "rts39": rts39}


def main():
    for name, build in FIXTURES.items():
        save_system(build(), HERE / f"{name}.json")
        print(f"wrote {name}.json")


if __name__ == "__main__":
    main()
