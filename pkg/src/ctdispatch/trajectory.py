"""Piecewise-affine generation and price trajectories over an updating range.

Within an updating range ``[S_u, T_u]`` with fixed boundary dispatch, the
dispatch at instant ``t`` for load level ``D`` is the two-parameter LP in
``theta = (t, D)``: merit order subject to capacity and to secant ramp
cones anchored at both range ends.  Tracing ``theta(t) = (t, D(t))``
through the critical regions yields segments on which
``x_k(t) = a_t t + a_D D(t) + b`` and ``lam(t) = p_t t + p_D D(t) + p_b``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (DegenerateRegion, InfeasibleDispatch, InfeasiblePoint, ParseError,
                     ValidationError)
from .lp_core import DEFAULT_TOL
from .model import load_from_dict, system_from_dict, system_to_dict
from .mplp import REGION_CAP, ParametricLP, build_region, explore_regions
from .roots import GRID_STEP, ROOT_XTOL, first_exceedance

logger = logging.getLogger(__name__)

ROW_KINDS = ("max_output", "min_output", "ramp_up", "ramp_down", "reach_end_low", "reach_end_high")
UPPER_ROWS = frozenset({"max_output", "ramp_up", "reach_end_high"})
CAPACITY_ROWS = frozenset({"max_output", "min_output"})
ROWS_PER_UNIT = len(ROW_KINDS)

BOUNDARY_TOL = 1e-6
CONTAIN_TOL = 1e-7
EXIT_LEVEL = 1e-10
MIN_SEGMENT = 1e-7
SNAP_TOL = 1e-6
PROBE_STEP = 0.01
MARGIN_FRACTION = 0.01
TRAJECTORY_FORMAT = "ctdispatch-trajectory"


def row_kind(row):
    """(unit index, kind) of inequality row ``row`` of the parametric model."""
    return row // ROWS_PER_UNIT, ROW_KINDS[row % ROWS_PER_UNIT]


@dataclass(frozen=True)
class UpdatingRange:
    s_u: float
    t_u: float
    boundary_start: np.ndarray
    boundary_end: np.ndarray

    def __post_init__(self):
        if not self.s_u < self.t_u:
            raise ValidationError(f"updating range: s_u={self.s_u} must be below t_u={self.t_u}")
        start = np.asarray(self.boundary_start, dtype=float).ravel()
        end = np.asarray(self.boundary_end, dtype=float).ravel()
        if start.shape != end.shape:
            raise ValidationError("updating range: boundary vectors differ in length")
        object.__setattr__(self, "s_u", float(self.s_u))
        object.__setattr__(self, "t_u", float(self.t_u))
        object.__setattr__(self, "boundary_start", start)
        object.__setattr__(self, "boundary_end", end)

    def validate(self, system, tol=BOUNDARY_TOL):
        """Check capacity and balance of both boundary vectors against ``system``."""
        if self.boundary_start.size != system.n_units:
            raise ValidationError("updating range: boundary vectors need one value per unit")
        load = system.load
        for name, t, x in (("boundary_start", self.s_u, self.boundary_start),
                           ("boundary_end", self.t_u, self.boundary_end)):
            if not (load.start - 1e-9 <= t <= load.end + 1e-9):
                raise ValidationError(f"updating range: {name} instant {t} outside horizon")
            if np.any(x < system.g_min - tol) or np.any(x > system.g_max + tol):
                raise ValidationError(f"updating range: {name} violates unit capacity")
            gap = abs(x.sum() - float(load.value(t)))
            if gap > tol * max(1.0, abs(float(load.value(t)))):
                raise ValidationError(f"updating range: {name} misses balance by {gap:.3g} MW")
        return self


def assemble_parametric_model(system, rng, margin_fraction=MARGIN_FRACTION):
    """Parametric dispatch LP of ``rng`` with ``theta = (t, D)``.

    Inequality rows come in blocks of six per unit, in the order of
    ``ROW_KINDS``; the single equality row is the power balance.
    """
    rng.validate(system)
    K = system.n_units
    S, T = rng.s_u, rng.t_u
    a, b = rng.boundary_start, rng.boundary_end
    ru, rd = system.ramp_up, system.ramp_down
    A_ie = np.zeros((ROWS_PER_UNIT * K, K))
    b_ie = np.zeros(ROWS_PER_UNIT * K)
    E_ie = np.zeros((ROWS_PER_UNIT * K, 2))
    labels = []
    for k, unit in enumerate(system.units):
        r = ROWS_PER_UNIT * k
        # G <= g_max ; -G <= -g_min
        A_ie[r, k], b_ie[r] = 1.0, unit.g_max
        A_ie[r + 1, k], b_ie[r + 1] = -1.0, -unit.g_min
        # G <= a + ru (t - S) ; -G <= -a + rd (t - S)
        A_ie[r + 2, k], b_ie[r + 2], E_ie[r + 2, 0] = 1.0, a[k] - ru[k] * S, ru[k]
        A_ie[r + 3, k], b_ie[r + 3], E_ie[r + 3, 0] = -1.0, -a[k] - rd[k] * S, rd[k]
        # -G <= -b + ru (T - t) ; G <= b + rd (T - t)
        A_ie[r + 4, k], b_ie[r + 4], E_ie[r + 4, 0] = -1.0, -b[k] + ru[k] * T, -ru[k]
        A_ie[r + 5, k], b_ie[r + 5], E_ie[r + 5, 0] = 1.0, b[k] + rd[k] * T, -rd[k]
        labels.extend(f"{unit.id}:{kind}" for kind in ROW_KINDS)
    d_lo, d_hi = system.load.extrema(S, T)
    margin = max(margin_fraction * (d_hi - d_lo), 1e-3 * max(1.0, d_hi))
    return ParametricLP(
        f=system.costs, A_eq=np.ones((1, K)), b_eq=np.zeros(1), E_eq=np.array([[0.0, 1.0]]),
        A_ie=A_ie, b_ie=b_ie, E_ie=E_ie,
        theta_domain=((S, T), (d_lo - margin, d_hi + margin)), row_labels=tuple(labels))


@dataclass(frozen=True)
class TrajectorySegment:
    t_start: float
    t_end: float
    region_index: int
    a_t: np.ndarray
    a_D: np.ndarray
    b: np.ndarray
    p_t: float
    p_D: float
    p_b: float
    active_set: tuple
    source_range: tuple = ()

    def generation(self, t, D):
        return self.a_t * t + self.a_D * D + self.b

    def price(self, t, D):
        return self.p_t * t + self.p_D * D + self.p_b

    @property
    def constant_price(self):
        return self.p_t == 0.0 and self.p_D == 0.0

    def to_dict(self):
        return {
            "t_start": self.t_start, "t_end": self.t_end, "region_index": self.region_index,
            "active_set": list(self.active_set), "source_range": list(self.source_range),
            "a_t": self.a_t.tolist(), "a_D": self.a_D.tolist(), "b": self.b.tolist(),
            "price": {"p_t": self.p_t, "p_D": self.p_D, "p_b": self.p_b},
        }

    @classmethod
    def from_dict(cls, data):
        price = data["price"]
        return cls(
            t_start=float(data["t_start"]), t_end=float(data["t_end"]),
            region_index=int(data["region_index"]),
            a_t=np.asarray(data["a_t"], dtype=float), a_D=np.asarray(data["a_D"], dtype=float),
            b=np.asarray(data["b"], dtype=float),
            p_t=float(price["p_t"]), p_D=float(price["p_D"]), p_b=float(price["p_b"]),
            active_set=tuple(int(j) for j in data["active_set"]),
            source_range=tuple(float(v) for v in data.get("source_range", ())))


@dataclass
class PiecewiseTrajectory:
    """Contiguous segments covering ``[start, end]`` for a fixed load."""

    segments: list
    load: object
    unit_ids: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.segments:
            raise ValidationError("trajectory needs at least one segment")
        for prev, nxt in zip(self.segments, self.segments[1:]):
            if prev.t_end != nxt.t_start:
                raise ValidationError(
                    f"segments do not abut at {prev.t_end} / {nxt.t_start}")
        for seg in self.segments:
            if not seg.t_start < seg.t_end:
                raise ValidationError(f"empty segment at {seg.t_start}")

    @property
    def start(self):
        return self.segments[0].t_start

    @property
    def end(self):
        return self.segments[-1].t_end

    @property
    def endpoints(self):
        return [self.segments[0].t_start] + [s.t_end for s in self.segments]

    def segment_index(self, t, side="left"):
        """Index of the segment governing instant ``t``.

        ``side="left"`` picks the segment ending at ``t`` when ``t`` is an
        interior endpoint; ``"right"`` picks the one starting there.
        """
        if t < self.start - 1e-9 or t > self.end + 1e-9:
            raise ValueError(f"t={t} outside trajectory span [{self.start}, {self.end}]")
        ends = np.array([s.t_end for s in self.segments])
        if side == "left":
            i = int(np.searchsorted(ends, t, side="left"))
        else:
            i = int(np.searchsorted(ends, t, side="right"))
        return min(i, len(self.segments) - 1)

    def generation(self, t, side="left"):
        seg = self.segments[self.segment_index(t, side)]
        return seg.generation(t, float(self.load.value(t)))

    def price(self, t, side="left"):
        """Price at ``t``; at a jump the left-hand limit is the adopted value."""
        seg = self.segments[self.segment_index(t, side)]
        return float(seg.price(t, float(self.load.value(t))))

    def sample(self, times):
        """Arrays (D, X, lam) at ``times`` using the left-limit convention."""
        times = np.asarray(times, dtype=float)
        D = np.asarray(self.load.value(times), dtype=float)
        X = np.zeros((times.size, len(self.segments[0].b)))
        lam = np.zeros(times.size)
        for i, t in enumerate(times):
            seg = self.segments[self.segment_index(t)]
            X[i] = seg.generation(t, D[i])
            lam[i] = seg.price(t, D[i])
        return D, X, lam

    def to_dict(self, system=None):
        out = {"format": TRAJECTORY_FORMAT, "version": 1}
        if system is not None:
            out["system"] = system_to_dict(system)
        else:
            out["load"] = {"coefficients": list(self.load.coefficients),
                           "horizon": list(self.load.horizon)}
        out["unit_ids"] = list(self.unit_ids)
        out["endpoints"] = self.endpoints
        out["segments"] = [s.to_dict() for s in self.segments]
        if self.meta:
            out["meta"] = self.meta
        return out


def trajectory_from_dict(data):
    """Rebuild a trajectory (and its embedded system, if any)."""
    if not isinstance(data, dict) or data.get("format") != TRAJECTORY_FORMAT:
        raise ParseError("not a trajectory document")
    try:
        system = None
        if "system" in data:
            system = system_from_dict(data["system"], screen=False)
            load = system.load
        else:
            load = load_from_dict(data["load"])
        segments = [TrajectorySegment.from_dict(s) for s in data["segments"]]
        traj = PiecewiseTrajectory(segments, load, tuple(data.get("unit_ids", ())),
                                   dict(data.get("meta", {})))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed trajectory: {exc}") from None
    return traj, system


def save_trajectory(traj, path, system=None):
    Path(path).write_text(json.dumps(traj.to_dict(system), indent=1) + "\n")


def load_trajectory(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return trajectory_from_dict(data)


# ---------------------------------------------------------------------------
# tracing


def _exit_time(region, load, t0, t1, grid_step, xtol):
    """Last instant in ``[t0, t1]`` before ``theta(t)`` leaves ``region``.

    The scan starts ``MIN_SEGMENT`` after ``t0`` so that round-off on the
    facet just crossed cannot end the segment before it starts.
    """
    H = region.halfspaces
    if t1 - t0 <= MIN_SEGMENT:
        return t0

    def violation(s):
        s = np.asarray(s, dtype=float)
        D = np.asarray(load.value(s), dtype=float)
        return (H[:, 0:1] * s + H[:, 1:2] * D - H[:, 2:3]).max(axis=0)

    start = t0 + MIN_SEGMENT
    exit_t = first_exceedance(violation, start, t1, level=EXIT_LEVEL, step=grid_step, xtol=xtol)
    if exit_t is None:
        return t1
    return t0 if exit_t == start else exit_t


def trace(system, rng, regions=None, plp=None, tol=DEFAULT_TOL, grid_step=GRID_STEP,
          xtol=ROOT_XTOL, explore="path", cap=REGION_CAP, perturb=None):
    """Trace ``theta(t) = (t, D(t))`` through the critical regions of ``rng``.

    ``regions`` (a list, extended in place) may be pre-explored; in
    ``explore="path"`` mode missing regions are built on demand along the
    path, in ``"full"`` mode the whole reachable partition is enumerated first.

    ``perturb`` is the random generator for degeneracy perturbations.

    Returns the segments; the trajectory is assembled by the caller.
    Raises InfeasibleDispatch when no feasible region continues the path.
    """
    load = system.load
    if plp is None:
        plp = assemble_parametric_model(system, rng)
    if regions is None:
        regions = []
    perturb = np.random.default_rng(0) if perturb is None else perturb
    S, T = rng.s_u, rng.t_u

    def theta(s):
        return np.array([s, float(load.value(s))])

    if explore == "full" and not regions:
        seed_t = S + min(PROBE_STEP, 0.5 * (T - S))
        try:
            regions.extend(explore_regions(plp, theta(seed_t), tol=tol, cap=cap, rng=perturb))
        except InfeasiblePoint:
            raise InfeasibleDispatch(f"no feasible dispatch near t={seed_t:.9g}") from None

    segments = []
    t = S
    while T - t > SNAP_TOL:
        best, best_exit = None, t
        for i, region in enumerate(regions):
            if region.margin(theta(t)) > CONTAIN_TOL:
                continue
            exit_t = _exit_time(region, load, t, T, grid_step, xtol)
            if exit_t > best_exit + MIN_SEGMENT:
                best, best_exit = i, exit_t
        if best is None:
            best, best_exit = _build_along_path(plp, regions, theta, t, T, load, tol,
                                                grid_step, xtol, perturb)
        if T - best_exit <= SNAP_TOL:
            best_exit = T
        region = regions[best]
        segments.append(TrajectorySegment(
            t_start=t, t_end=best_exit, region_index=best,
            a_t=region.A_x[:, 0].copy(), a_D=region.A_x[:, 1].copy(), b=region.B_x.copy(),
            p_t=float(region.A_lam[0, 0]), p_D=float(region.A_lam[0, 1]),
            p_b=float(region.B_lam[0]), active_set=region.active_set,
            source_range=(S, T)))
        t = best_exit
    if segments and segments[-1].t_end != T:
        last = segments[-1]
        segments[-1] = TrajectorySegment(**{**last.__dict__, "t_end": T})
    return segments


def _build_along_path(plp, regions, theta, t, T, load, tol, grid_step, xtol, perturb):
    delta = min(PROBE_STEP, T - t)
    while delta > 1e-9:
        probe = t + delta
        try:
            region = build_region(plp, theta(probe), tol, index=len(regions), rng=perturb)
        except InfeasiblePoint:
            delta *= 0.5
            continue
        except DegenerateRegion as exc:
            logger.debug("degenerate region at t=%.9g: %s", probe, exc)
            delta *= 0.5
            continue
        if region.margin(theta(t)) <= CONTAIN_TOL:
            exit_t = _exit_time(region, load, t, T, grid_step, xtol)
            if exit_t > t + MIN_SEGMENT:
                regions.append(region)
                return len(regions) - 1, exit_t
        delta *= 0.5
    raise InfeasibleDispatch(f"dispatch path leaves the feasible parameter set at t={t:.9g}")
