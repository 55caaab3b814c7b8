"""Iterative construction of continuous-time dispatch and price trajectories.

Starting from the hourly dispatch, each iteration re-traces the updating
ranges with boundary values taken from the latest adaptive dispatch, adds
the region-crossing instants as endpoints, verifies the result and narrows
the next updating ranges to the stretches that failed a check.
"""
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible, InfeasibleDispatch, MaxIterationsExceeded
from .lp_core import DEFAULT_TOL
from .model import MINUTES_PER_HOUR
from .mplp import REGION_CAP
from .roots import GRID_STEP
from .trajectory import PiecewiseTrajectory, UpdatingRange, assemble_parametric_model, trace
from .verifier import (DEDUP_TOL, MISMATCH_TOL, PRICE_TOL, adaptive_dispatch, dedup_instants,
                       hourly_dispatch, verify)

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 200
MIN_SPLIT = 1e-3


@dataclass(frozen=True)
class SolveConfig:
    mismatch_tol: float = MISMATCH_TOL
    price_tol: float = PRICE_TOL
    grid_step: float = GRID_STEP
    max_iterations: int = MAX_ITERATIONS
    region_cap: int = REGION_CAP
    lp_tol: float = DEFAULT_TOL
    explore: str = "path"
    forced_endpoints: tuple = ()
    lp_method: str = "auto"
    min_split: float = MIN_SPLIT
    seed: int = 0

    def __post_init__(self):
        for name in ("mismatch_tol", "price_tol", "grid_step", "max_iterations", "region_cap",
                     "lp_tol", "min_split"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.explore not in ("path", "full"):
            raise ValueError("explore must be 'path' or 'full'")


@dataclass
class IterationRecord:
    iteration: int
    ranges: list
    new_endpoints: list
    max_mismatch: float
    n_endpoints: int
    ramp_violations: int
    price_inconsistencies: int


@dataclass
class IterationState:
    iteration: int
    endpoints: list
    dispatch: object
    ranges: list
    segments: dict = field(default_factory=dict)
    log: list = field(default_factory=list)
    terminal: np.ndarray = None
    traced: dict = field(default_factory=dict)

    def trajectory(self, load, unit_ids=()):
        segs = [s for t in self.endpoints[:-1] for s in self.segments[t]]
        return PiecewiseTrajectory(segs, load, tuple(unit_ids))


@dataclass
class FinalSolution:
    trajectory: PiecewiseTrajectory
    endpoints: list
    dispatch: object
    report: object
    log: list
    iterations: int
    cost: float
    elapsed: float = 0.0
    updating_ranges: dict = field(default_factory=dict)

    def range_of(self, segment):
        """UpdatingRange whose parametric model produced ``segment``."""
        return self.updating_ranges[tuple(segment.source_range)]


def initialize(system, config=SolveConfig()):
    """Hourly dispatch at the horizon ends and a single updating range."""
    S, T = system.horizon
    try:
        hourly = hourly_dispatch(system, method=config.lp_method)
    except Infeasible as exc:
        raise InfeasibleDispatch(f"hourly dispatch is infeasible: {exc}") from None
    endpoints = [S] + dedup_instants([t for t in config.forced_endpoints if S < t < T], [S, T]) + [T]
    terminal = hourly.X[-1].copy()
    if len(endpoints) > 2:
        dispatch = _dispatch(system, endpoints, terminal, config)
    else:
        dispatch = hourly
    return IterationState(iteration=0, endpoints=endpoints, dispatch=dispatch,
                          ranges=[(S, T)], terminal=terminal)


def _dispatch(system, endpoints, terminal, config):
    try:
        return adaptive_dispatch(system, endpoints, pinned={len(endpoints) - 1: terminal},
                                 method=config.lp_method, tol=config.lp_tol)
    except Infeasible as exc:
        raise InfeasibleDispatch(f"adaptive dispatch is infeasible: {exc}") from None


def step(system, state, config=SolveConfig()):
    """One trace-and-verify pass over the current updating ranges.

    Returns ``(trajectory, report)``.  When the traced path of an endpoint
    interval is infeasible for its boundary values, the interval is split at
    its midpoint instead and ``(None, None)`` is returned; the next pass
    re-traces the same ranges on the refined endpoint set.
    """
    state.iteration += 1
    ends = state.endpoints
    traced_ranges = list(state.ranges)
    X = state.dispatch.X
    perturb = np.random.default_rng(config.seed)
    crossings, splits = [], []
    for s_u, t_u in state.ranges:
        for n in range(len(ends) - 1):
            if not (s_u - DEDUP_TOL <= ends[n] and ends[n + 1] <= t_u + DEDUP_TOL):
                continue
            rng = UpdatingRange(ends[n], ends[n + 1], X[n], X[n + 1])
            plp = assemble_parametric_model(system, rng)
            try:
                segs = trace(system, rng, plp=plp, tol=config.lp_tol,
                             grid_step=config.grid_step, explore=config.explore,
                             cap=config.region_cap, perturb=perturb)
            except InfeasibleDispatch:
                if ends[n + 1] - ends[n] < 2 * config.min_split:
                    raise
                logger.debug("splitting [%.9g, %.9g]: traced path infeasible", ends[n], ends[n + 1])
                splits.append(0.5 * (ends[n] + ends[n + 1]))
                continue
            state.segments[ends[n]] = segs
            state.traced[(ends[n], ends[n + 1])] = rng
            crossings.extend(s.t_end for s in segs[:-1])

    if splits:
        refined = sorted(set(ends) | set(splits))
        state.endpoints = refined
        state.dispatch = _dispatch(system, refined, state.terminal, config)
        state.segments = {t: [] for t in refined[:-1]}
        state.log.append(IterationRecord(
            iteration=state.iteration, ranges=traced_ranges, new_endpoints=sorted(splits),
            max_mismatch=float("nan"), n_endpoints=len(refined), ramp_violations=0,
            price_inconsistencies=0))
        return None, None

    # endpoints of the traced trajectory: old endpoints plus region crossings
    expanded = sorted(set(ends) | set(crossings))
    segments = {}
    for n in range(len(ends) - 1):
        for seg in state.segments[ends[n]]:
            segments[seg.t_start] = [seg]
    traj = PiecewiseTrajectory([segments[t][0] for t in expanded[:-1]], system.load,
                               tuple(u.id for u in system.units))
    dispatch = _dispatch(system, expanded, state.terminal, config)
    report = verify(system, traj, dispatch=dispatch, mismatch_tol=config.mismatch_tol,
                    price_tol=config.price_tol, grid_step=config.grid_step)

    final = sorted(set(expanded) | set(report.new_endpoints))
    state.endpoints = final
    state.segments = _split_segments(segments, final)
    state.dispatch = dispatch if final == expanded else _dispatch(system, final, state.terminal,
                                                                  config)
    state.ranges = _next_ranges(final, report)
    state.log.append(IterationRecord(
        iteration=state.iteration, ranges=traced_ranges,
        new_endpoints=[t for t in final if t not in set(ends)],
        max_mismatch=report.max_mismatch, n_endpoints=len(final),
        ramp_violations=len(report.ramp_violations),
        price_inconsistencies=len(report.price_inconsistencies)))
    return traj, report


def _split_segments(segments, endpoints):
    """Group segments by the endpoint interval they start in.

    Segments straddling a newly inserted endpoint are kept whole; their
    interval is always re-traced in the next iteration.
    """
    out = {t: [] for t in endpoints[:-1]}
    starts = sorted(segments)
    for t0 in starts:
        seg = segments[t0][0]
        i = int(np.searchsorted(endpoints, seg.t_start, side="right")) - 1
        out[endpoints[i]].append(seg)
    return out


def _next_ranges(endpoints, report):
    """Maximal unions of endpoint intervals touched by a failed check."""
    n_int = len(endpoints) - 1
    dirty = np.zeros(n_int, dtype=bool)
    bad = set(report.mismatched_instants())
    for n, t in enumerate(endpoints):
        if t in bad:
            if n > 0:
                dirty[n - 1] = True
            if n < n_int:
                dirty[n] = True
    for t in list(report.new_endpoints) + list(report.flagged_instants):
        i = int(np.searchsorted(endpoints, t, side="right")) - 1
        i = min(max(i, 0), n_int - 1)
        dirty[i] = True
        if t in set(report.new_endpoints) and i > 0:
            dirty[i - 1] = True
    ranges = []
    n = 0
    while n < n_int:
        if dirty[n]:
            m = n
            while m + 1 < n_int and dirty[m + 1]:
                m += 1
            ranges.append((endpoints[n], endpoints[m + 1]))
            n = m + 1
        else:
            n += 1
    return ranges


def run(system, config=SolveConfig(), state=None):
    """Iterate until every check passes.

    Raises
    ------
    InfeasibleDispatch
        The hourly or adaptive dispatch, or a traced path, is infeasible.
    MaxIterationsExceeded
        ``config.max_iterations`` passes without convergence; the last
        state is attached.
    """
    started = time.perf_counter()
    if state is None:
        state = initialize(system, config)
    while True:
        if state.iteration >= config.max_iterations:
            raise MaxIterationsExceeded(
                f"no convergence after {state.iteration} iterations", state=state)
        traj, report = step(system, state, config)
        rec = state.log[-1]
        logger.info("iteration %d ranges=%s new=%d endpoints=%d max_mismatch=%.3g",
                    rec.iteration, _fmt_ranges(rec.ranges), len(rec.new_endpoints),
                    rec.n_endpoints, rec.max_mismatch)
        if report is not None and report.converged and not report.new_endpoints:
            break
    return FinalSolution(trajectory=traj, endpoints=list(traj.endpoints), dispatch=state.dispatch,
                         report=report, log=state.log, iterations=state.iteration,
                         cost=trajectory_cost(traj, system.costs),
                         elapsed=time.perf_counter() - started,
                         updating_ranges=dict(state.traced))


def _fmt_ranges(ranges):
    return "[" + ", ".join(f"[{a:.6g}, {b:.6g}]" for a, b in ranges) + "]"


def segment_integrals(seg, load, lo=None, hi=None):
    """Exact integrals of each unit's output over ``seg`` (or its part
    within ``[lo, hi]``) in MW*min."""
    lo = seg.t_start if lo is None else max(lo, seg.t_start)
    hi = seg.t_end if hi is None else min(hi, seg.t_end)
    total = np.zeros_like(seg.b)
    for p0, p1, poly in load.pieces():
        a, b = max(p0, lo), min(p1, hi)
        if a >= b:
            continue
        anti = poly.integ()
        total += (0.5 * seg.a_t * (b ** 2 - a ** 2) + seg.a_D * (anti(b) - anti(a))
                  + seg.b * (b - a))
    return total


def cost_difference(traj_a, traj_b, costs):
    """Cost of ``traj_b`` minus cost of ``traj_a`` in dollars.

    Accumulated piece by piece over the common refinement of both endpoint
    sets, so identical stretches cancel exactly instead of leaving the
    round-off of two large totals.
    """
    cuts = np.union1d(traj_a.endpoints, traj_b.endpoints)
    costs = np.asarray(costs)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b)
        sa = traj_a.segments[traj_a.segment_index(mid)]
        sb = traj_b.segments[traj_b.segment_index(mid)]
        ea = segment_integrals(sa, traj_a.load, a, b)
        eb = segment_integrals(sb, traj_b.load, a, b)
        total += float(costs @ (eb - ea))
    return total / MINUTES_PER_HOUR


def trajectory_cost(traj, costs):
    """Production cost of ``traj`` in dollars."""
    energy = sum(segment_integrals(seg, traj.load) for seg in traj.segments)
    return float(np.asarray(costs) @ energy) / MINUTES_PER_HOUR
