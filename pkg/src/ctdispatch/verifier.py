"""Checks of a piecewise trajectory against discrete dispatch and unit limits.

The adaptive dispatch is the discrete-time LP over an arbitrary sorted set
of endpoints, with secant ramp limits between consecutive endpoints and
interval-length weights on the cost.  A continuous trajectory is accepted
when it matches the adaptive dispatch at every endpoint, respects the ramp
rates at every instant and prices every segment at its marginal unit's cost.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import EndpointSetMismatch
from .lp_core import DEFAULT_TOL, LinearProgram, solve_lp
from .model import MINUTES_PER_HOUR
from .roots import GRID_STEP, ROOT_XTOL, first_exceedance
from .trajectory import CAPACITY_ROWS, UPPER_ROWS, row_kind

logger = logging.getLogger(__name__)

MISMATCH_TOL = 1e-3
PRICE_TOL = 1e-6
RAMP_TOL = 1e-7
DEDUP_TOL = 1e-6
ENDPOINT_MATCH_TOL = 1e-9


@dataclass
class AdaptiveDispatch:
    """Solution of the dispatch LP over ``endpoints``.

    ``multipliers`` are the raw balance duals (NaN at pinned endpoints);
    ``prices`` divides them by the cost weight to give $/MWh.
    """

    endpoints: np.ndarray
    X: np.ndarray
    multipliers: np.ndarray
    weights: np.ndarray
    objective: float
    method: str = ""

    @property
    def prices(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.weights > 0, self.multipliers / self.weights, np.nan)

    @property
    def cost(self):
        """Objective in dollars."""
        return self.objective / MINUTES_PER_HOUR


def interval_weights(endpoints, terminal_weight=0.0):
    t = np.asarray(endpoints, dtype=float)
    return np.append(np.diff(t), terminal_weight)


def adaptive_dispatch(system, endpoints, pinned=None, weights=None, terminal_weight=0.0,
                      method="auto", tol=DEFAULT_TOL):
    """Joint dispatch LP at ``endpoints`` with secant ramp limits.

    Parameters
    ----------
    system : System
    endpoints : sequence of float
        Strictly increasing instants within the horizon.
    pinned : dict, optional
        Maps endpoint position to a fixed dispatch vector; pinned
        endpoints carry no balance row and report a NaN multiplier.
    weights : sequence of float, optional
        Cost weight per endpoint; defaults to the following interval
        length with ``terminal_weight`` on the last endpoint.

    Raises
    ------
    Infeasible
        Propagated from the LP solver with its certificate.
    """
    t = np.asarray(endpoints, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(np.diff(t) <= 0):
        raise ValueError("endpoints must be strictly increasing")
    pinned = {} if pinned is None else {int(k): np.asarray(v, dtype=float) for k, v in pinned.items()}
    N, K = t.size, system.n_units
    w = interval_weights(t, terminal_weight) if weights is None else np.asarray(weights, dtype=float)
    D = np.asarray(system.load.value(t), dtype=float).reshape(N)
    n_var = N * K
    f = np.kron(w, system.costs)

    eq_rows, eq_cols, eq_vals, b_eq = [], [], [], []
    balance_row = {}
    for n in range(N):
        if n in pinned:
            for k in range(K):
                eq_rows.append(len(b_eq))
                eq_cols.append(n * K + k)
                eq_vals.append(1.0)
                b_eq.append(pinned[n][k])
            continue
        balance_row[n] = len(b_eq)
        eq_rows.extend([len(b_eq)] * K)
        eq_cols.extend(range(n * K, n * K + K))
        eq_vals.extend([1.0] * K)
        b_eq.append(D[n])

    ie_rows, ie_cols, ie_vals, b_ie = [], [], [], []

    def add(cols, vals, rhs):
        r = len(b_ie)
        ie_rows.extend([r] * len(cols))
        ie_cols.extend(cols)
        ie_vals.extend(vals)
        b_ie.append(rhs)

    ru, rd = system.ramp_up, system.ramp_down
    for n in range(N):
        for k, unit in enumerate(system.units):
            j = n * K + k
            add([j], [1.0], unit.g_max)
            add([j], [-1.0], -unit.g_min)
    for n in range(N - 1):
        dt = t[n + 1] - t[n]
        for k in range(K):
            j0, j1 = n * K + k, (n + 1) * K + k
            add([j1, j0], [1.0, -1.0], ru[k] * dt)
            add([j0, j1], [1.0, -1.0], rd[k] * dt)

    A_eq = sp.csr_array((eq_vals, (eq_rows, eq_cols)), shape=(len(b_eq), n_var))
    A_ie = sp.csr_array((ie_vals, (ie_rows, ie_cols)), shape=(len(b_ie), n_var))
    lp = LinearProgram(f, A_eq, np.array(b_eq), A_ie, np.array(b_ie))
    sol = solve_lp(lp, tol=tol, method=method)
    X = sol.x.reshape(N, K)
    multipliers = np.full(N, np.nan)
    for n, r in balance_row.items():
        multipliers[n] = sol.lam[r]
    return AdaptiveDispatch(endpoints=t, X=X, multipliers=multipliers, weights=w,
                            objective=float(sol.objective), method=sol.method)


def hourly_dispatch(system, method="auto"):
    """Dispatch at the horizon ends, both weighted by the horizon length."""
    S, T = system.horizon
    return adaptive_dispatch(system, [S, T], terminal_weight=T - S, method=method)


# ---------------------------------------------------------------------------
# report types


@dataclass
class EndpointMismatch:
    t: float
    left: object
    right: object

    @property
    def magnitude(self):
        parts = [np.abs(v).max() for v in (self.left, self.right) if v is not None]
        return float(max(parts)) if parts else 0.0


@dataclass
class RampViolation:
    unit: str
    instant: float
    derivative: float
    bound: float
    segment: int


@dataclass
class PriceInconsistency:
    instant: float
    price: float
    expected: float
    unit: object
    segment: int


@dataclass
class VerificationReport:
    endpoint_mismatches: list
    ramp_violations: list
    price_inconsistencies: list
    new_endpoints: list
    mismatch_tol: float = MISMATCH_TOL
    flagged_instants: list = field(default_factory=list)

    @property
    def max_mismatch(self):
        return max((m.magnitude for m in self.endpoint_mismatches), default=0.0)

    @property
    def converged(self):
        return (self.max_mismatch < self.mismatch_tol and not self.ramp_violations
                and not self.price_inconsistencies)

    def mismatched_instants(self):
        return [m.t for m in self.endpoint_mismatches if m.magnitude >= self.mismatch_tol]

    def to_dict(self):
        def vec(v):
            return None if v is None else [float(x) for x in v]
        return {
            "converged": self.converged,
            "max_mismatch": self.max_mismatch,
            "mismatch_tol": self.mismatch_tol,
            "endpoint_mismatches": [{"t": m.t, "left": vec(m.left), "right": vec(m.right)}
                                    for m in self.endpoint_mismatches],
            "ramp_violations": [vars(v) for v in self.ramp_violations],
            "price_inconsistencies": [vars(p) for p in self.price_inconsistencies],
            "new_endpoints": list(self.new_endpoints),
        }

    def format_table(self, fmt=".9g"):
        lines = [f"converged: {'yes' if self.converged else 'no'}",
                 f"max endpoint mismatch: {format(self.max_mismatch, fmt)} MW "
                 f"(tolerance {format(self.mismatch_tol, fmt)})",
                 "endpoint              |delta| MW"]
        for m in self.endpoint_mismatches:
            lines.append(f"{format(m.t, fmt):>20}  {format(m.magnitude, fmt)}")
        lines.append(f"ramp violations: {len(self.ramp_violations)}")
        for v in self.ramp_violations:
            lines.append(f"  unit {v.unit} at t={format(v.instant, fmt)}: "
                         f"dx/dt={format(v.derivative, fmt)} bound={format(v.bound, fmt)}")
        lines.append(f"price inconsistencies: {len(self.price_inconsistencies)}")
        for p in self.price_inconsistencies:
            lines.append(f"  t={format(p.instant, fmt)}: price {format(p.price, fmt)} "
                         f"expected {p.expected} (unit {p.unit})")
        if self.new_endpoints:
            lines.append("new endpoints: " + ", ".join(format(t, fmt) for t in self.new_endpoints))
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# checks


def check_continuity(traj, dispatch):
    """Per-endpoint differences between dispatch and the adjacent segments.

    At each endpoint the left value compares with the segment ending there
    and the right value with the segment starting there; the horizon ends
    have one side only.
    """
    ends = np.asarray(traj.endpoints, dtype=float)
    t = np.asarray(dispatch.endpoints, dtype=float)
    if ends.size != t.size or np.abs(ends - t).max() > ENDPOINT_MATCH_TOL:
        raise EndpointSetMismatch(
            f"trajectory has {ends.size} endpoints, dispatch has {t.size}")
    out = []
    D = np.asarray(traj.load.value(t), dtype=float)
    segs = traj.segments
    for n, tn in enumerate(t):
        left = dispatch.X[n] - segs[n - 1].generation(tn, D[n]) if n > 0 else None
        right = dispatch.X[n] - segs[n].generation(tn, D[n]) if n < len(segs) else None
        out.append(EndpointMismatch(float(tn), left, right))
    return out


def check_ramping(traj, system, grid_step=GRID_STEP, xtol=ROOT_XTOL, tol=RAMP_TOL):
    """First instant per segment and unit where dx_k/dt leaves [-rd, ru]."""
    load = traj.load
    violations = []
    for s, seg in enumerate(traj.segments):
        for k, unit in enumerate(system.units):
            a_t, a_D = seg.a_t[k], seg.a_D[k]

            def rate(tt, a_t=a_t, a_D=a_D):
                return a_t + a_D * np.asarray(load.derivative(tt), dtype=float)

            hits = []
            up = first_exceedance(rate, seg.t_start, seg.t_end, level=unit.ramp_up + tol,
                                  step=grid_step, xtol=xtol)
            if up is not None:
                hits.append((up, unit.ramp_up))
            down = first_exceedance(lambda tt: -rate(tt), seg.t_start, seg.t_end,
                                    level=unit.ramp_down + tol, step=grid_step, xtol=xtol)
            if down is not None:
                hits.append((down, -unit.ramp_down))
            for instant, bound in hits:
                # an exceedance confined to the closing instant is round-off, not a subinterval
                if instant > seg.t_end - DEDUP_TOL:
                    continue
                # sample just past the crossing so the reported rate is on the violated side
                probe = min(instant + xtol, seg.t_end)
                violations.append(RampViolation(unit.id, float(instant),
                                                float(rate(np.array([probe]))[0]), bound, s))
    violations.sort(key=lambda v: (v.instant, v.unit))
    return violations


def marginal_candidates(active_set, n_units):
    """Units free to absorb an upward load change given ``active_set``."""
    blocked = set()
    for row in active_set:
        k, kind = row_kind(row)
        if kind in CAPACITY_ROWS or kind in UPPER_ROWS:
            blocked.add(k)
    return [k for k in range(n_units) if k not in blocked]


def check_price_consistency(traj, system, price_tol=PRICE_TOL):
    """Compare each segment's price with its marginal unit's cost."""
    load = traj.load
    costs = system.costs
    issues = []
    for s, seg in enumerate(traj.segments):
        candidates = marginal_candidates(seg.active_set, system.n_units)
        if candidates:
            k = min(candidates, key=lambda j: (costs[j], j))
            expected, unit = float(costs[k]), system.units[k].id
        else:
            expected, unit = float("nan"), None
        mid = 0.5 * (seg.t_start + seg.t_end)
        for tt in (seg.t_start, mid, seg.t_end):
            price = float(seg.price(tt, float(load.value(tt))))
            if not candidates or abs(price - expected) > price_tol:
                issues.append(PriceInconsistency(float(tt), price, expected, unit, s))
                break
        if not seg.constant_price and (abs(seg.p_t) > price_tol or abs(seg.p_D) > price_tol):
            issues.append(PriceInconsistency(mid, float(seg.price(mid, float(load.value(mid)))),
                                             expected, unit, s))
    return issues


def dedup_instants(candidates, existing, tol=DEDUP_TOL):
    """Sorted ``candidates`` farther than ``tol`` from ``existing`` and each other."""
    kept = []
    pool = sorted(existing)
    for t in sorted(candidates):
        if any(abs(t - e) <= tol for e in pool):
            continue
        kept.append(float(t))
        pool.append(float(t))
        pool.sort()
    return kept


def verify(system, traj, dispatch=None, pinned_end=None, mismatch_tol=MISMATCH_TOL,
           price_tol=PRICE_TOL, grid_step=GRID_STEP, method="auto"):
    """Run every check on ``traj``.

    Without ``dispatch`` the adaptive dispatch is solved on the trajectory's
    endpoints, pinning the final instant to ``pinned_end`` or, if absent,
    to the hourly dispatch.
    """
    if dispatch is None:
        if pinned_end is None:
            pinned_end = hourly_dispatch(system, method=method).X[-1]
        ends = traj.endpoints
        dispatch = adaptive_dispatch(system, ends, pinned={len(ends) - 1: pinned_end},
                                     method=method)
    mismatches = check_continuity(traj, dispatch)
    ramps = check_ramping(traj, system, grid_step=grid_step)
    prices = check_price_consistency(traj, system, price_tol=price_tol)
    proposed = [v.instant for v in ramps] + [p.instant for p in prices]
    new = dedup_instants(proposed, traj.endpoints)
    return VerificationReport(mismatches, ramps, prices, new, mismatch_tol=mismatch_tol,
                              flagged_instants=sorted(set(proposed)))
