"""Price differences, revenue discrepancies and the subgradient test.

All integrals are exact: trajectories, prices and loads are polynomial on
each sub-piece, so products are integrated through their antiderivatives.
"""
import csv
import io
import logging
from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial import Polynomial

from .errors import WindowCrossesEndpoint
from .model import MINUTES_PER_HOUR, BumpedLoad
from .orchestrator import SolveConfig, cost_difference, run

logger = logging.getLogger(__name__)

PRICE_TOL = 1e-6
BREAK_TOL = 1e-12
NUM_FORMAT = ".9g"


@dataclass(frozen=True)
class DiffPiece:
    """``lam_ct - lam_dt`` on ``[t0, t1]`` as ``p_t t + p_D D(t) + c``."""

    t0: float
    t1: float
    segment: int
    p_t: float
    p_D: float
    c: float

    def __call__(self, t, D):
        return self.p_t * t + self.p_D * D + self.c


@dataclass(frozen=True)
class DiffSpan:
    t0: float
    t1: float
    pieces: tuple

    def value(self, load, t):
        for piece in self.pieces:
            if piece.t0 <= t <= piece.t1:
                return float(piece(t, float(load.value(t))))
        raise ValueError(f"t={t} outside span")


@dataclass
class PriceDifference:
    pieces: list
    spans: list

    def __call__(self, load, t):
        for piece in self.pieces:
            if piece.t0 <= t < piece.t1 or (t == piece.t1 == self.pieces[-1].t1):
                return float(piece(t, float(load.value(t))))
        raise ValueError(f"t={t} outside horizon")


def price_difference(traj, lmp, tol=PRICE_TOL):
    """Continuous-time price minus the discrete LMP, with the spans where
    they differ by more than ``tol``.

    Sub-pieces are bounded by the trajectory endpoints and the LMP
    breakpoints; contiguous non-zero sub-pieces form one span.
    """
    cuts = np.union1d(np.asarray(traj.endpoints, dtype=float), lmp.breakpoints)
    cuts = cuts[(cuts >= traj.start - BREAK_TOL) & (cuts <= traj.end + BREAK_TOL)]
    keep = np.concatenate([[True], np.diff(cuts) > BREAK_TOL])
    cuts = cuts[keep]
    pieces, flags = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b)
        s = traj.segment_index(mid)
        seg = traj.segments[s]
        piece = DiffPiece(float(a), float(b), s, seg.p_t, seg.p_D, seg.p_b - lmp(mid))
        pieces.append(piece)
        probe = [a, mid, b]
        vals = [abs(piece(t, float(traj.load.value(t)))) for t in probe]
        flags.append(max(vals) > tol)
    spans = []
    i = 0
    while i < len(pieces):
        if flags[i]:
            j = i
            while j + 1 < len(pieces) and flags[j + 1]:
                j += 1
            spans.append(DiffSpan(pieces[i].t0, pieces[j].t1, tuple(pieces[i:j + 1])))
            i = j + 1
        else:
            i += 1
    return PriceDifference(pieces, spans)


def _product_integral(piece, seg, load, k=None):
    """Exact integral over ``piece`` of diff * x_k (or diff * D when k is None)."""
    total = 0.0
    for a, b, poly in load.pieces():
        lo, hi = max(a, piece.t0), min(b, piece.t1)
        if lo >= hi:
            continue
        T = Polynomial.identity(domain=poly.domain, window=poly.window)
        diff = piece.p_t * T + piece.p_D * poly + piece.c
        x = poly if k is None else seg.a_t[k] * T + seg.a_D[k] * poly + seg.b[k]
        anti = (diff * x).integ()
        total += anti(hi) - anti(lo)
    return total


def revenue_discrepancy(diff, traj):
    """Per span and unit: integral of (lam_ct - lam_dt) x_k in dollars.

    Positive values are excess revenue under continuous-time pricing.
    """
    K = len(traj.segments[0].b)
    out = []
    for span in diff.spans:
        per_unit = np.zeros(K)
        for piece in span.pieces:
            seg = traj.segments[piece.segment]
            for k in range(K):
                per_unit[k] += _product_integral(piece, seg, traj.load, k)
        out.append((span.t0, span.t1, per_unit / MINUTES_PER_HOUR))
    return out


def load_weighted_discrepancy(span, traj):
    """Integral of (lam_ct - lam_dt) D over ``span`` in dollars."""
    total = sum(_product_integral(p, traj.segments[p.segment], traj.load) for p in span.pieces)
    return total / MINUTES_PER_HOUR


@dataclass
class SubgradientResult:
    predicted: float
    actual: float
    relative_error: float
    price: float
    base_cost: float
    perturbed_cost: float


def bump_polynomial(tau, width, bump):
    """Quadratic vanishing at ``tau`` and ``tau + width`` with integral ``bump * width``.

    Built in the shifted variable ``s = t - tau`` to avoid cancellation.
    """
    scale = 6.0 * bump / width ** 2
    return Polynomial([0.0, scale * width, -scale], domain=[tau, tau + 1.0], window=[0.0, 1.0])


def subgradient_check(system, solution, tau, bump=0.1, width=0.05, config=SolveConfig()):
    """Compare the price-predicted cost change with a re-solve.

    The load gains a quadratic bump of integral ``bump * width`` MW*min on
    ``[tau, tau + width]``.  The reference problem carries a zero bump on
    the same window, and both are solved with the window edges as forced
    endpoints, so that the two runs differ only by the bump.

    Raises
    ------
    WindowCrossesEndpoint
        The window is not strictly inside one segment of ``solution``.
    """
    traj = solution.trajectory
    lo, hi = tau, tau + width
    inside = [s for s in traj.segments if s.t_start < lo and hi < s.t_end]
    if not inside:
        raise WindowCrossesEndpoint(f"window [{lo}, {hi}] is not inside a single segment")
    forced = tuple(sorted(set(config.forced_endpoints) | {lo, hi}))
    cfg = replace(config, forced_endpoints=forced)
    q = bump_polynomial(tau, width, bump)
    base = run(system.with_load(BumpedLoad(system.load, (lo, hi), 0.0 * q)), cfg)
    perturbed = run(system.with_load(BumpedLoad(system.load, (lo, hi), q)), cfg)
    price = base.trajectory.price(0.5 * (lo + hi))
    predicted = price * bump * width / MINUTES_PER_HOUR
    actual = cost_difference(base.trajectory, perturbed.trajectory, system.costs)
    if actual == 0.0:
        rel = 0.0 if predicted == 0.0 else float("inf")
    else:
        rel = abs(predicted - actual) / abs(actual)
    return SubgradientResult(predicted, actual, rel, price, base.cost, perturbed.cost)


# ---------------------------------------------------------------------------
# reports


def comparison_rows(traj, lmp, step):
    """Rows ``(t, lam_ct, lam_dt, diff)`` on a uniform sampling grid."""
    n = int(round((traj.end - traj.start) / step))
    times = np.linspace(traj.start, traj.end, n + 1)
    rows = []
    for t in times:
        ct = traj.price(t)
        dt = lmp(t)
        rows.append((float(t), ct, dt, ct - dt))
    return rows


def comparison_csv(rows, fmt=NUM_FORMAT):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "lambda_ct", "lambda_dt", "diff"])
    for row in rows:
        writer.writerow([format(v, fmt) for v in row])
    return buf.getvalue()


def comparison_report(traj, discrete, diff, revenues, unit_ids, fmt=NUM_FORMAT):
    """Structured summary of a continuous versus discrete comparison."""
    return {
        "resolution": discrete.resolution,
        "continuous_endpoints": [format(t, fmt) for t in traj.endpoints],
        "lmp_change_points": [format(t, fmt) for t in discrete.lmp.change_points(PRICE_TOL)],
        "discrete_cost": format(discrete.cost, fmt),
        "spans": [
            {"t0": format(t0, fmt), "t1": format(t1, fmt),
             "difference": [format(p.c, fmt) for p in span.pieces],
             "revenue": {uid: format(v, fmt) for uid, v in zip(unit_ids, rev)}}
            for span, (t0, t1, rev) in zip(diff.spans, revenues)
        ],
    }
