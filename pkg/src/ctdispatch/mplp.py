"""Two-parameter multi-parametric linear programming.

The parametric problem is::

    min f @ x  s.t.  A_eq x = b_eq + E_eq theta,  A_ie x <= b_ie + E_ie theta

with ``theta = (t, D)`` restricted to a box.  A critical region is the set of
``theta`` sharing one optimal basis; on it the primal solution and the
multipliers are affine in ``theta``.  Geometry is done in the unit square
obtained by rescaling the box, so half-plane rows are normalised there and
their residuals are comparable across the two parameter axes.
"""
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import polygon as poly
from .errors import (DegenerateRegion, ExplorationOverflow, Infeasible, InfeasiblePoint,
                     NumericalFailure)
from .lp_core import DEFAULT_TOL, LinearProgram, independent_rows, solve_lp

logger = logging.getLogger(__name__)

REGION_CAP = 10_000
FACET_STEP = 1e-6
MIN_STEP = 1e-8
LOCATE_TOL = 1e-9
AREA_TOL = 1e-14
DEGENERACY_RETRIES = 5
PERTURBATION = 1e-7
COVER_SLACK = 10 * PERTURBATION


@dataclass(frozen=True)
class ParametricLP:
    f: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    E_eq: np.ndarray
    A_ie: np.ndarray
    b_ie: np.ndarray
    E_ie: np.ndarray
    theta_domain: tuple
    row_labels: tuple = ()

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float).ravel()
        n = f.size
        arrays = {
            "f": f,
            "A_eq": np.asarray(self.A_eq, dtype=float).reshape(-1, n),
            "b_eq": np.asarray(self.b_eq, dtype=float).ravel(),
            "E_eq": np.asarray(self.E_eq, dtype=float).reshape(-1, 2),
            "A_ie": np.asarray(self.A_ie, dtype=float).reshape(-1, n),
            "b_ie": np.asarray(self.b_ie, dtype=float).ravel(),
            "E_ie": np.asarray(self.E_ie, dtype=float).reshape(-1, 2),
        }
        m_eq, m_ie = arrays["A_eq"].shape[0], arrays["A_ie"].shape[0]
        if arrays["b_eq"].size != m_eq or arrays["E_eq"].shape[0] != m_eq:
            raise ValueError("equality blocks have inconsistent row counts")
        if arrays["b_ie"].size != m_ie or arrays["E_ie"].shape[0] != m_ie:
            raise ValueError("inequality blocks have inconsistent row counts")
        (t_lo, t_hi), (d_lo, d_hi) = self.theta_domain
        if not (t_lo < t_hi and d_lo < d_hi):
            raise ValueError("theta_domain must be a non-degenerate box")
        for k, v in arrays.items():
            object.__setattr__(self, k, v)
        object.__setattr__(self, "theta_domain", ((float(t_lo), float(t_hi)), (float(d_lo), float(d_hi))))

    @property
    def lo(self):
        return np.array([self.theta_domain[0][0], self.theta_domain[1][0]])

    @property
    def span(self):
        return np.array([self.theta_domain[0][1] - self.theta_domain[0][0],
                         self.theta_domain[1][1] - self.theta_domain[1][0]])

    def to_unit(self, theta):
        return (np.asarray(theta, dtype=float) - self.lo) / self.span

    def from_unit(self, u):
        return self.lo + np.asarray(u, dtype=float) * self.span

    def instantiate(self, theta):
        theta = np.asarray(theta, dtype=float)
        return LinearProgram(self.f, self.A_eq, self.b_eq + self.E_eq @ theta,
                             self.A_ie, self.b_ie + self.E_ie @ theta)

    def solve_at(self, theta, tol=DEFAULT_TOL):
        return solve_lp(self.instantiate(theta), tol=tol, method="active-set")


@dataclass
class CriticalRegion:
    """Polygon in theta = (t, D) with affine primal and dual maps.

    ``halfspaces`` rows ``(c_t, c_D, d)`` mean ``c_t t + c_D D <= d`` and are
    scaled so that the residual is a distance in the unit-square frame.
    """

    index: int
    halfspaces: np.ndarray
    active_set: tuple
    inactive_set: tuple
    A_x: np.ndarray
    B_x: np.ndarray
    A_lam: np.ndarray
    B_lam: np.ndarray
    A_mu: np.ndarray
    B_mu: np.ndarray
    vertices: np.ndarray = field(repr=False)
    tight_at_seed: tuple = ()

    def margin(self, theta):
        """Largest half-plane residual; <= 0 inside."""
        theta = np.asarray(theta, dtype=float)
        return float((self.halfspaces[:, :2] @ theta - self.halfspaces[:, 2]).max())

    def contains(self, theta, tol=LOCATE_TOL):
        return self.margin(theta) <= tol

    def primal(self, theta):
        return self.A_x @ np.asarray(theta, dtype=float) + self.B_x

    def dual(self, theta):
        return self.A_lam @ np.asarray(theta, dtype=float) + self.B_lam

    def mu(self, theta):
        return self.A_mu @ np.asarray(theta, dtype=float) + self.B_mu

    def center(self):
        return self.vertices.mean(axis=0)

    def to_dict(self):
        return {
            "index": self.index,
            "halfspaces": self.halfspaces.tolist(),
            "active_set": list(self.active_set),
            "A_x": self.A_x.tolist(), "B_x": self.B_x.tolist(),
            "A_lam": self.A_lam.tolist(), "B_lam": self.B_lam.tolist(),
            "A_mu": self.A_mu.tolist(), "B_mu": self.B_mu.tolist(),
            "vertices": self.vertices.tolist(),
        }


def build_region(plp, theta0, tol=DEFAULT_TOL, index=0, rng=None, reduce="clip"):
    """Critical region around ``theta0``.

    Raises InfeasiblePoint when the LP at ``theta0`` has no solution and
    DegenerateRegion when no non-singular optimal basis with a
    full-dimensional region is found after the perturbation retries.
    """
    theta0 = np.asarray(theta0, dtype=float)
    rng = np.random.default_rng(0) if rng is None else rng
    theta = theta0
    last_error = None
    for attempt in range(DEGENERACY_RETRIES + 1):
        try:
            sol = plp.solve_at(theta, tol)
        except Infeasible:
            if attempt == 0:
                raise InfeasiblePoint(f"LP infeasible at theta={theta0.tolist()}") from None
            last_error = "perturbed point infeasible"
        except NumericalFailure as exc:
            last_error = str(exc)
        else:
            try:
                return _region_from_solution(plp, theta, sol, tol, index, reduce)
            except DegenerateRegion as exc:
                last_error = str(exc)
        direction = rng.normal(size=2)
        direction /= np.linalg.norm(direction)
        theta = theta0 + PERTURBATION * plp.span * direction
    raise DegenerateRegion(f"at theta={theta0.tolist()}: {last_error}")


def _choose_basis(plp, sol, tol):
    """Independent active rows completing the equality block, strongly active first."""
    n = plp.f.size
    eq_rows = independent_rows(plp.A_eq)
    need = n - len(eq_rows)
    dual_tol = tol * (1.0 + np.abs(plp.f).max())
    active = list(sol.active_set)
    strong = [j for j in active if sol.mu[j] > dual_tol]
    weak = [j for j in active if sol.mu[j] <= dual_tol]
    basis = []
    M = plp.A_eq[eq_rows]
    rank = np.linalg.matrix_rank(M) if M.size else 0
    for j in strong + weak:
        if len(basis) == need:
            break
        trial = np.vstack([M, plp.A_ie[j]])
        r = np.linalg.matrix_rank(trial, tol=1e-10)
        if r > rank:
            M, rank = trial, r
            basis.append(j)
    if len(basis) != need:
        raise DegenerateRegion(f"active set spans {len(basis)} of {need} directions")
    if any(j not in basis for j in strong):
        raise DegenerateRegion("strongly active rows are linearly dependent")
    return eq_rows, basis


def _region_from_solution(plp, theta, sol, tol, index, reduce):
    eq_rows, basis = _choose_basis(plp, sol, tol)
    M = np.vstack([plp.A_eq[eq_rows], plp.A_ie[basis]])
    if np.linalg.cond(M) > 1e12:
        raise DegenerateRegion("KKT matrix is singular")
    E = np.vstack([plp.E_eq[eq_rows], plp.E_ie[basis]])
    b = np.concatenate([plp.b_eq[eq_rows], plp.b_ie[basis]])
    A_x = np.linalg.solve(M, E)
    B_x = np.linalg.solve(M, b)
    y = np.linalg.solve(M.T, plp.f)
    m_eq = len(eq_rows)
    B_lam = np.zeros(plp.b_eq.size)
    B_lam[eq_rows] = y[:m_eq]
    A_lam = np.zeros((plp.b_eq.size, 2))
    B_mu = -y[m_eq:]
    A_mu = np.zeros((len(basis), 2))
    dual_tol = tol * (1.0 + np.abs(plp.f).max())
    if B_mu.size and B_mu.min() < -dual_tol:
        raise DegenerateRegion("basis multipliers have the wrong sign")

    inactive = [j for j in range(plp.b_ie.size) if j not in set(basis)]
    # A_j (A_x theta + B_x) <= b_j + E_j theta
    rows = np.column_stack([
        plp.A_ie[inactive] @ A_x - plp.E_ie[inactive],
        plp.b_ie[inactive] - plp.A_ie[inactive] @ B_x,
    ]) if inactive else np.zeros((0, 3))
    # multipliers affine in theta would add -A_mu theta <= B_mu; constant here
    H_theta, labels = _normalised_rows(plp, rows, inactive)
    H_unit = _to_unit_rows(plp, H_theta)
    verts = poly.polygon(H_unit)
    if len(verts) < 3 or poly.area(verts) <= AREA_TOL:
        raise DegenerateRegion("region is not full-dimensional")
    if reduce == "clip":
        keep = poly.supporting_rows(H_unit, verts)
    elif reduce == "lp":
        keep = reduce_lp(H_unit)
    else:
        raise ValueError(f"unknown reduction {reduce!r}")
    keep = [keep[i] for i in poly.merge_duplicates(H_unit[keep])]
    box_theta = _box_rows(plp)
    H_final = np.vstack([H_theta[keep], box_theta])
    u0 = plp.to_unit(theta)
    H_final_unit = _to_unit_rows(plp, H_final)
    slack = H_final_unit[:, :2] @ u0 - H_final_unit[:, 2]
    if slack.max() > 1e-6:
        raise DegenerateRegion("seed point lies outside its own region")
    tight = tuple(int(labels[k]) for k in keep if abs(H_unit[k, :2] @ u0 - H_unit[k, 2]) < 1e-9)
    vertices = np.array([plp.from_unit(v) for v in verts])
    return CriticalRegion(
        index=index, halfspaces=H_final, active_set=tuple(sorted(basis)),
        inactive_set=tuple(inactive), A_x=A_x, B_x=B_x, A_lam=A_lam, B_lam=B_lam,
        A_mu=A_mu, B_mu=B_mu, vertices=vertices, tight_at_seed=tight)


def _normalised_rows(plp, rows, labels):
    if rows.shape[0] == 0:
        return rows, []
    scaled = rows[:, :2] * plp.span
    norms = np.hypot(scaled[:, 0], scaled[:, 1])
    rhs_scale = 1.0 + np.abs(rows[:, :2] @ plp.lo)
    nonzero = norms > 1e-12 * rhs_scale
    offset = rows[:, 2] - rows[:, :2] @ plp.lo
    if np.any(~nonzero & (offset < -1e-7 * rhs_scale)):
        raise DegenerateRegion("constant inactive row is violated")
    rows = rows[nonzero] / norms[nonzero, None]
    return rows, [labels[i] for i in np.flatnonzero(nonzero)]


def _to_unit_rows(plp, H):
    H = np.asarray(H, dtype=float).reshape(-1, 3)
    return np.column_stack([H[:, 0] * plp.span[0], H[:, 1] * plp.span[1],
                            H[:, 2] - H[:, :2] @ plp.lo])


def _box_rows(plp):
    (t_lo, t_hi), (d_lo, d_hi) = plp.theta_domain
    st, sd = plp.span
    return np.array([[-1.0 / st, 0.0, -t_lo / st], [1.0 / st, 0.0, t_hi / st],
                     [0.0, -1.0 / sd, -d_lo / sd], [0.0, 1.0 / sd, d_hi / sd]])


def reduce_lp(H_unit, tol=1e-9):
    """Non-redundant rows by LP: row i is kept when, subject to the other
    remaining rows and the unit square, ``a_i u`` can exceed ``c_i``.

    Rows found redundant are removed before the next test, so one copy of
    a duplicated row survives.
    """
    H = np.asarray(H_unit, dtype=float)
    box = poly.UNIT_BOX
    remaining = list(range(H.shape[0]))
    for i in range(H.shape[0]):
        others = np.vstack([H[[j for j in remaining if j != i]], box])
        relaxed = np.vstack([others, H[i:i + 1] + [0.0, 0.0, 1.0]])
        lp = LinearProgram(-H[i, :2], np.zeros((0, 2)), np.zeros(0), relaxed[:, :2], relaxed[:, 2])
        try:
            sol = solve_lp(lp, method="active-set")
        except Infeasible:
            remaining.remove(i)
            continue
        if -sol.objective <= H[i, 2] + tol:
            remaining.remove(i)
    return remaining


def locate(regions, theta, tol=LOCATE_TOL):
    """Position in ``regions`` of the first region containing ``theta``, else None."""
    for pos, region in enumerate(regions):
        if region.contains(theta, tol):
            return pos
    return None


def explore_regions(plp, seed, tol=DEFAULT_TOL, cap=REGION_CAP, step=FACET_STEP, reduce="clip",
                    rng=None):
    """Breadth-first facet-crossing enumeration of the critical regions
    reachable from ``seed``.

    ``rng`` drives the degeneracy perturbations of :func:`build_region`.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    first = build_region(plp, seed, tol, index=0, rng=rng, reduce=reduce)
    regions = [first]
    seen = {first.active_set}
    queue = deque([first])
    box = poly.UNIT_BOX
    while queue:
        region = queue.popleft()
        H_unit = _to_unit_rows(plp, region.halfspaces)
        verts = [plp.to_unit(v) for v in region.vertices]
        diam = max(poly.diameter(verts), 1e-12)
        shift = max(step * diam, MIN_STEP)
        nv = len(verts)
        for i in range(nv):
            p0, p1 = verts[i], verts[(i + 1) % nv]
            edge = p1 - p0
            length = np.linalg.norm(edge)
            if length <= 1e-12:
                continue
            normal = np.array([edge[1], -edge[0]]) / length
            mid = 0.5 * (p0 + p1)
            if np.any(np.abs(box[:, :2] @ mid - box[:, 2]) < 1e-12):
                continue
            _cross_facet(plp, regions, seen, queue, p0, p1, normal, shift, tol, cap, reduce, rng)
    return regions


def _cross_facet(plp, regions, seen, queue, p0, p1, normal, shift, tol, cap, reduce, rng):
    uncovered = [(0.0, 1.0)]
    length = np.linalg.norm(p1 - p0)
    guard = 0
    while uncovered:
        guard += 1
        if guard > 1000:
            logger.warning("facet exploration stopped after 1000 probes")
            return
        s0, s1 = uncovered.pop(0)
        if (s1 - s0) * length <= 1e-9:
            continue
        s_mid = 0.5 * (s0 + s1)
        q0, q1 = p0 + normal * shift, p1 + normal * shift
        probe_u = q0 + s_mid * (q1 - q0)
        if probe_u.min() < 0 or probe_u.max() > 1:
            continue
        probe = plp.from_unit(probe_u)
        pos = locate(regions, probe, tol=0.0)
        if pos is None:
            try:
                region = build_region(plp, probe, tol, index=len(regions), rng=rng, reduce=reduce)
            except InfeasiblePoint:
                # the facet lies on the boundary of the feasible parameter set
                continue
            except DegenerateRegion as exc:
                logger.debug("skipping lower-dimensional neighbour: %s", exc)
                cover = (s_mid - 1e-6, s_mid + 1e-6)
                uncovered = _subtract(s0, s1, cover) + uncovered
                continue
            if region.active_set in seen:
                pos = next(i for i, r in enumerate(regions) if r.active_set == region.active_set)
            else:
                if len(regions) >= cap:
                    raise ExplorationOverflow(f"more than {cap} critical regions")
                seen.add(region.active_set)
                regions.append(region)
                queue.append(region)
                pos = len(regions) - 1
        H_pos = _to_unit_rows(plp, regions[pos].halfspaces)
        cover = poly.segment_coverage(H_pos, q0, q1, tol=1e-10)
        if cover is None or not (cover[0] <= s_mid <= cover[1]):
            # a perturbed rebuild may return a region just off the probe line
            cover = poly.segment_coverage(H_pos, q0, q1, tol=COVER_SLACK)
        if cover is None or not (cover[0] <= s_mid <= cover[1]):
            cover = (s_mid - 1e-6, s_mid + 1e-6)
        uncovered = _subtract(s0, s1, cover) + uncovered


def _subtract(s0, s1, cover):
    out = []
    if cover[0] > s0:
        out.append((s0, min(cover[0], s1)))
    if cover[1] < s1:
        out.append((max(cover[1], s0), s1))
    return out


def dump_regions(regions):
    return {"regions": [r.to_dict() for r in regions]}
