"""Dense linear programming with multipliers and exact active sets.

Problems have the form::

    min  f @ x   s.t.  A_eq @ x == b_eq   (multipliers lam)
                       A_ie @ x <= b_ie   (multipliers mu >= 0)

Sign convention: at the optimum ``f == A_eq.T @ lam - A_ie.T @ mu`` with
``mu >= 0``, so ``lam`` is the sensitivity of the optimal objective to
``b_eq`` (for a balance row it is the price) and ``mu`` is the shadow
price of each inequality.  The dual objective is ``b_eq @ lam - b_ie @ mu``.

The default solver is a primal active-set (vertex-following) method on
dense matrices, adequate for the tens of variables of a single parametric
instant.  Large multi-interval dispatch problems go to HiGHS via
``scipy.optimize.linprog`` when ``method="auto"`` decides they are too big.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import Infeasible, NumericalFailure, Unbounded

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
STALL_LIMIT = 50
AUTO_DENSE_MAX_VARS = 120


@dataclass(frozen=True)
class LinearProgram:
    f: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ie: np.ndarray
    b_ie: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float).ravel()
        n = f.size
        A_eq = _matrix(self.A_eq, n)
        A_ie = _matrix(self.A_ie, n)
        b_eq = np.asarray(self.b_eq, dtype=float).ravel()
        b_ie = np.asarray(self.b_ie, dtype=float).ravel()
        if b_eq.size != A_eq.shape[0] or b_ie.size != A_ie.shape[0]:
            raise ValueError("right-hand sides do not match constraint rows")
        for name, value in (("f", f), ("A_eq", A_eq), ("b_eq", b_eq), ("A_ie", A_ie), ("b_ie", b_ie)):
            object.__setattr__(self, name, value)

    @property
    def n(self):
        return self.f.size

    @property
    def is_sparse(self):
        return sp.issparse(self.A_eq) or sp.issparse(self.A_ie)

    def densified(self):
        if not self.is_sparse:
            return self
        return LinearProgram(self.f, _dense(self.A_eq), self.b_eq, _dense(self.A_ie), self.b_ie)


def _matrix(A, n):
    # sparse matrices are kept as CSR for the HiGHS path
    if sp.issparse(A):
        A = sp.csr_array(A, dtype=float)
        if A.shape[1] != n and A.shape[0] > 0:
            raise ValueError("constraint matrix column count does not match f")
        return A
    return np.asarray(A, dtype=float).reshape(-1, n)


def _dense(A):
    return A.toarray() if sp.issparse(A) else A


@dataclass(frozen=True)
class LpSolution:
    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    active_set: tuple
    objective: float
    dropped_eq: tuple = ()
    method: str = "active-set"
    iterations: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def dual_objective(self, lp):
        return float(lp.b_eq @ self.lam - lp.b_ie @ self.mu)


def solve_lp(lp, tol=DEFAULT_TOL, method="auto", active_hint=None, max_iter=None):
    """Solve ``lp``; raise Infeasible, Unbounded or NumericalFailure.

    ``active_hint`` optionally lists inequality rows to try first when
    building the initial working set.
    """
    if method == "auto":
        method = "active-set" if lp.n <= AUTO_DENSE_MAX_VARS else "highs"
    if method == "highs":
        return _solve_highs(lp, tol)
    if method != "active-set":
        raise ValueError(f"unknown method {method!r}")
    return _solve_active_set(lp.densified(), tol, active_hint, max_iter)


def independent_rows(A, tol=1e-10):
    """Indices of a maximal set of linearly independent rows, lowest first."""
    basis = []
    keep = []
    for i, row in enumerate(A):
        v = row.astype(float).copy()
        for q in basis:
            v -= (q @ v) * q
        norm = np.linalg.norm(v)
        if norm > tol * max(1.0, np.linalg.norm(row)):
            basis.append(v / norm)
            keep.append(i)
    return keep


# ---------------------------------------------------------------------------
# active-set method


def _solve_active_set(lp, tol, active_hint, max_iter):
    n = lp.n
    m_ie = lp.b_ie.size
    if max_iter is None:
        max_iter = 50 * (n + m_ie) + 100
    keep = independent_rows(lp.A_eq)
    dropped = tuple(i for i in range(lp.b_eq.size) if i not in keep)
    A_eq, b_eq = lp.A_eq[keep], lp.b_eq[keep]

    scale = 1.0 + max(np.abs(lp.b_eq).max(initial=0.0), np.abs(lp.b_ie).max(initial=0.0))
    feas_tol = tol * scale

    if lp.A_eq.shape[0]:
        x0 = np.linalg.lstsq(lp.A_eq, lp.b_eq, rcond=None)[0]
        resid = lp.b_eq - lp.A_eq @ x0
        if np.abs(resid).max() > feas_tol:
            cert = (resid, np.zeros(m_ie))
            raise Infeasible("equality constraints are inconsistent", certificate=cert)
    else:
        x0 = np.zeros(n)

    viol = lp.A_ie @ x0 - lp.b_ie
    s0 = max(0.0, viol.max(initial=0.0))
    iterations = 0
    if s0 > feas_tol:
        # phase 1: min s  s.t.  A_eq x = b_eq, A_ie x - s <= b_ie, -s <= 0
        f1 = np.zeros(n + 1)
        f1[-1] = 1.0
        Aeq1 = np.hstack([A_eq, np.zeros((A_eq.shape[0], 1))])
        Aie1 = np.vstack([np.hstack([lp.A_ie, -np.ones((m_ie, 1))]),
                          np.hstack([np.zeros((1, n)), -np.ones((1, 1))])])
        bie1 = np.append(lp.b_ie, 0.0)
        z0 = np.append(x0, s0)
        res = _core(f1, Aeq1, Aie1, bie1, z0, None, tol, feas_tol, max_iter, phase=1)
        iterations += res["iterations"]
        if res["x"][-1] > feas_tol:
            y = res["y"]
            lam = np.zeros(lp.b_eq.size)
            lam[keep] = y[:len(keep)]
            mu = res["mu"][:m_ie]
            raise Infeasible(
                f"no feasible point (minimum violation {res['x'][-1]:.3g})",
                certificate=(lam, mu))
        x0 = res["x"][:n]
        hint = [i for i in res["working"] if i < m_ie]
        if active_hint:
            hint = list(active_hint) + hint
    else:
        hint = list(active_hint) if active_hint else None

    res = _core(lp.f, A_eq, lp.A_ie, lp.b_ie, x0, hint, tol, feas_tol, max_iter, phase=2)
    iterations += res["iterations"]
    x = res["x"]
    lam = np.zeros(lp.b_eq.size)
    lam[keep] = res["y"][:len(keep)]
    mu = res["mu"]
    slack = lp.b_ie - lp.A_ie @ x
    active = tuple(int(i) for i in np.flatnonzero(slack <= feas_tol))
    return LpSolution(x=x, lam=lam, mu=mu, active_set=active, objective=float(lp.f @ x),
                      dropped_eq=dropped, method="active-set", iterations=iterations,
                      extra={"working_set": tuple(res["working"])})


def _initial_working_set(A_ie, b_ie, A_eq, x, feas_tol, hint):
    slack = b_ie - A_ie @ x
    tight = [int(i) for i in np.flatnonzero(slack <= feas_tol)]
    order = []
    if hint:
        order = [i for i in dict.fromkeys(hint) if i in set(tight)]
    order += [i for i in tight if i not in set(order)]
    working = []
    basis = [r for r in _orthonormal_rows(A_eq)]
    for i in order:
        v = A_ie[i].copy()
        for q in basis:
            v -= (q @ v) * q
        nv = np.linalg.norm(v)
        if nv > 1e-9 * max(1.0, np.linalg.norm(A_ie[i])):
            basis.append(v / nv)
            working.append(i)
        if len(basis) == A_ie.shape[1]:
            break
    return working


def _orthonormal_rows(A):
    out = []
    for row in A:
        v = row.astype(float).copy()
        for q in out:
            v -= (q @ v) * q
        nv = np.linalg.norm(v)
        if nv > 1e-12:
            out.append(v / nv)
    return out


def _core(f, A_eq, A_ie, b_ie, x, hint, tol, feas_tol, max_iter, phase):
    """Vertex-following active-set iterations from a feasible point."""
    n = f.size
    m_eq = A_eq.shape[0]
    W = _initial_working_set(A_ie, b_ie, A_eq, x, feas_tol, hint)
    fscale = 1.0 + np.abs(f).max(initial=0.0)
    dual_tol = tol * fscale
    grad_tol = 1e-12 * fscale
    stall = 0
    bland = False
    for it in range(max_iter):
        M = np.vstack([A_eq, A_ie[W]]) if W else A_eq
        rows = M.shape[0]
        if rows < n:
            Z = sla.null_space(M) if rows else np.eye(n)
        else:
            Z = np.zeros((n, 0))
        if Z.shape[1]:
            g = Z.T @ f
            if np.linalg.norm(g) > grad_tol:
                d = -Z @ g
                descent = True
            else:
                y = np.linalg.lstsq(M.T, f, rcond=None)[0] if rows else np.zeros(0)
                mu_w = -y[m_eq:]
                j = _leaving(W, mu_w, dual_tol, bland)
                if j is not None:
                    W.remove(j)
                    continue
                d = _neutral_direction(Z)
                descent = False
        else:
            y = _solve_refined(M.T, f)
            mu_w = -y[m_eq:]
            j = _leaving(W, mu_w, dual_tol, bland)
            if j is None:
                mu = np.zeros(A_ie.shape[0])
                mu[W] = np.maximum(mu_w, 0.0)
                return {"x": x, "y": y, "mu": mu, "working": list(W), "iterations": it}
            W.remove(j)
            continue

        step = _ratio_test(A_ie, b_ie, x, d, W, bland)
        if step is None and not descent:
            d = -d
            step = _ratio_test(A_ie, b_ie, x, d, W, bland)
        if step is None:
            if descent:
                raise Unbounded("objective unbounded below", ray=d / np.abs(d).max())
            # optimal face contains a line: stop at a non-vertex optimum
            y = np.linalg.lstsq(M.T, f, rcond=None)[0] if rows else np.zeros(0)
            mu = np.zeros(A_ie.shape[0])
            mu[W] = np.maximum(-y[m_eq:], 0.0)
            return {"x": x, "y": y, "mu": mu, "working": list(W), "iterations": it}
        alpha, i = step
        x = x + alpha * d
        W.append(i)
        if alpha * np.abs(d).max() <= 1e-13 * (1.0 + np.abs(x).max()):
            stall += 1
            if stall > STALL_LIMIT and not bland:
                logger.debug("phase %d: %d degenerate pivots, switching to Bland's rule", phase, stall)
                bland = True
        else:
            stall = 0
    raise NumericalFailure(f"active-set method did not terminate in {max_iter} iterations")


def _leaving(W, mu_w, dual_tol, bland):
    negative = np.flatnonzero(mu_w < -dual_tol)
    if negative.size == 0:
        return None
    if bland:
        return min(W[k] for k in negative)
    # most negative multiplier, lowest row index on ties
    worst = mu_w[negative].min()
    ties = [W[k] for k in negative if mu_w[k] <= worst + 1e-12 * (1 + abs(worst))]
    return min(ties)


def _neutral_direction(Z):
    P = Z @ Z.T
    for i in range(P.shape[0]):
        if np.linalg.norm(P[:, i]) > 1e-8:
            d = P[:, i]
            return d / np.linalg.norm(d)
    return Z[:, 0]


def _ratio_test(A_ie, b_ie, x, d, W, bland):
    Ad = A_ie @ d
    dscale = np.linalg.norm(d) * (1.0 + np.abs(A_ie).max(initial=0.0))
    candidates = Ad > 1e-11 * dscale
    if W:
        candidates[W] = False
    idx = np.flatnonzero(candidates)
    if idx.size == 0:
        return None
    slack = np.maximum(b_ie[idx] - A_ie[idx] @ x, 0.0)
    ratios = slack / Ad[idx]
    best = ratios.min()
    ties = idx[ratios <= best + 1e-12 * (1.0 + best)]
    # lowest index among ties: deterministic and anti-cycling under Bland
    i = int(ties.min())
    return float(best), i


def _solve_refined(A, b):
    try:
        lu = sla.lu_factor(A)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise NumericalFailure(str(exc)) from None
    y = sla.lu_solve(lu, b)
    y = y + sla.lu_solve(lu, b - A @ y)
    if not np.all(np.isfinite(y)):
        raise NumericalFailure("singular working-set matrix")
    return y


# ---------------------------------------------------------------------------
# HiGHS path


def _solve_highs(lp, tol):
    n = lp.n
    options = {"primal_feasibility_tolerance": min(1e-7, max(tol, 1e-10)),
               "dual_feasibility_tolerance": min(1e-7, max(tol, 1e-10))}
    res = linprog(lp.f, A_ub=lp.A_ie if lp.b_ie.size else None,
                  b_ub=lp.b_ie if lp.b_ie.size else None,
                  A_eq=lp.A_eq if lp.b_eq.size else None,
                  b_eq=lp.b_eq if lp.b_eq.size else None,
                  bounds=[(None, None)] * n, method="highs", options=options)
    if res.status == 2:
        raise Infeasible("no feasible point (HiGHS)", certificate=farkas_certificate(lp))
    if res.status == 3:
        raise Unbounded("objective unbounded below (HiGHS)", ray=unbounded_ray(lp))
    if res.status != 0:
        raise NumericalFailure(f"HiGHS status {res.status}: {res.message}")
    x = res.x
    lam = res.eqlin.marginals if lp.b_eq.size else np.zeros(0)
    mu = -res.ineqlin.marginals if lp.b_ie.size else np.zeros(0)
    mu = np.maximum(mu, 0.0)
    scale = 1.0 + max(np.abs(lp.b_eq).max(initial=0.0), np.abs(lp.b_ie).max(initial=0.0))
    slack = lp.b_ie - lp.A_ie @ x
    active = tuple(int(i) for i in np.flatnonzero(slack <= tol * scale * 10))
    return LpSolution(x=x, lam=np.asarray(lam, dtype=float), mu=mu, active_set=active,
                      objective=float(lp.f @ x), method="highs", iterations=int(res.nit))


def farkas_certificate(lp):
    """Dual ray proving infeasibility, found on a box-normalised LP."""
    m_eq, m_ie = lp.b_eq.size, lp.b_ie.size
    # variables (lam, mu); maximise b_eq lam - b_ie mu
    c = -np.concatenate([lp.b_eq, -lp.b_ie])
    A_eq = sp.hstack([sp.csr_array(lp.A_eq).T, -sp.csr_array(lp.A_ie).T]).tocsr()
    bounds = [(-1, 1)] * m_eq + [(0, 1)] * m_ie
    res = linprog(c, A_eq=A_eq, b_eq=np.zeros(lp.n), bounds=bounds, method="highs")
    if res.status != 0:
        return None
    return res.x[:m_eq], res.x[m_eq:]


def unbounded_ray(lp):
    res = linprog(lp.f, A_ub=lp.A_ie if lp.b_ie.size else None,
                  b_ub=np.zeros(lp.b_ie.size) if lp.b_ie.size else None,
                  A_eq=lp.A_eq if lp.b_eq.size else None,
                  b_eq=np.zeros(lp.b_eq.size) if lp.b_eq.size else None,
                  bounds=[(-1, 1)] * lp.n, method="highs")
    return res.x if res.status == 0 else None


def kkt_residuals(lp, sol):
    """Max-norm residuals of stationarity, primal feasibility, complementarity."""
    stat = lp.f - lp.A_eq.T @ sol.lam + lp.A_ie.T @ sol.mu
    slack = lp.b_ie - lp.A_ie @ sol.x
    return {
        "stationarity": float(np.abs(stat).max(initial=0.0)),
        "equality": float(np.abs(lp.A_eq @ sol.x - lp.b_eq).max(initial=0.0)),
        "inequality": float(np.maximum(-slack, 0.0).max(initial=0.0)),
        "complementarity": float(np.abs(sol.mu * slack).max(initial=0.0)),
        "dual_sign": float(np.maximum(-sol.mu, 0.0).max(initial=0.0)),
    }
