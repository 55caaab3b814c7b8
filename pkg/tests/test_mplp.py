import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctdispatch.errors import InfeasiblePoint
from ctdispatch.lp_core import solve_lp
from ctdispatch.mplp import (ParametricLP, build_region, dump_regions, explore_regions, locate,
                             reduce_lp, _to_unit_rows)
from ctdispatch import polygon as poly
from ctdispatch.trajectory import UpdatingRange, assemble_parametric_model
from ctdispatch.verifier import hourly_dispatch

PRIMAL_TOL = 1e-6
PRICE_TOL = 1e-6


def merit_plp():
    """Two units with capacity limits only; price steps at D = 100."""
    A_ie = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    b_ie = np.array([100.0, 0.0, 100.0, 0.0])
    return ParametricLP(f=[10.0, 20.0], A_eq=[[1.0, 1.0]], b_eq=[0.0], E_eq=[[0.0, 1.0]],
                        A_ie=A_ie, b_ie=b_ie, E_ie=np.zeros((4, 2)),
                        theta_domain=((0.0, 1.0), (10.0, 190.0)))


@pytest.fixture(scope="module")
def twounit_plp(twounit):
    h = hourly_dispatch(twounit)
    return assemble_parametric_model(twounit, UpdatingRange(0.0, 60.0, h.X[0], h.X[1]))


@pytest.fixture(scope="module")
def twounit_regions(twounit_plp):
    seed = np.array([0.01, 250.0])
    return explore_regions(twounit_plp, seed)


@pytest.fixture(scope="module")
def rts_plp(rts39):
    h = hourly_dispatch(rts39)
    return assemble_parametric_model(rts39, UpdatingRange(0.0, 60.0, h.X[0], h.X[1]))


@pytest.fixture(scope="module")
def rts_regions(rts_plp, rts39):
    return explore_regions(rts_plp, np.array([0.01, float(rts39.load.value(0.01))]))


def feasible(plp, theta):
    try:
        return solve_lp(plp.instantiate(theta), method="highs")
    except Exception:
        return None


def test_merit_order_partition():
    plp = merit_plp()
    regions = explore_regions(plp, np.array([0.5, 50.0]))
    assert len(regions) == 2
    low = regions[locate(regions, np.array([0.5, 50.0]))]
    high = regions[locate(regions, np.array([0.5, 150.0]))]
    assert low.dual([0.5, 50.0])[0] == pytest.approx(10.0)
    assert high.dual([0.5, 150.0])[0] == pytest.approx(20.0)
    np.testing.assert_allclose(high.primal([0.5, 150.0]), [100.0, 50.0])
    # the facet between them is D = 100
    np.testing.assert_allclose(low.vertices[:, 1].max(), 100.0)


def test_infeasible_seed():
    with pytest.raises(InfeasiblePoint):
        build_region(merit_plp(), np.array([0.5, 250.0]))


def test_grid_oracle_twounit(twounit_plp, twounit_regions):
    (t0, t1), (d0, d1) = twounit_plp.theta_domain
    worst_x = worst_p = 0.0
    for t in np.linspace(t0, t1, 20):
        for D in np.linspace(d0, d1, 20):
            theta = np.array([t, D])
            ref = feasible(twounit_plp, theta)
            pos = locate(twounit_regions, theta, tol=1e-9)
            if ref is None:
                continue
            assert pos is not None, f"feasible theta {theta} not covered"
            region = twounit_regions[pos]
            worst_x = max(worst_x, np.abs(region.primal(theta) - ref.x).max())
            if region.margin(theta) < -1e-6:
                worst_p = max(worst_p, abs(region.dual(theta)[0] - ref.lam[0]))
    assert worst_x < PRIMAL_TOL
    assert worst_p < PRICE_TOL


def test_random_oracle_rts(rts_plp, rts_regions):
    rng = np.random.default_rng(7)
    lo, span = rts_plp.lo, rts_plp.span
    checked = 0
    for u in rng.uniform(size=(500, 2)):
        theta = lo + u * span
        pos = locate(rts_regions, theta)
        ref = feasible(rts_plp, theta)
        if ref is None:
            assert pos is None or rts_regions[pos].margin(theta) > -1e-6
            continue
        assert pos is not None
        region = rts_regions[pos]
        if region.margin(theta) > -1e-6:
            continue  # on a facet: the optimum need not be unique
        x = region.primal(theta)
        assert np.abs(x - ref.x).max() < 1e-5 or np.isclose(rts_plp.f @ x, ref.objective, rtol=1e-12)
        assert abs(region.dual(theta)[0] - ref.lam[0]) < PRICE_TOL
        checked += 1
    assert checked > 100


def test_regions_cover_without_overlap(twounit_plp, twounit_regions):
    # every feasible grid point lies in the interior of at most one region
    (t0, t1), (d0, d1) = twounit_plp.theta_domain
    for t in np.linspace(t0, t1, 200)[1:-1]:
        for D in np.linspace(d0, d1, 200)[1:-1]:
            theta = np.array([t, D])
            inside = sum(r.margin(theta) < -1e-9 for r in twounit_regions)
            assert inside <= 1


def test_area_accounts_for_feasible_set(twounit_plp, twounit_regions):
    total = sum(poly.area([twounit_plp.to_unit(v) for v in r.vertices]) for r in twounit_regions)
    # Monte Carlo estimate of the feasible fraction of the unit square
    rng = np.random.default_rng(3)
    pts = twounit_plp.lo + rng.uniform(size=(4000, 2)) * twounit_plp.span
    frac = np.mean([feasible(twounit_plp, p) is not None for p in pts])
    assert total == pytest.approx(frac, abs=0.02)


def test_primal_continuous_across_facets(rts_plp, rts_regions):
    for region in rts_regions:
        for v in region.vertices:
            for other in rts_regions:
                if other is region or other.margin(v) > 1e-7:
                    continue
                np.testing.assert_allclose(region.primal(v), other.primal(v), atol=1e-6)


def test_multipliers_nonnegative(rts_regions, twounit_regions):
    for region in list(rts_regions) + list(twounit_regions):
        for v in region.vertices:
            assert region.mu(v).min() >= -1e-9


def test_lp_reduction_agrees_with_clipping(rts_plp, rts_regions):
    for region in rts_regions[:20]:
        theta = region.center()
        by_lp = build_region(rts_plp, theta, reduce="lp")
        by_clip = build_region(rts_plp, theta, reduce="clip")
        assert by_lp.active_set == by_clip.active_set
        # both row sets must describe the same polygon
        a = poly.polygon(_to_unit_rows(rts_plp, by_lp.halfspaces))
        b = poly.polygon(_to_unit_rows(rts_plp, by_clip.halfspaces))
        assert poly.area(a) == pytest.approx(poly.area(b), rel=1e-9, abs=1e-15)
        for v in a:
            assert min(np.abs(np.asarray(b) - v).max(axis=1)) < 1e-9


def test_reduce_lp_unit_square():
    H = np.array([[1.0, 0.0, 0.5], [1.0, 0.0, 0.8], [0.0, 1.0, 2.0], [-1.0, -1.0, -0.2]])
    assert reduce_lp(H) == [0, 3]


def test_dump_is_json(twounit_regions):
    data = json.loads(json.dumps(dump_regions(twounit_regions)))
    assert len(data["regions"]) == len(twounit_regions)
    assert {"halfspaces", "active_set", "A_x", "B_x", "A_lam", "B_lam"} <= set(data["regions"][0])


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_build_region_contains_seed(u, v):
    plp = merit_plp()
    theta = plp.from_unit([u, v])
    region = build_region(plp, theta)
    assert region.contains(theta, tol=1e-7)
    ref = solve_lp(plp.instantiate(theta))
    assert plp.f @ region.primal(theta) == pytest.approx(ref.objective, abs=1e-7)


def test_reduce_lp_keeps_one_copy_of_duplicates():
    H = np.array([[1.0, 0.0, 0.3], [0.0, 1.0, 0.6], [1.0, 0.0, 0.3]])
    assert reduce_lp(H) == [1, 2]
