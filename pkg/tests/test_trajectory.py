import numpy as np
import pytest

from ctdispatch.errors import ParseError, ValidationError
from ctdispatch.lp_core import solve_lp
from ctdispatch.model import LoadProfile, System, Unit
from ctdispatch.trajectory import (PiecewiseTrajectory, TrajectorySegment, UpdatingRange,
                                   assemble_parametric_model, load_trajectory, row_kind,
                                   save_trajectory, trace, trajectory_from_dict)
from ctdispatch.verifier import hourly_dispatch


@pytest.fixture(scope="module")
def twounit_range(twounit):
    h = hourly_dispatch(twounit)
    return UpdatingRange(0.0, 60.0, h.X[0], h.X[1])


@pytest.fixture(scope="module")
def twounit_segments(twounit, twounit_range):
    return trace(twounit, twounit_range)


def test_row_kinds():
    assert row_kind(0) == (0, "max_output")
    assert row_kind(9) == (1, "ramp_down")
    assert row_kind(11) == (1, "reach_end_high")


def test_updating_range_validation(twounit):
    with pytest.raises(ValidationError):
        UpdatingRange(5.0, 5.0, [1.0], [1.0])
    with pytest.raises(ValidationError):
        UpdatingRange(0.0, 60.0, [240.0, 20.0], [300.0, 20.0]).validate(twounit)  # balance
    with pytest.raises(ValidationError):
        UpdatingRange(0.0, 60.0, [500.0, -250.0], [310.0, 20.0]).validate(twounit)  # capacity


def test_ramp_rows_pin_start(twounit, twounit_range):
    plp = assemble_parametric_model(twounit, twounit_range)
    sol = solve_lp(plp.instantiate([0.0, 250.0]))
    np.testing.assert_allclose(sol.x, twounit_range.boundary_start, atol=1e-7)


def test_segments_cover_range(twounit_segments):
    assert twounit_segments[0].t_start == 0.0
    assert twounit_segments[-1].t_end == 60.0
    for a, b in zip(twounit_segments, twounit_segments[1:]):
        assert a.t_end == b.t_start


def test_balance_identity_coefficients(twounit_segments):
    # sum_k x_k = D exactly: a_t sums to 0, a_D sums to 1, b sums to 0
    for seg in twounit_segments:
        assert abs(seg.a_t.sum()) < 1e-10
        assert abs(seg.a_D.sum() - 1.0) < 1e-10
        assert abs(seg.b.sum()) < 1e-8


def test_pointwise_oracle(twounit, twounit_range, twounit_segments):
    plp = assemble_parametric_model(twounit, twounit_range)
    traj = PiecewiseTrajectory(twounit_segments, twounit.load)
    ends = np.array(traj.endpoints)
    rng = np.random.default_rng(11)
    for t in rng.uniform(0.0, 60.0, 200):
        if np.abs(ends - t).min() < 1e-6:
            continue
        D = float(twounit.load.value(t))
        ref = solve_lp(plp.instantiate([t, D]), method="highs")
        np.testing.assert_allclose(traj.generation(t), ref.x, atol=1e-6)
        assert traj.price(t) == pytest.approx(ref.lam[0], abs=1e-6)


def test_crossings_against_dense_scan(twounit, twounit_range, twounit_segments):
    # the optimal active set changes exactly at the segment endpoints
    plp = assemble_parametric_model(twounit, twounit_range)
    grid = np.linspace(0.0, 60.0, 6001)
    prices = np.array([solve_lp(plp.instantiate([t, float(twounit.load.value(t))])).lam[0]
                       for t in grid])
    # the ramp rows collapse at the range ends, where the dual is not unique
    interior = slice(1, -1)
    jumps = grid[1:][interior][np.abs(np.diff(prices))[interior] > 1e-6]
    inner = [s.t_end for s in twounit_segments[:-1]]
    assert len(jumps) <= len(inner)
    # every dense-scan price change is within one grid step of a traced endpoint
    for t in jumps:
        assert min(abs(t - e) for e in inner) <= 0.01 + 1e-9


def test_serialization_round_trip(tmp_path, twounit, twounit_segments):
    traj = PiecewiseTrajectory(twounit_segments, twounit.load, ("Gen1", "Gen2"))
    path = tmp_path / "traj.json"
    save_trajectory(traj, path, twounit)
    again, system = load_trajectory(path)
    assert system == twounit
    assert again.endpoints == traj.endpoints
    for a, b in zip(again.segments, traj.segments):
        np.testing.assert_array_equal(a.b, b.b)
        assert a.active_set == b.active_set and a.p_b == b.p_b


def test_bad_trajectory_documents(tmp_path):
    with pytest.raises(ParseError):
        trajectory_from_dict({"format": "other"})
    path = tmp_path / "t.json"
    path.write_text("[]")
    with pytest.raises(ParseError):
        load_trajectory(path)


def test_left_limit_price_at_endpoint(twounit_solution):
    traj = twounit_solution.trajectory
    t1 = traj.endpoints[1]
    left = traj.segments[0].price(t1, float(traj.load.value(t1)))
    right = traj.segments[1].price(t1, float(traj.load.value(t1)))
    assert left != right
    assert traj.price(t1) == left
    assert traj.price(t1, side="right") == right


def test_segments_must_abut(twounit_segments, twounit):
    s = twounit_segments
    if len(s) > 2:
        with pytest.raises(ValidationError):
            PiecewiseTrajectory([s[0], s[2]], twounit.load)


def test_flat_load_single_segment():
    units = (Unit("A", 10.0, 0.0, 100.0, 1.0, 1.0), Unit("B", 20.0, 0.0, 100.0, 1.0, 1.0))
    system = System(units, LoadProfile((120.0,), (0.0, 30.0)))
    h = hourly_dispatch(system)
    segs = trace(system, UpdatingRange(0.0, 30.0, h.X[0], h.X[1]))
    assert len(segs) == 1
    assert segs[0].price(10.0, 120.0) == pytest.approx(20.0)


def test_dense_scan_on_converged_ranges(twounit, twounit_solution):
    # each segment's own parametric model has no interior active-set change
    traj = twounit_solution.trajectory
    for seg in traj.segments:
        plp = assemble_parametric_model(twounit, twounit_solution.range_of(seg))
        grid = np.linspace(seg.t_start, seg.t_end, 401)[1:-1]
        for t in grid:
            D = float(twounit.load.value(t))
            ref = solve_lp(plp.instantiate([t, D]))
            assert ref.lam[0] == pytest.approx(seg.price(t, D), abs=1e-6)
            np.testing.assert_allclose(ref.x, seg.generation(t, D), atol=1e-6)
