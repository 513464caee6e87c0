import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from flexhca.capacity import series_from_residual
from flexhca.cf import solve_cf
from flexhca.df import (
    check_a4,
    check_thm3,
    delay_histogram,
    max_violation,
    merge_windows,
    minimal_delays,
    route_deficits,
    select_events,
    solve_df,
    solve_df_lp,
)
from flexhca.errors import EventNearHorizonEnd, Infeasible

from conftest import capacity_series

HAND = series_from_residual([1.0, 5.0, 5.0, 5.0], np.ones(4))


def test_select_events_disjoint():
    s = series_from_residual([1, 9, 2, 9, 9, 9], np.ones(6))
    events, windows = select_events(s, 2, 1)
    assert events == (0, 2)
    assert windows == ((0, 1), (2, 3))


def test_select_events_merged():
    s = series_from_residual([1, 2, 9, 9], np.ones(4))
    events, windows = select_events(s, 2, 2)
    assert events == (0, 1)
    assert windows == ((0, 3),)


def test_single_event_window():
    events, windows = select_events(HAND, 1, 2)
    assert windows == ((0, 2),)


def test_event_near_horizon_end():
    s = series_from_residual([5, 5, 5, 1], np.ones(4))
    with pytest.raises(EventNearHorizonEnd):
        select_events(s, 1, 1)
    # boundary slot T - 1 - D is allowed
    assert select_events(series_from_residual([5, 5, 1, 5], np.ones(4)), 1, 1)[0] == (2,)
    events, _ = select_events(s, 1, 1, restrict_candidates=True)
    assert events == (0,)
    events, windows = select_events(s, 1, 2, horizon="clip")
    assert events == (3,) and windows == ((3, 3),)


def test_merge_windows_transitive():
    assert merge_windows([0, 2, 4], 2) == [(0, 6)]
    assert merge_windows([0, 5], 2) == [(0, 2), (5, 7)]
    assert merge_windows([0, 5], 2, T=6) == [(0, 2), (5, 5)]


@pytest.mark.parametrize("c_res,slack", [([1, 5], 4.0), ([1, 1], 0.0)])
def test_a4_examples(c_res, slack):
    s = series_from_residual(c_res, np.ones(2))
    rep = check_a4(s, (0,), ((0, 1),), 1)
    assert rep.slack == (slack,)
    assert rep.ok


def test_a4_single_event_never_fails():
    # for K = 1 every window slot has c_dyn >= C[1], so the slack is >= 0;
    # with c_res = [1, 0.5] the lowest slot is the second one and C[1] = 0.5
    s = series_from_residual([1.0, 0.5], np.ones(2))
    assert check_a4(s, (0,), ((0, 1),), 1).slack == (0.5,)


VIOLATING = series_from_residual([9.0, 1.0, 2.0, 2.2, 9.0], np.ones(5))


def test_a4_violated():
    events, windows = select_events(VIOLATING, 2, 1)
    assert events == (1, 2) and windows == ((1, 3),)
    rep = check_a4(VIOLATING, events, windows, 2)
    assert rep.slack[0] == pytest.approx(-0.8)
    assert not rep.ok


@pytest.mark.parametrize("D,expected", [(1, 3.0), (2, 11.0 / 3.0), (3, 4.0)])
def test_hand_capacities(D, expected):
    plan = solve_df(HAND, 1, D)
    assert plan.capacity == pytest.approx(expected, rel=1e-12)
    assert solve_df_lp(HAND, 1, D).capacity == pytest.approx(expected, abs=1e-9)


def test_k0():
    plan = solve_df(HAND, 0, 2)
    assert plan.capacity == 1.0 and plan.U.shape == (3, 0)


def test_plan_json():
    plan = minimal_delays(solve_df(HAND, 1, 1), HAND)
    d = plan.to_json_dict()
    assert d["capacity_kw"] == pytest.approx(3.0)
    ev = d["events"][0]
    assert ev["t"] == 0 and ev["d_min"] == 1
    assert ev["reduce_kw"] == pytest.approx(2.0)
    assert ev["shifts"] == [{"offset": 1, "add_kw": pytest.approx(2.0)}]
    assert d["a4_ok"] is True and d["thm3_ok"] is False


def test_minimal_delay_hand():
    plan = solve_df(HAND, 1, 3)
    fixed = route_deficits(HAND, 3.0, plan.events, [3], False).feasible
    assert fixed
    from dataclasses import replace

    p = minimal_delays(replace(plan, capacity=3.0), HAND)
    assert p.minimal_delays == (1,)


def test_minimal_delays_zero_deficit():
    s = series_from_residual([4.0, 4.0, 4.0, 4.0, 9.0], np.ones(5))
    plan = minimal_delays(solve_df(s, 2, 2), s)
    assert plan.capacity == 4.0
    assert plan.minimal_delays == (0, 0)
    counts, values = delay_histogram(plan)
    assert counts.tolist() == [2, 0, 0]


def test_minimal_delays_independent_events():
    s = series_from_residual([1.0, 9.0, 5.0, 1.0, 9.0, 5.0], np.ones(6))
    plan = minimal_delays(solve_df(s, 2, 2), s)
    assert plan.minimal_delays == (1, 1)


def test_thm3_examples():
    assert not check_thm3(HAND, 1).ok
    assert not check_thm3(series_from_residual([1, 5, 5, 5, 5, 5, 5, 5, 5], np.ones(9)), 1).ok
    assert not check_thm3(series_from_residual([4, 5, 5, 5], np.ones(4)), 1).ok
    s = series_from_residual([4, 5, 6, 6], np.ones(4))
    rep = check_thm3(s, 1)
    assert rep.ok and rep.sums == (1.0,)
    assert solve_df(s, 1, 3).capacity == pytest.approx(5.0, rel=1e-12)
    assert max(solve_df(HAND, 1, D).capacity for D in (1, 2, 3)) == pytest.approx(4.0)


def test_strict_horizon_counterexample():
    """With windows forced inside the horizon the condition is not sufficient.

    Events sit at slots 0 and 3 of 5; the late one limits every window to a
    single slot, so the early deficit can never reach the spare in slot 4.
    Letting windows run to the horizon end restores equality.
    """
    s = series_from_residual([3.0, 5.0, 5.0, 4.0, 9.0], np.ones(5))
    assert check_thm3(s, 2).ok
    assert solve_cf(s, 2).capacity == 5.0
    strict = solve_df(s, 2, 1)
    assert strict.a4.ok
    assert strict.capacity == pytest.approx(4.0)
    with pytest.raises(EventNearHorizonEnd):
        solve_df(s, 2, 2)
    assert solve_df(s, 2, 4, horizon="clip").capacity == pytest.approx(5.0)


def test_lp_fixed_window_zero_depth_equivalent():
    # the event's window holds only event slots, so nothing can be shifted
    s = series_from_residual([1.0, 2.0, 9.0], np.ones(3))
    assert solve_df_lp(s, 2, 0).capacity == pytest.approx(1.0)
    assert solve_df(s, 2, 0).capacity == pytest.approx(1.0)


def test_a4_violated_lp_at_least_greedy():
    plan = solve_df(VIOLATING, 2, 1)
    assert plan.lower_bound_only
    assert solve_df_lp(VIOLATING, 2, 1).capacity >= plan.capacity - 1e-9


def test_infeasible():
    s = series_from_residual([1.0, 0.0, 5.0], [0.0, 1.0, 1.0])
    s2 = series_from_residual([-1.0, 5.0, 5.0], [0.0, 1.0, 1.0])
    with pytest.raises(Infeasible):
        solve_df(s2, 1, 1)
    assert solve_df(s, 1, 1).capacity >= 0


def _horizon_ok(s, K, D):
    try:
        select_events(s, K, D)
        return True
    except EventNearHorizonEnd:
        return False


@settings(max_examples=80)
@given(capacity_series(min_T=4, max_T=18, allow_zero_lhat=False), st.integers(1, 3), st.integers(1, 5))
def test_greedy_matches_lp(s, K, D):
    assume(K <= s.T - 2 and _horizon_ok(s, K, D) and s.sorted[0] >= 0)
    g = solve_df(s, K, D)
    lp = solve_df_lp(s, K, D)
    assert abs(g.capacity - lp.capacity) <= 1e-6 * max(1.0, lp.capacity)


@settings(max_examples=80)
@given(capacity_series(min_T=4, max_T=18, allow_zero_lhat=False), st.integers(1, 3), st.integers(1, 5))
def test_plan_invariants(s, K, D):
    assume(K <= s.T - 2 and _horizon_ok(s, K, D) and s.sorted[0] >= 0)
    plan = solve_df(s, K, D)
    C = plan.capacity
    assert np.allclose(plan.U.sum(axis=0), 0.0, atol=1e-9 * max(1, C))
    assert np.all(plan.U[0] <= 1e-12) and np.all(plan.U[1:] >= -1e-12)
    for k, t in enumerate(plan.events):
        assert -plan.U[0, k] <= C * s.lhat[t] + 1e-9 * max(1, C)
    assert max_violation(s, C, plan.u) <= 1e-7 * max(1, C)
    assert C <= solve_cf(s, K).capacity + 1e-9
    if _horizon_ok(s, K, D + 1):
        assert solve_df(s, K, D + 1).capacity >= C - 1e-9


@settings(max_examples=40)
@given(capacity_series(min_T=4, max_T=14, allow_zero_lhat=False), st.integers(1, 3), st.integers(1, 4))
def test_minimal_delays_pareto(s, K, D):
    assume(K <= s.T - 2 and _horizon_ok(s, K, D) and s.sorted[0] >= 0)
    plan = minimal_delays(solve_df(s, K, D), s)
    d = list(plan.minimal_delays)
    assert route_deficits(s, plan.capacity, plan.events, d, False).feasible
    for k in range(K):
        if d[k] > 0:
            trial = list(d)
            trial[k] -= 1
            assert not route_deficits(s, plan.capacity, plan.events, trial, False).feasible


@settings(max_examples=60)
@given(capacity_series(min_T=4, max_T=16, allow_zero_lhat=False), st.integers(1, 3), st.integers(1, 5))
def test_cap_at_capacity_is_tighter(s, K, D):
    assume(K <= s.T - 2 and _horizon_ok(s, K, D) and s.sorted[0] >= 0)
    a = solve_df(s, K, D)
    b = solve_df(s, K, D, cap_at_capacity=True)
    assert b.capacity <= a.capacity + 1e-9
    assert max_violation(s, b.capacity, b.u, cap_at_capacity=True) <= 1e-7 * max(1, b.capacity)
    lp = solve_df_lp(s, K, D, cap_at_capacity=True)
    assert abs(lp.capacity - b.capacity) <= 1e-6 * max(1.0, lp.capacity)
