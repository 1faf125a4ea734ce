import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sidelinksim.oneshot import (
    Action, OneShotState, Scheme, apply_proposed_breakout, check_occupancy,
    decide_transmission, draw_oneshot_counter, oneshot_span, select_oneshot_resource,
)
from sidelinksim.sps import Resource, SlotObservation, SpsState

R0 = Resource(10, 1)
R1 = Resource(60, 3)


def states(c_r, c_o, scheme=Scheme.ONE_SHOT_J3161, p_keep=0.8):
    return (SpsState(c_r=c_r, r_sps=R0, p_keep=p_keep, candidate_snapshot=[Resource(12, 0)]),
            OneShotState(c_o=c_o, scheme=scheme))


def reselect():
    return R1, [R1]


def test_oneshot_counter_range():
    rng = np.random.default_rng(0)
    draws = {draw_oneshot_counter(rng) for _ in range(500)}
    assert draws == {2, 3, 4, 5, 6}


def test_default_case_decrements_both():
    sps, os_ = states(4, 3)
    d = decide_transmission(sps, os_, True, np.random.default_rng(0), reselect)
    assert d.action is Action.RESERVED and (sps.c_r, os_.c_o) == (3, 2)


def test_case2_holds_reselection_counter():
    sps, os_ = states(4, 0)
    d = decide_transmission(sps, os_, True, np.random.default_rng(0), reselect)
    assert d.action is Action.ONE_SHOT and d.case == 2
    assert sps.c_r == 4 and 2 <= os_.c_o <= 6 and sps.r_sps == R0
    assert not d.arm_check


def test_case2_arms_listening_only_for_proposed():
    sps, os_ = states(4, 0, Scheme.PROPOSED)
    d = decide_transmission(sps, os_, True, np.random.default_rng(0), reselect)
    assert d.arm_check and d.anchor == R0


def test_case1_anchor_is_pre_reselection_resource():
    sps, os_ = states(0, 0, p_keep=0.0)
    d = decide_transmission(sps, os_, True, np.random.default_rng(0), reselect)
    assert d.action is Action.ONE_SHOT and d.case == 1 and d.reselected
    assert d.anchor == R0 and sps.r_sps == R1 and 5 <= sps.c_r <= 15


def test_case3_moving_redraws_oneshot_counter():
    rng = np.random.default_rng(1)
    sps, os_ = states(0, 1, p_keep=0.8)
    sps.p_keep = 1.0  # force keep
    d = decide_transmission(sps, os_, True, rng, reselect)
    assert d.action is Action.RESERVED and d.case == 3
    assert 1 <= os_.c_o <= 5  # redrawn then decremented
    sps, os_ = states(0, 1)
    sps.p_keep = 1.0
    decide_transmission(sps, os_, False, rng, reselect)
    assert os_.c_o == 0


def test_case3_reselection_defers_the_packet():
    sps, os_ = states(0, 3, p_keep=0.0)
    d = decide_transmission(sps, os_, True, np.random.default_rng(0), reselect)
    assert d.action is Action.RESELECT_NOW and sps.r_sps == R1


def test_sps_only_never_one_shots():
    sps, os_ = states(3, 0, Scheme.SPS_ONLY)
    d = decide_transmission(sps, os_, True, np.random.default_rng(0), reselect)
    assert d.action is Action.RESERVED and sps.c_r == 2 and os_.c_o == 0


def test_oneshot_resource_within_three_slots():
    span = oneshot_span(Resource(98, 0))
    assert span == {99, 0, 1}
    cands = [Resource(s, t) for s in range(100) for t in range(5)]
    rng = np.random.default_rng(0)
    for _ in range(100):
        assert select_oneshot_resource(cands, Resource(98, 0), rng, 5).slot_in_period in span


def test_oneshot_fallback_when_no_candidate_in_span():
    rng = np.random.default_rng(0)
    picks = {select_oneshot_resource([Resource(50, 0)], R0, rng, 5) for _ in range(400)}
    assert picks == {Resource(s, t) for s in (11, 12, 13) for t in range(5)}


def test_oneshot_prefers_snapshot_candidates():
    rng = np.random.default_rng(0)
    snap = [Resource(12, 4), Resource(40, 0)]
    assert {select_oneshot_resource(snap, R0, rng, 5) for _ in range(50)} == {Resource(12, 4)}


def obs(tb_rssi=None, decoded=()):
    rssi = np.full(5, -np.inf)
    if tb_rssi:
        rssi[tb_rssi[0]] = tb_rssi[1]
    return SlotObservation(0, rssi, decoded_tbs=list(decoded))


@pytest.mark.parametrize("o,rssi_detect,want", [
    (obs(), True, False),
    (obs(decoded=[(5, 1)]), False, True),
    (obs(decoded=[(5, 2)]), True, False),
    (obs((1, -90.0)), True, True),
    (obs((1, -90.0)), False, False),
    (obs((1, -97.0)), True, False),
])
def test_occupancy_detection(o, rssi_detect, want):
    _, os_ = states(3, 0, Scheme.PROPOSED)
    os_.pending_occupancy_check = (R0, 0)
    assert check_occupancy(os_, o, R0, -94.0, rssi_detect) is want
    assert os_.pending_occupancy_check is None


def test_breakout_redraws_both_counters():
    sps, os_ = states(9, 0, Scheme.PROPOSED)
    assert apply_proposed_breakout(sps, os_, True, np.random.default_rng(0), reselect)
    assert sps.r_sps == R1 and 5 <= sps.c_r <= 15 and 2 <= os_.c_o <= 6


def test_free_resource_leaves_state_alone():
    sps, os_ = states(9, 4, Scheme.PROPOSED)
    assert not apply_proposed_breakout(sps, os_, False, np.random.default_rng(0), reselect)
    assert (sps.r_sps, sps.c_r, os_.c_o) == (R0, 9, 4)


@given(st.integers(0, 2**32), st.sampled_from(list(Scheme)), st.booleans())
@settings(max_examples=50, deadline=None)
def test_counters_stay_in_range_over_long_sequences(seed, scheme, moving):
    rng = np.random.default_rng(seed)
    sps, os_ = SpsState(c_r=7, r_sps=R0, candidate_snapshot=[]), OneShotState(c_o=4, scheme=scheme)
    for _ in range(300):
        d = decide_transmission(sps, os_, moving, rng, reselect)
        if d.action is Action.RESELECT_NOW:
            d = decide_transmission(sps, os_, moving, rng, reselect)
            assert d.action is not Action.RESELECT_NOW
        assert 0 <= sps.c_r <= 15
        assert 0 <= os_.c_o <= 6


def test_case2_returns_to_unchanged_reservation():
    rng = np.random.default_rng(0)
    sps, os_ = states(4, 0)
    decide_transmission(sps, os_, True, rng, reselect)
    d = decide_transmission(sps, os_, True, rng, reselect)
    assert d.action is Action.RESERVED and sps.r_sps == R0 and sps.c_r == 3
