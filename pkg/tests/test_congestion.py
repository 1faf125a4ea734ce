import pytest
from hypothesis import given, strategies as st

from sidelinksim.congestion import (
    CongestionState, gate_and_quantize, itt_from_vd, quantize_rrp, update_avg_vd,
)


@pytest.mark.parametrize("vd,itt", [(0, 0.1), (25, 0.1), (50, 0.2), (100, 0.4), (149, 0.596),
                                    (150, 0.6), (400, 0.6)])
def test_itt_piecewise(vd, itt):
    assert itt_from_vd(vd) == pytest.approx(itt)


@given(st.floats(0, 1e4))
def test_itt_clamped(vd):
    assert 0.1 <= itt_from_vd(vd) <= 0.6


def test_ewma_weight():
    s = CongestionState(avg_vd=40.0)
    update_avg_vd(s, 60.0)
    assert s.avg_vd == pytest.approx(0.05 * 60 + 0.95 * 40)
    assert s.itt_s == pytest.approx(s.avg_vd / 250)


def test_ewma_converges_to_constant_input():
    s = CongestionState()
    for _ in range(400):
        update_avg_vd(s, 80.0)
    assert s.avg_vd == pytest.approx(80.0, rel=1e-6)


def test_negative_density_rejected():
    with pytest.raises(ValueError):
        update_avg_vd(CongestionState(), -1)


@pytest.mark.parametrize("itt,rrp", [(0.1, 100), (0.149, 100), (0.15, 200), (0.16, 200),
                                     (0.24, 200), (0.25, 300), (0.387, 400), (0.6, 600)])
def test_rrp_rounds_to_nearest_multiple(itt, rrp):
    assert quantize_rrp(itt) == rrp


@given(st.floats(0.1, 0.6))
def test_rrp_on_grid(itt):
    r = quantize_rrp(itt)
    assert r % 100 == 0 and 100 <= r <= 600 and abs(r - itt * 1000) <= 50 + 1e-6


def test_gate():
    s = CongestionState(itt_s=0.24, last_tx_slot=1000)
    assert gate_and_quantize(s, 1200) == (False, 200)
    assert gate_and_quantize(s, 1240) == (True, 200)
    s = CongestionState(itt_s=0.1, last_tx_slot=0)
    assert gate_and_quantize(s, 100) == (True, 100)


def test_disabled_always_transmits_at_100():
    s = CongestionState(itt_s=0.5, last_tx_slot=1000, enabled=False)
    assert gate_and_quantize(s, 1001) == (True, 100)
    update_avg_vd(s, 500.0)
    assert s.itt_s == 0.1
