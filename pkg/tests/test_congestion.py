import pytest

from udrift.transport.congestion import (
    RateControl,
    SYN_INTERVAL_US,
    compress_ranges,
    mbps_to_pps,
)


def rate_with(pps: float, capacity: float = 0.0, cap_mbps: float = 0.0):
    rc = RateControl(cap_mbps)
    rc.slow_start = False
    rc.pkt_interval_us = 1e6 / pps
    rc.est_capacity_pps = capacity
    return rc


def test_initial_interval_is_one_mbps():
    rc = RateControl()
    assert rc.current_pps() == pytest.approx(mbps_to_pps(1.0))


def test_nak_multiplies_interval():
    rc = rate_with(1000.0)
    rc.pkt_interval_us = 1000.0
    rc.on_nak([(5, 5)], now_us=0)
    assert rc.pkt_interval_us == pytest.approx(1125.0)


def test_two_naks_compound():
    rc = rate_with(1000.0)
    rc.pkt_interval_us = 1000.0
    rc.on_nak([(5, 5)], now_us=0)
    rc.on_nak([(6, 6)], now_us=0)
    assert rc.pkt_interval_us == pytest.approx(1265.625)


def test_nak_merges_loss_list():
    rc = rate_with(1000.0)
    rc.merge_loss([4])
    rc.on_nak([(6, 7)], now_us=0)
    assert rc.loss_seqs() == [4, 6, 7]


def test_loss_list_sorted_and_unique():
    rc = rate_with(1000.0)
    rc.merge_loss([9, 4, 9, 7, 4])
    assert rc.loss_seqs() == [4, 7, 9]
    assert rc.pop_retransmit(0) == 4
    assert rc.pop_retransmit(0) == 7
    assert rc.pop_retransmit(0) == 9
    assert rc.pop_retransmit(0) is None


def test_pop_retransmit_skips_acked():
    rc = rate_with(1000.0)
    rc.merge_loss([3, 8, 12])
    assert rc.pop_retransmit(9) == 12


def test_rate_interval_alpha_bound():
    rc = rate_with(100.0, capacity=10_000.0)
    rc.on_rate_interval(now_us=SYN_INTERVAL_US)
    assert rc.current_pps() == pytest.approx(110.0)


def test_rate_interval_capacity_bound():
    rc = rate_with(9995.0, capacity=10_000.0)
    rc.on_rate_interval(now_us=SYN_INTERVAL_US)
    assert rc.current_pps() == pytest.approx(10_000.0)


def test_rate_interval_frozen_unchanged():
    rc = rate_with(100.0, capacity=10_000.0)
    rc.frozen_until_us = 50_000
    rc.on_rate_interval(now_us=20_000)
    assert rc.current_pps() == pytest.approx(100.0)


def test_rate_interval_skipped_after_loss_in_interval():
    rc = rate_with(100.0, capacity=10_000.0)
    rc.absorb_loss([(5, 5)], now_us=0)
    rc.on_rate_interval(now_us=100_000)  # freeze expired, loss flag not
    assert rc.current_pps() == pytest.approx(100.0)
    rc.on_rate_interval(now_us=110_000)
    assert rc.current_pps() == pytest.approx(110.0)


def test_rate_never_exceeds_configured_cap():
    cap_pps = mbps_to_pps(10.0)
    rc = rate_with(cap_pps - 2, capacity=1e9, cap_mbps=10.0)
    for i in range(10):
        rc.on_rate_interval(now_us=(i + 1) * SYN_INTERVAL_US)
    assert rc.current_pps() <= cap_pps + 1e-6


def test_increase_at_least_one_pps_above_capacity_estimate():
    rc = rate_with(5000.0, capacity=4000.0)
    rc.on_rate_interval(now_us=SYN_INTERVAL_US)
    assert rc.current_pps() == pytest.approx(5001.0)


def test_absorb_loss_keeps_rate():
    rc = rate_with(1000.0)
    rc.pkt_interval_us = 1000.0
    rc.absorb_loss([(4, 5)], now_us=0)
    assert rc.pkt_interval_us == pytest.approx(1000.0)
    assert rc.loss_seqs() == [4, 5]


def test_exit_slow_start_uses_recv_rate():
    rc = RateControl()
    rc.recv_rate_pps = 4321.0
    rc.exit_slow_start(fallback_pps=100.0, now_us=0)
    assert not rc.slow_start
    assert rc.current_pps() == pytest.approx(4321.0)
    # second call is a no-op
    rc.exit_slow_start(fallback_pps=9.0, now_us=0)
    assert rc.current_pps() == pytest.approx(4321.0)


def test_exit_slow_start_fallback_and_cap():
    rc = RateControl(cap_mbps=10.0)
    rc.exit_slow_start(fallback_pps=1e9, now_us=0)
    assert rc.current_pps() == pytest.approx(mbps_to_pps(10.0))


def test_compress_ranges():
    assert compress_ranges([4]) == [(4, 4)]
    assert compress_ranges([1, 2, 3, 7, 9, 10]) == [(1, 3), (7, 7), (9, 10)]
    assert compress_ranges([]) == []
    assert compress_ranges([5, 5, 4]) == [(4, 5)]
