"""Rate-based congestion control.

The sender paces data packets at ``pkt_interval_us``.  Every rate
interval (10 ms) without loss the packet rate grows additively, bounded
by the receiver's capacity estimate and the configured bandwidth cap.
A congestion event multiplies the interval by 1.125 and freezes the
additive increase for one rate interval.  Lost sequence numbers wait in
``loss_list``; retransmissions drain it before new data is sent.

A transfer starts in window-limited slow start (the window doubles per
round trip as acknowledgments arrive); the first loss or a full window
ends it and seeds the pacing rate from the receiver's measured arrival
rate.
"""

from __future__ import annotations

import heapq
from typing import Iterable

from .packet import MAX_DATAGRAM

SYN_INTERVAL_US = 10_000
ALPHA_PPS = 10.0
DECREASE_FACTOR = 1.125
INITIAL_RATE_MBPS = 1.0
INITIAL_CWND_PKTS = 16.0
MIN_INTERVAL_US = 1.0


def mbps_to_pps(mbps: float) -> float:
    """Full-size datagrams per second at a given wire rate."""
    return mbps * 1e6 / (8 * MAX_DATAGRAM)


def compress_ranges(seqs: Iterable[int]) -> list[tuple[int, int]]:
    """Sorted, deduplicated [start, end] runs covering ``seqs``."""
    out: list[tuple[int, int]] = []
    for s in sorted(set(seqs)):
        if out and s == out[-1][1] + 1:
            out[-1] = (out[-1][0], s)
        else:
            out.append((s, s))
    return out


def expand_ranges(ranges: Iterable[tuple[int, int]]) -> list[int]:
    seqs: list[int] = []
    for start, end in ranges:
        seqs.extend(range(start, end + 1))
    return seqs


class RateControl:
    def __init__(self, cap_mbps: float = 0.0, now_us: int = 0):
        self.cap_pps = mbps_to_pps(cap_mbps) if cap_mbps > 0 else 0.0
        self.min_interval_us = 1e6 / self.cap_pps if self.cap_pps else 0.0
        self.pkt_interval_us = max(1e6 / mbps_to_pps(INITIAL_RATE_MBPS),
                                   self.min_interval_us)
        self.loss_list: list[int] = []          # heap
        self._loss_set: set[int] = set()
        self.recv_rate_pps = 0.0
        self.est_capacity_pps = 0.0
        self.frozen_until_us = now_us
        self.loss_this_interval = False
        self.slow_start = True
        self.cwnd = INITIAL_CWND_PKTS
        self.last_dec_seq = -1

    # --- rate state ----------------------------------------------------

    def current_pps(self) -> float:
        return 1e6 / self.pkt_interval_us

    def on_nak(self, ranges: Iterable[tuple[int, int]], now_us: int) -> None:
        """Congestion event: slow down, queue the losses, freeze growth."""
        self.pkt_interval_us *= DECREASE_FACTOR
        self.merge_loss(expand_ranges(ranges))
        self._freeze(now_us)

    def absorb_loss(self, ranges: Iterable[tuple[int, int]], now_us: int) -> None:
        """Queue losses without a rate decrease (same congestion epoch,
        or loss the receiver's arrival rate says is not ours)."""
        self.merge_loss(expand_ranges(ranges))
        self._freeze(now_us)

    def _freeze(self, now_us: int) -> None:
        self.frozen_until_us = now_us + SYN_INTERVAL_US
        self.loss_this_interval = True

    def on_rate_interval(self, now_us: int) -> None:
        had_loss = self.loss_this_interval
        self.loss_this_interval = False
        if self.slow_start or had_loss or now_us < self.frozen_until_us:
            return
        pps = self.current_pps()
        if self.est_capacity_pps > 0:
            inc = max(min(ALPHA_PPS, self.est_capacity_pps - pps), 1.0)
        else:
            inc = ALPHA_PPS
        pps += inc
        if self.cap_pps:
            pps = min(pps, self.cap_pps)
        self.pkt_interval_us = max(1e6 / pps, self.min_interval_us, MIN_INTERVAL_US)

    def exit_slow_start(self, fallback_pps: float, now_us: int) -> None:
        if not self.slow_start:
            return
        self.slow_start = False
        # seed pacing from what the path demonstrably carried: the burst
        # capacity estimate when available, else the windowed arrival
        # rate, else the slow-start window itself
        pps = max(self.recv_rate_pps, self.est_capacity_pps)
        if pps <= 0:
            pps = fallback_pps
        pps = max(pps, 1.0)
        if self.cap_pps:
            pps = min(pps, self.cap_pps)
        self.pkt_interval_us = max(1e6 / pps, self.min_interval_us, MIN_INTERVAL_US)

    # --- retransmit queue ----------------------------------------------

    def merge_loss(self, seqs: Iterable[int]) -> None:
        for s in seqs:
            if s not in self._loss_set:
                self._loss_set.add(s)
                heapq.heappush(self.loss_list, s)

    def pop_retransmit(self, floor: int) -> int | None:
        """Lowest queued loss >= floor; entries below are stale (acked)."""
        while self.loss_list:
            s = heapq.heappop(self.loss_list)
            self._loss_set.discard(s)
            if s >= floor:
                return s
        return None

    def peek_retransmit(self, floor: int) -> int | None:
        while self.loss_list and self.loss_list[0] < floor:
            self._loss_set.discard(heapq.heappop(self.loss_list))
        return self.loss_list[0] if self.loss_list else None

    def loss_pending(self) -> bool:
        return bool(self.loss_list)

    def loss_seqs(self) -> list[int]:
        return sorted(self._loss_set)
