"""Deterministic two-way link emulator.

Each direction has its own seeded PRNG, serialization state and FIFO
guard, so a fixed seed plus a fixed submission sequence always yields
the same delivery schedule.  Per submitted packet the PRNG draws are:
one uniform for the loss decision, then (only when delivered) one
uniform for jitter.  Replay oracles in the tests rely on that order.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field


@dataclass(frozen=True)
class LinkSpec:
    one_way_delay_ms: float = 0.0
    jitter_ms: float = 0.0
    loss_fraction: float = 0.0
    bandwidth_cap_mbps: float = 0.0     # 0 = uncapped
    seed: int = 0

    @classmethod
    def from_rtt(cls, rtt_ms: float, **kw) -> "LinkSpec":
        return cls(one_way_delay_ms=rtt_ms / 2.0, **kw)


@dataclass
class DirectionStats:
    submitted: int = 0
    delivered: int = 0
    dropped: int = 0
    bytes: int = 0


class EmulatedLink:
    """Directions are 0 (a to b) and 1 (b to a)."""

    def __init__(self, spec: LinkSpec):
        self.spec = spec
        self._rng = [random.Random(spec.seed * 2 + 1),
                     random.Random(spec.seed * 2 + 2)]
        self._busy_until = [0.0, 0.0]
        self._last_arrival = [0.0, 0.0]
        self.stats = [DirectionStats(), DirectionStats()]

    def submit(self, direction: int, size_bytes: int, now_us: float) -> float | None:
        """Delivery time in microseconds, or None when the packet drops."""
        spec = self.spec
        rng = self._rng[direction]
        st = self.stats[direction]
        st.submitted += 1
        if rng.random() < spec.loss_fraction:
            st.dropped += 1
            return None
        jitter_us = rng.uniform(-spec.jitter_ms, spec.jitter_ms) * 1000.0
        start = max(now_us, self._busy_until[direction])
        if spec.bandwidth_cap_mbps > 0:
            start += size_bytes * 8.0 / spec.bandwidth_cap_mbps
        self._busy_until[direction] = start
        arrival = start + spec.one_way_delay_ms * 1000.0 + jitter_us
        arrival = max(arrival, self._last_arrival[direction])  # FIFO
        self._last_arrival[direction] = arrival
        st.delivered += 1
        st.bytes += size_bytes
        return arrival
