"""Transport tunables shared by the real-socket and emulated drivers."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .packet import CIPHER_NONE


@dataclass
class TransportConfig:
    version: int = 1
    cipher: int = CIPHER_NONE
    key: bytes | None = None
    bandwidth_cap_mbps: float = 0.0     # 0 = uncapped
    recv_window_pkts: int = 8192
    send_buffer_bytes: int = 8 << 20
    max_cwnd_pkts: int = 8192
    idle_timeout_s: float = 30.0
    # seeded in tests so handshake ids/nonces (and thus packet traces)
    # are reproducible
    rng: random.Random | None = None

    def make_rng(self) -> random.Random:
        return self.rng if self.rng is not None else random.Random()
