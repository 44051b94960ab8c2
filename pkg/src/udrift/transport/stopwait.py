"""Stop-and-wait reference sender/receiver.

The benchmark baseline: one packet in flight, next sent only on its
ACK.  Wire-compatible with the packet framing but deliberately naive,
so it shows what a window of one does to a long fat pipe.
"""

from __future__ import annotations

import hashlib

from ..cipher import Blowfish, PacketCipher
from .packet import (
    AckInfo,
    ControlPacket,
    ControlType,
    DataPacket,
    DATA_PAYLOAD_MAX,
    PacketError,
    pack_control,
    pack_data,
    unpack,
)

RETRY_MIN_US = 300_000


class StopWaitSender:
    def __init__(self, payload: bytes, conn_id: int = 1,
                 key: bytes | None = None):
        self.chunks = [payload[i:i + DATA_PAYLOAD_MAX]
                       for i in range(0, len(payload), DATA_PAYLOAD_MAX)] or [b""]
        self.conn_id = conn_id
        self.seq = 0
        self.outbox: list[bytes] = []
        self.rtt_us = 500_000.0
        self._sent_at = 0
        self._deadline = 0
        self.done = False
        self.done_at_us = 0
        self.retransmits = 0
        self._cipher = PacketCipher(Blowfish(key), bytes(8)) if key else None

    def start(self, now_us: int) -> None:
        self._emit(now_us)

    def _emit(self, now_us: int) -> None:
        payload = self.chunks[self.seq]
        if self._cipher is not None:
            payload = self._cipher.seal(self.seq, payload)
        self.outbox.append(pack_data(self.seq, now_us & 0xFFFFFFFF,
                                     self.conn_id, payload))
        self._sent_at = now_us
        self._deadline = now_us + max(2 * self.rtt_us, RETRY_MIN_US)

    def on_datagram(self, dgram: bytes, now_us: int) -> None:
        if self.done:
            return
        try:
            pkt = unpack(dgram)
        except PacketError:
            return
        if not isinstance(pkt, ControlPacket) or pkt.ctype != ControlType.ACK:
            return
        info = AckInfo.unpack(pkt.payload)
        if info.ack_seq != self.seq + 1:
            return
        sample = now_us - self._sent_at
        self.rtt_us = 0.875 * self.rtt_us + 0.125 * sample
        self.seq += 1
        if self.seq >= len(self.chunks):
            self.done = True
            self.done_at_us = now_us
            self.outbox.append(pack_control(ControlType.SHUTDOWN, 0,
                                            now_us & 0xFFFFFFFF, self.conn_id))
            return
        self._emit(now_us)

    def poll(self, now_us: int) -> int | None:
        if self.done:
            return None
        if now_us >= self._deadline:
            self.retransmits += 1
            self._emit(now_us)
        return self._deadline


class StopWaitReceiver:
    def __init__(self, conn_id: int = 1, key: bytes | None = None):
        self.conn_id = conn_id
        self.expected = 0
        self.received = 0
        self.hash = hashlib.md5()
        self.outbox: list[bytes] = []
        self.done = False
        self._cipher = PacketCipher(Blowfish(key), bytes(8)) if key else None

    def on_datagram(self, dgram: bytes, now_us: int) -> None:
        try:
            pkt = unpack(dgram)
        except PacketError:
            return
        if isinstance(pkt, ControlPacket):
            if pkt.ctype == ControlType.SHUTDOWN:
                self.done = True
            return
        if isinstance(pkt, DataPacket):
            if pkt.seq == self.expected:
                payload = pkt.payload
                if self._cipher is not None:
                    payload = self._cipher.open(pkt.seq, payload)
                self.hash.update(payload)
                self.received += len(payload)
                self.expected += 1
            info = AckInfo(self.expected, 0, 0, 0, 0, 1)
            self.outbox.append(pack_control(ControlType.ACK, 0,
                                            now_us & 0xFFFFFFFF, self.conn_id,
                                            info.pack()))

    def poll(self, now_us: int) -> int | None:
        return None
