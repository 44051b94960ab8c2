"""Wire format of the datagram transport.

Every datagram starts with a 16-byte header of four big-endian 32-bit
words.  Word 0 distinguishes data from control traffic: MSB clear means
data (low 31 bits are the sequence number), MSB set means control
(bits 16..30 carry the control type).  Word 1 is type-specific extra
info, word 2 a microsecond send timestamp relative to connection start,
word 3 the connection id.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

from ..errors import PacketError

HEADER_LEN = 16
# 1472-byte UDP payload fits a 1500-byte MTU; 16 bytes go to the header.
DATA_PAYLOAD_MAX = 1456
MAX_DATAGRAM = HEADER_LEN + DATA_PAYLOAD_MAX

SEQ_MOD = 1 << 31
SEQ_HALF = 1 << 30

_HEADER = struct.Struct(">IIII")
_CONTROL_BIT = 0x80000000


class ControlType(IntEnum):
    HANDSHAKE = 0
    KEEPALIVE = 1
    ACK = 2
    NAK = 3
    SHUTDOWN = 5
    ACK2 = 6


_VALID_CONTROL = {int(t) for t in ControlType}


@dataclass(frozen=True)
class DataPacket:
    seq: int            # 31-bit wire sequence number
    ts_us: int
    conn_id: int
    payload: bytes


@dataclass(frozen=True)
class ControlPacket:
    ctype: ControlType
    info: int           # ACK id, NAK range count, or 0
    ts_us: int
    conn_id: int
    payload: bytes


def pack_data(seq: int, ts_us: int, conn_id: int, payload: bytes) -> bytes:
    if len(payload) > DATA_PAYLOAD_MAX:
        raise PacketError(f"payload {len(payload)} exceeds {DATA_PAYLOAD_MAX}")
    return _HEADER.pack(seq % SEQ_MOD, 0, ts_us & 0xFFFFFFFF, conn_id & 0xFFFFFFFF) + payload


def pack_control(ctype: ControlType, info: int, ts_us: int, conn_id: int,
                 payload: bytes = b"") -> bytes:
    word0 = _CONTROL_BIT | ((int(ctype) & 0x7FFF) << 16)
    return _HEADER.pack(word0, info & 0xFFFFFFFF, ts_us & 0xFFFFFFFF,
                        conn_id & 0xFFFFFFFF) + payload


def unpack(datagram: bytes) -> DataPacket | ControlPacket:
    if len(datagram) < HEADER_LEN:
        raise PacketError(f"datagram too short: {len(datagram)} bytes")
    word0, word1, word2, word3 = _HEADER.unpack_from(datagram)
    payload = datagram[HEADER_LEN:]
    if word0 & _CONTROL_BIT:
        ctype = (word0 >> 16) & 0x7FFF
        if ctype not in _VALID_CONTROL:
            raise PacketError(f"unknown control type {ctype}")
        return ControlPacket(ControlType(ctype), word1, word2, word3, payload)
    if len(payload) > DATA_PAYLOAD_MAX:
        raise PacketError(f"data payload {len(payload)} exceeds {DATA_PAYLOAD_MAX}")
    return DataPacket(word0, word2, word3, payload)


# Sequence numbers occupy 31 bits and wrap.  Internally the transport
# counts with unbounded ints; these helpers translate at the wire edge.

def seq_wire(abs_seq: int) -> int:
    return abs_seq % SEQ_MOD


def seq_unwrap(wire_seq: int, reference: int) -> int:
    """Absolute sequence closest to ``reference`` that maps to ``wire_seq``."""
    delta = (wire_seq - reference) % SEQ_MOD
    if delta < SEQ_HALF:
        return reference + delta
    return reference + delta - SEQ_MOD


# --- handshake payload -------------------------------------------------
#
# version(u16) cipher(u8) initial_seq(u32) bandwidth_cap_mbps(u32) nonce(16)

_HANDSHAKE = struct.Struct(">HBII16s")

HS_REQUEST = 0
HS_OK = 1
HS_REJECT_VERSION = 2
HS_REJECT_CIPHER = 3

CIPHER_NONE = 0
CIPHER_BLOWFISH = 1


@dataclass(frozen=True)
class Handshake:
    version: int
    cipher: int
    initial_seq: int
    bandwidth_cap_mbps: int
    nonce: bytes

    def pack(self) -> bytes:
        return _HANDSHAKE.pack(self.version, self.cipher, self.initial_seq,
                               self.bandwidth_cap_mbps, self.nonce)

    @classmethod
    def unpack(cls, payload: bytes) -> "Handshake":
        try:
            version, cipher, seq, cap, nonce = _HANDSHAKE.unpack(payload)
        except struct.error as exc:
            raise PacketError(f"bad handshake payload: {exc}") from None
        return cls(version, cipher, seq, cap, nonce)


# --- ACK payload --------------------------------------------------------
#
# ack_seq(u32) rtt_us(u32) rtt_var_us(u32) recv_rate_pps(u32)
# est_capacity_pps(u32) avail_window_pkts(u32)

_ACK = struct.Struct(">IIIIII")


@dataclass(frozen=True)
class AckInfo:
    ack_seq: int
    rtt_us: int
    rtt_var_us: int
    recv_rate_pps: int
    est_capacity_pps: int
    avail_window_pkts: int

    def pack(self) -> bytes:
        return _ACK.pack(self.ack_seq, min(self.rtt_us, 0xFFFFFFFF),
                         min(self.rtt_var_us, 0xFFFFFFFF),
                         min(self.recv_rate_pps, 0xFFFFFFFF),
                         min(self.est_capacity_pps, 0xFFFFFFFF),
                         min(self.avail_window_pkts, 0xFFFFFFFF))

    @classmethod
    def unpack(cls, payload: bytes) -> "AckInfo":
        try:
            return cls(*_ACK.unpack(payload))
        except struct.error as exc:
            raise PacketError(f"bad ack payload: {exc}") from None


# --- NAK payload --------------------------------------------------------
#
# Ranges of missing wire sequences.  A lone loss is one word; a span sets
# the MSB on the first word: (start | MSB, end).

def pack_nak_ranges(ranges: list[tuple[int, int]]) -> bytes:
    words: list[int] = []
    for start, end in ranges:
        if start == end:
            words.append(start % SEQ_MOD)
        else:
            words.append((start % SEQ_MOD) | _CONTROL_BIT)
            words.append(end % SEQ_MOD)
    return struct.pack(f">{len(words)}I", *words)


def unpack_nak_ranges(payload: bytes) -> list[tuple[int, int]]:
    if len(payload) % 4:
        raise PacketError("nak payload not word-aligned")
    words = struct.unpack(f">{len(payload) // 4}I", payload)
    ranges = []
    i = 0
    while i < len(words):
        w = words[i]
        if w & _CONTROL_BIT:
            if i + 1 >= len(words):
                raise PacketError("nak range missing end word")
            ranges.append((w & ~_CONTROL_BIT, words[i + 1]))
            i += 2
        else:
            ranges.append((w, w))
            i += 1
    return ranges
