import random
import struct

import pytest

from udrift.errors import PacketError
from udrift.transport.packet import (
    AckInfo,
    ControlPacket,
    ControlType,
    DataPacket,
    DATA_PAYLOAD_MAX,
    HEADER_LEN,
    Handshake,
    pack_control,
    pack_data,
    pack_nak_ranges,
    seq_unwrap,
    seq_wire,
    unpack,
    unpack_nak_ranges,
)


def test_header_is_sixteen_bytes():
    assert HEADER_LEN == 16
    assert len(pack_data(1, 2, 3, b"")) == 16
    assert len(pack_control(ControlType.ACK, 0, 0, 0)) == 16


def test_data_packet_wire_layout():
    got = pack_data(0x12345678, 0xAABBCCDD, 0x01020304, b"xy")
    assert got == bytes.fromhex("12345678" "00000000" "aabbccdd" "01020304") + b"xy"


def test_control_packet_wire_layout():
    got = pack_control(ControlType.NAK, 2, 7, 9, b"")
    word0 = 0x80000000 | (3 << 16)
    assert got == struct.pack(">IIII", word0, 2, 7, 9)


def test_roundtrip_data():
    pkt = unpack(pack_data(55, 66, 77, b"payload"))
    assert isinstance(pkt, DataPacket)
    assert (pkt.seq, pkt.ts_us, pkt.conn_id, pkt.payload) == (55, 66, 77, b"payload")


def test_roundtrip_control_types():
    for ctype in ControlType:
        pkt = unpack(pack_control(ctype, 123, 456, 789, b"zz"))
        assert isinstance(pkt, ControlPacket)
        assert pkt.ctype == ctype
        assert (pkt.info, pkt.ts_us, pkt.conn_id, pkt.payload) == (123, 456, 789, b"zz")


def test_control_type_values_fixed():
    assert ControlType.HANDSHAKE == 0
    assert ControlType.KEEPALIVE == 1
    assert ControlType.ACK == 2
    assert ControlType.NAK == 3
    assert ControlType.SHUTDOWN == 5
    assert ControlType.ACK2 == 6


def test_unpack_rejects_short_and_unknown():
    with pytest.raises(PacketError):
        unpack(b"short")
    bad = struct.pack(">IIII", 0x80000000 | (4 << 16), 0, 0, 0)
    with pytest.raises(PacketError):
        unpack(bad)


def test_unpack_never_raises_unexpected(tmp_path):
    rng = random.Random(0)
    for _ in range(2000):
        blob = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 64)))
        try:
            unpack(blob)
        except PacketError:
            pass


def test_payload_cap_enforced():
    pack_data(0, 0, 0, bytes(DATA_PAYLOAD_MAX))
    with pytest.raises(PacketError):
        pack_data(0, 0, 0, bytes(DATA_PAYLOAD_MAX + 1))


def test_seq_wraps_modulo_2_31():
    top = (1 << 31) - 1
    assert seq_wire(top + 1) == 0
    assert seq_unwrap(0, top) == top + 1
    assert seq_unwrap(5, top - 2) == (1 << 31) + 5
    assert seq_unwrap(100, 100) == 100
    assert seq_unwrap(99, 105) == 99


def test_handshake_payload_roundtrip():
    hs = Handshake(1, 1, 123456, 100, bytes(range(16)))
    back = Handshake.unpack(hs.pack())
    assert back == hs
    assert len(hs.pack()) == 2 + 1 + 4 + 4 + 16


def test_ack_info_roundtrip():
    info = AckInfo(99, 1000, 50, 800, 9000, 4096)
    assert AckInfo.unpack(info.pack()) == info


def test_nak_ranges_roundtrip():
    ranges = [(4, 4), (6, 7), (100, 100), (200, 300)]
    assert unpack_nak_ranges(pack_nak_ranges(ranges)) == ranges
    assert unpack_nak_ranges(pack_nak_ranges([])) == []
