"""Connection state machine, independent of sockets and clocks.

A driver feeds the endpoint datagrams (``on_datagram``) and time
(``poll``), and drains ``outbox`` after every call.  The application
surface is ``submit``/``take``/``shutdown``.  All times are microsecond
integers on whatever monotonic clock the driver uses.

Reliability model: cumulative ACKs every rate interval or every 64
packets, immediate NAKs when an arrival exposes a new gap, periodic
re-NAKs for losses that stay outstanding longer than about a round
trip, and a retransmit-everything timer as the last resort.  Sequence
numbers are 31 bits on the wire and unbounded integers internally.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from ..cipher import Blowfish, PacketCipher
from ..errors import (
    CipherUnavailable,
    ConnectTimeout,
    HandshakeRejected,
    ProtocolViolation,
    SendOnClosed,
    TransportError,
)
from .config import TransportConfig
from .congestion import (
    INITIAL_CWND_PKTS,
    SYN_INTERVAL_US,
    RateControl,
    compress_ranges,
    mbps_to_pps,
)
from .packet import (
    CIPHER_BLOWFISH,
    CIPHER_NONE,
    DATA_PAYLOAD_MAX,
    HS_OK,
    HS_REJECT_CIPHER,
    HS_REJECT_VERSION,
    HS_REQUEST,
    AckInfo,
    ControlPacket,
    ControlType,
    DataPacket,
    Handshake,
    PacketError,
    pack_control,
    pack_data,
    pack_nak_ranges,
    seq_unwrap,
    seq_wire,
    unpack,
    unpack_nak_ranges,
)

CLIENT = "client"
SERVER = "server"

CONNECTING = "connecting"
LISTENING = "listening"
ESTABLISHED = "established"
CLOSING = "closing"
CLOSED = "closed"

HS_RETRY_US = 1_000_000
HS_MAX_TRIES = 3
ACK_PACKET_COUNT = 64
EXP_MIN_US = 300_000
KEEPALIVE_US = 10_000_000
MAX_BURST = 64
SHUTDOWN_REPEATS = 3
RATE_WINDOW_US = 500_000
GAP_SAMPLES = 16

INITIAL_RTT_US = 100_000
INITIAL_RTT_VAR_US = 25_000

# loss is treated as congestion only when the receiver's arrival rate
# has reached this fraction of its own capacity estimate, i.e. the
# bottleneck is saturated; both numbers are measured at the receiver so
# neither lags the sender's ramp
CONGESTED_RECV_FRACTION = 0.95


def missing_ranges(last_contiguous: int, arrived_seq: int,
                   present=()) -> list[tuple[int, int]]:
    """Compressed ranges of every sequence strictly between
    ``last_contiguous`` and ``arrived_seq`` that is not in ``present``."""
    present = set(present)
    gap = [s for s in range(last_contiguous + 1, arrived_seq) if s not in present]
    return compress_ranges(gap)


@dataclass
class Counters:
    data_sent: int = 0
    data_bytes_sent: int = 0
    retransmits: int = 0
    data_received: int = 0
    duplicates: int = 0
    payload_delivered: int = 0
    acks_sent: int = 0
    acks_received: int = 0
    naks_sent: int = 0
    naks_received: int = 0
    exp_events: int = 0
    decreases: int = 0


@dataclass
class _RecvRateMeter:
    """Arrival-rate and capacity estimates from data packet timing."""
    arrivals: deque = field(default_factory=deque)
    gaps: deque = field(default_factory=lambda: deque(maxlen=GAP_SAMPLES))
    last_arrival_us: int | None = None

    def observe(self, now_us: int) -> None:
        self.arrivals.append(now_us)
        while self.arrivals and self.arrivals[0] < now_us - RATE_WINDOW_US:
            self.arrivals.popleft()
        if self.last_arrival_us is not None:
            self.gaps.append(max(now_us - self.last_arrival_us, 1))
        self.last_arrival_us = now_us

    def rate_pps(self) -> float:
        if len(self.arrivals) < 8:
            return 0.0
        span = self.arrivals[-1] - self.arrivals[0]
        if span <= 0:
            return 0.0
        return (len(self.arrivals) - 1) * 1e6 / span

    def capacity_pps(self) -> float:
        """Lower-median inter-arrival gap of the last 16 packets.  The
        sender paces in two-packet bursts, so at least half the gaps
        carry the bottleneck serialization time rather than the pacing
        interval; the lower median lands in that cluster."""
        if len(self.gaps) < 4:
            return 0.0
        ordered = sorted(self.gaps)
        return 1e6 / ordered[(len(ordered) - 1) // 2]


class Endpoint:
    def __init__(self, cfg: TransportConfig, role: str, now_us: int = 0):
        self.cfg = cfg
        self.role = role
        rng = cfg.make_rng()
        self.state = CONNECTING if role == CLIENT else LISTENING
        self.error: Exception | None = None
        self.outbox: list[bytes] = []
        self.counters = Counters()

        self.conn_id = rng.randrange(1, 1 << 32)
        self._nonce = rng.randbytes(16)
        self._initial_seq = rng.randrange(0, 1 << 31)
        self._epoch_us = now_us
        self._local_hs = Handshake(cfg.version, cfg.cipher, self._initial_seq,
                                   int(cfg.bandwidth_cap_mbps), self._nonce)
        self._hs_deadline = 0
        self._hs_tries = 0
        self._hs_reply: bytes | None = None
        self.peer_cap_mbps = 0.0

        # sender half
        self.cc = RateControl(cfg.bandwidth_cap_mbps, now_us)
        self.snd_una = self._initial_seq
        self.snd_next = self._initial_seq
        self._sent: dict[int, bytes] = {}
        self._pending: deque[memoryview] = deque()
        self._pending_bytes = 0
        self._next_send_us = float(now_us)
        self._peer_window = INITIAL_CWND_PKTS
        self.rtt_us = float(INITIAL_RTT_US)
        self.rtt_var_us = float(INITIAL_RTT_VAR_US)
        self._last_progress_us = now_us
        self._last_decrease_us = now_us - RATE_WINDOW_US
        self._shutdown_sent = 0
        self._send_cipher: PacketCipher | None = None

        # receiver half
        self.rcv_next = 0
        self._max_seen = -1
        self._store: dict[int, bytes] = {}
        self._delivered: deque[bytes] = deque()
        self._delivered_bytes = 0
        self._missing: dict[int, int] = {}      # abs seq -> last nak time
        self._meter = _RecvRateMeter()
        self._ack_id = 0
        self._ack_times: dict[int, int] = {}
        self._last_acked = -1
        self._pkts_since_ack = 0
        self._recv_cipher: PacketCipher | None = None
        self.peer_shutdown = False

        self._next_syn_us = now_us + SYN_INTERVAL_US
        self._last_recv_us = now_us
        self._last_send_us = now_us

    # ----------------------------------------------------------- app API

    def established(self) -> bool:
        return self.state in (ESTABLISHED, CLOSING)

    def closed(self) -> bool:
        return self.state == CLOSED

    def send_space(self) -> int:
        if self.state != ESTABLISHED:
            return 0
        # unacked bytes approximated as full packets in flight
        in_flight_bytes = (self.snd_next - self.snd_una) * DATA_PAYLOAD_MAX
        return max(0, self.cfg.send_buffer_bytes - self._pending_bytes - in_flight_bytes)

    def submit(self, data: bytes) -> int:
        if self.state in (CLOSED, CLOSING):
            raise SendOnClosed(str(self.error) if self.error else "connection closed")
        if self.state != ESTABLISHED:
            raise TransportError("not connected")
        space = self.send_space()
        accepted = min(space, len(data))
        if accepted:
            self._pending.append(memoryview(bytes(data[:accepted])))
            self._pending_bytes += accepted
        return accepted

    def readable(self) -> int:
        return self._delivered_bytes

    def take(self, max_bytes: int) -> bytes:
        out = bytearray()
        while self._delivered and len(out) < max_bytes:
            head = self._delivered[0]
            need = max_bytes - len(out)
            if len(head) <= need:
                out += head
                self._delivered.popleft()
            else:
                out += head[:need]
                self._delivered[0] = head[need:]
        self._delivered_bytes -= len(out)
        return bytes(out)

    def at_eof(self) -> bool:
        return (self.peer_shutdown and not self._delivered
                and self.rcv_next > self._max_seen)

    def shutdown(self) -> None:
        if self.state == ESTABLISHED:
            self.state = CLOSING

    def abort(self, error: Exception | None = None) -> None:
        if self.state != CLOSED:
            self.error = self.error or error
            self.state = CLOSED

    # -------------------------------------------------------- driver API

    def begin_connect(self, now_us: int) -> None:
        if self.role != CLIENT:
            raise TransportError("only clients initiate")
        self.state = CONNECTING
        self._send_handshake_request(now_us)

    def _send_handshake_request(self, now_us: int) -> None:
        self._hs_tries += 1
        self._hs_deadline = now_us + HS_RETRY_US
        self._emit_control(ControlType.HANDSHAKE, HS_REQUEST,
                           self._local_hs.pack(), now_us)

    def on_datagram(self, datagram: bytes, now_us: int) -> None:
        if self.state == CLOSED:
            return
        try:
            pkt = unpack(datagram)
        except PacketError:
            return  # garbage on the wire is dropped, not fatal
        self._last_recv_us = now_us
        if isinstance(pkt, DataPacket):
            self._on_data(pkt, now_us)
        else:
            self._on_control(pkt, now_us)
        self._pump_send(now_us)

    def poll(self, now_us: int) -> int | None:
        """Run due timers; returns the next deadline (None when closed)."""
        if self.state == CLOSED:
            return None
        if self.state == CONNECTING:
            if now_us >= self._hs_deadline:
                if self._hs_tries >= HS_MAX_TRIES:
                    self.abort(ConnectTimeout(
                        f"no handshake response after {HS_MAX_TRIES} tries"))
                    return None
                self._send_handshake_request(now_us)
            return self._hs_deadline
        if self.state == LISTENING:
            return None
        if now_us >= self._next_syn_us:
            self._syn_tick(now_us)
            self._next_syn_us = now_us + SYN_INTERVAL_US
        self._pump_send(now_us)
        if self.state == CLOSED:
            return None
        deadline = self._next_syn_us
        if self._can_emit():
            # wake one interval late so two packets are due per wakeup;
            # the back-to-back pair probes the bottleneck capacity
            wake = self._next_send_us + self._effective_interval()
            deadline = min(deadline, max(wake, now_us + 100))
        return int(deadline) + 1  # round up: both pair members must be due

    # ------------------------------------------------------ control path

    def _on_control(self, pkt: ControlPacket, now_us: int) -> None:
        if pkt.ctype == ControlType.HANDSHAKE:
            self._on_handshake(pkt, now_us)
            return
        if not self.established():
            return
        if pkt.ctype == ControlType.ACK:
            self._on_ack(pkt, now_us)
        elif pkt.ctype == ControlType.NAK:
            self._on_nak(pkt, now_us)
        elif pkt.ctype == ControlType.ACK2:
            self._on_ack2(pkt, now_us)
        elif pkt.ctype == ControlType.SHUTDOWN:
            self.peer_shutdown = True
        # KEEPALIVE only refreshes _last_recv_us

    def _on_handshake(self, pkt: ControlPacket, now_us: int) -> None:
        try:
            hs = Handshake.unpack(pkt.payload)
        except PacketError:
            return
        if self.role == SERVER:
            if self.state == LISTENING:
                if hs.version != self.cfg.version:
                    self._emit_control(ControlType.HANDSHAKE, HS_REJECT_VERSION,
                                       self._local_hs.pack(), now_us, pkt.conn_id)
                    return
                if hs.cipher == CIPHER_BLOWFISH and self.cfg.key is None:
                    self._emit_control(ControlType.HANDSHAKE, HS_REJECT_CIPHER,
                                       self._local_hs.pack(), now_us, pkt.conn_id)
                    return
                self.conn_id = pkt.conn_id
                reply_hs = Handshake(self.cfg.version, hs.cipher, self._initial_seq,
                                     int(self.cfg.bandwidth_cap_mbps), self._nonce)
                self._establish(hs, now_us)
                self._hs_reply = pack_control(ControlType.HANDSHAKE, HS_OK,
                                              self._now_ts(now_us), self.conn_id,
                                              reply_hs.pack())
                self.outbox.append(self._hs_reply)
            elif self._hs_reply is not None:
                # duplicate request: the reply was lost, send it again
                self.outbox.append(self._hs_reply)
            return
        # client side
        if self.state != CONNECTING:
            return
        if pkt.info == HS_REJECT_VERSION:
            self.abort(HandshakeRejected(
                f"server speaks version {hs.version}, not {self.cfg.version}"))
        elif pkt.info == HS_REJECT_CIPHER:
            self.abort(CipherUnavailable("server cannot use the requested cipher"))
        elif pkt.info == HS_OK:
            self._establish(hs, now_us)

    def _establish(self, peer: Handshake, now_us: int) -> None:
        self.rcv_next = peer.initial_seq
        self._max_seen = peer.initial_seq - 1
        self._last_acked = -1
        self.peer_cap_mbps = float(peer.bandwidth_cap_mbps)
        cap = self.cfg.bandwidth_cap_mbps
        if peer.bandwidth_cap_mbps:
            cap = min(cap, peer.bandwidth_cap_mbps) if cap else peer.bandwidth_cap_mbps
        self.cc = RateControl(cap, now_us)
        cipher = peer.cipher if self.role == SERVER else self.cfg.cipher
        if cipher == CIPHER_BLOWFISH:
            if self.cfg.key is None:
                self.abort(CipherUnavailable("no key material configured"))
                return
            base = bytes(a ^ b for a, b in zip(self._nonce, peer.nonce))
            bf = Blowfish(self.cfg.key)
            c2s, s2c = base[:8], base[8:]
            send_iv, recv_iv = (c2s, s2c) if self.role == CLIENT else (s2c, c2s)
            self._send_cipher = PacketCipher(bf, send_iv)
            self._recv_cipher = PacketCipher(bf, recv_iv)
        self.state = ESTABLISHED
        self._last_progress_us = now_us
        self._next_syn_us = now_us + SYN_INTERVAL_US

    # --------------------------------------------------------- data path

    def _on_data(self, pkt: DataPacket, now_us: int) -> None:
        if not self.established():
            return
        self.counters.data_received += 1
        self._meter.observe(now_us)
        self._pkts_since_ack += 1
        abs_seq = seq_unwrap(pkt.seq, self.rcv_next)
        if abs_seq < self.rcv_next or abs_seq in self._store:
            self.counters.duplicates += 1
            return
        if abs_seq >= self.rcv_next + self.cfg.recv_window_pkts:
            return  # beyond the advertised window; drop
        payload = pkt.payload
        if self._recv_cipher is not None:
            payload = self._recv_cipher.open(pkt.seq, payload)
        if abs_seq > self._max_seen:
            if abs_seq > self._max_seen + 1:
                gap = missing_ranges(self._max_seen, abs_seq)
                for s in range(self._max_seen + 1, abs_seq):
                    self._missing[s] = now_us
                self._emit_nak(gap, now_us)
            self._max_seen = abs_seq
        self._missing.pop(abs_seq, None)
        if abs_seq == self.rcv_next:
            self._deliver(payload)
            while self.rcv_next in self._store:
                self._deliver(self._store.pop(self.rcv_next))
        else:
            self._store[abs_seq] = payload
        if self._pkts_since_ack >= ACK_PACKET_COUNT:
            self._send_ack(now_us)

    def _deliver(self, payload: bytes) -> None:
        self._delivered.append(payload)
        self._delivered_bytes += len(payload)
        self.counters.payload_delivered += len(payload)
        self.rcv_next += 1

    def nak_for_gap(self, arrived_seq: int) -> list[tuple[int, int]]:
        """Missing ranges between the delivery point and ``arrived_seq``
        (absolute) given what is already buffered."""
        return missing_ranges(self.rcv_next - 1, arrived_seq, self._store)

    def _emit_nak(self, ranges: list[tuple[int, int]], now_us: int) -> None:
        if not ranges:
            return
        wire = [(seq_wire(s), seq_wire(e)) for s, e in ranges]
        self._emit_control(ControlType.NAK, len(ranges),
                           pack_nak_ranges(wire), now_us)
        self.counters.naks_sent += 1

    # ------------------------------------------------------- ACK machinery

    def _send_ack(self, now_us: int) -> None:
        self._pkts_since_ack = 0
        self._last_acked = self.rcv_next
        avail = self.cfg.recv_window_pkts - len(self._store)
        avail -= self._delivered_bytes // DATA_PAYLOAD_MAX
        info = AckInfo(seq_wire(self.rcv_next), int(self.rtt_us),
                       int(self.rtt_var_us), int(self._meter.rate_pps()),
                       int(self._meter.capacity_pps()), max(avail, 0))
        self._ack_id = (self._ack_id + 1) & 0xFFFFFFFF
        self._ack_times[self._ack_id] = now_us
        if len(self._ack_times) > 256:
            oldest = min(self._ack_times)
            self._ack_times.pop(oldest, None)
        self._emit_control(ControlType.ACK, self._ack_id, info.pack(), now_us)
        self.counters.acks_sent += 1

    def _on_ack(self, pkt: ControlPacket, now_us: int) -> None:
        try:
            info = AckInfo.unpack(pkt.payload)
        except PacketError:
            return
        self.counters.acks_received += 1
        self._emit_control(ControlType.ACK2, pkt.info, b"", now_us)
        ack_abs = seq_unwrap(info.ack_seq, max(self.snd_una, self._initial_seq))
        if ack_abs > self.snd_next:
            self.abort(ProtocolViolation(
                f"ack {ack_abs} beyond highest sent {self.snd_next}"))
            return
        if ack_abs <= self.snd_una:
            return  # duplicate ACK: no state change
        newly = ack_abs - self.snd_una
        for s in range(self.snd_una, ack_abs):
            self._sent.pop(s, None)
        self.snd_una = ack_abs
        self._last_progress_us = now_us
        # EWMA per sample: 7/8 old, 1/8 new
        sample = float(info.rtt_us)
        self.rtt_var_us = 0.875 * self.rtt_var_us + 0.125 * abs(sample - self.rtt_us)
        self.rtt_us = 0.875 * self.rtt_us + 0.125 * sample
        cc = self.cc
        cc.recv_rate_pps = float(info.recv_rate_pps)
        cc.est_capacity_pps = float(info.est_capacity_pps)
        self._peer_window = max(info.avail_window_pkts, 1)
        if cc.slow_start:
            cc.cwnd += newly
            if cc.cwnd >= self.cfg.max_cwnd_pkts:
                cc.exit_slow_start(self._window_pps(), now_us)
        else:
            # size the window to the path, not to the (window-limited)
            # arrival rate, or it can never open past itself; 25% slack
            # keeps ACK aggregation delay from throttling the pacer
            base = max(cc.recv_rate_pps, cc.est_capacity_pps)
            bdp = base * (self.rtt_us + SYN_INTERVAL_US) / 1e6
            cc.cwnd = min(bdp * 1.25 + 2 * INITIAL_CWND_PKTS, self.cfg.max_cwnd_pkts)

    def _on_ack2(self, pkt: ControlPacket, now_us: int) -> None:
        sent_at = self._ack_times.pop(pkt.info, None)
        if sent_at is None:
            return
        sample = float(now_us - sent_at)
        self.rtt_var_us = 0.875 * self.rtt_var_us + 0.125 * abs(sample - self.rtt_us)
        self.rtt_us = 0.875 * self.rtt_us + 0.125 * sample

    def _window_pps(self) -> float:
        return self.cc.cwnd * 1e6 / (self.rtt_us + SYN_INTERVAL_US)

    def _on_nak(self, pkt: ControlPacket, now_us: int) -> None:
        try:
            wire_ranges = unpack_nak_ranges(pkt.payload)
        except PacketError:
            return
        self.counters.naks_received += 1
        seqs = []
        for start, end in wire_ranges:
            s = seq_unwrap(start, self.snd_una)
            e = s + ((end - start) % (1 << 31))
            seqs.extend(q for q in range(s, e + 1)
                        if self.snd_una <= q < self.snd_next)
        if not seqs:
            return
        cc = self.cc
        if cc.slow_start:
            cc.exit_slow_start(self._window_pps(), now_us)
        ranges = compress_ranges(seqs)
        new_epoch = max(seqs) > cc.last_dec_seq
        # the arrival-rate window refreshes every RATE_WINDOW_US; acting
        # twice on one reading just compounds the same decision
        cooled = now_us - self._last_decrease_us >= RATE_WINDOW_US
        if new_epoch and cooled and self._looks_congested():
            cc.on_nak(ranges, now_us)
            cc.last_dec_seq = self.snd_next - 1
            self._last_decrease_us = now_us
            self.counters.decreases += 1
        else:
            cc.absorb_loss(ranges, now_us)

    def _looks_congested(self) -> bool:
        rate = self.cc.recv_rate_pps
        capacity = self.cc.est_capacity_pps
        if rate <= 0 or capacity <= 0:
            return True  # nothing measured yet: assume the worst
        return rate >= CONGESTED_RECV_FRACTION * capacity

    # ---------------------------------------------------------- emission

    def _can_emit(self) -> bool:
        if not self.established():
            return False
        if self.cc.peek_retransmit(self.snd_una) is not None:
            return True
        in_flight = self.snd_next - self.snd_una
        window = min(self.cc.cwnd, self._peer_window)
        return bool(self._pending) and in_flight < window

    def _effective_interval(self) -> float:
        if self.cc.slow_start:
            return self.cc.min_interval_us
        return max(self.cc.pkt_interval_us, self.cc.min_interval_us)

    def _pump_send(self, now_us: int) -> None:
        if not self.established():
            return
        interval = self._effective_interval()
        floor = now_us - interval * 4  # bounded catch-up burst after stalls
        if self._next_send_us < floor:
            self._next_send_us = floor
        sent = 0
        while sent < MAX_BURST and self._next_send_us <= now_us:
            seq = self.cc.pop_retransmit(self.snd_una)
            if seq is not None:
                payload = self._sent.get(seq)
                if payload is None:
                    continue
                self._emit_data(seq, payload, now_us)
                self.counters.retransmits += 1
            else:
                in_flight = self.snd_next - self.snd_una
                window = min(self.cc.cwnd, self._peer_window)
                if not self._pending or in_flight >= window:
                    break
                payload = self._next_payload()
                seq = self.snd_next
                self.snd_next += 1
                if self._send_cipher is not None:
                    payload = self._send_cipher.seal(seq_wire(seq), payload)
                self._sent[seq] = payload
                self._emit_data(seq, payload, now_us)
                self.counters.data_sent += 1
                self.counters.data_bytes_sent += len(payload)
            sent += 1
            self._next_send_us += interval

    def _next_payload(self) -> bytes:
        out = bytearray()
        while self._pending and len(out) < DATA_PAYLOAD_MAX:
            head = self._pending[0]
            need = DATA_PAYLOAD_MAX - len(out)
            if len(head) <= need:
                out += head
                self._pending.popleft()
            else:
                out += head[:need]
                self._pending[0] = head[need:]
        self._pending_bytes -= len(out)
        return bytes(out)

    def _emit_data(self, abs_seq: int, payload: bytes, now_us: int) -> None:
        self.outbox.append(pack_data(seq_wire(abs_seq), self._now_ts(now_us),
                                     self.conn_id, payload))
        self._last_send_us = now_us

    def _emit_control(self, ctype: ControlType, info: int, payload: bytes,
                      now_us: int, conn_id: int | None = None) -> None:
        self.outbox.append(pack_control(ctype, info, self._now_ts(now_us),
                                        self.conn_id if conn_id is None else conn_id,
                                        payload))
        self._last_send_us = now_us

    def _now_ts(self, now_us: int) -> int:
        return int(now_us - self._epoch_us) & 0xFFFFFFFF

    # ------------------------------------------------------------- timers

    def _syn_tick(self, now_us: int) -> None:
        self.cc.on_rate_interval(now_us)
        # receiver duties
        progressed = self.rcv_next != self._last_acked
        if progressed or self._pkts_since_ack > 0:
            self._send_ack(now_us)
        self._renak(now_us)
        # sender duties
        self._check_exp(now_us)
        if self.state == CLOSING:
            self._advance_close(now_us)
        if (self.cfg.idle_timeout_s > 0 and self.established()
                and now_us - self._last_recv_us > self.cfg.idle_timeout_s * 1e6):
            self.abort(TransportError("peer silent, giving up"))

    def _renak(self, now_us: int) -> None:
        if not self._missing:
            return
        period = max(self.rtt_us + 4 * self.rtt_var_us + SYN_INTERVAL_US, 20_000)
        due = [s for s, t in self._missing.items() if now_us - t >= period]
        if not due:
            return
        for s in due:
            self._missing[s] = now_us
        self._emit_nak(compress_ranges(due), now_us)

    def _check_exp(self, now_us: int) -> None:
        exp = max(4 * self.rtt_us + self.rtt_var_us, EXP_MIN_US)
        if now_us - self._last_progress_us < exp:
            return
        if self.snd_una < self.snd_next:
            # no ACK progress for a full EXP period: requeue all of it
            self.cc.merge_loss(range(self.snd_una, self.snd_next))
            self.counters.exp_events += 1
            self._last_progress_us = now_us
        elif now_us - self._last_send_us > KEEPALIVE_US:
            self._emit_control(ControlType.KEEPALIVE, 0, b"", now_us)

    def _advance_close(self, now_us: int) -> None:
        if self._pending or self.snd_una < self.snd_next:
            return  # still flushing
        if self._shutdown_sent < SHUTDOWN_REPEATS:
            self._emit_control(ControlType.SHUTDOWN, 0, b"", now_us)
            self._shutdown_sent += 1
        else:
            self.state = CLOSED
