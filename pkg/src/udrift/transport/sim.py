"""Virtual-time driver for endpoints over the emulated link.

Events (link deliveries and endpoint timer deadlines) live in one heap;
popping the earliest advances the clock, so a multi-second transfer
runs in however long Python takes to process its packets, and a fixed
link seed gives an identical trace every run.
"""

from __future__ import annotations

import hashlib
import heapq
import math
import random
from dataclasses import dataclass

from ..errors import TransportError
from .config import TransportConfig
from .endpoint import CLIENT, SERVER, Endpoint
from .link import EmulatedLink, LinkSpec


class SimNode:
    def __init__(self, world: "SimWorld", proto, direction: int):
        self.world = world
        self.proto = proto          # Endpoint or anything with the same surface
        self.direction = direction
        self.peer: SimNode | None = None
        self.link: EmulatedLink | None = None
        self.pump = None            # callable(node) -> bool, app progress
        self.timer_gen = 0

    # convenience passthroughs for tests and harnesses
    def submit(self, data: bytes) -> int:
        n = self.proto.submit(data)
        self.world.touch(self)
        return n

    def take(self, max_bytes: int) -> bytes:
        data = self.proto.take(max_bytes)
        self.world.touch(self)
        return data

    def shutdown(self) -> None:
        self.proto.shutdown()
        self.world.touch(self)


class SimWorld:
    def __init__(self, start_us: int = 0):
        self.now_us = start_us
        self._heap: list = []
        self._seq = 0
        self.nodes: list[SimNode] = []

    def schedule(self, at_us: float, fn) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (max(at_us, self.now_us), self._seq, fn))

    def attach_pair(self, a, b, link_spec: LinkSpec) -> tuple[SimNode, SimNode]:
        link = EmulatedLink(link_spec)
        na = SimNode(self, a, 0)
        nb = SimNode(self, b, 1)
        na.peer, nb.peer = nb, na
        na.link = nb.link = link
        self.nodes += [na, nb]
        return na, nb

    def touch(self, node: SimNode) -> None:
        """Re-run a node after outside interaction (submit/take/...)."""
        self._activity(node)

    def _activity(self, node: SimNode) -> None:
        for _ in range(64):  # pump/emit interplay settles fast
            deadline = node.proto.poll(self.now_us)
            self._flush(node)
            progressed = bool(node.pump and node.pump(node))
            if node.proto.outbox:
                self._flush(node)
                progressed = True
            if not progressed:
                break
        node.timer_gen += 1
        if deadline is not None:
            gen = node.timer_gen
            self.schedule(deadline, lambda: self._timer(node, gen))

    def _flush(self, node: SimNode) -> None:
        out, node.proto.outbox = node.proto.outbox, []
        for dgram in out:
            t = node.link.submit(node.direction, len(dgram), self.now_us)
            if t is not None:
                self.schedule(t, lambda d=dgram: self._deliver(node.peer, d))

    def _deliver(self, node: SimNode, dgram: bytes) -> None:
        node.proto.on_datagram(dgram, self.now_us)
        self._activity(node)

    def _timer(self, node: SimNode, gen: int) -> None:
        if gen == node.timer_gen:
            self._activity(node)

    def run(self, until_us: float | None = None, stop=None,
            max_events: int = 50_000_000) -> None:
        events = 0
        while self._heap:
            if stop is not None and stop():
                return
            at, _, fn = heapq.heappop(self._heap)
            if until_us is not None and at > until_us:
                self.now_us = int(until_us)
                return
            # ceil so integer clock reads never sit below the float
            # deadline that scheduled the event
            self.now_us = max(self.now_us, math.ceil(at))
            fn()
            events += 1
            if events >= max_events:
                raise RuntimeError("simulation event budget exhausted")


def sim_pair(link_spec: LinkSpec,
             client_cfg: TransportConfig | None = None,
             server_cfg: TransportConfig | None = None,
             seed: int = 1) -> tuple[SimWorld, SimNode, SimNode]:
    """Handshaken endpoint pair over an emulated link."""
    client_cfg = client_cfg or TransportConfig()
    server_cfg = server_cfg or TransportConfig()
    if client_cfg.rng is None:
        client_cfg.rng = random.Random(seed * 7 + 1)
    if server_cfg.rng is None:
        server_cfg.rng = random.Random(seed * 7 + 2)
    world = SimWorld()
    client = Endpoint(client_cfg, CLIENT, world.now_us)
    server = Endpoint(server_cfg, SERVER, world.now_us)
    cn, sn = world.attach_pair(client, server, link_spec)
    client.begin_connect(world.now_us)
    world.touch(cn)
    world.run(stop=lambda: (client.established() and server.established())
              or client.closed())
    if client.error:
        raise client.error
    if not (client.established() and server.established()):
        raise TransportError("handshake did not complete")
    return world, cn, sn


@dataclass
class TransferResult:
    payload_bytes: int
    elapsed_s: float
    digest: bytes
    goodput_mbps: float


class _Source:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    def __call__(self, node: SimNode) -> bool:
        ep = node.proto
        if not ep.established() or self.offset >= len(self.payload):
            return False
        space = ep.send_space()
        if space <= 0:
            return False
        chunk = self.payload[self.offset:self.offset + min(space, 1 << 20)]
        accepted = ep.submit(chunk)
        self.offset += accepted
        if self.offset >= len(self.payload):
            ep.shutdown()
        return accepted > 0


class _Sink:
    def __init__(self):
        self.received = 0
        self.hash = hashlib.md5()
        self.done = False
        self.done_at_us = 0

    def __call__(self, node: SimNode) -> bool:
        ep = node.proto
        took = False
        while ep.readable():
            chunk = ep.take(1 << 20)
            self.hash.update(chunk)
            self.received += len(chunk)
            took = True
        if not self.done and ep.at_eof():
            self.done = True
            self.done_at_us = node.world.now_us
        return took


def bulk_transfer(world: SimWorld, src: SimNode, dst: SimNode,
                  payload: bytes, deadline_s: float = 3600.0) -> TransferResult:
    """Push ``payload`` from src to dst; returns timing and a digest."""
    source = _Source(payload)
    sink = _Sink()
    src.pump = source
    dst.pump = sink
    start = world.now_us
    world.touch(src)
    world.touch(dst)
    world.run(until_us=start + deadline_s * 1e6, stop=lambda: sink.done)
    if src.proto.error:
        raise src.proto.error
    if not sink.done:
        raise TransportError(
            f"transfer incomplete: {sink.received}/{len(payload)} bytes")
    elapsed = max((sink.done_at_us - start) / 1e6, 1e-9)
    return TransferResult(sink.received, elapsed, sink.hash.digest(),
                          sink.received * 8 / elapsed / 1e6)
