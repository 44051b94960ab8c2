"""Byte-stream faces the session machines talk to.

A stream only needs non-blocking read/write plus close/EOF/error
queries; the sync machines are pumped whenever a driver thinks progress
is possible, so the same machine code runs over the simulated
transport, a real connection, or an in-process loopback.
"""

from __future__ import annotations

from ..errors import SessionError


class NodeStream:
    """Adapter over a simulated transport node."""

    def __init__(self, node):
        self.node = node

    def read(self, max_bytes: int) -> bytes:
        return self.node.proto.take(max_bytes)

    def write(self, data: bytes) -> int:
        return self.node.proto.submit(data)

    def write_space(self) -> int:
        return self.node.proto.send_space()

    def at_eof(self) -> bool:
        return self.node.proto.at_eof()

    def error(self):
        return self.node.proto.error

    def close(self) -> None:
        self.node.proto.shutdown()


class LoopbackStream:
    """One end of an in-memory duplex pipe."""

    def __init__(self, capacity: int = 1 << 20):
        self.capacity = capacity
        self.inbuf = bytearray()
        self.peer: "LoopbackStream" | None = None
        self.closed = False
        self._error = None

    def read(self, max_bytes: int) -> bytes:
        out = bytes(self.inbuf[:max_bytes])
        del self.inbuf[:max_bytes]
        return out

    def write(self, data: bytes) -> int:
        if self.closed:
            raise SessionError("write on closed stream")
        room = self.capacity - len(self.peer.inbuf)
        accepted = min(room, len(data))
        if accepted:
            self.peer.inbuf += data[:accepted]
        return accepted

    def write_space(self) -> int:
        return 0 if self.closed else self.capacity - len(self.peer.inbuf)

    def at_eof(self) -> bool:
        return self.peer.closed and not self.inbuf

    def error(self):
        return self._error

    def close(self) -> None:
        self.closed = True


def loopback_pair(capacity: int = 1 << 20) -> tuple[LoopbackStream, LoopbackStream]:
    a = LoopbackStream(capacity)
    b = LoopbackStream(capacity)
    a.peer, b.peer = b, a
    return a, b


def pump_loopback(machine_a, stream_a, machine_b, stream_b,
                  max_rounds: int = 100_000) -> None:
    """Drive two machines over a loopback until both finish."""
    for _ in range(max_rounds):
        progress = machine_a.pump(stream_a)
        progress |= machine_b.pump(stream_b)
        if machine_a.finished() and machine_b.finished():
            return
        if not progress:
            break
    if machine_a.error or machine_b.error:
        raise machine_a.error or machine_b.error
    raise SessionError(
        f"session deadlocked (a done={machine_a.done}, b done={machine_b.done})")
