"""Real-socket driver: endpoints over UDP, one IO thread per node.

The protocol endpoint is the same sans-io state machine the emulator
drives; here a background thread feeds it datagrams and deadlines, and
application threads interact through locked, condition-signalled calls.
One node serves either a single outgoing connection (client) or any
number of incoming ones keyed by peer address (daemon).
"""

from __future__ import annotations

import os
import select
import socket
import threading
import time
from collections import deque

from ..errors import ConnectTimeout, PartialTransfer, TransportError
from .config import TransportConfig
from .endpoint import CLIENT, SERVER, Endpoint
from .packet import MAX_DATAGRAM

_IO_GRANULARITY_S = 0.005


def _now_us() -> int:
    return time.monotonic_ns() // 1000


class Connection:
    """One endpoint bound to a peer address, shared with the IO thread."""

    def __init__(self, node: "UdpNode", endpoint: Endpoint, peer):
        self.node = node
        self.endpoint = endpoint
        self.peer = peer
        self.cond = threading.Condition(node.lock)

    # everything below runs under node.lock via the public wrappers

    def _wake_io(self):
        self.node.wake()

    def submit(self, data: bytes) -> int:
        with self.node.lock:
            n = self.endpoint.submit(data)
        if n:
            self._wake_io()
        return n

    def take(self, max_bytes: int) -> bytes:
        with self.node.lock:
            data = self.endpoint.take(max_bytes)
        if data:
            self._wake_io()
        return data

    def send_space(self) -> int:
        with self.node.lock:
            return self.endpoint.send_space()

    def readable(self) -> int:
        with self.node.lock:
            return self.endpoint.readable()

    def at_eof(self) -> bool:
        with self.node.lock:
            return self.endpoint.at_eof()

    def error(self):
        with self.node.lock:
            return self.endpoint.error

    def shutdown(self) -> None:
        with self.node.lock:
            self.endpoint.shutdown()
        self._wake_io()

    def closed(self) -> bool:
        with self.node.lock:
            return self.endpoint.closed()

    def wait_activity(self, timeout: float = 0.05) -> None:
        with self.node.lock:
            self.cond.wait(timeout)

    def wait_closed(self, timeout: float = 5.0) -> None:
        deadline = time.monotonic() + timeout
        with self.node.lock:
            while not self.endpoint.closed():
                left = deadline - time.monotonic()
                if left <= 0:
                    self.endpoint.abort()
                    break
                self.cond.wait(left)
        self._wake_io()


class ConnStream:
    """Session-machine stream facade over a Connection."""

    def __init__(self, conn: Connection):
        self.conn = conn

    def read(self, max_bytes: int) -> bytes:
        return self.conn.take(max_bytes)

    def write(self, data: bytes) -> int:
        return self.conn.submit(data)

    def write_space(self) -> int:
        return self.conn.send_space()

    def at_eof(self) -> bool:
        return self.conn.at_eof()

    def error(self):
        return self.conn.error()

    def close(self) -> None:
        self.conn.shutdown()


class UdpNode:
    def __init__(self, cfg: TransportConfig, bind=None):
        self.cfg = cfg
        self.lock = threading.Lock()
        self.conns: dict = {}
        self.accept_queue: deque[Connection] = deque()
        self.accept_cond = threading.Condition(self.lock)
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.setblocking(False)
        if bind is not None:
            self.sock.bind(bind)
        self._rpipe, self._wpipe = os.pipe()
        os.set_blocking(self._rpipe, False)
        self._stop = False
        self.accepting = False
        self.thread = threading.Thread(target=self._io_loop, daemon=True)
        self.thread.start()

    @property
    def port(self) -> int:
        return self.sock.getsockname()[1]

    def wake(self) -> None:
        try:
            os.write(self._wpipe, b"x")
        except OSError:
            pass

    def close(self) -> None:
        self._stop = True
        self.wake()
        self.thread.join(timeout=3)
        self.sock.close()
        os.close(self._rpipe)
        os.close(self._wpipe)

    # --- client -----------------------------------------------------------

    def connect(self, host: str, port: int, timeout: float = 5.0) -> Connection:
        endpoint = Endpoint(self.cfg, CLIENT, _now_us())
        peer = (host, port)
        conn = Connection(self, endpoint, peer)
        with self.lock:
            self.conns[peer] = conn
            endpoint.begin_connect(_now_us())
        self.wake()
        deadline = time.monotonic() + timeout
        with self.lock:
            while not endpoint.established() and not endpoint.closed():
                left = deadline - time.monotonic()
                if left <= 0:
                    endpoint.abort(ConnectTimeout("timed out locally"))
                    break
                conn.cond.wait(left)
            if endpoint.error:
                raise endpoint.error
            if not endpoint.established():
                raise ConnectTimeout(f"no response from {host}:{port}")
        return conn

    # --- server -----------------------------------------------------------

    def accept(self, timeout: float | None = None) -> Connection | None:
        with self.lock:
            self.accepting = True
            if not self.accept_queue:
                self.accept_cond.wait(timeout)
            if self.accept_queue:
                return self.accept_queue.popleft()
            return None

    # --- io thread ---------------------------------------------------------

    def _io_loop(self) -> None:
        while not self._stop:
            with self.lock:
                next_dl = self._poll_all()
            now = _now_us()
            if next_dl is None:
                wait = _IO_GRANULARITY_S
            else:
                wait = min(max((next_dl - now) / 1e6, 0.0002), _IO_GRANULARITY_S)
            try:
                ready, _, _ = select.select([self.sock, self._rpipe], [], [], wait)
            except OSError:
                break
            if self._rpipe in ready:
                try:
                    while os.read(self._rpipe, 4096):
                        pass
                except (BlockingIOError, OSError):
                    pass
            if self.sock in ready:
                self._drain_socket()
            with self.lock:
                self._poll_all()

    def _drain_socket(self) -> None:
        for _ in range(512):
            try:
                datagram, addr = self.sock.recvfrom(MAX_DATAGRAM)
            except (BlockingIOError, InterruptedError):
                return
            except OSError:
                return
            with self.lock:
                conn = self.conns.get(addr)
                if conn is None:
                    if not self.accepting:
                        continue
                    endpoint = Endpoint(self._server_cfg(), SERVER, _now_us())
                    conn = Connection(self, endpoint, addr)
                    self.conns[addr] = conn
                conn.endpoint.on_datagram(datagram, _now_us())
                self._flush(conn)
                if (conn.endpoint.established() and self.accepting
                        and not getattr(conn, "_announced", False)):
                    conn._announced = True
                    self.accept_queue.append(conn)
                    self.accept_cond.notify_all()
                conn.cond.notify_all()

    def _server_cfg(self) -> TransportConfig:
        return self.cfg

    def _poll_all(self):
        # under lock
        next_deadline = None
        dead = []
        for key, conn in self.conns.items():
            dl = conn.endpoint.poll(_now_us())
            self._flush(conn)
            conn.cond.notify_all()
            if conn.endpoint.closed():
                dead.append(key)
            elif dl is not None:
                next_deadline = dl if next_deadline is None else min(next_deadline, dl)
        for key in dead:
            conn = self.conns.pop(key)
            conn.cond.notify_all()
        return next_deadline

    def _flush(self, conn: Connection) -> None:
        out, conn.endpoint.outbox = conn.endpoint.outbox, []
        for datagram in out:
            try:
                self.sock.sendto(datagram, conn.peer)
            except OSError:
                pass


def dial(host: str, port: int, cfg: TransportConfig | None = None,
         timeout: float = 5.0) -> tuple[UdpNode, Connection]:
    node = UdpNode(cfg or TransportConfig())
    try:
        conn = node.connect(host, port, timeout)
    except Exception:
        node.close()
        raise
    return node, conn


def listen(bind_host: str, port: int,
           cfg: TransportConfig | None = None) -> UdpNode:
    node = UdpNode(cfg or TransportConfig(), bind=(bind_host, port))
    node.accepting = True
    return node


def run_machine(conn: Connection, machine, idle_wait: float = 0.02,
                timeout: float | None = None):
    """Pump a session machine over a real connection until it has
    finished, including flushing its goodbye frames."""
    stream = ConnStream(conn)
    deadline = time.monotonic() + timeout if timeout else None
    while not machine.finished():
        progress = machine.pump(stream)
        if not progress:
            if deadline and time.monotonic() > deadline:
                raise TransportError("session timed out")
            conn.wait_activity(idle_wait)
    if machine.error:
        if machine.stats.completed:
            raise PartialTransfer(str(machine.error),
                                  completed=machine.stats.completed) \
                from machine.error
        raise machine.error
    return machine.stats
