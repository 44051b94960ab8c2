"""Sync daemon: accepts transport connections and runs the matching
side of each session against a served root directory."""

from __future__ import annotations

import os
import sys
import threading
import time
from pathlib import Path

from .errors import SessionError
from .session.frames import DIR_PULL, ErrorMsg, Hello, decode_message, encode_message
from .session.machines import server_machine
from .transport.config import TransportConfig
from .transport.udp import Connection, UdpNode, listen, run_machine
from .tree import is_safe_relpath

HELLO_WAIT_S = 10.0


def resolve_served_path(root: Path, requested: str) -> Path:
    if requested in ("", "."):
        return root
    if not is_safe_relpath(requested):
        raise SessionError(f"bad requested path {requested!r}")
    full = root / requested
    real_root = os.path.realpath(root)
    real_full = os.path.realpath(full)
    if real_full != real_root \
            and os.path.commonpath([real_full, real_root]) != real_root:
        raise SessionError(f"requested path {requested!r} escapes the root")
    return full


def read_client_hello(conn: Connection, timeout: float = HELLO_WAIT_S) -> tuple[Hello, bytes]:
    """First session frame plus any bytes that followed it."""
    buf = bytearray()
    deadline = time.monotonic() + timeout
    while True:
        buf += conn.take(64 * 1024)
        msg, consumed = decode_message(buf)
        if msg is not None:
            if not isinstance(msg, Hello):
                raise SessionError(f"expected hello, got {type(msg).__name__}")
            return msg, bytes(buf[consumed:])
        if conn.error() is not None:
            raise SessionError(f"transport failed: {conn.error()}")
        if conn.at_eof() or time.monotonic() > deadline:
            raise SessionError("no hello from client")
        conn.wait_activity(0.05)


def handle_session(conn: Connection, root: Path, log=None) -> None:
    try:
        hello, leftover = read_client_hello(conn)
        served = resolve_served_path(root, hello.root)
        if hello.direction == DIR_PULL and not served.is_dir():
            raise SessionError(f"no such directory {hello.root!r}")
        machine = server_machine(hello, served)
        machine.handle(hello)
        machine.inbuf += leftover
        stats = run_machine(conn, machine, timeout=3600)
        if log:
            log(f"session done: {stats.files_updated} updated, "
                f"{stats.files_skipped} unchanged, "
                f"{stats.literal_bytes} literal bytes")
    except SessionError as exc:
        if log:
            log(f"session failed: {exc}")
        try:
            conn.submit(encode_message(ErrorMsg(1, str(exc))))
        except Exception:
            pass
        conn.shutdown()
    finally:
        conn.wait_closed(timeout=3.0)


class SyncDaemon:
    def __init__(self, root: str | Path, port: int, bind: str = "0.0.0.0",
                 cfg: TransportConfig | None = None, log=None):
        self.root = Path(root)
        if not self.root.is_dir():
            raise SessionError(f"served root {root} is not a directory")
        self.node: UdpNode = listen(bind, port, cfg)
        self.log = log or (lambda msg: print(msg, file=sys.stderr))
        self._stop = False
        self._workers: list[threading.Thread] = []

    @property
    def port(self) -> int:
        return self.node.port

    def serve_forever(self) -> None:
        self.log(f"serving {self.root} on udp port {self.port}")
        while not self._stop:
            conn = self.node.accept(timeout=0.5)
            if conn is None:
                continue
            worker = threading.Thread(
                target=handle_session, args=(conn, self.root, self.log),
                daemon=True)
            worker.start()
            self._workers.append(worker)
            self._workers = [w for w in self._workers if w.is_alive()]

    def stop(self) -> None:
        self._stop = True
        self.node.close()
