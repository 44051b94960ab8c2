import random
import threading
import time

import pytest

from udrift.daemon import SyncDaemon, resolve_served_path
from udrift.errors import ConnectTimeout, SessionError
from udrift.session import DIR_PULL, DIR_PUSH, SyncOptions, client_machines
from udrift.transport import TransportConfig
from udrift.transport.udp import dial, listen, run_machine
from udrift.tree import tree_digests


@pytest.fixture
def daemon(tmp_path):
    served = tmp_path / "served"
    served.mkdir()
    d = SyncDaemon(served, port=0, bind="127.0.0.1", log=lambda m: None)
    thread = threading.Thread(target=d.serve_forever, daemon=True)
    thread.start()
    time.sleep(0.05)
    yield d, served
    d.stop()


def build_tree(root, rng, files=8, max_size=150_000):
    root.mkdir(parents=True, exist_ok=True)
    (root / "inner").mkdir(exist_ok=True)
    for i in range(files):
        where = root if i % 2 else root / "inner"
        (where / f"f{i}.bin").write_bytes(rng.randbytes(rng.randrange(0, max_size)))


def test_push_then_pull_roundtrip(tmp_path, daemon):
    d, served = daemon
    rng = random.Random(1)
    src = tmp_path / "src"
    build_tree(src, rng)

    node, conn = dial("127.0.0.1", d.port, TransportConfig())
    stats = run_machine(conn, client_machines(
        DIR_PUSH, src, "box", SyncOptions(recursive=True)), timeout=60)
    conn.wait_closed()
    node.close()
    assert stats.files_updated > 0
    assert tree_digests(src) == tree_digests(served / "box")

    dst = tmp_path / "pulled"
    node, conn = dial("127.0.0.1", d.port, TransportConfig())
    run_machine(conn, client_machines(
        DIR_PULL, dst, "box", SyncOptions(recursive=True)), timeout=60)
    conn.wait_closed()
    node.close()
    assert tree_digests(src) == tree_digests(dst)


def test_dial_closed_port_times_out():
    cfg = TransportConfig()
    start = time.monotonic()
    with pytest.raises(ConnectTimeout):
        dial("127.0.0.1", 1, cfg, timeout=4.0)
    # three one-second retry slots
    assert time.monotonic() - start >= 2.5


def test_concurrent_sessions(tmp_path, daemon):
    d, served = daemon
    rng = random.Random(5)
    sources = []
    for k in range(3):
        src = tmp_path / f"src{k}"
        build_tree(src, random.Random(100 + k), files=5)
        sources.append(src)

    errors = []

    def push(k):
        try:
            node, conn = dial("127.0.0.1", d.port, TransportConfig())
            run_machine(conn, client_machines(
                DIR_PUSH, sources[k], f"c{k}", SyncOptions(recursive=True)),
                timeout=60)
            conn.wait_closed()
            node.close()
        except Exception as exc:  # propagate to the assertion below
            errors.append(exc)

    threads = [threading.Thread(target=push, args=(k,)) for k in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=60)
    assert errors == []
    for k in range(3):
        assert tree_digests(sources[k]) == tree_digests(served / f"c{k}")


def test_pull_missing_remote_dir_reports_error(tmp_path, daemon):
    d, _ = daemon
    node, conn = dial("127.0.0.1", d.port, TransportConfig())
    with pytest.raises(SessionError):
        run_machine(conn, client_machines(
            DIR_PULL, tmp_path / "dst", "nope", SyncOptions(recursive=True)),
            timeout=30)
    node.close()


def test_resolve_served_path_containment(tmp_path):
    root = tmp_path
    assert resolve_served_path(root, "") == root
    assert resolve_served_path(root, "a/b") == root / "a" / "b"
    with pytest.raises(SessionError):
        resolve_served_path(root, "../up")
    with pytest.raises(SessionError):
        resolve_served_path(root, "/abs")


def test_listen_and_raw_transfer():
    server = listen("127.0.0.1", 0, TransportConfig())
    node, conn = dial("127.0.0.1", server.port, TransportConfig())
    sconn = server.accept(timeout=3)
    assert sconn is not None
    payload = random.Random(3).randbytes(500_000)
    sent = 0
    while sent < len(payload):
        n = conn.submit(payload[sent:sent + 65536])
        if n == 0:
            conn.wait_activity(0.01)
        sent += n
    got = bytearray()
    deadline = time.monotonic() + 20
    while len(got) < len(payload) and time.monotonic() < deadline:
        chunk = sconn.take(1 << 20)
        if chunk:
            got += chunk
        else:
            sconn.wait_activity(0.01)
    assert bytes(got) == payload
    conn.shutdown()
    node.close()
    server.close()
