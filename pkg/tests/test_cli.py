import os
import random
import signal
import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest

from udrift.cli import EndpointSpec, parse_args, parse_endpoint
from udrift.errors import UsageError

UDRIFT = [sys.executable, "-m", "udrift.cli"]


def run_cli(*args, env=None, timeout=60):
    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    return subprocess.run(UDRIFT + list(args), capture_output=True, text=True,
                          env=full_env, timeout=timeout)


# --- parsing ------------------------------------------------------------

def test_parse_endpoint_forms():
    assert parse_endpoint("plain/dir") == EndpointSpec("plain/dir")
    assert parse_endpoint("host:9000:some/path") == EndpointSpec("some/path", "host", 9000)
    assert parse_endpoint("host:9000:") == EndpointSpec(".", "host", 9000)
    # colon in the path survives
    assert parse_endpoint("h:1:a:b") == EndpointSpec("a:b", "h", 1)
    # not a decimal port: treated as a local path
    assert parse_endpoint("host:abc:path") == EndpointSpec("host:abc:path")


def test_parse_sync_defaults():
    opts = parse_args(["-r", "src/", "host:9000:dst/"])
    assert opts.mode == "sync"
    assert opts.recursive
    assert opts.cipher == "none"
    assert opts.dest.remote and opts.dest.port == 9000


def test_parse_blowfish_without_key_rejected(monkeypatch):
    monkeypatch.delenv("UDRSYNC_KEY", raising=False)
    with pytest.raises(UsageError):
        parse_args(["--cipher", "blowfish", "src", "host:9000:dst"])


def test_parse_key_from_environment(monkeypatch):
    monkeypatch.setenv("UDRSYNC_KEY", "00112233445566778899aabbccddeeff")
    opts = parse_args(["--cipher", "blowfish", "src", "host:9000:dst"])
    assert opts.key == bytes.fromhex("00112233445566778899aabbccddeeff")


def test_parse_key_file_hex_and_raw(tmp_path, monkeypatch):
    monkeypatch.delenv("UDRSYNC_KEY", raising=False)
    hexfile = tmp_path / "k.hex"
    hexfile.write_text("hex:a1b2c3d4e5f60718\n")
    opts = parse_args(["--cipher", "blowfish", "--key", str(hexfile),
                       "src", "host:9000:dst"])
    assert opts.key == bytes.fromhex("a1b2c3d4e5f60718")
    raw = tmp_path / "k.raw"
    raw.write_bytes(b"sixteen byte key")
    opts = parse_args(["--cipher", "blowfish", "--key", str(raw),
                       "src", "host:9000:dst"])
    assert opts.key == b"sixteen byte key"


def test_parse_both_remote_rejected():
    with pytest.raises(UsageError):
        parse_args(["h1:1:a", "h2:2:b"])


def test_parse_serve_requires_root_and_port(tmp_path):
    with pytest.raises(UsageError):
        parse_args(["serve", "--root", str(tmp_path)])
    with pytest.raises(UsageError):
        parse_args(["serve", "--port", "9000"])
    opts = parse_args(["serve", "--root", str(tmp_path), "--port", "9000"])
    assert opts.mode == "serve"
    assert opts.port == 9000


def test_parse_is_total_over_junk():
    rng = random.Random(0)
    vocab = ["-r", "--cipher", "blowfish", "--bogus", "serve", "bench", "x:y:z",
             "src", "dst", "--port", "nine", "-vvv", "--", "-q"]
    for _ in range(300):
        argv = [rng.choice(vocab) for _ in range(rng.randrange(0, 6))]
        try:
            parse_args(argv)
        except UsageError:
            pass


# --- black-box process tests ---------------------------------------------

def test_usage_error_exit_code():
    proc = run_cli("--definitely-not-a-flag", "a", "b")
    assert proc.returncode == 2
    assert proc.stderr


def test_missing_args_exit_code():
    proc = run_cli()
    assert proc.returncode == 2


def test_local_sync_identical_trees_reports_zero(tmp_path):
    src = tmp_path / "src"
    dst = tmp_path / "dst"
    src.mkdir()
    (src / "f.txt").write_bytes(b"payload")
    first = run_cli("-r", str(src), str(dst))
    assert first.returncode == 0
    second = run_cli("-r", "-vv", str(src), str(dst))
    assert second.returncode == 0
    assert "0 bytes transferred" in second.stdout


def test_connect_to_closed_port_exits_4():
    proc = run_cli("/etc/hostname", "127.0.0.1:1:x", timeout=30)
    assert proc.returncode == 4


def _free_port() -> int:
    s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


@pytest.fixture
def daemon_proc(tmp_path):
    served = tmp_path / "served"
    served.mkdir()
    port = _free_port()
    proc = subprocess.Popen(
        UDRIFT + ["serve", "--root", str(served), "--port", str(port),
                  "--bind", "127.0.0.1"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE)
    time.sleep(0.6)
    assert proc.poll() is None, proc.stderr.read().decode()
    yield served, port
    proc.send_signal(signal.SIGINT)
    try:
        proc.wait(timeout=5)
    except subprocess.TimeoutExpired:
        proc.kill()


def test_push_and_pull_through_daemon(tmp_path, daemon_proc):
    served, port = daemon_proc
    rng = random.Random(77)
    src = tmp_path / "src"
    (src / "sub").mkdir(parents=True)
    (src / "a.bin").write_bytes(rng.randbytes(300_000))
    (src / "sub" / "b.bin").write_bytes(rng.randbytes(120_000))

    push = run_cli("-r", "-v", str(src), f"127.0.0.1:{port}:store")
    assert push.returncode == 0, push.stderr
    assert "a.bin" in push.stdout
    assert (served / "store" / "a.bin").read_bytes() == (src / "a.bin").read_bytes()

    pulled = tmp_path / "pulled"
    pull = run_cli("-r", f"127.0.0.1:{port}:store", str(pulled))
    assert pull.returncode == 0, pull.stderr
    assert (pulled / "sub" / "b.bin").read_bytes() == (src / "sub" / "b.bin").read_bytes()


def test_encrypted_push_needs_matching_server_key(tmp_path):
    served = tmp_path / "served"
    served.mkdir()
    src = tmp_path / "src"
    src.mkdir()
    (src / "f").write_bytes(b"secret")
    port = _free_port()
    # daemon without key cannot serve blowfish
    proc = subprocess.Popen(
        UDRIFT + ["serve", "--root", str(served), "--port", str(port),
                  "--bind", "127.0.0.1"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE)
    time.sleep(0.6)
    try:
        push = run_cli("--cipher", "blowfish", str(src), f"127.0.0.1:{port}:x",
                       env={"UDRSYNC_KEY": "00" * 16})
        assert push.returncode == 3
    finally:
        proc.kill()
        proc.wait(timeout=5)


def test_encrypted_push_roundtrip(tmp_path):
    served = tmp_path / "served"
    served.mkdir()
    src = tmp_path / "src"
    src.mkdir()
    body = random.Random(5).randbytes(200_000)
    (src / "enc.bin").write_bytes(body)
    keyfile = tmp_path / "key"
    keyfile.write_bytes(b"a shared secret key")
    port = _free_port()
    proc = subprocess.Popen(
        UDRIFT + ["serve", "--root", str(served), "--port", str(port),
                  "--bind", "127.0.0.1", "--key", str(keyfile)],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE)
    time.sleep(0.6)
    try:
        push = run_cli("--cipher", "blowfish", "--key", str(keyfile),
                       str(src), f"127.0.0.1:{port}:enc")
        assert push.returncode == 0, push.stderr
        assert (served / "enc" / "enc.bin").read_bytes() == body
    finally:
        proc.kill()
        proc.wait(timeout=5)


def test_bench_smoke_writes_report_and_figure(tmp_path):
    out = tmp_path / "report.tsv"
    proc = run_cli("bench", "--size-mb", "1", "--baseline-kb", "64",
                   "--rtt-ms", "10", "--cap-mbps", "40", "--probe-mb", "4",
                   "--out", str(out), timeout=240)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("label\tcipher\tmbit/s\tLLR")
    lines = proc.stdout.strip().splitlines()
    assert len(lines) == 5  # header + 2 tools x 2 ciphers
    assert out.exists()
    figure = out.with_suffix(".png")
    assert figure.exists() and figure.stat().st_size > 0
