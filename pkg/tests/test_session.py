import os
import random
import shutil
from pathlib import Path

import pytest

from udrift.errors import SessionError
from udrift.session import (
    DIR_PULL,
    DIR_PUSH,
    SyncOptions,
    SyncReceiver,
    SyncSender,
    make_hello,
)
from udrift.session.drive import attach_session, sync_local, sync_over_sim
from udrift.session.frames import FileListChunk, Hello, SessionDone, encode_message
from udrift.session.stream import loopback_pair, pump_loopback
from udrift.transport import LinkSpec
from udrift.transport.sim import sim_pair
from udrift.tree import FileEntry, tree_digests


def build_tree(root: Path, rng: random.Random, files=25, max_size=100_000):
    root.mkdir(parents=True, exist_ok=True)
    for i in range(files):
        d = root
        for _ in range(rng.randrange(0, 3)):
            d = d / f"d{rng.randrange(4)}"
        d.mkdir(parents=True, exist_ok=True)
        (d / f"f{i}.dat").write_bytes(rng.randbytes(rng.randrange(0, max_size)))
    os.symlink("f0.dat", root / "alias")


def push_machines(src, dst, options=None):
    options = options or SyncOptions(recursive=True)
    sender = SyncSender(src, make_hello(options, DIR_PUSH, ""), initiator=True)
    receiver = SyncReceiver(dst, make_hello(options, DIR_PUSH, ""), initiator=False)
    return sender, receiver


def test_push_empty_tree_completes_with_zero_files(tmp_path):
    src = tmp_path / "src"
    dst = tmp_path / "dst"
    src.mkdir()
    s_stats, r_stats = sync_local(src, dst, SyncOptions(recursive=True))
    assert s_stats.files_listed == 0
    assert r_stats.files_updated == 0
    assert dst.is_dir()


def test_push_tree_to_empty_destination(tmp_path):
    rng = random.Random(21)
    src = tmp_path / "src"
    dst = tmp_path / "dst"
    build_tree(src, rng)
    _, r_stats = sync_local(src, dst, SyncOptions(recursive=True))
    assert tree_digests(src) == tree_digests(dst)
    assert r_stats.files_updated == r_stats.files_listed


def test_unchanged_file_sends_no_delta_messages(tmp_path):
    src = tmp_path / "src"
    dst = tmp_path / "dst"
    src.mkdir()
    (src / "same.txt").write_bytes(b"stable content")
    sync_local(src, dst, SyncOptions())
    sender, receiver = push_machines(src, dst, SyncOptions())
    a, b = loopback_pair()
    pump_loopback(sender, a, receiver, b)
    assert sender.stats.delta_messages == 0
    assert receiver.stats.files_skipped == 1
    assert receiver.stats.literal_bytes == 0


def test_second_sync_transfers_zero_literal_bytes(tmp_path):
    rng = random.Random(3)
    src = tmp_path / "src"
    dst = tmp_path / "dst"
    build_tree(src, rng, files=10)
    sync_local(src, dst, SyncOptions(recursive=True))
    _, again = sync_local(src, dst, SyncOptions(recursive=True))
    assert again.literal_bytes == 0
    assert again.files_updated == 0


def test_edited_file_mostly_copies(tmp_path):
    rng = random.Random(9)
    src = tmp_path / "src"
    dst = tmp_path / "dst"
    src.mkdir()
    data = bytearray(rng.randbytes(600_000))
    (src / "big.bin").write_bytes(bytes(data))
    sync_local(src, dst, SyncOptions())
    data[5000:5100] = rng.randbytes(100)
    (src / "big.bin").write_bytes(bytes(data))
    _, r_stats = sync_local(src, dst, SyncOptions())
    assert tree_digests(src) == tree_digests(dst)
    assert r_stats.literal_bytes <= 3 * 2048
    assert r_stats.matched_bytes >= 590_000


def test_checksum_mode_skips_same_content_different_mtime(tmp_path):
    src = tmp_path / "src"
    dst = tmp_path / "dst"
    src.mkdir()
    dst.mkdir()
    (src / "f").write_bytes(b"identical")
    (dst / "f").write_bytes(b"identical")
    os.utime(dst / "f", ns=(1, 1))  # wildly different mtime
    _, r_stats = sync_local(src, dst, SyncOptions(checksum=True))
    assert r_stats.files_skipped == 1
    assert r_stats.files_updated == 0


def test_mtime_size_fastpath_not_fooled_when_size_changes(tmp_path):
    src = tmp_path / "src"
    dst = tmp_path / "dst"
    src.mkdir()
    (src / "f").write_bytes(b"0123456789")
    sync_local(src, dst, SyncOptions())
    (src / "f").write_bytes(b"0123456789ABCDEF")
    _, r_stats = sync_local(src, dst, SyncOptions())
    assert r_stats.files_updated == 1
    assert (dst / "f").read_bytes() == b"0123456789ABCDEF"


def test_whole_file_mode_sends_everything_as_literal(tmp_path):
    rng = random.Random(14)
    src = tmp_path / "src"
    dst = tmp_path / "dst"
    src.mkdir()
    payload = rng.randbytes(100_000)
    (src / "f").write_bytes(payload)
    sync_local(src, dst, SyncOptions())
    # touch mtime so the fast path does not skip, then resync whole-file
    os.utime(src / "f", ns=(123456789, 123456789))
    _, r_stats = sync_local(src, dst, SyncOptions(whole_file=True))
    assert r_stats.files_updated == 1
    assert r_stats.literal_bytes == len(payload)
    assert r_stats.matched_bytes == 0


def test_mode_and_mtime_preserved(tmp_path):
    src = tmp_path / "src"
    dst = tmp_path / "dst"
    src.mkdir()
    f = src / "script.sh"
    f.write_bytes(b"#!/bin/sh\n")
    os.chmod(f, 0o755)
    os.utime(f, ns=(1_600_000_000_123_456_789, 1_600_000_000_123_456_789))
    sync_local(src, dst, SyncOptions())
    st = os.stat(dst / "script.sh")
    assert st.st_mode & 0o7777 == 0o755
    assert st.st_mtime_ns == 1_600_000_000_123_456_789


def test_symlinks_replicated_not_followed(tmp_path):
    src = tmp_path / "src"
    dst = tmp_path / "dst"
    src.mkdir()
    (src / "real").write_bytes(b"data")
    os.symlink("real", src / "ln")
    os.symlink("/outside/absolute", src / "abs")
    sync_local(src, dst, SyncOptions(recursive=True))
    assert os.readlink(dst / "ln") == "real"
    assert os.readlink(dst / "abs") == "/outside/absolute"
    assert not (dst / "abs").exists() or True  # dangling is fine


def test_nonrecursive_sync_top_level_only(tmp_path):
    src = tmp_path / "src"
    dst = tmp_path / "dst"
    (src / "sub").mkdir(parents=True)
    (src / "top.txt").write_bytes(b"top")
    (src / "sub" / "deep.txt").write_bytes(b"deep")
    sync_local(src, dst, SyncOptions(recursive=False))
    assert (dst / "top.txt").exists()
    assert (dst / "sub").is_dir()
    assert not (dst / "sub" / "deep.txt").exists()


def test_path_escape_rejected():
    evil = FileEntry("../evil.txt", "file", 4, 0, 0, 0o644)
    options = SyncOptions()
    receiver = SyncReceiver("/tmp/udrift-escape-test",
                            make_hello(options, DIR_PUSH, ""), initiator=False)
    a, b = loopback_pair()
    b.write(encode_message(make_hello(options, DIR_PUSH, "")))
    b.write(encode_message(FileListChunk((evil,), True)))
    receiver.pump(a)
    assert receiver.error is not None
    assert "evil" in str(receiver.error) or "unsafe" in str(receiver.error)
    assert not os.path.exists("/tmp/evil.txt")


def test_symlinked_directory_cannot_escape_root(tmp_path):
    outside = tmp_path / "outside"
    outside.mkdir()
    root = tmp_path / "root"
    options = SyncOptions(recursive=True)
    receiver = SyncReceiver(root, make_hello(options, DIR_PUSH, ""),
                            initiator=False)
    a, b = loopback_pair()
    b.write(encode_message(make_hello(options, DIR_PUSH, "")))
    entries = (
        FileEntry("jump", "symlink", 0, 0, 0, 0o777, target=str(outside)),
        FileEntry("jump/owned.txt", "file", 3, 0, 0, 0o644),
    )
    b.write(encode_message(FileListChunk(entries, True)))
    for _ in range(10):
        receiver.pump(a)
    assert receiver.error is not None
    assert not (outside / "owned.txt").exists()
    assert not (outside / ".udrift.owned.txt.tmp").exists()


def test_pull_direction_fetches_remote_tree(tmp_path):
    rng = random.Random(31)
    remote = tmp_path / "remote"
    local = tmp_path / "local"
    build_tree(remote, rng, files=12)
    options = SyncOptions(recursive=True)
    # client pulls: client is the receiver, server the sender
    client = SyncReceiver(local, make_hello(options, DIR_PULL, ""), initiator=True)
    server = SyncSender(remote, make_hello(options, DIR_PULL, ""), initiator=False)
    a, b = loopback_pair()
    pump_loopback(client, a, server, b)
    assert tree_digests(remote) == tree_digests(local)


def test_sync_over_lossy_emulated_link(tmp_path):
    rng = random.Random(44)
    src = tmp_path / "src"
    dst = tmp_path / "dst"
    build_tree(src, rng, files=15, max_size=400_000)
    link = LinkSpec(one_way_delay_ms=4.0, loss_fraction=0.01,
                    bandwidth_cap_mbps=150.0, seed=5)
    world, cn, sn = sim_pair(link)
    sender, receiver = push_machines(src, dst)
    sync_over_sim(world, cn, sn, sender, receiver)
    assert tree_digests(src) == tree_digests(dst)


def test_interrupted_transfer_leaves_no_partial_file(tmp_path):
    rng = random.Random(50)
    src = tmp_path / "src"
    dst = tmp_path / "dst"
    src.mkdir()
    (src / "victim.bin").write_bytes(rng.randbytes(8_000_000))
    link = LinkSpec(one_way_delay_ms=4.0, bandwidth_cap_mbps=50.0, seed=6)
    world, cn, sn = sim_pair(link)
    sender, receiver = push_machines(src, dst)
    attach_session(cn, sender)
    attach_session(sn, receiver)
    world.touch(cn)
    world.touch(sn)
    # run long enough for the transfer to be mid-file, then cut it off
    world.run(until_us=world.now_us + 400_000)
    assert not receiver.done
    receiver.cleanup()
    assert not (dst / "victim.bin").exists()
    leftovers = [p for p in dst.iterdir() if p.name.startswith(".udrift.")]
    assert leftovers == []


def test_sender_refuses_requests_for_unlisted_paths(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    (src / "public.txt").write_bytes(b"ok")
    (src / "secret.txt").write_bytes(b"no")  # listed: fine to request
    options = SyncOptions()
    sender = SyncSender(src, make_hello(options, DIR_PUSH, ""), initiator=True)
    a, b = loopback_pair()
    sender.pump(a)  # emits hello
    b.read(1 << 20)
    b.write(encode_message(make_hello(options, DIR_PUSH, "")))
    from udrift.session.frames import SigRequest
    b.write(encode_message(SigRequest("/etc/passwd", 2048)))
    for _ in range(5):
        sender.pump(a)
    assert sender.error is not None
