"""Sync session state machines.

Both ends are pump-driven: ``pump(stream)`` flushes queued frames,
parses whatever arrived, and generates more work, returning whether
anything progressed.  The same classes therefore run over the emulated
transport, a real socket connection, or an in-process loopback.

Per file the conversation is SIG_REQUEST then SIGNATURES from the
receiving side, answered by DELTA chunks and FILE_DONE from the sending
side; the receiver pipelines a few files ahead.  New file content is
materialized to a dot-temp file and renamed into place only after its
digest verifies, so an interrupted transfer never leaves a partial file
at the final path.
"""

from __future__ import annotations

import hashlib
import os
import stat as stat_mod
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from ..delta import (
    BlockSignature,
    Copy,
    SignatureSet,
    compute_delta,
    compute_signatures,
)
from ..errors import SessionError
from ..tree import (
    KIND_DIR,
    KIND_FILE,
    KIND_SYMLINK,
    FileEntry,
    file_digest,
    is_safe_relpath,
    manifest_for_source,
)
from .frames import (
    DIR_PUSH,
    ERR_GENERIC,
    ERR_IO,
    DeltaChunk,
    ErrorMsg,
    FileDone,
    FileListChunk,
    Hello,
    Message,
    SessionDone,
    SessionParams,
    SigRequest,
    SignatureChunk,
    decode_message,
    encode_message,
    negotiate,
)

OUT_WATERMARK = 512 * 1024
DELTA_CHUNK_BYTES = 128 * 1024
FILELIST_BATCH = 256
SIG_BATCH = 4096
PIPELINE_DEPTH = 4
READ_CHUNK = 256 * 1024


@dataclass
class SyncOptions:
    recursive: bool = False
    checksum: bool = False
    whole_file: bool = False
    block_size: int = 2048


@dataclass
class TransferStats:
    files_listed: int = 0
    files_skipped: int = 0
    files_updated: int = 0
    dirs_created: int = 0
    symlinks_written: int = 0
    literal_bytes: int = 0
    matched_bytes: int = 0
    delta_messages: int = 0
    wall_seconds: float = 0.0
    payload_bytes: int = 0
    completed: list = field(default_factory=list)

    def throughput_mbps(self) -> float:
        if self.wall_seconds <= 0:
            return 0.0
        return self.payload_bytes * 8 / self.wall_seconds / 1e6


class SessionMachine:
    """Common framing, hello exchange and pump loop."""

    def __init__(self, local_hello: Hello, initiator: bool):
        self.local_hello = local_hello
        self.initiator = initiator
        self.params: SessionParams | None = None
        self.out_q: deque[bytes] = deque()
        self.out_bytes = 0
        self.inbuf = bytearray()
        self.done = False
        self.error: Exception | None = None
        self.stats = TransferStats()
        self._closed_stream = False
        if initiator:
            self.enqueue(local_hello)

    # -- plumbing --------------------------------------------------------

    def enqueue(self, msg: Message) -> None:
        raw = encode_message(msg)
        self.out_q.append(raw)
        self.out_bytes += len(raw)

    def finished(self) -> bool:
        """Done AND the goodbye frames actually left the building (an
        error finishes immediately: there may be nobody left to flush to)."""
        if self.error is not None:
            return True
        return self.done and not self.out_q and self._closed_stream

    def fail(self, exc: Exception, notify: int | None = ERR_GENERIC) -> None:
        if self.error is None:
            self.error = exc
        if notify is not None:
            try:
                self.enqueue(ErrorMsg(notify, str(exc)))
            except SessionError:
                pass
        self.done = True
        self.cleanup()

    def cleanup(self) -> None:
        pass

    def pump(self, stream) -> bool:
        progress = False
        try:
            # flush queued frames
            while self.out_q:
                head = self.out_q[0]
                n = stream.write(head)
                if n:
                    progress = True
                    self.out_bytes -= n
                    if n == len(head):
                        self.out_q.popleft()
                    else:
                        self.out_q[0] = head[n:]
                if n < len(head):
                    break
            # pull in whatever arrived
            while True:
                data = stream.read(READ_CHUNK)
                if not data:
                    break
                self.inbuf += data
                progress = True
            # parse complete frames
            while not self.done:
                msg, consumed = decode_message(self.inbuf)
                if msg is None:
                    break
                del self.inbuf[:consumed]
                self.handle(msg)
                progress = True
            if not self.done:
                progress |= self.generate()
        except SessionError as exc:
            if self.error is None:
                self.fail(exc)
            progress = True
        except OSError as exc:
            self.fail(SessionError(f"io failure: {exc}"), notify=ERR_IO)
            progress = True
        err = stream.error()
        if err is not None and self.error is None:
            self.error = err
            self.done = True
            self.cleanup()
        if self.done and not self.out_q and not self._closed_stream:
            self._closed_stream = True
            self.cleanup()
            try:
                stream.close()
            except Exception:
                pass
            progress = True
        return progress

    # -- protocol ----------------------------------------------------------

    def handle(self, msg: Message) -> None:
        if isinstance(msg, Hello):
            if self.params is not None:
                raise SessionError("duplicate hello")
            self.params = negotiate(self.local_hello, msg,
                                    local_is_client=self.initiator)
            if not self.initiator:
                self.enqueue(self.local_hello)
            self.on_params(msg)
            return
        if self.params is None:
            raise SessionError(f"{type(msg).__name__} before hello")
        if isinstance(msg, ErrorMsg):
            self.error = SessionError(f"remote error {msg.code}: {msg.text}")
            self.done = True
            self.cleanup()
            return
        self.on_message(msg)

    def on_params(self, remote: Hello) -> None:
        pass

    def on_message(self, msg: Message) -> None:
        raise SessionError(f"unexpected {type(msg).__name__}")

    def generate(self) -> bool:
        return False


class SyncSender(SessionMachine):
    """Walks its tree, announces it, and answers signature requests with
    delta streams."""

    def __init__(self, root: str | Path, local_hello: Hello, initiator: bool,
                 manifest=None):
        self.root = Path(root)
        self._premade_manifest = manifest
        self._listed: set[str] = set()
        self._list_queue: deque[FileEntry] = deque()
        self._list_final_sent = False
        self._sig_acc: dict[str, tuple[int, int, list]] = {}
        self._work: deque[tuple[str, SignatureSet]] = deque()
        self._current = None          # (path, tokens, idx, done_msg)
        self._peer_done = False
        super().__init__(local_hello, initiator)

    def on_params(self, remote: Hello) -> None:
        manifest = self._premade_manifest
        if manifest is None:
            self.root, manifest = manifest_for_source(
                self.root, recursive=self.params.recursive,
                with_digest=self.params.checksum)
        self._list_queue.extend(manifest.entries)
        self._listed = {e.path for e in manifest.entries
                        if e.kind == KIND_FILE}
        self.stats.files_listed = len(self._listed)

    def on_message(self, msg: Message) -> None:
        if isinstance(msg, SigRequest):
            if msg.path not in self._listed:
                raise SessionError(f"request for unlisted path {msg.path!r}")
            self._sig_acc[msg.path] = (msg.block_size, 0, [])
            return
        if isinstance(msg, SignatureChunk):
            acc = self._sig_acc.get(msg.path)
            if acc is None:
                raise SessionError(f"signatures for {msg.path!r} without request")
            block_size, _, sigs = acc
            if msg.block_size != block_size:
                raise SessionError("signature block size changed mid-file")
            sigs.extend(msg.sigs)
            self._sig_acc[msg.path] = (block_size, msg.old_size, sigs)
            if msg.final:
                block_size, old_size, pairs = self._sig_acc.pop(msg.path)
                self._work.append(
                    (msg.path, _rebuild_sigset(block_size, old_size, pairs)))
            return
        if isinstance(msg, SessionDone):
            self._peer_done = True
            self.enqueue(SessionDone())
            self.done = True
            return
        super().on_message(msg)

    def generate(self) -> bool:
        progress = False
        while self.out_bytes < OUT_WATERMARK:
            if self._list_queue:
                batch = []
                while self._list_queue and len(batch) < FILELIST_BATCH:
                    batch.append(self._list_queue.popleft())
                final = not self._list_queue
                self.enqueue(FileListChunk(tuple(batch), final))
                self._list_final_sent |= final
                progress = True
                continue
            if self.params is not None and not self._list_final_sent:
                # empty tree: a single empty final chunk
                self.enqueue(FileListChunk((), True))
                self._list_final_sent = True
                progress = True
                continue
            if self._current is None and self._work:
                self._current = self._start_file(*self._work.popleft())
                progress = True
                continue
            if self._current is not None:
                progress |= self._continue_file()
                continue
            break
        return progress

    def _start_file(self, path: str, sigset: SignatureSet):
        data = (self.root / path).read_bytes()
        tokens = compute_delta(sigset, data)
        literal = sum(len(t.data) for t in tokens if not isinstance(t, Copy))
        matched = len(data) - literal
        self.stats.literal_bytes += literal
        self.stats.matched_bytes += matched
        self.stats.payload_bytes += len(data)
        done = FileDone(path, len(data), hashlib.md5(data).digest(),
                        literal, matched)
        return (path, tokens, 0, done)

    def _continue_file(self) -> bool:
        path, tokens, idx, done_msg = self._current
        if idx >= len(tokens):
            if idx == 0:
                self.enqueue(DeltaChunk(path, (), True))
                self.stats.delta_messages += 1
            self.enqueue(done_msg)
            self.stats.files_updated += 1
            self.stats.completed.append(path)
            self._current = None
            return True
        chunk = []
        size = 0
        while idx < len(tokens) and size < DELTA_CHUNK_BYTES:
            tok = tokens[idx]
            size += 5 if isinstance(tok, Copy) else 3 + len(tok.data)
            chunk.append(tok)
            idx += 1
        final = idx >= len(tokens)
        self.enqueue(DeltaChunk(path, tuple(chunk), final))
        self.stats.delta_messages += 1
        if final:
            self.enqueue(done_msg)
            self.stats.files_updated += 1
            self.stats.completed.append(path)
            self._current = None
        else:
            self._current = (path, tokens, idx, done_msg)
        return True


def _rebuild_sigset(block_size: int, old_size: int, pairs) -> SignatureSet:
    sigs = []
    for index, (weak, strong) in enumerate(pairs):
        start = index * block_size
        length = min(block_size, old_size - start)
        sigs.append(BlockSignature(index, length, weak, strong))
    return SignatureSet(block_size, sigs)


class _ApplyState:
    def __init__(self, path: str, final_path: Path, old_data: bytes,
                 block_size: int, entry: FileEntry):
        self.path = path
        self.final_path = final_path
        self.old_data = old_data
        self.block_size = block_size
        self.entry = entry
        self.temp_path = final_path.parent / f".udrift.{final_path.name}.tmp"
        self.handle = open(self.temp_path, "wb")
        self.hash = hashlib.md5()
        self.written = 0
        self.literal = 0
        self.matched = 0

    def apply(self, tokens) -> None:
        nblocks = (len(self.old_data) + self.block_size - 1) // self.block_size
        for tok in tokens:
            if isinstance(tok, Copy):
                if not 0 <= tok.index < nblocks:
                    raise SessionError(
                        f"delta for {self.path!r} references block {tok.index} "
                        f"of {nblocks}")
                start = tok.index * self.block_size
                piece = self.old_data[start:start + self.block_size]
                self.matched += len(piece)
            else:
                piece = tok.data
                self.literal += len(piece)
            self.handle.write(piece)
            self.hash.update(piece)
            self.written += len(piece)

    def discard(self) -> None:
        try:
            self.handle.close()
        finally:
            try:
                os.unlink(self.temp_path)
            except OSError:
                pass

    def commit(self) -> None:
        self.handle.flush()
        os.fsync(self.handle.fileno())
        self.handle.close()
        os.chmod(self.temp_path, self.entry.mode)
        mtime_ns = self.entry.mtime_s * 1_000_000_000 + self.entry.mtime_ns
        os.utime(self.temp_path, ns=(mtime_ns, mtime_ns))
        os.replace(self.temp_path, self.final_path)


class SyncReceiver(SessionMachine):
    """Plans transfers from the announced file list and materializes the
    delta streams."""

    def __init__(self, root: str | Path, local_hello: Hello, initiator: bool):
        self.root = Path(root)
        self._entries: list[FileEntry] = []
        self._list_final = False
        self._requests: deque[FileEntry] = deque()
        self._applying: dict[str, _ApplyState] = {}
        self._done_sent = False
        super().__init__(local_hello, initiator)

    def on_params(self, remote: Hello) -> None:
        self.root.mkdir(parents=True, exist_ok=True)

    def cleanup(self) -> None:
        for state in list(self._applying.values()):
            state.discard()
        self._applying.clear()

    def on_message(self, msg: Message) -> None:
        if isinstance(msg, FileListChunk):
            if self._list_final:
                raise SessionError("file list after final chunk")
            for entry in msg.entries:
                self._admit(entry)
            if msg.final:
                self._list_final = True
            return
        if isinstance(msg, DeltaChunk):
            state = self._applying.get(msg.path)
            if state is None:
                raise SessionError(f"delta for unexpected path {msg.path!r}")
            state.apply(msg.tokens)
            self.stats.delta_messages += 1
            return
        if isinstance(msg, FileDone):
            state = self._applying.pop(msg.path, None)
            if state is None:
                raise SessionError(f"file-done for unexpected path {msg.path!r}")
            if state.written != msg.size or state.hash.digest() != msg.digest:
                state.discard()
                raise SessionError(
                    f"verification failed for {msg.path!r}: "
                    f"{state.written}/{msg.size} bytes")
            state.commit()
            self.stats.files_updated += 1
            self.stats.literal_bytes += state.literal
            self.stats.matched_bytes += state.matched
            self.stats.payload_bytes += state.written
            self.stats.completed.append(msg.path)
            return
        if isinstance(msg, SessionDone):
            # sender's closing reply
            self.done = True
            return
        super().on_message(msg)

    # -- planning ---------------------------------------------------------

    def _ensure_inside_root(self, full: Path, rel: str) -> None:
        real_root = os.path.realpath(self.root)
        real_parent = os.path.realpath(full.parent)
        if real_parent != real_root \
                and os.path.commonpath([real_parent, real_root]) != real_root:
            raise SessionError(f"path {rel!r} escapes the root")

    def _admit(self, entry: FileEntry) -> None:
        if not is_safe_relpath(entry.path):
            raise SessionError(f"unsafe path {entry.path!r}")
        self.stats.files_listed += entry.kind == KIND_FILE
        full = self.root / entry.path
        self._ensure_inside_root(full, entry.path)
        if entry.kind == KIND_DIR:
            if not full.is_dir():
                full.mkdir(parents=True, exist_ok=True)
                self.stats.dirs_created += 1
            os.chmod(full, entry.mode)
            return
        if entry.kind == KIND_SYMLINK:
            try:
                current = os.readlink(full)
            except OSError:
                current = None
            if current != entry.target:
                if full.is_symlink() or full.exists():
                    full.unlink()
                os.symlink(entry.target, full)
                self.stats.symlinks_written += 1
            return
        if self._can_skip(entry, full):
            self.stats.files_skipped += 1
        else:
            self._requests.append(entry)

    def _can_skip(self, entry: FileEntry, full: Path) -> bool:
        try:
            st = os.lstat(full)
        except OSError:
            return False
        if not stat_mod.S_ISREG(st.st_mode):
            return False
        if self.params.checksum:
            return bool(entry.digest) and file_digest(full) == entry.digest
        mtime_ns = entry.mtime_s * 1_000_000_000 + entry.mtime_ns
        return st.st_size == entry.size and st.st_mtime_ns == mtime_ns

    def generate(self) -> bool:
        progress = False
        while (self._requests and len(self._applying) < PIPELINE_DEPTH
               and self.out_bytes < OUT_WATERMARK):
            entry = self._requests.popleft()
            self._request_file(entry)
            progress = True
        if (self._list_final and not self._requests and not self._applying
                and not self._done_sent):
            self.enqueue(SessionDone())
            self._done_sent = True
            progress = True
        return progress

    def _request_file(self, entry: FileEntry) -> None:
        full = self.root / entry.path
        self._ensure_inside_root(full, entry.path)
        block_size = self.params.block_size
        old = b""
        if not self.params.whole_file:
            try:
                if os.path.isfile(full) and not os.path.islink(full):
                    old = full.read_bytes()
            except OSError:
                old = b""
        self.enqueue(SigRequest(entry.path, block_size))
        sigset = compute_signatures(old, block_size)
        pairs = [(s.weak, s.strong) for s in sigset.signatures]
        if not pairs:
            self.enqueue(SignatureChunk(entry.path, block_size, len(old), (), True))
        else:
            for start in range(0, len(pairs), SIG_BATCH):
                batch = pairs[start:start + SIG_BATCH]
                final = start + SIG_BATCH >= len(pairs)
                self.enqueue(SignatureChunk(entry.path, block_size, len(old),
                                            tuple(batch), final))
        full.parent.mkdir(parents=True, exist_ok=True)
        self._applying[entry.path] = _ApplyState(entry.path, full, old,
                                                 block_size, entry)


def make_hello(options: SyncOptions, direction: int, root: str,
               cipher: int = 0, version: int = 1) -> Hello:
    return Hello(version, cipher, options.block_size, direction,
                 options.recursive, options.checksum, options.whole_file, root)


def client_machines(direction: int, local_root: str | Path, remote_root: str,
                    options: SyncOptions, cipher: int = 0):
    """The machine the connecting side runs."""
    hello = make_hello(options, direction, remote_root, cipher)
    if direction == DIR_PUSH:
        return SyncSender(local_root, hello, initiator=True)
    return SyncReceiver(local_root, hello, initiator=True)


def server_machine(client_hello: Hello, served_root: str | Path,
                   options_override: SyncOptions | None = None):
    """The machine the accepting side runs, complementary to the client's."""
    opts = options_override or SyncOptions(
        recursive=client_hello.recursive, checksum=client_hello.checksum,
        whole_file=client_hello.whole_file, block_size=client_hello.block_size)
    hello = make_hello(opts, client_hello.direction, "", client_hello.cipher)
    if client_hello.direction == DIR_PUSH:
        return SyncReceiver(served_root, hello, initiator=False)
    return SyncSender(served_root, hello, initiator=False)
