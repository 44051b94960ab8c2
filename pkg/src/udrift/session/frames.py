"""Session message framing.

Every frame is type(u8) + length(u32, big-endian) + payload, where
length counts payload bytes only.  Paths travel as 16-bit
length-prefixed UTF-8.  Large logical messages (file lists, signature
sets, deltas) are chunked; each chunk carries a flags byte whose low
bit marks the final chunk, and delta chunks always split on token
boundaries so no parse state spans frames.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from ..delta import Copy, Literal
from ..errors import CipherMismatch, SessionError, VersionError
from ..tree import FileEntry, KIND_DIR, KIND_FILE, KIND_SYMLINK

MSG_HELLO = 1
MSG_FILELIST = 2
MSG_SIG_REQUEST = 3
MSG_SIGNATURES = 4
MSG_DELTA = 5
MSG_FILE_DONE = 6
MSG_SESSION_DONE = 7
MSG_ERROR = 8

HEADER = struct.Struct(">BI")
MAX_PAYLOAD = 16 << 20

DIR_PUSH = 0
DIR_PULL = 1

OPT_RECURSIVE = 1
OPT_CHECKSUM = 2
OPT_WHOLE_FILE = 4

FLAG_FINAL = 1

_KIND_CODE = {KIND_FILE: 0, KIND_DIR: 1, KIND_SYMLINK: 2}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}

ERR_GENERIC = 1
ERR_PATH = 2
ERR_IO = 3
ERR_VERIFY = 4


@dataclass(frozen=True)
class Hello:
    version: int
    cipher: int
    block_size: int
    direction: int
    recursive: bool
    checksum: bool
    whole_file: bool
    root: str


@dataclass(frozen=True)
class FileListChunk:
    entries: tuple
    final: bool


@dataclass(frozen=True)
class SigRequest:
    path: str
    block_size: int


@dataclass(frozen=True)
class SignatureChunk:
    path: str
    block_size: int
    old_size: int        # length of the file the signatures describe
    sigs: tuple          # of (weak, strong) pairs
    final: bool


@dataclass(frozen=True)
class DeltaChunk:
    path: str
    tokens: tuple        # of Copy | Literal
    final: bool


@dataclass(frozen=True)
class FileDone:
    path: str
    size: int
    digest: bytes
    literal_bytes: int
    matched_bytes: int


@dataclass(frozen=True)
class SessionDone:
    pass


@dataclass(frozen=True)
class ErrorMsg:
    code: int
    text: str


Message = (Hello | FileListChunk | SigRequest | SignatureChunk | DeltaChunk
           | FileDone | SessionDone | ErrorMsg)


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise SessionError(f"string too long: {len(raw)} bytes")
    return struct.pack(">H", len(raw)) + raw


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise SessionError("payload truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def i64(self) -> int:
        return struct.unpack(">q", self.take(8))[0]

    def string(self) -> str:
        n = self.u16()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SessionError(f"bad utf-8 in string: {exc}") from None

    def done(self) -> bool:
        return self.pos == len(self.data)


def _encode_payload(msg: Message) -> tuple[int, bytes]:
    if isinstance(msg, Hello):
        opts = (OPT_RECURSIVE * msg.recursive | OPT_CHECKSUM * msg.checksum
                | OPT_WHOLE_FILE * msg.whole_file)
        body = struct.pack(">HBIBB", msg.version, msg.cipher, msg.block_size,
                           msg.direction, opts) + _pack_str(msg.root)
        return MSG_HELLO, body
    if isinstance(msg, FileListChunk):
        out = [struct.pack(">BI", FLAG_FINAL if msg.final else 0, len(msg.entries))]
        for e in msg.entries:
            out.append(_pack_str(e.path))
            out.append(struct.pack(">BQqII", _KIND_CODE[e.kind], e.size,
                                   e.mtime_s, e.mtime_ns, e.mode))
            if e.kind == KIND_SYMLINK:
                out.append(_pack_str(e.target))
            elif e.kind == KIND_FILE:
                out.append(struct.pack(">B", 1 if e.digest else 0))
                if e.digest:
                    out.append(e.digest)
        return MSG_FILELIST, b"".join(out)
    if isinstance(msg, SigRequest):
        return MSG_SIG_REQUEST, _pack_str(msg.path) + struct.pack(">I", msg.block_size)
    if isinstance(msg, SignatureChunk):
        out = [_pack_str(msg.path),
               struct.pack(">BIQI", FLAG_FINAL if msg.final else 0,
                           msg.block_size, msg.old_size, len(msg.sigs))]
        for weak, strong in msg.sigs:
            out.append(struct.pack(">I", weak))
            out.append(strong)
        return MSG_SIGNATURES, b"".join(out)
    if isinstance(msg, DeltaChunk):
        out = [_pack_str(msg.path), struct.pack(">B", FLAG_FINAL if msg.final else 0)]
        for tok in msg.tokens:
            if isinstance(tok, Copy):
                out.append(struct.pack(">BI", 0, tok.index))
            else:
                out.append(struct.pack(">BH", 1, len(tok.data)))
                out.append(tok.data)
        return MSG_DELTA, b"".join(out)
    if isinstance(msg, FileDone):
        return MSG_FILE_DONE, (_pack_str(msg.path)
                               + struct.pack(">Q", msg.size) + msg.digest
                               + struct.pack(">QQ", msg.literal_bytes,
                                             msg.matched_bytes))
    if isinstance(msg, SessionDone):
        return MSG_SESSION_DONE, b""
    if isinstance(msg, ErrorMsg):
        return MSG_ERROR, struct.pack(">H", msg.code) + _pack_str(msg.text)
    raise SessionError(f"cannot encode {type(msg).__name__}")


def encode_message(msg: Message) -> bytes:
    mtype, payload = _encode_payload(msg)
    if len(payload) > MAX_PAYLOAD:
        raise SessionError(f"payload too large: {len(payload)}")
    return HEADER.pack(mtype, len(payload)) + payload


def decode_message(buffer: bytes | bytearray) -> tuple[Message | None, int]:
    """One message from the front of ``buffer``: (message, consumed), or
    (None, 0) when more bytes are needed.  Raises SessionError on
    malformed input."""
    if len(buffer) < HEADER.size:
        return None, 0
    mtype, length = HEADER.unpack_from(bytes(buffer[:HEADER.size]))
    if mtype not in range(MSG_HELLO, MSG_ERROR + 1):
        raise SessionError(f"unknown message type {mtype}")
    if length > MAX_PAYLOAD:
        raise SessionError(f"declared payload {length} exceeds limit")
    total = HEADER.size + length
    if len(buffer) < total:
        return None, 0
    payload = bytes(buffer[HEADER.size:total])
    return _decode_payload(mtype, payload), total


def _decode_payload(mtype: int, payload: bytes) -> Message:
    r = _Reader(payload)
    if mtype == MSG_HELLO:
        version, cipher, block_size, direction, opts = struct.unpack(
            ">HBIBB", r.take(9))
        msg = Hello(version, cipher, block_size, direction,
                    bool(opts & OPT_RECURSIVE), bool(opts & OPT_CHECKSUM),
                    bool(opts & OPT_WHOLE_FILE), r.string())
    elif mtype == MSG_FILELIST:
        flags = r.u8()
        count = r.u32()
        entries = []
        for _ in range(count):
            path = r.string()
            kind_code, size, mtime_s, mtime_ns, mode = struct.unpack(
                ">BQqII", r.take(25))
            kind = _CODE_KIND.get(kind_code)
            if kind is None:
                raise SessionError(f"unknown entry kind {kind_code}")
            target = ""
            digest = b""
            if kind == KIND_SYMLINK:
                target = r.string()
            elif kind == KIND_FILE and r.u8():
                digest = r.take(16)
            entries.append(FileEntry(path, kind, size, mtime_s, mtime_ns,
                                     mode, target=target, digest=digest))
        msg = FileListChunk(tuple(entries), bool(flags & FLAG_FINAL))
    elif mtype == MSG_SIG_REQUEST:
        msg = SigRequest(r.string(), r.u32())
    elif mtype == MSG_SIGNATURES:
        path = r.string()
        flags = r.u8()
        block_size = r.u32()
        old_size = r.u64()
        count = r.u32()
        sigs = tuple((struct.unpack(">I", r.take(4))[0], r.take(16))
                     for _ in range(count))
        msg = SignatureChunk(path, block_size, old_size, sigs,
                             bool(flags & FLAG_FINAL))
    elif mtype == MSG_DELTA:
        path = r.string()
        flags = r.u8()
        tokens = []
        while not r.done():
            tag = r.u8()
            if tag == 0:
                tokens.append(Copy(r.u32()))
            elif tag == 1:
                tokens.append(Literal(r.take(r.u16())))
            else:
                raise SessionError(f"unknown delta token tag {tag}")
        msg = DeltaChunk(path, tuple(tokens), bool(flags & FLAG_FINAL))
    elif mtype == MSG_FILE_DONE:
        msg = FileDone(r.string(), r.u64(), r.take(16), r.u64(), r.u64())
    elif mtype == MSG_SESSION_DONE:
        msg = SessionDone()
    elif mtype == MSG_ERROR:
        code = r.u16()
        msg = ErrorMsg(code, r.string())
    else:  # pragma: no cover - guarded in decode_message
        raise SessionError(f"unknown message type {mtype}")
    if not r.done():
        raise SessionError(f"{len(payload) - r.pos} trailing bytes in message")
    return msg


@dataclass(frozen=True)
class SessionParams:
    version: int
    cipher: int
    block_size: int
    direction: int
    recursive: bool
    checksum: bool
    whole_file: bool


def negotiate(local: Hello, remote: Hello, local_is_client: bool) -> SessionParams:
    version = min(local.version, remote.version)
    if version < 1:
        raise VersionError(
            f"no common version between {local.version} and {remote.version}")
    if local.cipher != remote.cipher:
        raise CipherMismatch(
            f"cipher mismatch: local {local.cipher}, remote {remote.cipher}")
    client = local if local_is_client else remote
    direction = client.direction
    # the side that will send file data fixes the block size
    sender = client if direction == DIR_PUSH else (remote if local_is_client else local)
    return SessionParams(version, local.cipher, sender.block_size, direction,
                         client.recursive, client.checksum, client.whole_file)
