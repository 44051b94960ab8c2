"""Block-signature delta encoding.

The weak checksum is the classic two-part rolling sum: for a block of
length l (bytes x_1..x_l, 1-indexed),

    a = sum(x_i) mod 2^16
    b = sum((l - i + 1) * x_i) mod 2^16
    weak = a + 2^16 * b

``roll`` slides the window one byte in O(1).  Block matches are found by
weak lookup and confirmed with a 16-byte MD5 before a COPY token is
emitted; everything else becomes LITERAL runs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, CorruptDelta

MOD = 1 << 16
MIN_BLOCK_SIZE = 64
DEFAULT_BLOCK_SIZE = 2048
LITERAL_MAX = 0xFFFF
STRONG_LEN = 16


def weak_checksum(block: bytes) -> int:
    n = len(block)
    if n >= 256:
        arr = np.frombuffer(block, dtype=np.uint8).astype(np.int64)
        a = int(arr.sum())
        b = int(((n - np.arange(n, dtype=np.int64)) * arr).sum())
    else:
        a = 0
        b = 0
        for x in block:
            a += x
            b += a
    return ((b % MOD) << 16) | (a % MOD)


def roll(weak: int, out_byte: int, in_byte: int, length: int) -> int:
    a = weak & 0xFFFF
    b = (weak >> 16) & 0xFFFF
    a = (a - out_byte + in_byte) % MOD
    b = (b - length * out_byte + a) % MOD
    return (b << 16) | a


def strong_checksum(block: bytes) -> bytes:
    return hashlib.md5(block).digest()


@dataclass(frozen=True)
class BlockSignature:
    index: int
    length: int
    weak: int
    strong: bytes


@dataclass(frozen=True)
class Copy:
    index: int


@dataclass(frozen=True)
class Literal:
    data: bytes


class SignatureSet:
    """Signatures of one file plus the weak-keyed lookup table."""

    def __init__(self, block_size: int, signatures: list[BlockSignature]):
        if block_size < MIN_BLOCK_SIZE:
            raise ConfigError(f"block size {block_size} below minimum {MIN_BLOCK_SIZE}")
        self.block_size = block_size
        self.signatures = signatures
        # first occurrence wins so repeated blocks resolve deterministically
        self._lookup: dict[int, dict[bytes, int]] = {}
        for sig in signatures:
            self._lookup.setdefault(sig.weak, {}).setdefault(sig.strong, sig.index)

    def __len__(self) -> int:
        return len(self.signatures)

    def find(self, weak: int, block: bytes) -> int | None:
        by_strong = self._lookup.get(weak)
        if not by_strong:
            return None
        idx = by_strong.get(strong_checksum(block))
        if idx is not None and self.signatures[idx].length == len(block):
            return idx
        return None


def compute_signatures(data: bytes, block_size: int = DEFAULT_BLOCK_SIZE) -> SignatureSet:
    if block_size < MIN_BLOCK_SIZE:
        raise ConfigError(f"block size {block_size} below minimum {MIN_BLOCK_SIZE}")
    sigs = []
    for index, start in enumerate(range(0, len(data), block_size)):
        block = data[start:start + block_size]
        sigs.append(BlockSignature(index, len(block), weak_checksum(block),
                                   strong_checksum(block)))
    return SignatureSet(block_size, sigs)


def compute_delta(sigset: SignatureSet, new_data: bytes) -> list[Copy | Literal]:
    tokens: list[Copy | Literal] = []
    lit = bytearray()

    def flush():
        for start in range(0, len(lit), LITERAL_MAX):
            tokens.append(Literal(bytes(lit[start:start + LITERAL_MAX])))
        lit.clear()

    n = len(new_data)
    bs = sigset.block_size
    if not sigset.signatures:
        # nothing to match against; emit the whole input as literals
        lit.extend(new_data)
        flush()
        return tokens

    pos = 0
    w = weak_checksum(new_data[:bs]) if n >= bs else 0
    while pos + bs <= n:
        idx = sigset.find(w, new_data[pos:pos + bs])
        if idx is not None:
            flush()
            tokens.append(Copy(idx))
            pos += bs
            if pos + bs <= n:
                w = weak_checksum(new_data[pos:pos + bs])
            continue
        lit.append(new_data[pos])
        if pos + 1 + bs <= n:
            w = roll(w, new_data[pos], new_data[pos + bs], bs)
        pos += 1

    tail = new_data[pos:]
    if tail:
        # only the final block of the old file can be short; matching it
        # keeps an unchanged odd-length file free of literal bytes
        last = sigset.signatures[-1]
        if (last.length == len(tail) and last.weak == weak_checksum(tail)
                and last.strong == strong_checksum(tail)):
            flush()
            tokens.append(Copy(last.index))
        else:
            lit.extend(tail)
    flush()
    return tokens


def apply_delta(old_data: bytes, tokens: list[Copy | Literal],
                block_size: int = DEFAULT_BLOCK_SIZE) -> bytes:
    nblocks = (len(old_data) + block_size - 1) // block_size
    out = bytearray()
    for tok in tokens:
        if isinstance(tok, Copy):
            if not 0 <= tok.index < nblocks:
                raise CorruptDelta(f"copy index {tok.index} outside {nblocks} blocks")
            start = tok.index * block_size
            out += old_data[start:start + block_size]
        else:
            out += tok.data
    return bytes(out)


def literal_bytes(tokens: list[Copy | Literal]) -> int:
    return sum(len(t.data) for t in tokens if isinstance(t, Literal))
