"""Sequential disk speed probes.

The write probe streams a patterned buffer and fsyncs before stopping
the clock; the read probe streams the same file back.  Page cache
effects are real: for honest numbers use a probe larger than RAM or a
freshly mounted volume.  256 MiB or more is a sensible floor for
reportable figures; the default here stays small so probing is cheap.
"""

from __future__ import annotations

import os
import time
from pathlib import Path

from ..errors import BenchDomainError, ProbeError

CHUNK = 8 << 20
DEFAULT_PROBE_BYTES = 64 << 20


def probe_disk_write(path: str | Path, nbytes: int) -> float:
    """Write ``nbytes`` to ``path`` sequentially; mbit/s including the
    final durability flush."""
    if nbytes <= 0:
        raise BenchDomainError(f"probe size must be positive, got {nbytes}")
    buf = os.urandom(min(CHUNK, nbytes))
    start = time.perf_counter()
    try:
        with open(path, "wb") as f:
            remaining = nbytes
            while remaining > 0:
                n = f.write(buf[:remaining] if remaining < len(buf) else buf)
                remaining -= n
            f.flush()
            os.fsync(f.fileno())
    except OSError as exc:
        raise ProbeError(f"write probe failed: {exc}") from exc
    elapsed = time.perf_counter() - start
    return nbytes * 8 / max(elapsed, 1e-9) / 1e6


def probe_disk_read(path: str | Path, nbytes: int) -> float:
    if nbytes <= 0:
        raise BenchDomainError(f"probe size must be positive, got {nbytes}")
    total = 0
    start = time.perf_counter()
    try:
        with open(path, "rb") as f:
            while total < nbytes:
                chunk = f.read(min(CHUNK, nbytes - total))
                if not chunk:
                    break
                total += len(chunk)
    except OSError as exc:
        raise ProbeError(f"read probe failed: {exc}") from exc
    if total == 0:
        raise ProbeError(f"nothing to read from {path}")
    elapsed = time.perf_counter() - start
    return total * 8 / max(elapsed, 1e-9) / 1e6


def probe_disk(directory: str | Path, nbytes: int = DEFAULT_PROBE_BYTES):
    """Write-then-read probe on a scratch file under ``directory``."""
    from . import DiskProbe

    directory = Path(directory)
    scratch = directory / f".udrift-probe-{os.getpid()}.bin"
    try:
        write_mbps = probe_disk_write(scratch, nbytes)
        read_mbps = probe_disk_read(scratch, nbytes)
    finally:
        try:
            os.unlink(scratch)
        except OSError:
            pass
    return DiskProbe(read_mbps=read_mbps, write_mbps=write_mbps,
                     probe_bytes=nbytes)
