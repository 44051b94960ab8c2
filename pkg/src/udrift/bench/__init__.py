"""Transfer benchmarking: throughput rows, disk probes and the
long-distance-to-local ratio (LLR).

LLR is the transfer speed divided by the lower of the source disk read
speed and the destination disk write speed; 1.0 means the wire moved
data as fast as the slower disk could have.  Throughout, mbit/s means
10^6 bits per second.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from ..errors import BenchDomainError


def llr(transfer_mbps: float, src_read_mbps: float, dst_write_mbps: float) -> float:
    for name, value in (("transfer", transfer_mbps), ("src_read", src_read_mbps),
                        ("dst_write", dst_write_mbps)):
        if value <= 0:
            raise BenchDomainError(f"{name} speed must be positive, got {value}")
    return transfer_mbps / min(src_read_mbps, dst_write_mbps)


def round_half_up(value: float, places: int) -> float:
    exp = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(exp, rounding=ROUND_HALF_UP))


def format_llr(value: float) -> str:
    return f"{round_half_up(value, 2):.2f}"


def format_mbps(value: float) -> str:
    return str(int(round_half_up(value, 0)))


def speedup_percent(new_mbps: float, base_mbps: float) -> int:
    if base_mbps <= 0:
        raise BenchDomainError(f"baseline must be positive, got {base_mbps}")
    if new_mbps < 0:
        raise BenchDomainError(f"speed must be non-negative, got {new_mbps}")
    return int(round_half_up(100.0 * (new_mbps - base_mbps) / base_mbps, 0))


@dataclass(frozen=True)
class DiskProbe:
    read_mbps: float
    write_mbps: float
    probe_bytes: int

    def floor_mbps(self) -> float:
        return min(self.read_mbps, self.write_mbps)


@dataclass
class TransferRecord:
    """One timed transfer."""
    label: str
    cipher: str
    payload_bytes: int
    seconds: float
    failed: bool = False

    @property
    def mbps(self) -> float:
        if self.failed or self.seconds <= 0:
            return 0.0
        return self.payload_bytes * 8 / self.seconds / 1e6


@dataclass
class BenchRow:
    label: str
    cipher: str
    mbps: float
    llr: float
    payload_bytes: int
    seconds: float
    failed: bool = False


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    runs: list[TransferRecord] = field(default_factory=list)
    probe: DiskProbe | None = None
    link_desc: str = ""
    repetitions: int = 1

    def failed(self) -> bool:
        return any(r.failed for r in self.rows)


from .probes import probe_disk, probe_disk_read, probe_disk_write  # noqa: E402
from .runner import BenchConfig, run_benchmark  # noqa: E402
from .report import json_rows, render_figure, render_report  # noqa: E402

__all__ = [
    "llr",
    "round_half_up",
    "format_llr",
    "format_mbps",
    "speedup_percent",
    "DiskProbe",
    "TransferRecord",
    "BenchRow",
    "BenchReport",
    "probe_disk",
    "probe_disk_read",
    "probe_disk_write",
    "BenchConfig",
    "run_benchmark",
    "json_rows",
    "render_figure",
    "render_report",
]
