"""Benchmark orchestration.

Emulated mode runs timed bulk transfers through the in-process link for
each (tool, cipher) combination: the rate-controlled transport under
its own name and the stop-and-wait reference sender as the baseline,
mirroring the shape of a long-haul comparison table.  The absolute
numbers describe the emulated link and this machine, not any published
hardware.  Real mode pushes a synthetic payload to a live daemon and
times it.
"""

from __future__ import annotations

import random
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import UdriftError
from ..session import DIR_PUSH, SyncOptions, client_machines
from ..transport import CIPHER_BLOWFISH, CIPHER_NONE, LinkSpec, TransportConfig
from ..transport.sim import SimWorld, bulk_transfer, sim_pair
from ..transport.stopwait import StopWaitReceiver, StopWaitSender
from . import BenchReport, BenchRow, DiskProbe, TransferRecord, llr

TOOL_MAIN = "udrift"
TOOL_BASELINE = "stopwait"

CIPHER_CODES = {"none": CIPHER_NONE, "blowfish": CIPHER_BLOWFISH}


@dataclass
class BenchConfig:
    payload_bytes: int = 64 << 20
    baseline_bytes: int = 1 << 20      # stop-and-wait crawls; keep it short
    rtt_ms: float = 104.0
    cap_mbps: float = 100.0
    loss: float = 0.001
    jitter_ms: float = 0.0
    ciphers: tuple = ("none", "blowfish")
    repetitions: int = 1
    seed: int = 1
    key: bytes = b"udrift-bench-key"
    probe: DiskProbe | None = None
    # real mode: (host, port, remote_path); emulated when None
    peer: tuple | None = None
    tools: tuple = (TOOL_MAIN, TOOL_BASELINE)

    def link(self, rep: int) -> LinkSpec:
        return LinkSpec(one_way_delay_ms=self.rtt_ms / 2.0,
                        jitter_ms=self.jitter_ms, loss_fraction=self.loss,
                        bandwidth_cap_mbps=self.cap_mbps,
                        seed=self.seed * 1000 + rep)


def _emulated_run(cfg: BenchConfig, tool: str, cipher: str,
                  rep: int) -> TransferRecord:
    size = cfg.payload_bytes if tool == TOOL_MAIN else cfg.baseline_bytes
    payload = random.Random((cfg.seed, tool, cipher, rep).__hash__()) \
        .randbytes(size)
    link = cfg.link(rep)
    key = cfg.key if cipher == "blowfish" else None
    try:
        if tool == TOOL_MAIN:
            tcfg_c = TransportConfig(cipher=CIPHER_CODES[cipher], key=key,
                                     bandwidth_cap_mbps=cfg.cap_mbps)
            tcfg_s = TransportConfig(key=key, bandwidth_cap_mbps=cfg.cap_mbps)
            world, cn, sn = sim_pair(link, tcfg_c, tcfg_s, seed=cfg.seed + rep)
            res = bulk_transfer(world, cn, sn, payload, deadline_s=3600)
            return TransferRecord(tool, cipher, res.payload_bytes, res.elapsed_s)
        world = SimWorld()
        sender = StopWaitSender(payload, key=key)
        receiver = StopWaitReceiver(key=key)
        ns, _ = world.attach_pair(sender, receiver, link)
        sender.start(0)
        world.touch(ns)
        world.run(stop=lambda: sender.done, max_events=5_000_000)
        if not sender.done:
            raise UdriftError("baseline transfer did not finish")
        return TransferRecord(tool, cipher, receiver.received,
                              sender.done_at_us / 1e6)
    except Exception:
        return TransferRecord(tool, cipher, size, 0.0, failed=True)


def _real_run(cfg: BenchConfig, cipher: str, rep: int) -> TransferRecord:
    from ..transport.udp import dial, run_machine

    host, port, remote_path = cfg.peer
    key = cfg.key if cipher == "blowfish" else None
    workdir = Path(tempfile.mkdtemp(prefix="udrift-bench-"))
    try:
        payload = random.Random(cfg.seed * 131 + rep).randbytes(cfg.payload_bytes)
        (workdir / f"payload-{cipher}-{rep}.bin").write_bytes(payload)
        tcfg = TransportConfig(cipher=CIPHER_CODES[cipher], key=key,
                               bandwidth_cap_mbps=cfg.cap_mbps)
        start = time.perf_counter()
        node, conn = dial(host, port, tcfg)
        try:
            machine = client_machines(DIR_PUSH, workdir, remote_path,
                                      SyncOptions(recursive=True, whole_file=True),
                                      cipher=CIPHER_CODES[cipher])
            stats = run_machine(conn, machine, timeout=3600)
            conn.wait_closed()
        finally:
            node.close()
        elapsed = time.perf_counter() - start
        return TransferRecord(TOOL_MAIN, cipher, stats.payload_bytes, elapsed)
    except Exception:
        return TransferRecord(TOOL_MAIN, cipher, cfg.payload_bytes, 0.0,
                              failed=True)
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


def run_benchmark(cfg: BenchConfig) -> BenchReport:
    if cfg.probe is None:
        raise UdriftError("disk probe results are required before benchmarking")
    report = BenchReport(probe=cfg.probe, repetitions=cfg.repetitions)
    if cfg.peer is None:
        report.link_desc = (f"emulated rtt={cfg.rtt_ms}ms cap={cfg.cap_mbps}mbit/s "
                            f"loss={cfg.loss * 100:g}% jitter={cfg.jitter_ms}ms")
        tools = [t for t in (TOOL_MAIN, TOOL_BASELINE) if t in cfg.tools]
    else:
        host, port, path = cfg.peer
        report.link_desc = f"peer {host}:{port}:{path}"
        tools = [TOOL_MAIN]
    # cipher-major ordering: plaintext rows for every tool first, then
    # each encrypted variant, the shape long-haul comparisons print
    for cipher in cfg.ciphers:
        for tool in tools:
            runs = []
            for rep in range(cfg.repetitions):
                if cfg.peer is None:
                    runs.append(_emulated_run(cfg, tool, cipher, rep))
                else:
                    runs.append(_real_run(cfg, cipher, rep))
            report.runs.extend(runs)
            good = [r for r in runs if not r.failed]
            if good:
                mbps = sum(r.mbps for r in good) / len(good)
                bytes_total = good[0].payload_bytes
                seconds = sum(r.seconds for r in good) / len(good)
                row_llr = llr(mbps, cfg.probe.read_mbps, cfg.probe.write_mbps) \
                    if mbps > 0 else 0.0
                report.rows.append(BenchRow(tool, cipher, mbps, row_llr,
                                            bytes_total, seconds))
            else:
                report.rows.append(BenchRow(tool, cipher, 0.0, 0.0,
                                            runs[0].payload_bytes, 0.0,
                                            failed=True))
    return report
