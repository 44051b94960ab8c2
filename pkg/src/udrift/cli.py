"""Command line frontend.

Default invocation syncs SRC to DEST the way rsync would be called;
``serve`` runs the daemon side, ``bench`` the benchmark harness and
``probe`` the disk speed probes.  Remote endpoints are written
host:port:path, and exactly one of SRC/DEST may be remote.

Exit codes: 0 success, 1 partial or protocol failure, 2 usage,
3 cipher/auth mismatch, 4 network failure.
"""

from __future__ import annotations

import argparse
import binascii
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .bench import (
    BenchConfig,
    DiskProbe,
    format_mbps,
    probe_disk,
    run_benchmark,
)
from .bench.report import render_figure, render_json, render_report
from .errors import (
    CipherMismatch,
    CipherUnavailable,
    ConnectTimeout,
    HandshakeRejected,
    KeyLengthError,
    SessionError,
    TransportError,
    UdriftError,
    UsageError,
)
from .session import DIR_PULL, DIR_PUSH, SyncOptions, client_machines
from .session.drive import sync_local
from .transport import CIPHER_BLOWFISH, CIPHER_NONE, TransportConfig

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2
EXIT_CIPHER = 3
EXIT_NETWORK = 4

KEY_ENV = "UDRSYNC_KEY"
SUBCOMMANDS = {"sync", "serve", "bench", "probe"}


@dataclass(frozen=True)
class EndpointSpec:
    path: str
    host: str = ""
    port: int = 0

    @property
    def remote(self) -> bool:
        return bool(self.host)


def parse_endpoint(text: str) -> EndpointSpec:
    """host:port:path when the first two colon fields parse that way,
    otherwise a local path."""
    parts = text.split(":", 2)
    if len(parts) == 3 and parts[0] and parts[1].isdigit():
        port = int(parts[1])
        if not 0 < port < 65536:
            raise UsageError(f"port {parts[1]} out of range in {text!r}")
        return EndpointSpec(parts[2] or ".", parts[0], port)
    return EndpointSpec(text)


@dataclass
class CliOptions:
    mode: str = "sync"
    src: EndpointSpec | None = None
    dest: EndpointSpec | None = None
    recursive: bool = False
    verbose: int = 0
    cipher: str = "none"
    key: bytes | None = None
    block_size: int = 2048
    bwcap_mbps: float = 0.0
    whole_file: bool = False
    checksum: bool = False
    # serve
    root: str = ""
    port: int = 0
    bind: str = "0.0.0.0"
    # bench / probe
    bench: dict = field(default_factory=dict)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_key(key_file: str | None) -> bytes | None:
    if key_file:
        raw = Path(key_file).read_bytes()
        if raw.startswith(b"hex:"):
            try:
                return binascii.unhexlify(raw[4:].strip())
            except binascii.Error as exc:
                raise UsageError(f"bad hex key in {key_file}: {exc}") from None
        return raw
    env = os.environ.get(KEY_ENV)
    if env:
        try:
            return binascii.unhexlify(env.strip())
        except binascii.Error as exc:
            raise UsageError(f"bad hex key in ${KEY_ENV}: {exc}") from None
    return None


def _build_parser() -> _Parser:
    parser = _Parser(prog="udrift", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="mode", required=True)

    sync = sub.add_parser("sync", help="synchronize SRC to DEST")
    sync.add_argument("src")
    sync.add_argument("dest")
    sync.add_argument("-r", "--recursive", action="store_true")
    sync.add_argument("-v", "--verbose", action="count", default=0)
    sync.add_argument("--cipher", choices=["none", "blowfish"], default="none")
    sync.add_argument("--key", metavar="FILE", default=None,
                      help=f"key file (raw or hex: prefixed); ${KEY_ENV} as fallback")
    sync.add_argument("-B", "--block-size", type=int, default=2048)
    sync.add_argument("--bwcap", type=float, default=0.0, metavar="MBPS")
    sync.add_argument("-W", "--whole-file", action="store_true")
    sync.add_argument("-c", "--checksum", action="store_true")

    serve = sub.add_parser("serve", help="run the sync daemon")
    serve.add_argument("--root", required=True)
    serve.add_argument("--port", type=int, required=True)
    serve.add_argument("--bind", default="0.0.0.0")
    serve.add_argument("--key", metavar="FILE", default=None)
    serve.add_argument("--bwcap", type=float, default=0.0)
    serve.add_argument("-v", "--verbose", action="count", default=0)

    bench = sub.add_parser("bench", help="run the transfer benchmark")
    bench.add_argument("--size-mb", type=float, default=64.0)
    bench.add_argument("--baseline-kb", type=float, default=1024.0)
    bench.add_argument("--rtt-ms", type=float, default=104.0)
    bench.add_argument("--cap-mbps", type=float, default=100.0)
    bench.add_argument("--loss", type=float, default=0.001)
    bench.add_argument("--jitter-ms", type=float, default=0.0)
    bench.add_argument("--ciphers", default="none,blowfish")
    bench.add_argument("--reps", type=int, default=1)
    bench.add_argument("--seed", type=int, default=1)
    bench.add_argument("--peer", default=None, metavar="HOST:PORT:PATH")
    bench.add_argument("--key", metavar="FILE", default=None)
    bench.add_argument("--probe-dir", default=None)
    bench.add_argument("--probe-mb", type=float, default=64.0)
    bench.add_argument("--src-read-mbps", type=float, default=None)
    bench.add_argument("--dst-write-mbps", type=float, default=None)
    bench.add_argument("--format", choices=["tsv", "markdown"], default="tsv")
    bench.add_argument("--json", action="store_true")
    bench.add_argument("--out", default=None, metavar="FILE")
    bench.add_argument("--plot", default=None, metavar="FILE",
                       help="figure path (default: alongside --out)")
    bench.add_argument("--no-plot", action="store_true")
    bench.add_argument("-v", "--verbose", action="count", default=0)

    probe = sub.add_parser("probe", help="measure disk read/write speed")
    probe.add_argument("--dir", default=".")
    probe.add_argument("--mb", type=float, default=256.0)
    return parser


def parse_args(argv: list[str]) -> CliOptions:
    argv = list(argv)
    if not argv:
        raise UsageError("nothing to do; try udrift --help")
    if argv[0] not in SUBCOMMANDS and argv[0] not in ("-h", "--help"):
        argv = ["sync"] + argv
    ns = _build_parser().parse_args(argv)
    opts = CliOptions(mode=ns.mode)
    if ns.mode == "sync":
        opts.src = parse_endpoint(ns.src)
        opts.dest = parse_endpoint(ns.dest)
        if opts.src.remote and opts.dest.remote:
            raise UsageError("at most one of SRC and DEST may be remote")
        opts.recursive = ns.recursive
        opts.verbose = ns.verbose
        opts.cipher = ns.cipher
        opts.key = _load_key(ns.key)
        opts.block_size = ns.block_size
        opts.bwcap_mbps = ns.bwcap
        opts.whole_file = ns.whole_file
        opts.checksum = ns.checksum
        if opts.block_size < 64:
            raise UsageError(f"block size must be at least 64, got {opts.block_size}")
        if opts.cipher == "blowfish" and opts.key is None:
            raise UsageError(
                f"--cipher blowfish needs --key or ${KEY_ENV}")
        if opts.cipher == "blowfish" and not opts.src.remote \
                and not opts.dest.remote:
            raise UsageError("encryption applies to remote transfers only")
    elif ns.mode == "serve":
        opts.root = ns.root
        opts.port = ns.port
        opts.bind = ns.bind
        opts.key = _load_key(ns.key)
        opts.bwcap_mbps = ns.bwcap
        opts.verbose = ns.verbose
        if not Path(ns.root).is_dir():
            raise UsageError(f"--root {ns.root} is not a directory")
    elif ns.mode == "bench":
        opts.verbose = ns.verbose
        opts.key = _load_key(ns.key)
        ciphers = tuple(c.strip() for c in ns.ciphers.split(",") if c.strip())
        for c in ciphers:
            if c not in ("none", "blowfish"):
                raise UsageError(f"unknown cipher {c!r}")
        peer = None
        if ns.peer:
            spec = parse_endpoint(ns.peer)
            if not spec.remote:
                raise UsageError(f"--peer must be HOST:PORT:PATH, got {ns.peer!r}")
            peer = (spec.host, spec.port, spec.path)
        opts.bench = {
            "payload_bytes": int(ns.size_mb * (1 << 20)),
            "baseline_bytes": int(ns.baseline_kb * 1024),
            "rtt_ms": ns.rtt_ms, "cap_mbps": ns.cap_mbps, "loss": ns.loss,
            "jitter_ms": ns.jitter_ms, "ciphers": ciphers, "reps": ns.reps,
            "seed": ns.seed, "peer": peer, "probe_dir": ns.probe_dir,
            "probe_mb": ns.probe_mb, "src_read": ns.src_read_mbps,
            "dst_write": ns.dst_write_mbps, "format": ns.format,
            "json": ns.json, "out": ns.out, "plot": ns.plot,
            "no_plot": ns.no_plot,
        }
        if "blowfish" in ciphers and opts.key is None:
            opts.key = b"udrift-bench-key"  # self-benchmarks: both ends are us
    elif ns.mode == "probe":
        opts.bench = {"dir": ns.dir, "bytes": int(ns.mb * (1 << 20))}
    return opts


def _transport_config(opts: CliOptions) -> TransportConfig:
    cipher = CIPHER_BLOWFISH if opts.cipher == "blowfish" else CIPHER_NONE
    return TransportConfig(cipher=cipher, key=opts.key,
                           bandwidth_cap_mbps=opts.bwcap_mbps)


def _sync_options(opts: CliOptions) -> SyncOptions:
    return SyncOptions(recursive=opts.recursive, checksum=opts.checksum,
                       whole_file=opts.whole_file, block_size=opts.block_size)


def _report_sync(opts: CliOptions, stats, elapsed: float) -> None:
    if opts.verbose >= 1:
        for path in stats.completed:
            print(path)
    if opts.verbose >= 2:
        print(f"{stats.files_listed} files listed, {stats.files_updated} updated, "
              f"{stats.files_skipped} unchanged")
        moved = stats.literal_bytes
        print(f"{moved} bytes transferred ({stats.matched_bytes} matched in place)")
        if moved and elapsed > 0:
            print(f"throughput {moved * 8 / elapsed / 1e6:.1f} mbit/s "
                  f"over {elapsed:.2f}s")


def _run_sync(opts: CliOptions) -> int:
    start = time.monotonic()
    if not opts.src.remote and not opts.dest.remote:
        _, r_stats = sync_local(opts.src.path, opts.dest.path,
                                _sync_options(opts))
        _report_sync(opts, r_stats, time.monotonic() - start)
        return EXIT_OK
    from .transport.udp import dial, run_machine

    remote = opts.src if opts.src.remote else opts.dest
    local = opts.dest if opts.src.remote else opts.src
    direction = DIR_PULL if opts.src.remote else DIR_PUSH
    cipher_code = CIPHER_BLOWFISH if opts.cipher == "blowfish" else CIPHER_NONE
    node, conn = dial(remote.host, remote.port, _transport_config(opts))
    try:
        machine = client_machines(direction, local.path, remote.path,
                                  _sync_options(opts), cipher=cipher_code)
        stats = run_machine(conn, machine, timeout=24 * 3600)
        conn.wait_closed()
    finally:
        node.close()
    _report_sync(opts, stats, time.monotonic() - start)
    return EXIT_OK


def _run_serve(opts: CliOptions) -> int:
    from .daemon import SyncDaemon

    log = (lambda m: print(m, file=sys.stderr)) if opts.verbose else (lambda m: None)
    cfg = TransportConfig(key=opts.key, bandwidth_cap_mbps=opts.bwcap_mbps)
    daemon = SyncDaemon(opts.root, opts.port, bind=opts.bind, cfg=cfg, log=log)
    print(f"listening on udp {opts.bind}:{daemon.port}, serving {opts.root}",
          file=sys.stderr)
    try:
        daemon.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        daemon.stop()
    return EXIT_OK


def _run_bench(opts: CliOptions) -> int:
    b = opts.bench
    if b["src_read"] and b["dst_write"]:
        probe = DiskProbe(b["src_read"], b["dst_write"], 0)
    else:
        probe_dir = b["probe_dir"] or tempfile.gettempdir()
        nbytes = int(b["probe_mb"] * (1 << 20))
        print(f"probing disk under {probe_dir} ({b['probe_mb']:g} MiB)...",
              file=sys.stderr)
        probe = probe_disk(probe_dir, nbytes)
    print(f"disk read {format_mbps(probe.read_mbps)} mbit/s, "
          f"write {format_mbps(probe.write_mbps)} mbit/s", file=sys.stderr)
    cfg = BenchConfig(
        payload_bytes=b["payload_bytes"], baseline_bytes=b["baseline_bytes"],
        rtt_ms=b["rtt_ms"], cap_mbps=b["cap_mbps"], loss=b["loss"],
        jitter_ms=b["jitter_ms"], ciphers=b["ciphers"],
        repetitions=b["reps"], seed=b["seed"], probe=probe, peer=b["peer"],
        key=opts.key or b"udrift-bench-key")
    report = run_benchmark(cfg)
    text = render_json(report) if b["json"] else render_report(report, b["format"])
    sys.stdout.write(text)
    if b["out"]:
        out = Path(b["out"])
        out.write_text(text, encoding="utf-8")
        print(f"report written to {out}", file=sys.stderr)
    plot_path = b["plot"]
    if plot_path is None and b["out"] and not b["no_plot"]:
        plot_path = str(Path(b["out"]).with_suffix(".png"))
    if plot_path and not b["no_plot"]:
        render_figure(report, plot_path)
        print(f"figure written to {plot_path}", file=sys.stderr)
    return EXIT_PARTIAL if report.failed() else EXIT_OK


def _run_probe(opts: CliOptions) -> int:
    probe = probe_disk(opts.bench["dir"], opts.bench["bytes"])
    print(f"read\t{format_mbps(probe.read_mbps)}")
    print(f"write\t{format_mbps(probe.write_mbps)}")
    return EXIT_OK


def run(opts: CliOptions) -> int:
    try:
        if opts.mode == "sync":
            return _run_sync(opts)
        if opts.mode == "serve":
            return _run_serve(opts)
        if opts.mode == "bench":
            return _run_bench(opts)
        if opts.mode == "probe":
            return _run_probe(opts)
        raise UsageError(f"unknown mode {opts.mode}")
    except (ConnectTimeout,) as exc:
        print(f"udrift: network error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except (CipherUnavailable, CipherMismatch, KeyLengthError) as exc:
        print(f"udrift: cipher error: {exc}", file=sys.stderr)
        return EXIT_CIPHER
    except (HandshakeRejected, SessionError, TransportError) as exc:
        print(f"udrift: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    except UdriftError as exc:
        print(f"udrift: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    except OSError as exc:
        print(f"udrift: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


def main(argv: list[str] | None = None) -> None:
    argv = sys.argv[1:] if argv is None else argv
    try:
        opts = parse_args(argv)
    except UsageError as exc:
        print(f"udrift: usage error: {exc}", file=sys.stderr)
        sys.exit(EXIT_USAGE)
    sys.exit(run(opts))


if __name__ == "__main__":
    main()
