"""Run complete sync sessions over the different stream backends."""

from __future__ import annotations

import time
from pathlib import Path

from ..errors import SessionError
from .frames import DIR_PUSH
from .machines import (
    SyncOptions,
    SyncReceiver,
    SyncSender,
    TransferStats,
    make_hello,
)
from .stream import NodeStream, loopback_pair, pump_loopback


def sync_local(src: str | Path, dst: str | Path,
               options: SyncOptions) -> tuple[TransferStats, TransferStats]:
    """Push src into dst through an in-process pipe (no network)."""
    sender = SyncSender(src, make_hello(options, DIR_PUSH, ""), initiator=True)
    receiver = SyncReceiver(dst, make_hello(options, DIR_PUSH, ""), initiator=False)
    a, b = loopback_pair()
    start = time.monotonic()
    pump_loopback(sender, a, receiver, b)
    elapsed = time.monotonic() - start
    for machine in (sender, receiver):
        if machine.error:
            raise machine.error
        machine.stats.wall_seconds = elapsed
    return sender.stats, receiver.stats


def attach_session(node, machine) -> None:
    """Drive a session machine from a simulated transport node."""
    stream = NodeStream(node)
    node.pump = lambda n: machine.pump(stream)


def sync_over_sim(world, client_node, server_node, client_machine,
                  server_machine_obj, deadline_s: float = 600.0):
    """Run a prepared session over the simulated transport; returns
    (client stats, server stats) with virtual wall time filled in."""
    attach_session(client_node, client_machine)
    attach_session(server_node, server_machine_obj)
    start = world.now_us
    world.touch(client_node)
    world.touch(server_node)
    world.run(until_us=start + deadline_s * 1e6,
              stop=lambda: client_machine.finished()
              and server_machine_obj.finished())
    for machine in (client_machine, server_machine_obj):
        if machine.error:
            raise machine.error
    if not (client_machine.done and server_machine_obj.done):
        raise SessionError("session did not finish before the deadline")
    elapsed = (world.now_us - start) / 1e6
    client_machine.stats.wall_seconds = elapsed
    server_machine_obj.stats.wall_seconds = elapsed
    return client_machine.stats, server_machine_obj.stats
