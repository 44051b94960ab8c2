from .frames import (
    DIR_PULL,
    DIR_PUSH,
    Hello,
    SessionParams,
    decode_message,
    encode_message,
    negotiate,
)
from .machines import (
    SyncOptions,
    SyncReceiver,
    SyncSender,
    TransferStats,
    client_machines,
    make_hello,
    server_machine,
)
from .stream import LoopbackStream, NodeStream, loopback_pair, pump_loopback

__all__ = [
    "DIR_PULL",
    "DIR_PUSH",
    "Hello",
    "SessionParams",
    "decode_message",
    "encode_message",
    "negotiate",
    "SyncOptions",
    "SyncReceiver",
    "SyncSender",
    "TransferStats",
    "client_machines",
    "make_hello",
    "server_machine",
    "LoopbackStream",
    "NodeStream",
    "loopback_pair",
    "pump_loopback",
]
