from .packet import (
    CIPHER_BLOWFISH,
    CIPHER_NONE,
    DATA_PAYLOAD_MAX,
    HEADER_LEN,
    MAX_DATAGRAM,
    ControlPacket,
    ControlType,
    DataPacket,
)
from .config import TransportConfig
from .link import LinkSpec, EmulatedLink
from .endpoint import Endpoint
from .sim import SimWorld, sim_pair

__all__ = [
    "CIPHER_BLOWFISH",
    "CIPHER_NONE",
    "DATA_PAYLOAD_MAX",
    "HEADER_LEN",
    "MAX_DATAGRAM",
    "ControlPacket",
    "ControlType",
    "DataPacket",
    "TransportConfig",
    "LinkSpec",
    "EmulatedLink",
    "Endpoint",
    "SimWorld",
    "sim_pair",
]
