"""Exception hierarchy shared across the package."""


class UdriftError(Exception):
    """Base class for all udrift errors."""


class ConfigError(UdriftError):
    """Invalid configuration value (block size, key source, ...)."""


class UsageError(UdriftError):
    """Command line cannot be turned into a runnable job."""


class KeyLengthError(ConfigError):
    """Cipher key outside the 4..56 byte range."""


class TransportError(UdriftError):
    """Base class for transport-level failures."""


class HandshakeRejected(TransportError):
    """Peer refused the connection (version mismatch)."""


class CipherUnavailable(TransportError):
    """Peer cannot provide the requested cipher."""


class ConnectTimeout(TransportError):
    """No handshake response after all retries."""


class SendOnClosed(TransportError):
    """send() after the connection was shut down."""


class ProtocolViolation(TransportError):
    """Peer sent something the state machine cannot accept; connection reset."""


class PacketError(UdriftError):
    """Datagram does not parse as a valid packet."""


class SessionError(UdriftError):
    """Session-layer failure (framing, negotiation, remote error)."""


class NeedMoreData(SessionError):
    """Frame decoder needs more bytes; not a fatal condition."""


class VersionError(SessionError):
    """No protocol version shared by both sides."""


class CipherMismatch(SessionError):
    """Session cipher negotiation failed."""


class CorruptDelta(UdriftError):
    """Delta stream references data the old file does not have."""


class PartialTransfer(UdriftError):
    """Sync aborted with some files complete and some not.

    ``completed`` holds relative paths fully materialized before the
    failure; ``pending`` the path in flight, if any.
    """

    def __init__(self, message, completed=(), pending=None):
        super().__init__(message)
        self.completed = list(completed)
        self.pending = pending


class ProbeError(UdriftError):
    """Disk speed probe could not run."""


class BenchDomainError(UdriftError):
    """Benchmark metric evaluated outside its domain (non-positive input)."""
