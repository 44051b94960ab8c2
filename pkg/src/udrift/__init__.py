"""udrift: rsync-style file synchronization over a rate-controlled
reliable-UDP transport, with delta encoding, optional Blowfish payload
encryption, and a transfer benchmark harness."""

__version__ = "0.1.0"
