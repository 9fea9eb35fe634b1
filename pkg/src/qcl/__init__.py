"""QUIC packet protection pipeline, crypto cost benchmark and PQ handshake simulator."""

__version__ = "0.1.0"
