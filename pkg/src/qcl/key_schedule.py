"""QUIC v1 key schedule: traffic secret -> (key, iv, hp), and Initial secrets."""

from __future__ import annotations

import enum
import hashlib
import hmac
import struct
from dataclasses import dataclass
from typing import Union

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.hkdf import HKDFExpand

from .crypto_suites import HpLike, SuiteLike, hp_params, suite_params
from .errors import InvalidConnectionIdLength, KeyLengthMismatch

INITIAL_SALT_V1 = bytes.fromhex("38762cf7f55934b34d179ae6a4c80cadccbb7f0a")
SECRET_LEN = 32
MAX_CID_LEN = 20


class Side(str, enum.Enum):
    CLIENT = "client"
    SERVER = "server"


class Level(str, enum.Enum):
    INITIAL = "initial"
    HANDSHAKE = "handshake"
    APPLICATION = "application"


@dataclass(frozen=True)
class TrafficSecret:
    secret: bytes
    side: Side = Side.CLIENT
    level: Level = Level.APPLICATION

    def __post_init__(self):
        if len(self.secret) != SECRET_LEN:
            raise KeyLengthMismatch(
                f"traffic secrets are {SECRET_LEN} bytes, got {len(self.secret)}"
            )


@dataclass(frozen=True)
class PacketKeys:
    key: bytes
    iv: bytes
    hp: bytes


def hkdf_extract(salt: bytes, ikm: bytes) -> bytes:
    return hmac.new(salt, ikm, hashlib.sha256).digest()


def hkdf_expand_label(secret: bytes, label: bytes, length: int, context: bytes = b"") -> bytes:
    full_label = b"tls13 " + label
    info = (
        struct.pack("!HB", length, len(full_label))
        + full_label
        + struct.pack("!B", len(context))
        + context
    )
    return HKDFExpand(algorithm=hashes.SHA256(), length=length, info=info).derive(secret)


def derive_packet_keys(
    secret: Union[TrafficSecret, bytes], suite: SuiteLike, hp_alg: HpLike = None
) -> PacketKeys:
    """Expand ``secret`` into the (key, iv, hp) triple for ``suite``.

    ``hp_alg`` defaults to the suite's native mask algorithm.  With ``OFF``
    the hp key is empty.
    """
    raw = secret.secret if isinstance(secret, TrafficSecret) else bytes(secret)
    if len(raw) != SECRET_LEN:
        raise KeyLengthMismatch(f"traffic secrets are {SECRET_LEN} bytes, got {len(raw)}")
    suite = suite_params(suite)
    hp = hp_params(suite.default_hp_alg if hp_alg is None else hp_alg)
    hp_len = hp.hp_key_len(suite)
    return PacketKeys(
        key=hkdf_expand_label(raw, b"quic key", suite.key_len),
        iv=hkdf_expand_label(raw, b"quic iv", suite.iv_len),
        hp=hkdf_expand_label(raw, b"quic hp", hp_len) if hp_len else b"",
    )


def derive_initial_secrets(client_dcid: bytes) -> tuple[TrafficSecret, TrafficSecret]:
    if not 0 < len(client_dcid) <= MAX_CID_LEN:
        raise InvalidConnectionIdLength(
            f"connection IDs are 1..{MAX_CID_LEN} bytes, got {len(client_dcid)}"
        )
    initial = hkdf_extract(INITIAL_SALT_V1, bytes(client_dcid))
    client = hkdf_expand_label(initial, b"client in", SECRET_LEN)
    server = hkdf_expand_label(initial, b"server in", SECRET_LEN)
    return (
        TrafficSecret(client, Side.CLIENT, Level.INITIAL),
        TrafficSecret(server, Side.SERVER, Level.INITIAL),
    )
