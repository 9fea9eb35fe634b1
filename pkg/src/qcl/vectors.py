"""Reading, checking and writing hex test-vector files.

A file holds blocks separated by blank lines.  Inside a block, ``name=hex``
lines carry byte strings and ``name: text`` lines carry text (kind, suite,
hp_alg, side, pn, label, dcid_len).  ``#`` starts a comment line.

Block kinds:

``initial``  dcid -> {client,server}_{secret,key,iv,hp}
``keys``     secret, suite, hp_alg -> key, iv, hp
``packet``   header, pn, payload plus keys (secret, or dcid and side) -> wire
``aead``     suite, key, nonce, aad, plaintext -> sealed
``mask``     hp_alg, hp_key, sample -> mask
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .crypto_suites import aead_open, aead_seal, hp_mask
from .errors import ParseError, QclError
from .key_schedule import derive_initial_secrets, derive_packet_keys
from .packet_protection import PlainPacket, open_packet, seal_packet

TEXT_FIELDS = {"kind", "label", "suite", "hp_alg", "side", "pn", "dcid_len"}
KINDS = ("initial", "keys", "packet", "aead", "mask")
_HEX = re.compile(r"^[0-9a-fA-F]*$")


@dataclass
class Vector:
    kind: str
    name: str
    hex: dict
    text: dict
    line: int

    def need(self, *names: str) -> None:
        missing = [n for n in names if n not in self.hex and n not in self.text]
        if missing:
            raise ParseError(f"vector {self.name!r} (line {self.line}) lacks {', '.join(missing)}")


@dataclass(frozen=True)
class Check:
    vector: str
    label: str
    ok: bool
    expected: str = ""
    actual: str = ""

    @property
    def qualified(self) -> str:
        return f"{self.vector}.{self.label}"


def parse_vectors(text: str) -> list:
    blocks, cur, start = [], [], 0
    for lineno, raw in enumerate(text.splitlines() + [""], 1):
        line = raw.strip()
        if line.startswith("#"):
            continue
        if not line:
            if cur:
                blocks.append((start, cur))
                cur = []
            continue
        if not cur:
            start = lineno
        cur.append((lineno, line))

    out = []
    for index, (start, lines) in enumerate(blocks):
        hx, tx = {}, {}
        for lineno, line in lines:
            m = re.match(r"^([A-Za-z0-9_]+)\s*([=:])\s*(.*)$", line)
            if not m:
                raise ParseError(f"line {lineno}: expected 'name=hex' or 'name: text', got {line!r}")
            name, sep, value = m.groups()
            if name in hx or name in tx:
                raise ParseError(f"line {lineno}: duplicate field {name!r}")
            if sep == ":":
                if name not in TEXT_FIELDS:
                    raise ParseError(f"line {lineno}: {name!r} is not a text field")
                tx[name] = value.strip()
            else:
                value = value.strip()
                if not _HEX.match(value) or len(value) % 2:
                    raise ParseError(f"line {lineno}: field {name!r} is not valid hex")
                hx[name] = bytes.fromhex(value)
        kind = tx.get("kind")
        if kind not in KINDS:
            raise ParseError(f"line {start}: block needs 'kind:' one of {', '.join(KINDS)}")
        name = tx.get("label") or f"{kind}#{index + 1}"
        out.append(Vector(kind, name, hx, tx, start))
    return out


def _cmp(vec: Vector, label: str, actual: bytes) -> Check:
    expected = vec.hex[label]
    return Check(vec.name, label, expected == actual, expected.hex(), actual.hex())


def _int(vec: Vector, name: str) -> int:
    try:
        return int(vec.text[name], 0)
    except ValueError:
        raise ParseError(f"vector {vec.name!r}: {name} must be an integer") from None


def _check_initial(vec: Vector) -> list:
    vec.need("dcid")
    client, server = derive_initial_secrets(vec.hex["dcid"])
    out = []
    for side, secret in (("client", client), ("server", server)):
        keys = derive_packet_keys(secret, "AES_128_GCM")
        got = {"secret": secret.secret, "key": keys.key, "iv": keys.iv, "hp": keys.hp}
        for field, value in got.items():
            label = f"{side}_{field}"
            if label in vec.hex:
                out.append(_cmp(vec, label, value))
    return out


def _check_keys(vec: Vector) -> list:
    vec.need("secret", "suite")
    keys = derive_packet_keys(vec.hex["secret"], vec.text["suite"], vec.text.get("hp_alg"))
    got = {"key": keys.key, "iv": keys.iv, "hp": keys.hp}
    return [_cmp(vec, k, v) for k, v in got.items() if k in vec.hex]


def _packet_keys(vec: Vector):
    if "secret" in vec.hex:
        return derive_packet_keys(vec.hex["secret"], vec.text["suite"], vec.text.get("hp_alg"))
    vec.need("dcid", "side")
    client, server = derive_initial_secrets(vec.hex["dcid"])
    secret = {"client": client, "server": server}.get(vec.text["side"])
    if secret is None:
        raise ParseError(f"vector {vec.name!r}: side must be client or server")
    return derive_packet_keys(secret, vec.text["suite"], vec.text.get("hp_alg"))


def _check_packet(vec: Vector) -> list:
    vec.need("suite", "hp_alg", "header", "pn", "payload", "wire")
    suite, hp = vec.text["suite"], vec.text["hp_alg"]
    keys = _packet_keys(vec)
    header = vec.hex["header"]
    if not header:
        raise ParseError(f"vector {vec.name!r}: empty header")
    pkt = PlainPacket(header, _int(vec, "pn"), (header[0] & 0x03) + 1, vec.hex["payload"])
    out = [_cmp(vec, "wire", seal_packet(keys, suite, hp, pkt))]
    if "dcid_len" in vec.text:
        dcid_len = _int(vec, "dcid_len")
    else:
        dcid_len = len(vec.hex.get("dcid", b""))
    try:
        back = open_packet(keys, suite, hp, vec.hex["wire"], pkt.pn - 1, dcid_len=dcid_len)
        out.append(_cmp(vec, "payload", back.payload))
    except QclError as exc:
        out.append(Check(vec.name, "payload", False, vec.hex["payload"].hex(), f"<{type(exc).__name__}>"))
    return out


def _check_aead(vec: Vector) -> list:
    vec.need("suite", "key", "nonce", "aad", "plaintext", "sealed")
    args = (vec.text["suite"], vec.hex["key"], vec.hex["nonce"], vec.hex["aad"])
    out = [_cmp(vec, "sealed", aead_seal(*args, vec.hex["plaintext"]))]
    try:
        out.append(_cmp(vec, "plaintext", aead_open(*args, vec.hex["sealed"])))
    except QclError as exc:
        out.append(Check(vec.name, "plaintext", False, vec.hex["plaintext"].hex(), f"<{type(exc).__name__}>"))
    return out


def _check_mask(vec: Vector) -> list:
    vec.need("hp_alg", "hp_key", "sample", "mask")
    return [_cmp(vec, "mask", hp_mask(vec.text["hp_alg"], vec.hex["hp_key"], vec.hex["sample"]))]


_CHECKERS = {
    "initial": _check_initial,
    "keys": _check_keys,
    "packet": _check_packet,
    "aead": _check_aead,
    "mask": _check_mask,
}


def verify_vector(vec: Vector) -> list:
    try:
        return _CHECKERS[vec.kind](vec)
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"vector {vec.name!r}: {exc}") from None


def verify_text(text: str) -> tuple:
    """Return ``(vectors, checks)`` for a vector file's contents."""
    vectors = parse_vectors(text)
    checks = []
    for vec in vectors:
        checks.extend(verify_vector(vec))
    return vectors, checks


def derive_initial_block(dcid: bytes) -> str:
    """Render an ``initial`` block for ``dcid`` in the file format above."""
    client, server = derive_initial_secrets(dcid)
    lines = ["kind: initial", f"dcid={dcid.hex()}"]
    for side, secret in (("client", client), ("server", server)):
        keys = derive_packet_keys(secret, "AES_128_GCM")
        lines += [
            f"{side}_secret={secret.secret.hex()}",
            f"{side}_key={keys.key.hex()}",
            f"{side}_iv={keys.iv.hex()}",
            f"{side}_hp={keys.hp.hex()}",
        ]
    return "\n".join(lines) + "\n"
