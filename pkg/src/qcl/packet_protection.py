"""Byte-exact QUIC packet protection and header protection.

Sealing runs AEAD first (header and encoded packet number as associated
data), then masks the low flag bits and the packet-number bytes with a mask
computed from a 16-byte ciphertext sample.  Opening undoes the two stages in
reverse order.
"""

from __future__ import annotations

from dataclasses import dataclass

from .crypto_suites import (
    MASK_LEN,
    SAMPLE_LEN,
    TAG_LEN,
    HpLike,
    SuiteLike,
    aead_open,
    aead_seal,
    hp_mask,
    hp_params,
    suite_params,
)
from .errors import MalformedHeader, MtuTooSmall, PayloadTooShortForSample
from .key_schedule import PacketKeys

PN_MAX = 1 << 62
IP_UDP_OVERHEAD = 28  # IPv4 (20) + UDP (8)
QUIC_V1 = 0x00000001

LONG_HEADER_BIT = 0x80
FIXED_BIT = 0x40
LONG_PROTECTED_BITS = 0x0F
SHORT_PROTECTED_BITS = 0x1F
LONG_RESERVED_BITS = 0x0C
SHORT_RESERVED_BITS = 0x18

PACKET_TYPE_INITIAL = 0
PACKET_TYPE_0RTT = 1
PACKET_TYPE_HANDSHAKE = 2
PACKET_TYPE_RETRY = 3

WirePacket = bytes


@dataclass(frozen=True)
class PlainPacket:
    header: bytes
    pn: int
    pn_len: int
    payload: bytes

    def __post_init__(self):
        if not 0 <= self.pn < PN_MAX:
            raise ValueError(f"packet number {self.pn} out of range")
        if not 1 <= self.pn_len <= 4:
            raise ValueError(f"pn_len must be 1..4, got {self.pn_len}")
        if not self.header:
            raise MalformedHeader("empty header")
        if (self.header[0] & 0x03) + 1 != self.pn_len:
            raise MalformedHeader(
                f"header encodes pn length {(self.header[0] & 0x03) + 1}, packet says {self.pn_len}"
            )

    @property
    def is_long(self) -> bool:
        return bool(self.header[0] & LONG_HEADER_BIT)

    @property
    def encoded_pn(self) -> bytes:
        return encode_pn(self.pn, self.pn_len)


# -- variable-length integers -------------------------------------------------


def encode_varint(value: int) -> bytes:
    if value < 0x40:
        return value.to_bytes(1, "big")
    if value < 0x4000:
        return (value | 0x4000).to_bytes(2, "big")
    if value < 0x40000000:
        return (value | 0x80000000).to_bytes(4, "big")
    if value < PN_MAX:
        return (value | 0xC000000000000000).to_bytes(8, "big")
    raise ValueError(f"{value} does not fit a varint")


def decode_varint(data: bytes, offset: int = 0) -> tuple[int, int]:
    """Return ``(value, bytes_consumed)``."""
    if offset >= len(data):
        raise MalformedHeader("truncated varint")
    size = 1 << (data[offset] >> 6)
    if offset + size > len(data):
        raise MalformedHeader("truncated varint")
    value = data[offset] & 0x3F
    for b in data[offset + 1 : offset + size]:
        value = (value << 8) | b
    return value, size


def varint_len(value: int) -> int:
    return len(encode_varint(value))


# -- packet numbers -------------------------------------------------------------


def encode_pn(pn: int, pn_len: int) -> bytes:
    return (pn & ((1 << (8 * pn_len)) - 1)).to_bytes(pn_len, "big")


def pn_length_for(pn: int, largest_acked: int = -1) -> int:
    """Smallest encoding that lets the peer recover ``pn``."""
    unacked = pn + 1 if largest_acked < 0 else pn - largest_acked
    bits = max(unacked, 1).bit_length() + 1
    return min(max((bits + 7) // 8, 1), 4)


def pn_decode(truncated: int, pn_len: int, largest_acked: int) -> int:
    """Reconstruct a full packet number closest to ``largest_acked + 1``."""
    expected = largest_acked + 1
    win = 1 << (8 * pn_len)
    hwin = win // 2
    mask = win - 1
    candidate = (expected & ~mask) | truncated
    if candidate <= expected - hwin and candidate < PN_MAX - win:
        return candidate + win
    if candidate > expected + hwin and candidate >= win:
        return candidate - win
    return candidate


def compute_nonce(iv: bytes, pn: int) -> bytes:
    if not 0 <= pn < PN_MAX:
        raise ValueError(f"packet number {pn} out of range")
    n = len(iv)
    return (int.from_bytes(iv, "big") ^ pn).to_bytes(n, "big")


# -- header construction and parsing ----------------------------------------


def build_short_header(
    dcid: bytes, pn_len: int, *, key_phase: bool = False, spin: bool = False
) -> bytes:
    first = FIXED_BIT | (pn_len - 1)
    if spin:
        first |= 0x20
    if key_phase:
        first |= 0x04
    return bytes([first]) + bytes(dcid)


def build_long_header(
    packet_type: int,
    dcid: bytes,
    scid: bytes,
    pn_len: int,
    payload_len: int,
    *,
    token: bytes = b"",
    version: int = QUIC_V1,
    length_size: int = 2,
) -> bytes:
    """Long header up to (excluding) the packet-number field.

    ``payload_len`` is the plaintext payload length; the Length field covers
    packet number, ciphertext and tag.
    """
    first = LONG_HEADER_BIT | FIXED_BIT | (packet_type << 4) | (pn_len - 1)
    out = bytearray([first])
    out += version.to_bytes(4, "big")
    out += bytes([len(dcid)]) + bytes(dcid)
    out += bytes([len(scid)]) + bytes(scid)
    if packet_type == PACKET_TYPE_INITIAL:
        out += encode_varint(len(token)) + bytes(token)
    length = pn_len + payload_len + TAG_LEN
    enc = encode_varint(length)
    if len(enc) > length_size:
        raise ValueError(f"length {length} does not fit in {length_size} bytes")
    out += (length | ((length_size.bit_length() - 1) << (8 * length_size - 2))).to_bytes(
        length_size, "big"
    )
    return bytes(out)


def long_header_len(dcid_len: int, scid_len: int, *, token_len: int = None, length_size: int = 2) -> int:
    """Size of a long header before the pn field; ``token_len=None`` means no token field."""
    n = 1 + 4 + 1 + dcid_len + 1 + scid_len + length_size
    if token_len is not None:
        n += varint_len(token_len) + token_len
    return n


def _locate(wire: bytes, dcid_len: int) -> tuple[int, int]:
    """Return ``(pn_offset, packet_end)`` for a protected packet."""
    if not wire:
        raise MalformedHeader("empty packet")
    first = wire[0]
    if not first & FIXED_BIT:
        raise MalformedHeader("fixed bit is not set")
    if not first & LONG_HEADER_BIT:
        return 1 + dcid_len, len(wire)
    try:
        pos = 5
        d = wire[pos]
        pos += 1 + d
        s = wire[pos]
        pos += 1 + s
    except IndexError:
        raise MalformedHeader("truncated long header") from None
    if d > 20 or s > 20:
        raise MalformedHeader("connection ID longer than 20 bytes")
    ptype = (first >> 4) & 0x03
    if ptype == PACKET_TYPE_RETRY:
        raise MalformedHeader("Retry packets carry no packet protection")
    if ptype == PACKET_TYPE_INITIAL:
        tlen, n = decode_varint(wire, pos)
        pos += n + tlen
    length, n = decode_varint(wire, pos)
    pos += n
    end = pos + length
    if end > len(wire):
        raise MalformedHeader(f"Length field says {length} bytes, only {len(wire) - pos} present")
    return pos, end


# -- sealing and opening --------------------------------------------------------


def _mask_bits(first: int) -> int:
    return LONG_PROTECTED_BITS if first & LONG_HEADER_BIT else SHORT_PROTECTED_BITS


def seal_packet(
    keys: PacketKeys, suite: SuiteLike, hp_alg: HpLike, pkt: PlainPacket
) -> WirePacket:
    suite = suite_params(suite)
    hp = hp_params(hp_alg)
    pn_bytes = encode_pn(pkt.pn, pkt.pn_len)
    if hp.enabled and pkt.pn_len + len(pkt.payload) + TAG_LEN < 4 + SAMPLE_LEN:
        raise PayloadTooShortForSample(
            f"payload of {len(pkt.payload)} bytes leaves no room for a {SAMPLE_LEN}-byte sample"
        )
    aad = pkt.header + pn_bytes
    sealed = aead_seal(suite, keys.key, compute_nonce(keys.iv, pkt.pn), aad, pkt.payload)
    if not hp.enabled:
        return aad + sealed
    pn_offset = len(pkt.header)
    sample_at = 4 - pkt.pn_len
    mask = hp_mask(hp, keys.hp, sealed[sample_at : sample_at + SAMPLE_LEN])
    out = bytearray(aad)
    out[0] ^= mask[0] & _mask_bits(out[0])
    for i in range(pkt.pn_len):
        out[pn_offset + i] ^= mask[1 + i]
    return bytes(out) + sealed


def open_packet(
    keys: PacketKeys,
    suite: SuiteLike,
    hp_alg: HpLike,
    wire: WirePacket,
    largest_acked: int = -1,
    *,
    dcid_len: int = 8,
) -> PlainPacket:
    """Remove header protection, rebuild the packet number, verify the AEAD.

    ``dcid_len`` is needed only for short headers, whose connection-ID length
    is not self-describing.  Trailing bytes after a long header's Length
    field (coalesced packets) are ignored.
    """
    suite = suite_params(suite)
    hp = hp_params(hp_alg)
    wire = bytes(wire)
    pn_offset, end = _locate(wire, dcid_len)
    if hp.enabled:
        if end < pn_offset + 4 + SAMPLE_LEN:
            raise PayloadTooShortForSample("packet too short to contain a header-protection sample")
        mask = hp_mask(hp, keys.hp, wire[pn_offset + 4 : pn_offset + 4 + SAMPLE_LEN])
    else:
        mask = bytes(MASK_LEN)
    first = wire[0] ^ (mask[0] & _mask_bits(wire[0]))
    pn_len = (first & 0x03) + 1
    if end < pn_offset + pn_len + TAG_LEN:
        raise MalformedHeader("packet shorter than packet number plus tag")
    truncated = bytes(b ^ m for b, m in zip(wire[pn_offset : pn_offset + pn_len], mask[1:]))
    header = bytes([first]) + wire[1:pn_offset]
    pn = pn_decode(int.from_bytes(truncated, "big"), pn_len, largest_acked)
    payload = aead_open(
        suite,
        keys.key,
        compute_nonce(keys.iv, pn),
        header + truncated,
        wire[pn_offset + pn_len : end],
    )
    reserved = LONG_RESERVED_BITS if first & LONG_HEADER_BIT else SHORT_RESERVED_BITS
    if first & reserved:
        raise MalformedHeader("reserved header bits are set after unmasking")
    return PlainPacket(header=header, pn=pn, pn_len=pn_len, payload=payload)


# -- MTU packetization --------------------------------------------------------


def packet_capacity(mtu: int, header_len: int, pn_len: int) -> int:
    """Payload bytes one packet can carry at ``mtu`` (IP-level bytes)."""
    cap = mtu - IP_UDP_OVERHEAD - header_len - pn_len - TAG_LEN
    if cap < 1:
        raise MtuTooSmall(
            f"MTU {mtu} leaves no payload room after {IP_UDP_OVERHEAD}+{header_len}+{pn_len}+{TAG_LEN} bytes of overhead"
        )
    return cap


def packetize(total_len: int, mtu: int, header_len: int, pn_len: int) -> list[int]:
    """Greedy split of ``total_len`` payload bytes into per-packet sizes."""
    cap = packet_capacity(mtu, header_len, pn_len)
    if total_len < 0:
        raise ValueError("total_len must be non-negative")
    full, rest = divmod(total_len, cap)
    return [cap] * full + ([rest] if rest else [])


def packet_count(total_len: int, mtu: int, header_len: int, pn_len: int) -> int:
    """Same as ``len(packetize(...))`` without materializing the list."""
    cap = packet_capacity(mtu, header_len, pn_len)
    return -(-total_len // cap)
