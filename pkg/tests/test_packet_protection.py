import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcl.crypto_suites import HP_ALGS, SUITES, suite_params
from qcl.errors import AuthFailure, MalformedHeader, MtuTooSmall, PayloadTooShortForSample
from qcl.key_schedule import derive_initial_secrets, derive_packet_keys
from qcl.packet_protection import (
    PACKET_TYPE_HANDSHAKE,
    PACKET_TYPE_INITIAL,
    PlainPacket,
    build_long_header,
    build_short_header,
    compute_nonce,
    decode_varint,
    encode_pn,
    encode_varint,
    long_header_len,
    open_packet,
    packet_capacity,
    packet_count,
    packetize,
    pn_decode,
    pn_length_for,
    seal_packet,
)

DCID = bytes.fromhex("8394c8f03e515708")
SUITE_NAMES = [s.name for s in SUITES.values()]
HP_NAMES = [h.name for h in HP_ALGS.values()]


def client_keys():
    return derive_packet_keys(derive_initial_secrets(DCID)[0], "AES_128_GCM")


# -- nonce ------------------------------------------------------------------


def test_nonce_zero_iv():
    assert compute_nonce(bytes(12), 7) == bytes(11) + b"\x07"


def test_nonce_identity():
    assert compute_nonce(b"\xff" * 12, 0) == b"\xff" * 12


def test_nonce_low_bytes_only():
    iv = bytes(range(1, 13))
    n = compute_nonce(iv, 0x1234)
    assert n[:10] == iv[:10]
    assert n[10:] == bytes([0x0B ^ 0x12, 0x0C ^ 0x34])


def test_nonce_range():
    with pytest.raises(ValueError):
        compute_nonce(bytes(12), 1 << 62)


# -- varints and packet numbers (RFC 9000 appendix examples) -------------------


@pytest.mark.parametrize(
    "hexval,value",
    [("c2197c5eff14e88c", 151288809941952652), ("9d7f3e7d", 494878333), ("7bbd", 15293), ("25", 37)],
)
def test_varint_rfc_examples(hexval, value):
    assert decode_varint(bytes.fromhex(hexval)) == (value, len(hexval) // 2)
    assert encode_varint(value) == bytes.fromhex(hexval)


def test_varint_two_byte_form_of_37():
    assert decode_varint(bytes.fromhex("4025")) == (37, 2)


@given(st.integers(0, (1 << 62) - 1))
def test_varint_round_trip(v):
    enc = encode_varint(v)
    assert decode_varint(enc) == (v, len(enc))


def test_varint_truncated():
    with pytest.raises(MalformedHeader):
        decode_varint(bytes.fromhex("9d7f"))


def test_pn_decode_rfc_example():
    assert pn_decode(0x9B32, 2, 0xA82F30EA) == 0xA82F9B32


def test_pn_length_rfc_examples():
    assert pn_length_for(0xAC5C02, 0xABE8B3) == 2
    assert pn_length_for(0xACE8FE, 0xABE8B3) == 3


@given(st.integers(0, (1 << 40)), st.integers(1, 4), st.data())
def test_pn_round_trip_within_window(largest, pn_len, data):
    half = 1 << (8 * pn_len - 1)
    pn = data.draw(st.integers(max(0, largest + 1 - half + 1), largest + half))
    truncated = int.from_bytes(encode_pn(pn, pn_len), "big")
    assert pn_decode(truncated, pn_len, largest) == pn


# -- byte-exact vectors --------------------------------------------------------


def _pin(v):
    header = v.hex["header"]
    return PlainPacket(header, int(v.text["pn"]), (header[0] & 3) + 1, v.hex["payload"])


def test_client_initial_wire(vectors):
    v = vectors["client_initial"]
    wire = seal_packet(client_keys(), "AES_128_GCM", "AES_ECB", _pin(v))
    assert len(wire) == 1200
    assert wire == v.hex["wire"]
    assert wire[:18].hex() == "cd00000001088394c8f03e5157080000449e"


def test_client_initial_opens(vectors):
    v = vectors["client_initial"]
    back = open_packet(client_keys(), "AES_128_GCM", "AES_ECB", v.hex["wire"])
    assert back == _pin(v)


def test_server_initial_wire(vectors):
    v = vectors["server_initial"]
    keys = derive_packet_keys(derive_initial_secrets(DCID)[1], "AES_128_GCM")
    assert seal_packet(keys, "AES_128_GCM", "AES_ECB", _pin(v)) == v.hex["wire"]
    back = open_packet(keys, "AES_128_GCM", "AES_ECB", v.hex["wire"], 0)
    assert back.pn == 1 and back.payload == v.hex["payload"]


def test_chacha_short_header_wire(vectors):
    v = vectors["chacha_short"]
    keys = derive_packet_keys(v.hex["secret"], "CHACHA20_POLY1305")
    pkt = PlainPacket(b"\x42", 654360564, 3, b"\x01")
    wire = seal_packet(keys, "CHACHA20_POLY1305", "CHACHA20_RAW", pkt)
    assert wire == v.hex["wire"]
    assert wire.hex() == "4cfe4189655e5cd55c41f69080575d7999c25a5bfb"
    assert open_packet(keys, "CHACHA20_POLY1305", "CHACHA20_RAW", wire, 654360563, dcid_len=0) == pkt


def test_coalesced_trailing_bytes_ignored(vectors):
    v = vectors["client_initial"]
    back = open_packet(client_keys(), "AES_128_GCM", "AES_ECB", v.hex["wire"] + b"\x00" * 40)
    assert back.pn == 2


# -- round trips and corruption ------------------------------------------------


def _keys(suite, hp, seed=0):
    return derive_packet_keys(bytes([seed]) * 32, suite, hp)


@settings(max_examples=200, deadline=None)
@given(
    st.sampled_from(SUITE_NAMES),
    st.sampled_from(HP_NAMES),
    st.booleans(),
    st.integers(1, 4),
    st.integers(0, (1 << 30)),
    st.binary(min_size=4, max_size=300),
)
def test_seal_open_round_trip(suite, hp, long_form, pn_len, pn, payload):
    keys = _keys(suite, hp)
    if long_form:
        header = build_long_header(PACKET_TYPE_HANDSHAKE, DCID, b"\x01\x02", pn_len, len(payload))
    else:
        header = build_short_header(DCID, pn_len, key_phase=bool(pn & 1))
    pkt = PlainPacket(header, pn, pn_len, payload)
    wire = seal_packet(keys, suite, hp, pkt)
    assert len(wire) == len(header) + pn_len + len(payload) + 16
    assert open_packet(keys, suite, hp, wire, pn - 1, dcid_len=len(DCID)) == pkt


def test_header_protection_changes_bits():
    keys = _keys("AES_128_GCM", "AES_ECB")
    changed = 0
    for pn in range(64):
        pkt = PlainPacket(build_short_header(DCID, 4), pn, 4, bytes(32))
        wire = seal_packet(keys, "AES_128_GCM", "AES_ECB", pkt)
        plain = pkt.header + pkt.encoded_pn
        changed += wire[: len(plain)] != plain
    assert changed == 64


@pytest.mark.parametrize("hp", ["OFF", "NOOP_HP"])
def test_no_mask_leaves_header(hp):
    keys = _keys("AES_128_GCM", hp)
    pkt = PlainPacket(build_short_header(DCID, 2), 9, 2, bytes(32))
    wire = seal_packet(keys, "AES_128_GCM", hp, pkt)
    assert wire[:11] == pkt.header + pkt.encoded_pn


@pytest.mark.parametrize("suite", ["AES_128_GCM", "AES_256_GCM", "CHACHA20_POLY1305"])
def test_every_ciphertext_bit_flip_fails(suite):
    hp = suite_params(suite).default_hp_alg
    keys = _keys(suite, hp)
    pkt = PlainPacket(build_short_header(DCID, 2), 77, 2, bytes(range(24)))
    wire = seal_packet(keys, suite, hp, pkt)
    start = 1 + len(DCID) + 2
    for i in range(start, len(wire)):
        for bit in range(8):
            bad = bytearray(wire)
            bad[i] ^= 1 << bit
            with pytest.raises(AuthFailure):
                open_packet(keys, suite, hp, bytes(bad), 76)


def test_noop_ciphertext_is_plaintext():
    keys = _keys("NOOP", "AES_ECB")
    payload = bytes(range(50))
    wire = seal_packet(keys, "NOOP", "AES_ECB", PlainPacket(build_short_header(DCID, 1), 5, 1, payload))
    assert wire[10 : 10 + len(payload)] == payload
    assert wire[-16:] == bytes(16)


def test_reserved_bits_rejected_after_decryption():
    keys = _keys("AES_128_GCM", "AES_ECB")
    header = bytes([0x40 | 0x08 | 1]) + DCID  # short header with a reserved bit
    wire = seal_packet(keys, "AES_128_GCM", "AES_ECB", PlainPacket(header, 3, 2, bytes(20)))
    with pytest.raises(MalformedHeader):
        open_packet(keys, "AES_128_GCM", "AES_ECB", wire, 2)


def test_fixed_bit_required():
    with pytest.raises(MalformedHeader):
        open_packet(_keys("AES_128_GCM", "AES_ECB"), "AES_128_GCM", "AES_ECB", bytes(40))


def test_sample_precondition():
    keys = _keys("AES_128_GCM", "AES_ECB")
    with pytest.raises(PayloadTooShortForSample):
        seal_packet(keys, "AES_128_GCM", "AES_ECB", PlainPacket(build_short_header(DCID, 1), 1, 1, b"ab"))
    seal_packet(keys, "AES_128_GCM", "AES_ECB", PlainPacket(build_short_header(DCID, 1), 1, 1, b"abc"))
    seal_packet(keys, "AES_128_GCM", "OFF", PlainPacket(build_short_header(DCID, 1), 1, 1, b""))


def test_pn_len_must_match_header():
    with pytest.raises(MalformedHeader):
        PlainPacket(build_short_header(DCID, 2), 1, 3, b"abcd")


def test_long_header_length_field():
    h = build_long_header(PACKET_TYPE_INITIAL, DCID, b"", 4, 1162)
    assert h.hex() == "c300000001088394c8f03e5157080000449e"
    assert len(h) == long_header_len(8, 0, token_len=0)
    assert long_header_len(8, 8) == 25


def test_truncated_long_packet():
    v_wire = seal_packet(
        _keys("AES_128_GCM", "AES_ECB"),
        "AES_128_GCM",
        "AES_ECB",
        PlainPacket(build_long_header(PACKET_TYPE_HANDSHAKE, DCID, DCID, 2, 40), 0, 2, bytes(40)),
    )
    with pytest.raises(MalformedHeader):
        open_packet(_keys("AES_128_GCM", "AES_ECB"), "AES_128_GCM", "AES_ECB", v_wire[:-1])


# -- packetization -------------------------------------------------------------


@pytest.mark.parametrize("mtu", [1200, 1500, 3000, 6000, 9000])
def test_packetize_ceil_oracle(mtu):
    total = 256 << 20
    cap = mtu - 28 - 9 - 2 - 16
    sizes = packetize(total, mtu, 9, 2)
    assert sum(sizes) == total
    assert len(sizes) == -(-total // cap) == packet_count(total, mtu, 9, 2)
    assert all(s == cap for s in sizes[:-1])


def test_packetize_edges():
    assert packetize(0, 1500, 9, 2) == []
    assert packetize(1, 1500, 9, 2) == [1]
    assert packet_capacity(56, 9, 2) == 1
    with pytest.raises(MtuTooSmall):
        packet_capacity(55, 9, 2)


def test_random_sizes_sum():
    rng = random.Random(3)
    for mtu, total in itertools.islice(
        ((rng.randrange(60, 9000), rng.randrange(0, 10**6)) for _ in itertools.count()), 300
    ):
        assert sum(packetize(total, mtu, 9, 2)) == total
