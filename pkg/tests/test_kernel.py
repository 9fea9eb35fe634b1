"""The compiled and pure kernels must agree byte for byte with seal_packet."""

import itertools
import random
from array import array

import pytest

from qcl import kernel
from qcl.crypto_suites import HP_ALGS, SUITES
from qcl.errors import AuthFailure, KeyLengthMismatch, PayloadTooShortForSample
from qcl.key_schedule import derive_initial_secrets, derive_packet_keys
from qcl.packet_protection import PlainPacket, build_short_header, open_packet, seal_packet

BACKENDS = sorted(kernel.backends())
COMBOS = list(itertools.product(SUITES.values(), HP_ALGS.values()))
DCID = bytes(range(8))


def test_backend_selection():
    assert kernel.BACKEND in BACKENDS
    assert "pure" in BACKENDS


def test_compiled_backend_is_built():
    # The editable install builds the extension; a missing build is a setup bug here.
    assert "compiled" in BACKENDS


@pytest.mark.parametrize("backend", BACKENDS)
def test_initial_vector(backend, vectors):
    v = vectors["client_initial"]
    keys = derive_packet_keys(derive_initial_secrets(bytes.fromhex("8394c8f03e515708"))[0], "AES_128_GCM")
    p = kernel.make_protector(SUITES["AES_128_GCM"], HP_ALGS["AES_ECB"], keys, backend)
    assert p.seal(v.hex["header"], 2, 4, v.hex["payload"]) == v.hex["wire"]
    header, pn, pn_len, payload = p.open(v.hex["wire"], 18)
    assert (pn, pn_len, payload) == (2, 4, v.hex["payload"])
    assert header == v.hex["header"]


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("suite,hp", COMBOS, ids=lambda x: x.name)
def test_matches_reference(backend, suite, hp):
    rng = random.Random(hash((suite.name, hp.name)) & 0xFFFF)
    keys = derive_packet_keys(rng.randbytes(32), suite, hp)
    prot = kernel.make_protector(suite, hp, keys, backend)
    for _ in range(60):
        pn_len = rng.randint(1, 4)
        pn = rng.randrange(1 << 32)
        payload = rng.randbytes(rng.randint(4, 400))
        header = build_short_header(DCID, pn_len)
        ref = seal_packet(keys, suite, hp, PlainPacket(header, pn, pn_len, payload))
        wire = prot.seal(header, pn, pn_len, payload)
        assert wire == ref
        assert prot.open(wire, len(header), pn - 1) == (header, pn, pn_len, payload)


@pytest.mark.parametrize("backend", BACKENDS)
def test_open_rejects_corruption(backend):
    suite, hp = SUITES["AES_128_GCM"], HP_ALGS["AES_ECB"]
    keys = derive_packet_keys(bytes(32), suite, hp)
    prot = kernel.make_protector(suite, hp, keys, backend)
    wire = bytearray(prot.seal(build_short_header(DCID, 2), 5, 2, bytes(40)))
    wire[-3] ^= 0x01
    with pytest.raises(AuthFailure):
        prot.open(bytes(wire), 9, 4)


@pytest.mark.parametrize("backend", BACKENDS)
def test_key_checks(backend):
    mod = kernel.backends()[backend]
    with pytest.raises(KeyLengthMismatch):
        mod.Protector(0, 0, bytes(32), bytes(12), bytes(16))
    with pytest.raises(KeyLengthMismatch):
        mod.Protector(0, 1, bytes(16), bytes(12), bytes(16))


@pytest.mark.parametrize("backend", BACKENDS)
def test_short_payload(backend):
    suite, hp = SUITES["AES_128_GCM"], HP_ALGS["AES_ECB"]
    prot = kernel.make_protector(suite, hp, derive_packet_keys(bytes(32), suite, hp), backend)
    with pytest.raises(PayloadTooShortForSample):
        prot.seal(build_short_header(DCID, 1), 1, 1, b"ab")


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("suite,hp", [("NOOP", "OFF"), ("AES_128_GCM", "AES_ECB"), ("CHACHA20_POLY1305", "CHACHA20_RAW")])
def test_run_stream_accounting(backend, suite, hp):
    s, h = SUITES[suite], HP_ALGS[hp]
    keys = derive_packet_keys(bytes(32), s, h)
    mod = kernel.backends()[backend]
    tx = kernel.make_protector(s, h, keys, backend)
    rx = kernel.make_protector(s, h, keys, backend)
    sizes = array("I", [1445] * 700 + [17])
    pattern = random.Random(0).randbytes(1 << 16)
    out = mod.run_stream(tx, rx, sizes, pattern, 8, 2, True, True, 128)
    assert out["packets"] == 701
    assert out["payload_bytes"] == sum(sizes)
    assert out["elapsed_ns"] > 0
    assert out["pp_ns"] == out["seal_pp_ns"] + out["open_pp_ns"]
    assert out["pp_ns"] + out["hp_ns"] + out["framing_ns"] <= out["elapsed_ns"]
    if hp == "OFF":
        assert out["hp_ns"] == 0


def test_backends_agree_on_stream_wire():
    """Packets built by run_stream's framing equal the reference packets."""
    if "compiled" not in BACKENDS:
        pytest.skip("compiled kernel not built")
    suite, hp = SUITES["AES_256_GCM"], HP_ALGS["AES_ECB"]
    keys = derive_packet_keys(bytes(32), suite, hp)
    comp = kernel.make_protector(suite, hp, keys, "compiled")
    pure = kernel.make_protector(suite, hp, keys, "pure")
    header = b"\x41" + b"\xc1" * 8
    for pn in (0, 1, 255, 256, 65535, 70000):
        payload = bytes(range(100))
        a = comp.seal(header, pn, 2, payload)
        assert a == pure.seal(header, pn, 2, payload)
        assert open_packet(keys, suite, hp, a, pn - 1).payload == payload


def test_open_only_direction_excludes_sender():
    suite, hp = SUITES["AES_128_GCM"], HP_ALGS["AES_ECB"]
    keys = derive_packet_keys(bytes(32), suite, hp)
    tx = kernel.make_protector(suite, hp, keys)
    rx = kernel.make_protector(suite, hp, keys)
    sizes = array("I", [1000] * 300)
    pattern = bytes(4096)
    out = kernel.run_stream(tx, rx, sizes, pattern, 8, 2, False, True, 64)
    assert out["seal_pp_ns"] == 0 and out["seal_hp_ns"] == 0
    assert out["open_pp_ns"] > 0
