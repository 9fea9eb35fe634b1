"""Acceptance criteria, one printed PASS/FAIL line each.

Run ``pytest tests/test_acceptance.py -v`` to see the lines.  Timing-based
criteria (4 and 5) use 256 MiB streams and take about a minute together.
Configs being compared run interleaved, and comparisons use the median of
per-round goodput ratios, which cancels drift on a shared host.
"""

import itertools
import math
import random
import time

import pytest

from qcl.bench_harness import SHORT_HEADER_LEN, BenchConfig, MiB, paired_ratio, run_interleaved
from qcl.crypto_suites import HpId, SuiteId
from qcl.errors import AuthFailure
from qcl.handshake_sim import (
    FAILED_PN_WINDOW,
    OK,
    EndpointPolicy,
    HandshakeProfile,
    hybrid,
    load_catalog,
    simulate,
)
from qcl.key_schedule import derive_initial_secrets, derive_packet_keys
from qcl.packet_protection import (
    IP_UDP_OVERHEAD,
    PACKET_TYPE_HANDSHAKE,
    PACKET_TYPE_INITIAL,
    PlainPacket,
    build_long_header,
    build_short_header,
    open_packet,
    seal_packet,
)

pytestmark = pytest.mark.usefixtures("clean_catalog_env")

STREAM = 256 * MiB
REPS = 7
DCID = bytes.fromhex("8394c8f03e515708")


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] C{n} {detail}")
        assert ok, detail

    return emit


def test_c1_initial_matches_reference(vectors, verdict):
    t0 = time.perf_counter()
    vec = vectors["client_initial"]
    client, _ = derive_initial_secrets(DCID)
    keys = derive_packet_keys(client, "AES_128_GCM")
    payload = vec.hex["payload"]
    header = build_long_header(PACKET_TYPE_INITIAL, DCID, b"", 4, len(payload))
    wire = seal_packet(keys, "AES_128_GCM", "AES_ECB", PlainPacket(header, 2, 4, payload))
    elapsed = time.perf_counter() - t0
    ok = header == vec.hex["header"] and wire == vec.hex["wire"] and elapsed < 1.0
    verdict(1, ok, f"client Initial {len(wire)} bytes, byte-exact={wire == vec.hex['wire']}, {elapsed * 1e3:.1f} ms")


def _random_packet(rng):
    pn_len = rng.randint(1, 4)
    pn = rng.randrange(1 << (8 * pn_len))
    payload = rng.randbytes(rng.randint(4, 1200))
    if rng.random() < 0.5:
        header = build_short_header(rng.randbytes(8), pn_len, key_phase=rng.random() < 0.5)
    else:
        ptype = rng.choice((PACKET_TYPE_INITIAL, PACKET_TYPE_HANDSHAKE))
        header = build_long_header(ptype, rng.randbytes(8), rng.randbytes(8), pn_len, len(payload))
    return PlainPacket(header, pn, pn_len, payload)


def test_c2_round_trip_and_corruption(verdict):
    rng = random.Random(2)
    t0 = time.perf_counter()
    trips = detected = corruptions = 0
    bad = []
    for suite, hp in itertools.product(list(SuiteId), list(HpId)):
        secret = rng.randbytes(32)
        keys = derive_packet_keys(secret, suite, hp)
        for _ in range(1000):
            pkt = _random_packet(rng)
            wire = seal_packet(keys, suite, hp, pkt)
            back = open_packet(keys, suite, hp, wire, pkt.pn - 1)
            trips += 1
            if back != pkt:
                bad.append((suite.value, hp.value, "round trip"))
            if suite is SuiteId.NOOP:
                continue
            # one bit anywhere in ciphertext or tag
            start = len(pkt.header) + pkt.pn_len
            pos = rng.randrange(start, len(wire))
            flipped = bytearray(wire)
            flipped[pos] ^= 1 << rng.randrange(8)
            corruptions += 1
            try:
                open_packet(keys, suite, hp, bytes(flipped), pkt.pn - 1)
                bad.append((suite.value, hp.value, "corruption accepted"))
            except AuthFailure:
                detected += 1
    elapsed = time.perf_counter() - t0
    ok = not bad and trips == 16000 and elapsed < 10.0
    verdict(2, ok, f"{trips} round trips, {detected}/{corruptions} bit flips rejected, {len(bad)} errors, {elapsed:.1f} s")


def test_c3_noop_identity(verdict):
    rng = random.Random(3)
    mismatches = 0
    checked = 0
    for hp in HpId:
        keys = derive_packet_keys(bytes(32), "NOOP", hp)
        for _ in range(500):
            pkt = _random_packet(rng)
            wire = seal_packet(keys, "NOOP", hp, pkt)
            start = len(pkt.header) + pkt.pn_len
            checked += 1
            if wire[start : start + len(pkt.payload)] != pkt.payload:
                mismatches += 1
    verdict(3, mismatches == 0, f"{checked} NOOP packets, ciphertext prefix == plaintext in all but {mismatches}")


@pytest.fixture(scope="module")
def cost_reports():
    cfgs = [
        BenchConfig("NOOP", "OFF", total_bytes=STREAM, repetitions=REPS),
        BenchConfig("AES_128_GCM", "AES_ECB", total_bytes=STREAM, repetitions=REPS),
        BenchConfig("AES_256_GCM", "AES_ECB", total_bytes=STREAM, repetitions=REPS),
        BenchConfig("AES_128_GCM", "CHACHA20_RAW", total_bytes=STREAM, repetitions=REPS),
    ]
    return dict(zip(("noop", "aes128", "aes256", "aes128_chacha_hp"), run_interleaved(cfgs)))


def test_c4a_noop_faster_than_aes(cost_reports, verdict):
    noop, aes = cost_reports["noop"], cost_reports["aes128"]
    ratio = paired_ratio(noop, aes)
    verdict("4a", ratio > 1, f"NOOP {noop.goodput / 1e6:.0f} MB/s vs AES-128-GCM {aes.goodput / 1e6:.0f} MB/s (paired +{ratio - 1:.0%})")


def test_c4b_aes128_vs_aes256(cost_reports, verdict):
    a, b = cost_reports["aes128"], cost_reports["aes256"]
    ratio = paired_ratio(a, b)
    gap = 1 - min(ratio, 1 / ratio)
    verdict("4b", gap <= 0.10, f"AES-128 {a.goodput / 1e6:.0f} MB/s vs AES-256 {b.goodput / 1e6:.0f} MB/s, paired gap {gap:.1%} (limit 10%)")


def test_c4c_hp_shares(cost_reports, verdict):
    ecb = cost_reports["aes128"].hp_share
    chacha = cost_reports["aes128_chacha_hp"].hp_share
    ok = ecb < chacha and ecb < 0.05
    verdict("4c", ok, f"hp_share AES_ECB {ecb:.2%} vs CHACHA20_RAW {chacha:.2%} (ECB limit 5%)")


def test_c5_mtu_scaling(verdict):
    mtus = (1500, 3000, 6000)
    reports = run_interleaved(
        [BenchConfig("AES_128_GCM", total_bytes=STREAM, repetitions=REPS, mtu=m) for m in mtus]
    )
    expected = [math.ceil(STREAM / (m - IP_UDP_OVERHEAD - SHORT_HEADER_LEN - 2 - 16)) for m in mtus]
    counts = [r.packets for r in reports]
    goodput = [r.goodput for r in reports]
    steps = [paired_ratio(y, x) for x, y in zip(reports, reports[1:])]
    ok = counts == expected and all(r >= 1 for r in steps)
    shown = ", ".join(f"{m}: {n} pkts {g / 1e6:.0f} MB/s" for m, n, g in zip(mtus, counts, goodput))
    gains = ", ".join(f"{r:.2f}x" for r in steps)
    verdict(5, ok, f"{shown}; paired step gains {gains}; counts match ceil oracle={counts == expected}")


def test_c6_window_failure(verdict):
    t0 = time.perf_counter()
    cat = load_catalog()
    big = [s for s in cat.sigs.values() if s.cert_chain_size > 30_000]
    bad = []
    cases = 0
    max_pkts = 0
    for sig, kem in itertools.product(big, cat.kems.values()):
        cases += 1
        limited = simulate(HandshakeProfile(kem, sig, server_policy=EndpointPolicy(pn_window=64)))
        free = simulate(HandshakeProfile(kem, sig))
        max_pkts = max(max_pkts, free.packets_server)
        if limited.outcome != FAILED_PN_WINDOW or free.outcome != OK or free.packets_server <= 64:
            bad.append((kem.name, sig.name))
    elapsed = time.perf_counter() - t0
    ok = bool(big) and not bad and elapsed < 1.0
    names = ", ".join(s.name for s in big)
    verdict(6, ok, f"{len(big)} signatures over 30 KB ({names}) x {len(cat.kems)} KEMs: {cases - len(bad)}/{cases} fail at window 64, up to {max_pkts} packets unlimited")


def test_c7_amplification_and_retry(verdict):
    rng = random.Random(7)
    cat = load_catalog()
    kems = list(cat.kems.values())
    sigs = list(cat.sigs.values())
    violations = binding = retry_bad = 0
    for _ in range(500):
        kem = rng.choice(kems)
        if rng.random() < 0.3:
            kem = hybrid(kem, rng.choice(kems))
        mtu = rng.choice((1200, 1252, 1350, 1500))
        pol = dict(initial_mtu=mtu, ack_every=rng.choice((1, 2, 3)))
        kw = dict(client_policy=EndpointPolicy(**pol), rtt=rng.uniform(1, 100))
        sig = rng.choice(sigs)
        base = simulate(HandshakeProfile(kem, sig, server_policy=EndpointPolicy(**pol), **kw))
        for sent, received, validated in base.trace:
            if not validated and sent > 3 * received:
                violations += 1
        retry = simulate(
            HandshakeProfile(kem, sig, server_policy=EndpointPolicy(retry_enabled=True, **pol), **kw)
        )
        if base.stall_rounds:
            binding += 1
            if not (
                retry.retry_used
                and retry.rtt_count == base.rtt_count + 1
                and retry.stall_rounds == 0
            ):
                retry_bad += 1
    ok = violations == 0 and retry_bad == 0 and binding > 0
    verdict(7, ok, f"500 profiles, {violations} amplification violations; Retry on {binding} stalled profiles: {binding - retry_bad} gain exactly one RTT and lose the stall")


def test_c8_hybrid_sums(verdict):
    cat = load_catalog()
    kems = list(cat.kems.values())
    bad = 0
    for a, b in itertools.product(kems, repeat=2):
        h = hybrid(a, b)
        bad += (h.pk_size, h.ct_size) != (a.pk_size + b.pk_size, a.ct_size + b.ct_size)
    spots = cat.kem("Kyber512").pk_size == 800 and cat.kem("HQC-128").pk_size == 2249
    verdict(8, bad == 0 and spots, f"{len(kems) ** 2} pairs sum exactly ({bad} wrong); Kyber512 pk {cat.kem('Kyber512').pk_size}, HQC-128 pk {cat.kem('HQC-128').pk_size}")


def test_c9_declared_not_reproducible(capsys):
    with capsys.disabled():
        print(
            "\n[SKIP] C9 absolute goodput levels, absolute profiler percentages and per-algorithm "
            "TTFB table values are hardware- or data-bound; covered by criteria 4-8"
        )
    pytest.skip("declared not reproducible at desk scale")
