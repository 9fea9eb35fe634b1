"""Deterministic flight-level model of a QUIC 1-RTT handshake.

Algorithms are represented only by their wire sizes and by timing inputs;
no key exchange or signing happens here.  All durations are milliseconds,
all sizes bytes.  Byte accounting is at the IP level (one QUIC packet per
UDP datagram, 28 bytes of IPv4+UDP overhead each), which is the unit the
anti-amplification budget is defined over in this model.
"""

from __future__ import annotations

import dataclasses
import math
import os
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from .errors import ParseError, UnknownAlgorithm
from .packet_protection import (
    IP_UDP_OVERHEAD,
    TAG_LEN,
    long_header_len,
    packet_capacity,
    packetize,
)

CATALOG_ENV = "QCL_CATALOG"
CID_LEN = 8
HANDSHAKE_PN_LEN = 2
# CRYPTO frame: type byte + 4-byte offset varint + 2-byte length varint.
CRYPTO_FRAME_OVERHEAD = 7
MIN_INITIAL_MTU = 1200

OK = "ok"
FAILED_PN_WINDOW = "failed_pn_window"
STALLED_AMPLIFICATION = "stalled_amplification"


# -- algorithm specs ----------------------------------------------------------


@dataclass(frozen=True)
class KemSpec:
    name: str
    nist_level: int
    pk_size: int
    ct_size: int
    t_keygen: float = 0.0
    t_encaps: float = 0.0
    t_decaps: float = 0.0
    provenance: str = ""

    def __post_init__(self):
        if self.pk_size < 0 or self.ct_size < 0:
            raise ValueError(f"{self.name}: sizes must be non-negative")


@dataclass(frozen=True)
class SigSpec:
    name: str
    nist_level: int
    pk_size: int
    sig_size: int
    cert_chain_size: int
    t_sign: float = 0.0
    t_verify: float = 0.0
    provenance: str = ""

    def __post_init__(self):
        if self.cert_chain_size < self.pk_size + self.sig_size:
            raise ValueError(
                f"{self.name}: certificate ({self.cert_chain_size}) cannot be smaller than "
                f"key plus signature ({self.pk_size + self.sig_size})"
            )


def hybrid(a: KemSpec, b: KemSpec) -> KemSpec:
    """Concatenated KEM: sizes and timings add, level is the stronger one."""
    return KemSpec(
        name=f"{a.name}+{b.name}",
        nist_level=max(a.nist_level, b.nist_level),
        pk_size=a.pk_size + b.pk_size,
        ct_size=a.ct_size + b.ct_size,
        t_keygen=a.t_keygen + b.t_keygen,
        t_encaps=a.t_encaps + b.t_encaps,
        t_decaps=a.t_decaps + b.t_decaps,
        provenance="hybrid",
    )


def with_timings(spec, **timings):
    """Copy of a KemSpec or SigSpec with timing fields replaced."""
    return dataclasses.replace(spec, **timings)


# -- catalog ------------------------------------------------------------------


@dataclass(frozen=True)
class Catalog:
    kems: dict
    sigs: dict

    def kem(self, expr: str) -> KemSpec:
        """Resolve a KEM name or a hybrid expression ``a+b``."""
        parts = [p for p in expr.split("+")]
        if not all(p.strip() for p in parts):
            raise UnknownAlgorithm(f"malformed KEM expression {expr!r}")
        specs = [_lookup(self.kems, p, "KEM") for p in parts]
        out = specs[0]
        for s in specs[1:]:
            out = hybrid(out, s)
        return out

    def sig(self, name: str) -> SigSpec:
        return _lookup(self.sigs, name, "signature")


def normalize_name(name: str) -> str:
    """Case- and punctuation-insensitive key: ``SPHINCS+-SHA2-128f`` -> ``sphincssha2128f``."""
    return re.sub(r"[^a-z0-9]", "", name.lower())


def _lookup(table: dict, name: str, kind: str):
    try:
        return table[normalize_name(name)]
    except KeyError:
        known = ", ".join(sorted(s.name for s in table.values()))
        raise UnknownAlgorithm(f"unknown {kind} {name!r}; known: {known}") from None


def parse_catalog(text: str) -> Catalog:
    kems, sigs = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cols = [c.strip() for c in line.split(";")]
        if len(cols) < 5:
            raise ParseError(f"catalog line {lineno}: expected 6 fields, got {len(cols)}")
        name, level, pk, second, cert = cols[:5]
        prov = ";".join(cols[5:])
        try:
            level_i, pk_i, second_i = int(level), int(pk), int(second)
            cert_i = None if cert == "-" else int(cert)
        except ValueError:
            raise ParseError(f"catalog line {lineno}: non-integer size field") from None
        key = normalize_name(name)
        if key in kems or key in sigs:
            raise ParseError(f"catalog line {lineno}: duplicate entry {name!r}")
        try:
            if cert_i is None:
                kems[key] = KemSpec(name, level_i, pk_i, second_i, provenance=prov)
            else:
                sigs[key] = SigSpec(name, level_i, pk_i, second_i, cert_i, provenance=prov)
        except ValueError as exc:
            raise ParseError(f"catalog line {lineno}: {exc}") from None
    return Catalog(kems=kems, sigs=sigs)


def load_catalog(path: Optional[str] = None) -> Catalog:
    """Read the catalog from ``path``, ``$QCL_CATALOG`` or the bundled file."""
    path = path or os.environ.get(CATALOG_ENV)
    if path:
        with open(path, encoding="utf-8") as fh:
            return parse_catalog(fh.read())
    text = resources.files("qcl").joinpath("data/catalog.txt").read_text(encoding="utf-8")
    return parse_catalog(text)


def kem_catalog(path: Optional[str] = None) -> list:
    return list(load_catalog(path).kems.values())


def sig_catalog(path: Optional[str] = None) -> list:
    return list(load_catalog(path).sigs.values())


# -- profile ------------------------------------------------------------------


@dataclass(frozen=True)
class EndpointPolicy:
    pn_window: Optional[int] = None  # None: unlimited
    amp_factor: float = 3.0
    retry_enabled: bool = False
    initial_mtu: int = MIN_INITIAL_MTU
    ack_every: int = 2

    def __post_init__(self):
        if self.pn_window is not None and self.pn_window < 1:
            raise ValueError("pn_window must be >= 1 or None")
        if self.amp_factor <= 0:
            raise ValueError("amp_factor must be positive")
        if self.initial_mtu < MIN_INITIAL_MTU:
            raise ValueError(f"initial_mtu must be >= {MIN_INITIAL_MTU}")
        if self.ack_every < 1:
            raise ValueError("ack_every must be >= 1")


@dataclass(frozen=True)
class BaseSizes:
    client_hello_base: int = 300
    server_hello_base: int = 120
    ee_cert_cv_fin_base: int = 200

    def __post_init__(self):
        if min(self.client_hello_base, self.server_hello_base, self.ee_cert_cv_fin_base) <= 0:
            raise ValueError("base message sizes must be positive")


@dataclass(frozen=True)
class HandshakeProfile:
    kem: KemSpec
    sig: SigSpec
    client_policy: EndpointPolicy = field(default_factory=EndpointPolicy)
    server_policy: EndpointPolicy = field(default_factory=EndpointPolicy)
    rtt: float = 0.0
    base_msg_sizes: BaseSizes = field(default_factory=BaseSizes)
    processing_delay: float = 0.0  # extra per-handshake processing, e.g. a slow parser

    def __post_init__(self):
        if self.rtt < 0:
            raise ValueError("rtt must be non-negative")
        if self.processing_delay < 0:
            raise ValueError("processing_delay must be non-negative")


@dataclass(frozen=True)
class Flights:
    ch_bytes: int
    sh_bytes: int
    server_crypto_bytes: int


def build_flights(profile: HandshakeProfile) -> Flights:
    b = profile.base_msg_sizes
    return Flights(
        ch_bytes=b.client_hello_base + profile.kem.pk_size,
        sh_bytes=b.server_hello_base + profile.kem.ct_size,
        server_crypto_bytes=b.ee_cert_cv_fin_base
        + profile.sig.cert_chain_size
        + profile.sig.sig_size,
    )


# -- simulation ---------------------------------------------------------------


@dataclass(frozen=True)
class SimReport:
    ttfb: Optional[float]
    packets_client: int
    packets_server: int
    server_flight_bytes: int
    retry_used: bool
    outcome: str
    rtt_count: int = 1
    stall_rounds: int = 0
    compute: float = 0.0
    # (server bytes sent, client bytes received, validated) after every
    # server send; excluded from serialization.
    trace: tuple = field(default=(), repr=False, compare=False)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("trace")
        return d


INITIAL_HEADER_LEN = long_header_len(CID_LEN, CID_LEN, token_len=0)


def _datagrams(total: int, mtu: int, header_len: int) -> list:
    """IP-level sizes of the packets carrying ``total`` CRYPTO bytes."""
    overhead = IP_UDP_OVERHEAD + header_len + CRYPTO_FRAME_OVERHEAD + HANDSHAKE_PN_LEN + TAG_LEN
    return [
        p + overhead
        for p in packetize(total, mtu, header_len + CRYPTO_FRAME_OVERHEAD, HANDSHAKE_PN_LEN)
    ]


def _capacity(mtu: int) -> int:
    return packet_capacity(mtu, INITIAL_HEADER_LEN + CRYPTO_FRAME_OVERHEAD, HANDSHAKE_PN_LEN)


def _compute_time(profile: HandshakeProfile) -> float:
    k, s = profile.kem, profile.sig
    return (
        k.t_keygen + k.t_encaps + k.t_decaps + s.t_sign + s.t_verify + profile.processing_delay
    )


def simulate(profile: HandshakeProfile) -> SimReport:
    """Run the flight-by-flight model.

    The server sends as much of its flight as the amplification budget
    allows; each shortfall costs one round trip while the client's ACKs
    arrive.  ACKs sent before the client holds handshake keys are padded
    Initial datagrams and re-arm the budget; the first handshake-level ACK
    validates the address.  With Retry enabled and a binding budget, one
    extra round trip validates the address up front.
    """
    cp, sp = profile.client_policy, profile.server_policy
    flights = build_flights(profile)

    n_ch = len(_datagrams(flights.ch_bytes, cp.initial_mtu, INITIAL_HEADER_LEN))
    n_ch = max(n_ch, 1)
    client_bytes = n_ch * cp.initial_mtu  # every Initial datagram is padded
    # ServerHello and the encrypted flight share one CRYPTO byte stream; the
    # packet holding the last ServerHello byte gives the client its
    # handshake keys.
    queue = _datagrams(
        flights.sh_bytes + flights.server_crypto_bytes, sp.initial_mtu, INITIAL_HEADER_LEN
    )
    sh_packets = -(-flights.sh_bytes // _capacity(sp.initial_mtu))
    flight_bytes = sum(queue)

    packets_client = n_ch
    rtt_count = 1
    retry_used = False
    validated = False
    if sp.retry_enabled and flight_bytes > sp.amp_factor * client_bytes:
        # Retry carries no packet number; the client repeats its Initials
        # with the token, which validates the address.
        retry_used = True
        validated = True
        rtt_count += 1
        packets_client += n_ch
        client_bytes += n_ch * cp.initial_mtu

    sent = 0
    idx = 0
    stall_rounds = 0
    delivered = 0
    outcome = OK
    trace = []
    while True:
        round_start = idx
        while idx < len(queue) and (validated or sent + queue[idx] <= sp.amp_factor * client_bytes):
            sent += queue[idx]
            idx += 1
            trace.append((sent, client_bytes, validated))
        in_round = idx - round_start
        delivered += in_round
        if idx == len(queue):
            # Last ACK of an odd tail rides along with the client's Finished.
            packets_client += in_round // cp.ack_every
            break
        if in_round == 0:
            outcome = STALLED_AMPLIFICATION
            break
        stall_rounds += 1
        acks = math.ceil(in_round / cp.ack_every)
        packets_client += acks
        if delivered >= sh_packets:
            validated = True
        else:
            client_bytes += acks * cp.initial_mtu

    packets_server = len(queue)
    if outcome == OK and (
        (sp.pn_window is not None and packets_server > sp.pn_window)
        or (cp.pn_window is not None and packets_client > cp.pn_window)
    ):
        outcome = FAILED_PN_WINDOW

    compute = _compute_time(profile)
    ttfb = None
    if outcome == OK:
        ttfb = (rtt_count + stall_rounds) * profile.rtt + compute
    return SimReport(
        ttfb=ttfb,
        packets_client=packets_client,
        packets_server=packets_server,
        server_flight_bytes=flight_bytes,
        retry_used=retry_used,
        outcome=outcome,
        rtt_count=rtt_count,
        stall_rounds=stall_rounds,
        compute=compute,
        trace=tuple(trace),
    )


def ttfb_decompose(report: SimReport, profile: HandshakeProfile) -> dict:
    """Split ``report.ttfb`` into network, compute and amplification-stall time."""
    if report.ttfb is None:
        raise ValueError(f"no TTFB to decompose for outcome {report.outcome!r}")
    return {
        "network": report.rtt_count * profile.rtt,
        "crypto_compute": report.compute,
        "stall": report.stall_rounds * profile.rtt,
    }


# -- local timing inputs ------------------------------------------------------


def measure_local_timings(iterations: int = 50) -> dict:
    """Time the classical algorithms available in ``cryptography`` on this host.

    Returns ``{name: {field: ms}}`` suitable for :func:`with_timings`.  ECDHE
    groups map keygen to the client's key generation, encaps to the server's
    keygen plus exchange, decaps to the client's exchange.  Post-quantum
    entries have no local implementation and are absent.
    """
    import time

    from cryptography.hazmat.primitives import hashes
    from cryptography.hazmat.primitives.asymmetric import ec, padding, rsa, x25519

    def per_call(fn) -> float:
        fn()
        t0 = time.perf_counter()
        for _ in range(iterations):
            fn()
        return (time.perf_counter() - t0) * 1000.0 / iterations

    out = {}
    groups = {
        "X25519": (x25519.X25519PrivateKey.generate, lambda a, b: a.exchange(b.public_key())),
        "P-256": (lambda: ec.generate_private_key(ec.SECP256R1()), None),
        "P-384": (lambda: ec.generate_private_key(ec.SECP384R1()), None),
        "P-521": (lambda: ec.generate_private_key(ec.SECP521R1()), None),
    }
    for name, (gen, exch) in groups.items():
        if exch is None:
            exch = lambda a, b: a.exchange(ec.ECDH(), b.public_key())  # noqa: E731
        a, b = gen(), gen()
        t_gen = per_call(gen)
        t_ex = per_call(lambda: exch(a, b))
        out[name] = {"t_keygen": t_gen, "t_encaps": t_gen + t_ex, "t_decaps": t_ex}

    msg = b"\x00" * 128
    pss = padding.PSS(mgf=padding.MGF1(hashes.SHA256()), salt_length=32)
    for bits in (1024, 2048, 3072, 4096):
        key = rsa.generate_private_key(public_exponent=65537, key_size=bits)
        sig = key.sign(msg, pss, hashes.SHA256())
        pub = key.public_key()
        out[f"RSA-{bits}"] = {
            "t_sign": per_call(lambda: key.sign(msg, pss, hashes.SHA256())),
            "t_verify": per_call(lambda: pub.verify(sig, msg, pss, hashes.SHA256())),
        }
    return out


def apply_timings(catalog: Catalog, timings: dict) -> Catalog:
    """Return a catalog whose entries carry the given ``{name: {field: ms}}`` timings."""
    kems, sigs = dict(catalog.kems), dict(catalog.sigs)
    for name, fields in timings.items():
        key = normalize_name(name)
        if key in kems:
            kems[key] = with_timings(kems[key], **fields)
        elif key in sigs:
            sigs[key] = with_timings(sigs[key], **fields)
        else:
            raise UnknownAlgorithm(f"timings given for unknown algorithm {name!r}")
    return Catalog(kems=kems, sigs=sigs)
