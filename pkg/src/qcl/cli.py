"""``qcl`` command line: suites, vectors, bench, sweep, simulate, catalog.

Exit codes: 0 success, 1 check failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from typing import Optional

from . import __version__, kernel
from .bench_harness import GiB, MiB, BenchConfig, mtu_sweep, run_throughput, write_csv
from .crypto_suites import HP_ALGS, SUITES, HpId, SuiteId
from .errors import MtuTooSmall, ParseError, QclError, UnknownAlgorithm
from .handshake_sim import (
    EndpointPolicy,
    HandshakeProfile,
    apply_timings,
    load_catalog,
    measure_local_timings,
    simulate,
    ttfb_decompose,
)
from .vectors import derive_initial_block, verify_text

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

_SIZE = re.compile(r"^\s*(\d+)\s*([KMG]i?B?|B)?\s*$", re.IGNORECASE)
_UNITS = {"": 1, "b": 1, "k": 1000, "kb": 1000, "kib": 1 << 10, "m": 10**6, "mb": 10**6,
          "mib": MiB, "g": 10**9, "gb": 10**9, "gib": GiB, "ki": 1 << 10, "mi": MiB, "gi": GiB}


def parse_size(text: str) -> int:
    """``"256MiB"`` -> 268435456; plain integers are bytes."""
    m = _SIZE.match(text)
    if not m or (m.group(2) or "").lower() not in _UNITS:
        raise argparse.ArgumentTypeError(f"not a byte size: {text!r}")
    return int(m.group(1)) * _UNITS[(m.group(2) or "").lower()]


def parse_window(text: str) -> Optional[int]:
    if text.lower() in ("none", "unlimited", "inf"):
        return None
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a window size: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("window must be >= 1")
    return value


def parse_mtus(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated MTU list: {text!r}") from None


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=False) + "\n")


# -- subcommands --------------------------------------------------------------


def cmd_suites(args) -> int:
    suites = [
        {
            "suite": s.name,
            "key_len": s.key_len,
            "iv_len": s.iv_len,
            "tag_len": s.tag_len,
            "default_hp_alg": s.default_hp_alg.value,
        }
        for s in SUITES.values()
    ]
    hps = [
        {"hp_alg": h.name, "key_len": {s.name: h.hp_key_len(s) for s in SUITES.values()}}
        for h in HP_ALGS.values()
    ]
    if args.json:
        _emit({"suites": suites, "hp_algs": hps, "backend": kernel.BACKEND})
        return EXIT_OK
    print(f"{'suite':<20}{'key':>5}{'iv':>5}{'tag':>5}  default hp")
    for s in suites:
        print(f"{s['suite']:<20}{s['key_len']:>5}{s['iv_len']:>5}{s['tag_len']:>5}  {s['default_hp_alg']}")
    print()
    print(f"{'hp_alg':<16}hp key bytes per suite")
    for h in hps:
        keys = " ".join(f"{k}={v}" for k, v in h["key_len"].items())
        print(f"{h['hp_alg']:<16}{keys}")
    print(f"\nkernel backend: {kernel.BACKEND}")
    return EXIT_OK


def cmd_vectors_verify(args) -> int:
    try:
        with open(args.path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    vectors, checks = verify_text(text)
    if not vectors:
        print("warning: 0 vectors in file", file=sys.stderr)
        print("0 vectors, 0 checks: pass")
        return EXIT_OK
    failed = [c for c in checks if not c.ok]
    for c in checks:
        if c.ok:
            print(f"PASS {c.qualified}")
        else:
            print(f"FAIL {c.qualified}: expected {c.expected} got {c.actual}")
    print(f"{len(vectors)} vectors, {len(checks)} checks, {len(failed)} failed")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_vectors_derive(args) -> int:
    try:
        dcid = bytes.fromhex(args.dcid)
    except ValueError:
        print(f"error: --dcid is not hex: {args.dcid!r}", file=sys.stderr)
        return EXIT_USAGE
    block = derive_initial_block(dcid)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(block)
    else:
        sys.stdout.write(block)
    return EXIT_OK


def _bench_config(args, mtu=None) -> BenchConfig:
    return BenchConfig(
        suite=args.suite,
        hp_alg=args.hp,
        mtu=mtu if mtu is not None else args.mtu,
        total_bytes=args.bytes,
        pn_len=args.pn_len,
        repetitions=args.reps,
        direction=args.direction,
        warmup_packets=args.warmup,
        backend=args.backend,
    )


def _bench_output(args, reports) -> None:
    if args.csv:
        if args.csv == "-":
            write_csv(reports, sys.stdout)
        else:
            with open(args.csv, "w", encoding="utf-8", newline="") as fh:
                write_csv(reports, fh)
    if args.json:
        _emit([r.summary() for r in reports])
    elif args.csv != "-":
        print(f"{'suite':<20}{'hp_alg':<14}{'mtu':>6}{'packets':>10}{'MB/s':>10}{'pp%':>8}{'hp%':>8}")
        for r in reports:
            c = r.config
            print(
                f"{c.suite_name:<20}{c.hp_name:<14}{c.mtu:>6}{r.packets:>10}"
                f"{r.goodput / 1e6:>10.1f}{100 * r.pp_share:>8.2f}{100 * r.hp_share:>8.2f}"
            )
        print(f"backend: {reports[0].backend}, median of {reports[0].config.repetitions} repetitions")


def cmd_bench(args) -> int:
    _bench_output(args, [run_throughput(_bench_config(args))])
    return EXIT_OK


def cmd_sweep(args) -> int:
    _bench_output(args, mtu_sweep(_bench_config(args, mtu=args.mtus[0]), args.mtus))
    return EXIT_OK


def cmd_simulate(args) -> int:
    catalog = load_catalog(args.catalog)
    if args.timings:
        with open(args.timings, encoding="utf-8") as fh:
            catalog = apply_timings(catalog, json.load(fh))
    if args.measure_timings:
        catalog = apply_timings(catalog, measure_local_timings())
    kem = catalog.kem(args.kem)
    sig = catalog.sig(args.sig)
    client = EndpointPolicy(initial_mtu=args.mtu, ack_every=args.ack_every)
    server = EndpointPolicy(
        pn_window=args.pn_window,
        amp_factor=args.amp_factor,
        retry_enabled=args.retry,
        initial_mtu=args.mtu,
    )
    profile = HandshakeProfile(
        kem=kem,
        sig=sig,
        client_policy=client,
        server_policy=server,
        rtt=args.rtt,
        processing_delay=args.processing_delay,
    )
    report = simulate(profile)
    out = report.to_dict()
    out.update(
        kem=kem.name,
        sig=sig.name,
        kem_pk_size=kem.pk_size,
        kem_ct_size=kem.ct_size,
        sig_size=sig.sig_size,
        cert_chain_size=sig.cert_chain_size,
        rtt=args.rtt,
        mtu=args.mtu,
        pn_window=args.pn_window,
    )
    parts = ttfb_decompose(report, profile) if report.ttfb is not None else {}
    for key in ("network", "crypto_compute", "stall"):
        out[f"ttfb_{key}"] = parts.get(key)
    _emit(out)
    return EXIT_OK


def cmd_catalog(args) -> int:
    catalog = load_catalog(args.catalog)
    kems = [
        {"name": k.name, "nist_level": k.nist_level, "pk_size": k.pk_size, "ct_size": k.ct_size}
        for k in catalog.kems.values()
    ]
    sigs = [
        {
            "name": s.name,
            "nist_level": s.nist_level,
            "pk_size": s.pk_size,
            "sig_size": s.sig_size,
            "cert_chain_size": s.cert_chain_size,
        }
        for s in catalog.sigs.values()
    ]
    if args.json:
        _emit({"kems": kems, "sigs": sigs})
        return EXIT_OK
    print(f"{'KEM':<24}{'level':>6}{'pk':>8}{'ct':>8}")
    for k in kems:
        print(f"{k['name']:<24}{k['nist_level']:>6}{k['pk_size']:>8}{k['ct_size']:>8}")
    print()
    print(f"{'signature':<24}{'level':>6}{'pk':>8}{'sig':>8}{'cert':>8}")
    for s in sigs:
        print(
            f"{s['name']:<24}{s['nist_level']:>6}{s['pk_size']:>8}{s['sig_size']:>8}{s['cert_chain_size']:>8}"
        )
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _bench_flags(p) -> None:
    p.add_argument("--suite", default="AES_128_GCM", choices=[s.value for s in SuiteId])
    p.add_argument("--hp", default=None, choices=[h.value for h in HpId],
                   help="mask algorithm (default: the suite's own)")
    p.add_argument("--bytes", type=parse_size, default=256 * MiB,
                   help="stream volume, e.g. 256MiB or 8GiB (default 256MiB)")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--pn-len", type=int, default=2, choices=(1, 2, 3, 4))
    p.add_argument("--direction", default="both", choices=("seal", "open", "both"))
    p.add_argument("--warmup", type=int, default=2048, help="warmup packets")
    p.add_argument("--backend", default=None, choices=sorted(kernel.backends()))
    p.add_argument("--json", action="store_true", help="print a JSON summary")
    p.add_argument("--csv", metavar="PATH", help="write per-repetition rows ('-' for stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qcl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("suites", help="list AEAD suites and header-protection algorithms")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_suites)

    p = sub.add_parser("vectors", help="check or derive hex test vectors")
    vsub = p.add_subparsers(dest="action", required=True)
    v = vsub.add_parser("verify", help="check every vector in a file")
    v.add_argument("path")
    v.set_defaults(func=cmd_vectors_verify)
    v = vsub.add_parser("derive", help="derive Initial secrets and keys for a DCID")
    v.add_argument("--dcid", required=True, help="client DCID in hex")
    v.add_argument("--out", metavar="PATH")
    v.set_defaults(func=cmd_vectors_derive)

    p = sub.add_parser("bench", help="throughput of one suite/hp combination")
    _bench_flags(p)
    p.add_argument("--mtu", type=int, default=1500)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="throughput across MTUs")
    _bench_flags(p)
    p.add_argument("--mtu", "--mtus", dest="mtus", type=parse_mtus, default=[1500, 3000, 6000],
                   help="comma-separated MTUs (default 1500,3000,6000)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="model one handshake and print its report as JSON")
    p.add_argument("--kem", default="X25519", help="KEM name or hybrid a+b")
    p.add_argument("--sig", default="RSA-2048")
    p.add_argument("--rtt", type=float, default=0.0, help="round-trip time in ms")
    p.add_argument("--mtu", type=int, default=1200, help="initial MTU of both endpoints")
    p.add_argument("--pn-window", type=parse_window, default=None,
                   help="server packet-number window (default unlimited)")
    p.add_argument("--retry", action="store_true", help="server uses Retry when the budget binds")
    p.add_argument("--amp-factor", type=float, default=3.0)
    p.add_argument("--ack-every", type=int, default=2)
    p.add_argument("--processing-delay", type=float, default=0.0, help="extra ms of processing")
    p.add_argument("--timings", metavar="PATH", help='JSON {"name": {"t_sign": ms, ...}}')
    p.add_argument("--measure-timings", action="store_true",
                   help="benchmark the classical algorithms locally and use those timings")
    p.add_argument("--catalog", metavar="PATH", help="catalog file (default $QCL_CATALOG or bundled)")
    p.add_argument("--json", action="store_true", help="accepted for symmetry; output is always JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("catalog", help="list KEM and signature parameter sizes")
    p.add_argument("--catalog", metavar="PATH")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_catalog)
    return parser


def _msg(exc: Exception) -> str:
    # KeyError subclasses repr() their message; show it plain.
    return str(exc.args[0]) if exc.args else type(exc).__name__


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, UnknownAlgorithm, MtuTooSmall) as exc:
        print(f"error: {_msg(exc)}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {_msg(exc)}", file=sys.stderr)
        return EXIT_USAGE
    except QclError as exc:
        print(f"error: {_msg(exc)}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
