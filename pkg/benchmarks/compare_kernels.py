"""Compiled vs pure-Python protection kernel on the same stream.

    python3 benchmarks/compare_kernels.py [--bytes 32MiB] [--reps 3] [--json]

Both backends seal and open every packet of the stream; the table shows
goodput per backend and the speedup of the compiled kernel.
"""

from __future__ import annotations

import argparse
import json
import sys

from qcl import kernel
from qcl.bench_harness import BenchConfig, run_throughput
from qcl.cli import parse_size

COMBOS = [
    ("NOOP", "OFF"),
    ("AES_128_GCM", "AES_ECB"),
    ("AES_256_GCM", "AES_ECB"),
    ("CHACHA20_POLY1305", "CHACHA20_RAW"),
    ("AES_128_GCM", "CHACHA20_RAW"),
]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bytes", type=parse_size, default=parse_size("32MiB"))
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--mtu", type=int, default=1500)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)

    available = kernel.backends()
    if "compiled" not in available:
        print("compiled kernel not built; only the pure backend is available", file=sys.stderr)
    rows = []
    for suite, hp in COMBOS:
        row = {"suite": suite, "hp_alg": hp}
        for name in sorted(available):
            cfg = BenchConfig(suite, hp, mtu=args.mtu, total_bytes=args.bytes,
                              repetitions=args.reps, backend=name)
            row[name] = run_throughput(cfg).goodput
        if "compiled" in row:
            row["speedup"] = row["compiled"] / row["pure"]
        rows.append(row)

    if args.json:
        print(json.dumps(rows, indent=2))
        return 0
    print(f"{'suite':<20}{'hp_alg':<14}{'pure MB/s':>11}{'compiled MB/s':>15}{'speedup':>9}")
    for r in rows:
        comp = f"{r['compiled'] / 1e6:>15.1f}{r['speedup']:>8.1f}x" if "compiled" in r else ""
        print(f"{r['suite']:<20}{r['hp_alg']:<14}{r['pure'] / 1e6:>11.1f}{comp}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
