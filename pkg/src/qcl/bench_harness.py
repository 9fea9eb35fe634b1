"""Throughput microbenchmark for the protection pipeline.

A synthetic payload stream is split into MTU-sized short-header packets and
pushed through the kernel (compiled when available).  The kernel times the
framing, packet-protection and header-protection stages per batch of
packets, so clock overhead stays far below the measured work.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import random
import statistics
import time
from array import array
from dataclasses import dataclass, field
from typing import Optional

from . import kernel
from .crypto_suites import HpLike, SuiteLike, hp_params, suite_params
from .errors import PayloadTooShortForSample
from .key_schedule import derive_packet_keys
from .packet_protection import packetize

MiB = 1 << 20
GiB = 1 << 30
DCID_LEN = 8
SHORT_HEADER_LEN = 1 + DCID_LEN
PATTERN_LEN = MiB
BENCH_SECRET = bytes(range(32))
DIRECTIONS = ("seal", "open", "both")
# Payload bytes per timed batch: small enough that the three per-batch
# buffers stay in L2 at any MTU, large enough that clock reads cost ~0.1%.
BATCH_BYTES = 128 * 1024
CSV_COLUMNS = ("suite", "hp_alg", "mtu", "rep", "goodput_Bps", "pp_ns", "hp_ns", "packets")


@dataclass(frozen=True)
class BenchConfig:
    suite: SuiteLike = "AES_128_GCM"
    hp_alg: Optional[HpLike] = None  # suite's native mask algorithm
    mtu: int = 1500
    total_bytes: int = 256 * MiB
    pn_len: int = 2
    warmup_packets: int = 2048
    warmup_seconds: float = 0.5
    repetitions: int = 5
    direction: str = "both"
    batch: Optional[int] = None  # packets per timed batch; None sizes it from BATCH_BYTES
    seed: int = 0
    backend: Optional[str] = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if not 1 <= self.pn_len <= 4:
            raise ValueError("pn_len must be 1..4")
        if self.batch is not None and self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.total_bytes < 1:
            raise ValueError("total_bytes must cover at least one packet")
        if self.warmup_packets < 0 or self.warmup_seconds < 0:
            raise ValueError("warmup must be non-negative")

    @property
    def suite_name(self) -> str:
        return suite_params(self.suite).name

    @property
    def hp_name(self) -> str:
        return self.resolved_hp().name

    @property
    def effective_batch(self) -> int:
        if self.batch is not None:
            return self.batch
        return min(1024, max(8, BATCH_BYTES // self.mtu))

    def resolved_hp(self):
        suite = suite_params(self.suite)
        return hp_params(suite.default_hp_alg if self.hp_alg is None else self.hp_alg)


@dataclass(frozen=True)
class RepResult:
    rep: int
    elapsed_ns: int
    pp_ns: int
    hp_ns: int
    framing_ns: int
    packets: int
    payload_bytes: int

    @property
    def goodput(self) -> float:
        return self.payload_bytes * 1e9 / self.elapsed_ns if self.elapsed_ns > 0 else 0.0


@dataclass(frozen=True)
class BenchReport:
    config: BenchConfig
    goodput: float  # median over repetitions, bytes/s
    goodput_mean: float
    pp_time: float  # median ns per repetition
    hp_time: float
    framing_time: float
    pp_share: float
    hp_share: float
    packets: int
    payload_bytes: int
    backend: str
    reps: list = field(default_factory=list)

    def summary(self) -> dict:
        c = self.config
        return {
            "suite": c.suite_name,
            "hp_alg": c.hp_name,
            "mtu": c.mtu,
            "total_bytes": c.total_bytes,
            "direction": c.direction,
            "repetitions": c.repetitions,
            "backend": self.backend,
            "packets": self.packets,
            "payload_bytes": self.payload_bytes,
            "goodput_Bps_median": self.goodput,
            "goodput_Bps_mean": self.goodput_mean,
            "pp_ns_median": self.pp_time,
            "hp_ns_median": self.hp_time,
            "framing_ns_median": self.framing_time,
            "pp_share": self.pp_share,
            "hp_share": self.hp_share,
        }


def stream_sizes(cfg: BenchConfig) -> list:
    """Per-packet payload sizes: packetize, then fix up a too-short tail.

    With header protection on, a packet needs ``4 - pn_len`` payload bytes
    so the 16-byte sample exists.  A shorter final packet borrows the
    missing bytes from its predecessor, which keeps the packet count and
    byte total identical to ``packetize``.
    """
    sizes = packetize(cfg.total_bytes, cfg.mtu, SHORT_HEADER_LEN, cfg.pn_len)
    need = 0 if not cfg.resolved_hp().enabled else max(0, 4 - cfg.pn_len)
    if sizes and sizes[-1] < need:
        if len(sizes) == 1:
            raise PayloadTooShortForSample(
                f"a {cfg.total_bytes}-byte stream cannot fill a header-protection sample"
            )
        short = need - sizes[-1]
        sizes[-2] -= short
        sizes[-1] = need
    return sizes


def _pattern(seed: int, min_len: int) -> bytes:
    return random.Random(seed).randbytes(max(PATTERN_LEN, min_len))


class _Run:
    """Prepared state for one config: keys, protectors, stream layout."""

    def __init__(self, cfg: BenchConfig):
        suite = suite_params(cfg.suite)
        hp = cfg.resolved_hp()
        self.cfg = cfg
        self.sizes_list = stream_sizes(cfg)
        self.sizes = array("I", self.sizes_list)
        self.pattern = _pattern(cfg.seed, max(self.sizes_list))
        keys = derive_packet_keys(BENCH_SECRET, suite, hp)
        self.mod = kernel.backends()[cfg.backend] if cfg.backend else kernel
        self.tx = kernel.make_protector(suite, hp, keys, backend=cfg.backend)
        self.rx = kernel.make_protector(suite, hp, keys, backend=cfg.backend)
        self.reps = []

    def _stream(self, sizes, count_seal, do_open):
        cfg = self.cfg
        return self.mod.run_stream(
            self.tx, self.rx, sizes, self.pattern, DCID_LEN, cfg.pn_len,
            count_seal, do_open, cfg.effective_batch,
        )

    def warmup(self) -> None:
        # Repeat the warmup slice until the clock has settled; the first
        # second of a process often runs at a lower CPU frequency.
        if not self.cfg.warmup_packets:
            return
        warm = array("I", self.sizes_list[: self.cfg.warmup_packets])
        deadline = time.perf_counter() + self.cfg.warmup_seconds
        while True:
            self._stream(warm, True, True)
            if time.perf_counter() >= deadline:
                break

    def rep(self) -> RepResult:
        out = self._stream(self.sizes, self.cfg.direction != "open", self.cfg.direction != "seal")
        r = RepResult(
            rep=len(self.reps),
            elapsed_ns=out["elapsed_ns"],
            pp_ns=out["pp_ns"],
            hp_ns=out["hp_ns"],
            framing_ns=out["framing_ns"],
            packets=out["packets"],
            payload_bytes=out["payload_bytes"],
        )
        self.reps.append(r)
        return r

    def report(self) -> BenchReport:
        reps = self.reps
        total_elapsed = sum(r.elapsed_ns for r in reps)
        return BenchReport(
            config=self.cfg,
            goodput=statistics.median(r.goodput for r in reps),
            goodput_mean=statistics.fmean(r.goodput for r in reps),
            pp_time=statistics.median(r.pp_ns for r in reps),
            hp_time=statistics.median(r.hp_ns for r in reps),
            framing_time=statistics.median(r.framing_ns for r in reps),
            pp_share=sum(r.pp_ns for r in reps) / total_elapsed if total_elapsed else 0.0,
            hp_share=sum(r.hp_ns for r in reps) / total_elapsed if total_elapsed else 0.0,
            packets=len(self.sizes_list),
            payload_bytes=reps[0].payload_bytes,
            backend=self.mod.BACKEND,
            reps=list(reps),
        )


def run_throughput(cfg: BenchConfig) -> BenchReport:
    """Time ``cfg.repetitions`` passes of the whole stream.

    Raises MtuTooSmall if the MTU leaves no payload room.
    """
    run = _Run(cfg)
    run.warmup()
    for _ in range(cfg.repetitions):
        run.rep()
    return run.report()


def run_interleaved(cfgs) -> list:
    """Like ``[run_throughput(c) for c in cfgs]`` but alternating repetitions.

    Round-robin order spreads slow drifts of the host (frequency scaling,
    noisy neighbours) evenly over the configs being compared.  Every config
    runs ``max(c.repetitions)`` times.
    """
    runs = [_Run(c) for c in cfgs]
    for r in runs:
        r.warmup()
    for _ in range(max(c.repetitions for c in cfgs)):
        for r in runs:
            r.rep()
    return [r.report() for r in runs]


def paired_ratio(a: BenchReport, b: BenchReport) -> float:
    """Median over rounds of ``a`` goodput / ``b`` goodput.

    Meant for reports from one ``run_interleaved`` call, where round *i* of
    both ran back to back; host slowdowns that hit both cancel out.
    """
    n = min(len(a.reps), len(b.reps))
    if n == 0:
        raise ValueError("reports carry no repetitions")
    return statistics.median(a.reps[i].goodput / b.reps[i].goodput for i in range(n))


def attribute_cost(report: BenchReport) -> dict:
    return {"pp_share": report.pp_share, "hp_share": report.hp_share}


def mtu_sweep(cfg: BenchConfig, mtus) -> list:
    return run_interleaved([dataclasses.replace(cfg, mtu=m) for m in mtus])


def csv_rows(reports) -> list:
    rows = []
    for rep in reports:
        c = rep.config
        for r in rep.reps:
            rows.append(
                {
                    "suite": c.suite_name,
                    "hp_alg": c.hp_name,
                    "mtu": c.mtu,
                    "rep": r.rep,
                    "goodput_Bps": f"{r.goodput:.1f}",
                    "pp_ns": r.pp_ns,
                    "hp_ns": r.hp_ns,
                    "packets": r.packets,
                }
            )
    return rows


def write_csv(reports, fh) -> None:
    w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(csv_rows(reports))


def to_csv(reports) -> str:
    buf = io.StringIO()
    write_csv(reports, buf)
    return buf.getvalue()
