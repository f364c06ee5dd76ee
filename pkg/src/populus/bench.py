"""Throughput/operation-count benchmarking and the energy-saving estimator.

A workload streams sector writes and then verified reads, reporting wall
time per phase together with modeled per-sector operation counts.  The
counts are structural constants, pinned against the instrumented cipher in
the test suite:

  populus       the real path: 500 multiplies + 250 additions + 128 word
                transfers per sector per direction.
  dense         diagnostic: the same transform applied as one naive dense
                64x64 multiply; 4096 + 4032 + 128 = 8256 operations.  The
                composite matrix is input-free precomputation and excluded
                from the timed phase.  Intended for small sector counts.
  aes_baseline  AES-256-CBC over each 512-byte sector (per-sector IV from
                the sector index), standing in for dm-crypt's per-sector
                SPN work.  Counting convention per 16-byte block:
                  AddRoundKey  15 rounds x 16 XORs        = 240 additions
                  MixColumns   13 rounds x 4 cols x 15 XOR = 780 additions
                  MixColumns   13 rounds x 4 cols x 4 xtime = 208 multiplies
                  SubBytes     14 rounds x 16 lookups     = 224 word loads
                plus 16 CBC-chaining XORs per block and the 128 sector word
                transfers.  Any convention that counts S-box lookups, XORs
                and multiplies reaches the same verdict: the real-time
                populus path does ~2% of the baseline's arithmetic.
  none          raw write/read, no cipher; 128 word transfers only.

Energy is never measured here.  compute_ge evaluates the differential
estimator on an externally supplied trace.  With EC_{i,j} / ET_{i,j} the
whole-device energy and time at file size i under configuration j
(1 = no encryption, 2 = baseline, 3 = populus) and SP the idle system
power, the baseline-relative saving at size i is

    GE_i = [(EC_i2 - EC_i3) - SP*(ET_i2 - ET_i3)]
         / [(EC_i2 - EC_i1) - SP*(ET_i2 - ET_i1)]

Reference annotation carried on reports (not asserted): the original
Populus evaluation on a Nexus 4 measured SP ~ 294 mW and mean GE roughly
between 50% and 70%.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
import tempfile
import time
from dataclasses import asdict, dataclass
from pathlib import Path

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .diskstore import DiskImage
from .errors import DegenerateTrace, IoError
from .modring import matn_inv, matn_vec
from .sectorcipher import SECTOR_BYTES, OpCount, dense_composite

MODES = ("populus", "aes_baseline", "none", "dense")

POPULUS_SECTOR_OPS = OpCount(multiplies=500, additions=250, word_io=128)
DENSE_SECTOR_OPS = OpCount(multiplies=4096, additions=4032, word_io=128)
NONE_SECTOR_OPS = OpCount(multiplies=0, additions=0, word_io=128)

_AES_BLOCKS = SECTOR_BYTES // 16
AES_SECTOR_OPS = OpCount(
    multiplies=208 * _AES_BLOCKS,
    additions=(240 + 780 + 16) * _AES_BLOCKS,
    word_io=224 * _AES_BLOCKS + 128,
)

SP_REFERENCE_WATTS = 0.294
GE_REFERENCE_RANGE = (0.5, 0.7)

BENCH_CSV_COLUMNS = ("workload", "mode", "sectors", "bytes", "wall_ns", "mul", "add", "word_io")

BENCH_REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["columns", "rows"],
    "properties": {
        "columns": {"type": "array", "items": {"type": "string"}},
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": list(BENCH_CSV_COLUMNS),
                "properties": {
                    "workload": {"type": "string"},
                    "mode": {"enum": list(MODES)},
                    "sectors": {"type": "integer", "minimum": 0},
                    "bytes": {"type": "integer", "minimum": 0},
                    "wall_ns": {"type": "integer", "minimum": 0},
                    "mul": {"type": "integer", "minimum": 0},
                    "add": {"type": "integer", "minimum": 0},
                    "word_io": {"type": "integer", "minimum": 0},
                },
            },
        },
    },
}


@dataclass
class Workload:
    mode: str
    sectors: int
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.sectors < 1:
            raise ValueError("workload needs at least one sector")


@dataclass
class BenchRow:
    workload: str
    mode: str
    sectors: int
    bytes: int
    wall_ns: int
    mul: int
    add: int
    word_io: int


def _pattern_sector(index: int, seed: int) -> bytes:
    word = (index * 0x9E3779B97F4A7C15 + seed * 0xD1B54A32D192ED03 + 1) & ((1 << 64) - 1)
    return struct.pack("<64Q", *(((word + i) & ((1 << 64) - 1)) for i in range(64)))


def _phase_rows(workload: Workload, ops_per_sector: OpCount, write_ns: int, read_ns: int):
    n = workload.sectors
    tag = f"{workload.mode}-{n}"
    return [
        BenchRow(f"{tag}-write", workload.mode, n, n * SECTOR_BYTES, write_ns,
                 n * ops_per_sector.multiplies, n * ops_per_sector.additions,
                 n * ops_per_sector.word_io),
        BenchRow(f"{tag}-read", workload.mode, n, n * SECTOR_BYTES, read_ns,
                 n * ops_per_sector.multiplies, n * ops_per_sector.additions,
                 n * ops_per_sector.word_io),
    ]


def _bench_populus(workload: Workload, workdir: Path) -> list:
    key = b"bench-key-%d" % workload.seed
    image = DiskImage.create(
        str(workdir / "bench.img"), key, workload.sectors, 2 * workload.sectors
    )
    try:
        n = workload.sectors
        t0 = time.perf_counter_ns()
        for i in range(n):
            image.write_sector(i, _pattern_sector(i, workload.seed))
        write_ns = time.perf_counter_ns() - t0
        t0 = time.perf_counter_ns()
        for i in range(n):
            if image.read_sector(i) != _pattern_sector(i, workload.seed):
                raise IoError(f"verification failed at sector {i}")
        read_ns = time.perf_counter_ns() - t0
    finally:
        image.close()
    return _phase_rows(workload, POPULUS_SECTOR_OPS, write_ns, read_ns)


def _bench_dense(workload: Workload) -> list:
    """Diagnostic dense-multiply path; key composition is untimed."""
    from .keymgr import KeyAllocator, gen_master_key
    from .keystream import PrnStream, derive_hash_key
    from .sectorcipher import sector_to_words

    stream = PrnStream(derive_hash_key(b"bench-dense-%d" % workload.seed))
    master = gen_master_key(stream)
    alloc = KeyAllocator(2 * workload.sectors)
    n = workload.sectors
    forward = []
    for i in range(n):
        forward.append(dense_composite(alloc.allocate_write_key(i, stream, master).mats))
    plain = [sector_to_words(_pattern_sector(i, workload.seed)) for i in range(n)]
    t0 = time.perf_counter_ns()
    cipher = [matn_vec(forward[i], plain[i]) for i in range(n)]
    write_ns = time.perf_counter_ns() - t0
    backward = [matn_inv(m) for m in forward]
    t0 = time.perf_counter_ns()
    recovered = [matn_vec(backward[i], cipher[i]) for i in range(n)]
    read_ns = time.perf_counter_ns() - t0
    if recovered != plain:
        raise IoError("dense-mode verification failed")
    return _phase_rows(workload, DENSE_SECTOR_OPS, write_ns, read_ns)


def _aes_sector_cipher(key: bytes, index: int):
    iv = struct.pack("<QQ", index, 0)
    return Cipher(algorithms.AES(key), modes.CBC(iv))


def _bench_aes(workload: Workload, workdir: Path) -> list:
    key = hashlib.sha3_256(b"bench-aes-%d" % workload.seed).digest()
    path = workdir / "aes.bin"
    n = workload.sectors
    t0 = time.perf_counter_ns()
    with open(path, "wb") as f:
        for i in range(n):
            enc = _aes_sector_cipher(key, i).encryptor()
            f.write(enc.update(_pattern_sector(i, workload.seed)) + enc.finalize())
    write_ns = time.perf_counter_ns() - t0
    t0 = time.perf_counter_ns()
    with open(path, "rb") as f:
        for i in range(n):
            dec = _aes_sector_cipher(key, i).decryptor()
            if dec.update(f.read(SECTOR_BYTES)) + dec.finalize() != _pattern_sector(i, workload.seed):
                raise IoError(f"verification failed at sector {i}")
    read_ns = time.perf_counter_ns() - t0
    return _phase_rows(workload, AES_SECTOR_OPS, write_ns, read_ns)


def _bench_none(workload: Workload, workdir: Path) -> list:
    path = workdir / "plain.bin"
    n = workload.sectors
    t0 = time.perf_counter_ns()
    with open(path, "wb") as f:
        for i in range(n):
            f.write(_pattern_sector(i, workload.seed))
    write_ns = time.perf_counter_ns() - t0
    t0 = time.perf_counter_ns()
    with open(path, "rb") as f:
        for i in range(n):
            if f.read(SECTOR_BYTES) != _pattern_sector(i, workload.seed):
                raise IoError(f"verification failed at sector {i}")
    read_ns = time.perf_counter_ns() - t0
    return _phase_rows(workload, NONE_SECTOR_OPS, write_ns, read_ns)


def run_bench(workload: Workload, workdir=None) -> list:
    """Run one workload; returns a write-phase and a read-phase row."""
    if workload.mode == "dense":
        return _bench_dense(workload)
    if workdir is None:
        with tempfile.TemporaryDirectory(prefix="populus-bench-") as tmp:
            return run_bench(workload, tmp)
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    if workload.mode == "populus":
        return _bench_populus(workload, workdir)
    if workload.mode == "aes_baseline":
        return _bench_aes(workload, workdir)
    return _bench_none(workload, workdir)


def run_bench_parallel(workload: Workload, workers: int, workdir=None) -> list:
    """Split the workload over independent images, one worker process each.

    Reports merge by summation, so wall_ns is summed worker time, not
    end-to-end latency.
    """
    workers = max(1, min(workers, workload.sectors))
    if workers == 1:
        return run_bench(workload, workdir)
    if workdir is None:
        with tempfile.TemporaryDirectory(prefix="populus-bench-") as tmp:
            return run_bench_parallel(workload, workers, tmp)
    from concurrent.futures import ProcessPoolExecutor

    base = workload.sectors // workers
    chunks = [base + (1 if i < workload.sectors % workers else 0) for i in range(workers)]
    parts = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(run_bench, Workload(workload.mode, chunk, workload.seed + i),
                        Path(workdir) / f"worker-{i}")
            for i, chunk in enumerate(chunks)
        ]
        for fut in futures:
            parts.append(fut.result())
    tag = f"{workload.mode}-{workload.sectors}x{workers}"
    merged = []
    for phase, name in ((0, "write"), (1, "read")):
        rows = [p[phase] for p in parts]
        merged.append(BenchRow(
            f"{tag}-{name}", workload.mode,
            sum(r.sectors for r in rows), sum(r.bytes for r in rows),
            sum(r.wall_ns for r in rows), sum(r.mul for r in rows),
            sum(r.add for r in rows), sum(r.word_io for r in rows),
        ))
    return merged


# -- report emission ---------------------------------------------------------


def write_bench_csv(rows, path):
    try:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(BENCH_CSV_COLUMNS)
            for r in rows:
                writer.writerow([r.workload, r.mode, r.sectors, r.bytes,
                                 r.wall_ns, r.mul, r.add, r.word_io])
    except OSError as exc:
        raise IoError(f"cannot write report {path}: {exc}") from exc


def parse_bench_csv(path) -> list:
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if tuple(reader.fieldnames or ()) != BENCH_CSV_COLUMNS:
                raise IoError(f"unexpected bench CSV columns in {path}")
            return [
                BenchRow(
                    row["workload"], row["mode"], int(row["sectors"]), int(row["bytes"]),
                    int(row["wall_ns"]), int(row["mul"]), int(row["add"]), int(row["word_io"]),
                )
                for row in reader
            ]
    except OSError as exc:
        raise IoError(f"cannot read report {path}: {exc}") from exc


def bench_report_json(rows) -> dict:
    return {"columns": list(BENCH_CSV_COLUMNS), "rows": [asdict(r) for r in rows]}


# -- energy estimator ---------------------------------------------------------


@dataclass
class EnergyTrace:
    """Externally measured EC/ET samples plus the idle system power SP."""

    sp: float
    samples: dict  # size label -> {conf: (ec_joules, et_seconds)}


@dataclass
class GeResult:
    per_size: dict  # size label -> GE_i
    mean: float
    sp_reference_watts: float = SP_REFERENCE_WATTS
    ge_reference_range: tuple = GE_REFERENCE_RANGE


def compute_ge(trace: EnergyTrace, eps: float = 1e-9) -> GeResult:
    """The differential saving estimator; exact on traces built from its
    own identities."""
    if not trace.samples:
        raise DegenerateTrace("trace has no samples")
    per = {}
    for label in sorted(trace.samples):
        confs = trace.samples[label]
        missing = [j for j in (1, 2, 3) if j not in confs]
        if missing:
            raise DegenerateTrace(f"size {label} lacks configurations {missing}")
        for j, (ec, et) in confs.items():
            if ec < 0 or et < 0:
                raise DegenerateTrace(f"negative energy/time at size {label} conf {j}")
        ec1, et1 = confs[1]
        ec2, et2 = confs[2]
        ec3, et3 = confs[3]
        num = (ec2 - ec3) - trace.sp * (et2 - et3)
        den = (ec2 - ec1) - trace.sp * (et2 - et1)
        if abs(den) < eps:
            raise DegenerateTrace(f"denominator ~0 at size {label}")
        per[label] = num / den
    return GeResult(per, sum(per.values()) / len(per))


def write_trace_csv(trace: EnergyTrace, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("i", "conf", "ec", "et"))
        writer.writerow(("SP", 0, trace.sp, 0.0))
        for label in sorted(trace.samples):
            for conf in sorted(trace.samples[label]):
                ec, et = trace.samples[label][conf]
                writer.writerow((label, conf, ec, et))


def parse_trace_csv(path) -> EnergyTrace:
    """Columns i,conf,ec,et; one row with i == "SP" carries SP in ec."""
    sp = None
    samples: dict = {}
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if tuple(reader.fieldnames or ()) != ("i", "conf", "ec", "et"):
                raise IoError(f"unexpected trace CSV columns in {path}")
            for row in reader:
                if row["i"] == "SP":
                    sp = float(row["ec"])
                    continue
                samples.setdefault(row["i"], {})[int(row["conf"])] = (
                    float(row["ec"]),
                    float(row["et"]),
                )
    except OSError as exc:
        raise IoError(f"cannot read trace {path}: {exc}") from exc
    if sp is None:
        raise DegenerateTrace(f"trace {path} has no SP row")
    return EnergyTrace(sp, samples)


def ge_result_json(result: GeResult) -> dict:
    return {
        "ge_per_size": {str(k): v for k, v in result.per_size.items()},
        "ge_mean": result.mean,
        "reference": {
            "sp_watts": result.sp_reference_watts,
            "ge_range": list(result.ge_reference_range),
            "note": "original Populus evaluation (Nexus 4, power monitor); not asserted",
        },
    }


def write_ge_csv(result: GeResult, path):
    try:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(("i", "ge"))
            for label in sorted(result.per_size):
                writer.writerow((label, result.per_size[label]))
            writer.writerow(("mean", result.mean))
    except OSError as exc:
        raise IoError(f"cannot write report {path}: {exc}") from exc
