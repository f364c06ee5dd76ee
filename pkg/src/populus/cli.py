"""Command-line surface: image management, benchmarks, attack demo, bounds.

Exit codes: 0 success, 2 usage error (argparse), 3 crypto/state error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .analysis import event_probability, run_attack_demo, theorem_check, union_bound
from .bench import (
    Workload,
    bench_report_json,
    compute_ge,
    ge_result_json,
    parse_trace_csv,
    run_bench,
    run_bench_parallel,
    write_bench_csv,
    write_ge_csv,
)
from .diskstore import DiskImage
from .errors import PopulusError
from .sectorcipher import SECTOR_BYTES

USAGE_ERROR = 2
STATE_ERROR = 3


def _read_key_file(path: str) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def _emit(args, payload: dict, text_lines):
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for line in text_lines:
            print(line)


def _cmd_init(args) -> int:
    img = DiskImage.create(args.image, _read_key_file(args.key_file), args.sectors, args.pool)
    info = {
        "image": args.image,
        "sectors": img.n_sectors,
        "pool_words": img.pool_words,
        "writes_supported": img.pool_words // 2,
    }
    img.close()
    _emit(args, info, [
        f"initialized {args.image}: {info['sectors']} sectors, "
        f"pool of {info['pool_words']} words ({info['writes_supported']} writes)",
    ])
    return 0


def _cmd_write(args) -> int:
    with open(args.infile, "rb") as f:
        data = f.read()
    if len(data) != SECTOR_BYTES:
        print(f"error: input must be exactly {SECTOR_BYTES} bytes, got {len(data)}",
              file=sys.stderr)
        return USAGE_ERROR
    with DiskImage.open(args.image, _read_key_file(args.key_file)) as img:
        img.write_sector(args.sector, data)
        remaining = img.writes_remaining
    _emit(args, {"image": args.image, "sector": args.sector, "writes_remaining": remaining},
          [f"wrote sector {args.sector} ({remaining} writes remaining)"])
    return 0


def _cmd_read(args) -> int:
    with DiskImage.open(args.image, _read_key_file(args.key_file), readonly=True) as img:
        data = img.read_sector(args.sector)
    with open(args.outfile, "wb") as f:
        f.write(data)
    _emit(args, {"image": args.image, "sector": args.sector, "out": args.outfile},
          [f"read sector {args.sector} into {args.outfile}"])
    return 0


def _cmd_bench_run(args) -> int:
    workload = Workload(args.mode, args.sectors, args.seed)
    if args.threads > 1:
        rows = run_bench_parallel(workload, args.threads, args.workdir)
    else:
        rows = run_bench(workload, args.workdir)
    if args.out:
        write_bench_csv(rows, args.out)
        figure = None
        if not args.no_figure:
            from .figures import figure_path_for, render_bench_figure

            figure = str(render_bench_figure(rows, figure_path_for(args.out)))
    payload = bench_report_json(rows)
    lines = []
    for r in rows:
        mb = r.bytes / (1024 * 1024)
        secs = r.wall_ns / 1e9
        lines.append(
            f"{r.workload}: {mb:.1f} MiB in {secs:.3f} s "
            f"({mb / secs if secs else 0.0:.1f} MB/s), "
            f"ops/sector mul={r.mul // r.sectors} add={r.add // r.sectors} "
            f"io={r.word_io // r.sectors}"
        )
    if args.out:
        payload["csv"] = args.out
        lines.append(f"report: {args.out}")
        if not args.no_figure:
            payload["figure"] = figure
            lines.append(f"figure: {figure}")
    _emit(args, payload, lines)
    return 0


def _cmd_bench_ge(args) -> int:
    result = compute_ge(parse_trace_csv(args.trace))
    if args.out:
        write_ge_csv(result, args.out)
    payload = ge_result_json(result)
    lines = [f"GE[{k}] = {v:.4f}" for k, v in sorted(result.per_size.items())]
    lines.append(f"mean GE = {result.mean:.4f}")
    lines.append(
        f"reference (not asserted): SP = {int(result.sp_reference_watts * 1000)} mW, "
        f"GE typically {result.ge_reference_range[0]:.0%}-{result.ge_reference_range[1]:.0%}"
    )
    if args.out:
        payload["csv"] = args.out
        lines.append(f"report: {args.out}")
        if not args.no_figure:
            from .figures import figure_path_for, render_ge_figure

            figure = str(render_ge_figure(result, figure_path_for(args.out)))
            payload["figure"] = figure
            lines.append(f"figure: {figure}")
    _emit(args, payload, lines)
    return 0


def _cmd_attack_demo(args) -> int:
    out = run_attack_demo(n_pairs=args.pairs, rotate=args.rotate, seed=args.seed)
    verdict = "MATCH" if out.predicted_match else "MISMATCH"
    payload = {
        "pairs": out.pairs,
        "rotate": out.rotate,
        "held_out_prediction": verdict,
        "mismatched_words": out.mismatched_words,
    }
    mode = "rotating keys" if out.rotate else "single shared key"
    lines = [
        f"collected {out.pairs} chosen-plaintext pairs under {mode}",
        "recovered 64x64 transform from the first 64 pairs",
        f"held-out ciphertext prediction: {verdict}"
        + (f" ({out.mismatched_words}/64 words differ)" if out.mismatched_words else ""),
    ]
    _emit(args, payload, lines)
    return 0


def _cmd_bounds(args) -> int:
    t = 1 << args.t_log2
    theta = 1 << args.theta_log2
    verdict = theorem_check(t, theta)
    payload = {
        "t_log2": args.t_log2,
        "theta_log2": args.theta_log2,
        "epsilon_log2": verdict.epsilon_log2,
        "meets_2^-60": verdict.meets_2_neg60,
        "union_bound_log2": union_bound(theta, t),
    }
    lines = [
        f"epsilon <= 2^{verdict.epsilon_log2:.1f} at t = 2^{args.t_log2}, "
        f"theta = 2^{args.theta_log2}",
        f"meets the 2^-60 indistinguishability bar: {verdict.meets_2_neg60}",
    ]
    if args.r_log2 is not None:
        ev = event_probability(1 << args.r_log2)
        payload["event_log2"] = ev
        payload["r_log2"] = args.r_log2
        lines.append(f"P(64 shared-key pairs among 2^{args.r_log2}) = 2^{ev:.1f}")
    _emit(args, payload, lines)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="populus",
        description="User-space Populus disk encryption with analysis and benchmarks",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create an image: key material, IFCR chain, zeroed sectors")
    p.add_argument("--image", required=True)
    p.add_argument("--key-file", required=True)
    p.add_argument("--sectors", type=int, required=True)
    p.add_argument("--pool", type=int, required=True, help="RT-PRN pool size in words (even)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_init)

    p = sub.add_parser("write", help="encrypt one 512-byte sector")
    p.add_argument("--image", required=True)
    p.add_argument("--key-file", required=True)
    p.add_argument("--sector", type=int, required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_write)

    p = sub.add_parser("read", help="decrypt one sector to a file")
    p.add_argument("--image", required=True)
    p.add_argument("--key-file", required=True)
    p.add_argument("--sector", type=int, required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_read)

    bench = sub.add_parser("bench", help="benchmarks and the energy estimator")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)

    p = bench_sub.add_parser("run", help="time a write+read workload")
    p.add_argument("--mode", choices=("populus", "aes_baseline", "none", "dense"),
                   default="populus")
    p.add_argument("--sectors", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1,
                   help="independent images per worker; reports merge by summation")
    p.add_argument("--workdir", default=None, help="scratch dir (default: temp)")
    p.add_argument("--out", default=None, help="CSV report path")
    p.add_argument("--no-figure", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_bench_run)

    p = bench_sub.add_parser("ge", help="energy-saving estimate from a measured trace")
    p.add_argument("--trace", required=True, help="CSV with columns i,conf,ec,et and an SP row")
    p.add_argument("--out", default=None, help="CSV report path")
    p.add_argument("--no-figure", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_bench_ge)

    p = sub.add_parser("attack-demo", help="linear-algebra key recovery, with/without rotation")
    p.add_argument("--pairs", type=int, default=64)
    p.add_argument("--rotate", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_attack_demo)

    p = sub.add_parser("bounds", help="indistinguishability bounds in log2 domain")
    p.add_argument("--t-log2", type=int, required=True)
    p.add_argument("--theta-log2", type=int, required=True)
    p.add_argument("--r-log2", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_bounds)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PopulusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return STATE_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return STATE_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
