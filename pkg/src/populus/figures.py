"""Report figures rendered to files alongside the delimited output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .bench import GE_REFERENCE_RANGE, SP_REFERENCE_WATTS, GeResult


def figure_path_for(report_path) -> Path:
    return Path(report_path).with_suffix(".png")


def render_bench_figure(rows, path) -> Path:
    path = Path(path)
    fig, (ax_ops, ax_rate) = plt.subplots(1, 2, figsize=(11, 4.2))

    labels = [r.workload for r in rows]
    x = range(len(rows))
    ax_ops.bar(x, [r.mul / r.sectors for r in rows], 0.3, label="mul")
    ax_ops.bar([i + 0.3 for i in x], [r.add / r.sectors for r in rows], 0.3, label="add")
    ax_ops.bar([i + 0.6 for i in x], [r.word_io / r.sectors for r in rows], 0.3, label="word io")
    ax_ops.set_yscale("log")
    ax_ops.set_xticks([i + 0.3 for i in x])
    ax_ops.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax_ops.set_ylabel("modeled ops per sector")
    ax_ops.set_title("operation counts")
    ax_ops.legend(fontsize=8)

    rates = [r.bytes / (1024 * 1024) / (r.wall_ns / 1e9) if r.wall_ns else 0.0 for r in rows]
    ax_rate.bar(x, rates, 0.6, color="tab:green")
    ax_rate.set_xticks(list(x))
    ax_rate.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax_rate.set_ylabel("MB/s")
    ax_rate.set_title("measured throughput")

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_ge_figure(result: GeResult, path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    labels = sorted(result.per_size)
    values = [result.per_size[k] for k in labels]
    ax.axhspan(*GE_REFERENCE_RANGE, color="tab:orange", alpha=0.15,
               label="reference range 50-70%")
    ax.plot(range(len(labels)), values, "o-", label="GE per size")
    ax.axhline(result.mean, color="tab:red", linestyle="--",
               label=f"mean GE = {result.mean:.3f}")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels([str(k) for k in labels], fontsize=8)
    ax.set_xlabel("file size label")
    ax.set_ylabel("estimated energy saving GE")
    ax.set_title(f"energy estimator (reference SP = {SP_REFERENCE_WATTS*1000:.0f} mW)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
