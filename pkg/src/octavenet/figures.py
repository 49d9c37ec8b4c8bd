"""Matplotlib rendering of cost and latency reports to PNG files.

All figures are drawn on the Agg backend so the CLI works headless; every
function takes report objects and a target path and returns the path it
wrote.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_BAR_COLORS = ("#4878b0", "#d1605e")


def cost_bars(reports, path: str, title: str = "Model cost") -> str:
    """Grouped bar chart: parameters (M) and FLOPs (G) per model."""
    names = [r.model for r in reports]
    params = [r.params_m for r in reports]
    flops = [r.gflops for r in reports]
    x = range(len(names))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(max(7, 1.6 * len(names)), 3.6))
    ax1.bar(x, params, color=_BAR_COLORS[0])
    ax1.set_ylabel("#Param. (M)")
    ax2.bar(x, flops, color=_BAR_COLORS[1])
    ax2.set_ylabel("FLOPs (G)")
    for ax in (ax1, ax2):
        ax.set_xticks(list(x))
        ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
        ax.grid(axis="y", alpha=0.3)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def stage_breakdown(report, path: str) -> str:
    """Stacked per-stage FLOPs share for one model."""
    stages: dict[str, int] = {}
    for row in report.rows:
        stages[row["stage"]] = stages.get(row["stage"], 0) + row["flops"]
    names = list(stages)
    vals = [stages[s] / 1e9 for s in names]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.bar(names, vals, color=_BAR_COLORS[0])
    ax.set_ylabel("FLOPs (G)")
    ax.set_title(f"{report.model} @ {report.resolution}")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def latency_lines(results, path: str) -> str:
    """Median latency vs resolution, one line per model.

    ``results`` is a list of BenchResult; models are grouped by name.
    """
    by_model: dict[str, list] = {}
    for r in results:
        by_model.setdefault(r.model, []).append(r)
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for name, rs in by_model.items():
        rs = sorted(rs, key=lambda r: r.resolution)
        ax.plot([r.resolution for r in rs], [1e3 * r.median_s for r in rs],
                marker="o", label=name)
    ax.set_xlabel("input resolution")
    ax.set_ylabel("median forward time (ms)")
    ax.set_title("serial reference latency")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
