"""Parameter/FLOP accounting over layer graphs, report emission, and a CPU
micro-benchmark for latency-trend checks.

FLOP convention: one multiply-accumulate = 2 FLOPs, calibrated against the
published 8.7 GFLOPs figure for the YOLOv8-N baseline at 640x640.  Counts
run through the detect head's final convolutions; postprocessing is
excluded (stated in every report footer).
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .zoo import LayerGraph, check_resolution

FOOTER = ("MAC=2 FLOPs; BN/activation/pooling included; counts run through "
          "the detect head convs, postprocessing excluded.")


@dataclass
class CostReport:
    """Per-layer and total parameter/FLOP counts for one graph."""

    model: str
    resolution: int
    rows: list = field(default_factory=list)
    total_params: int = 0
    total_flops: int = 0
    baseline: str | None = None
    total_deltas: dict = field(default_factory=dict)

    @property
    def params_m(self) -> float:
        return self.total_params / 1e6

    @property
    def gflops(self) -> float:
        return self.total_flops / 1e9

    def to_dict(self) -> dict:
        d = {"schema": 1, "model": self.model, "resolution": self.resolution,
             "rows": self.rows, "total_params": self.total_params,
             "total_flops": self.total_flops, "notes": FOOTER}
        if self.baseline is not None:
            d["baseline"] = self.baseline
            d["total_deltas"] = self.total_deltas
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CostReport":
        r = cls(model=d["model"], resolution=d["resolution"], rows=d["rows"],
                total_params=d["total_params"], total_flops=d["total_flops"],
                baseline=d.get("baseline"), total_deltas=d.get("total_deltas", {}))
        return r


def count_costs(graph: LayerGraph, resolution: int = 640) -> CostReport:
    """Closed-form per-layer parameter and FLOP counts at a resolution."""
    check_resolution(resolution)
    rows = graph.trace(resolution)
    report = CostReport(model=graph.name, resolution=resolution, rows=rows)
    report.total_params = sum(r["params"] for r in rows)
    report.total_flops = sum(r["flops"] for r in rows)
    return report


def _pct(ours: float, base: float) -> float:
    return (ours - base) / base * 100.0 if base else 0.0


def compare(ours: CostReport, base: CostReport) -> CostReport:
    """Annotate ``ours`` with percentage deltas against ``base``.

    Rows are aligned by index where kinds match; totals are always
    compared.  Negative deltas mean cheaper than the baseline.
    """
    if ours.resolution != base.resolution:
        raise ValueError(f"resolution mismatch: {ours.resolution} vs {base.resolution}")
    out = CostReport(model=ours.model, resolution=ours.resolution,
                     total_params=ours.total_params, total_flops=ours.total_flops,
                     baseline=base.model)
    for i, row in enumerate(ours.rows):
        row = dict(row)
        if i < len(base.rows) and base.rows[i]["kind"] == row["kind"]:
            row["params_delta_pct"] = round(_pct(row["params"], base.rows[i]["params"]), 2)
            row["flops_delta_pct"] = round(_pct(row["flops"], base.rows[i]["flops"]), 2)
        out.rows.append(row)
    out.total_deltas = {
        "params_pct": round(_pct(ours.total_params, base.total_params), 2),
        "flops_pct": round(_pct(ours.total_flops, base.total_flops), 2),
    }
    return out


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------

@dataclass
class BenchResult:
    """Median forward wall time for one graph at one resolution."""

    model: str
    resolution: int
    repeats: int
    median_s: float
    iqr_s: float
    mode: str = "serial-reference"

    def to_dict(self) -> dict:
        return {"schema": 1, "model": self.model, "resolution": self.resolution,
                "repeats": self.repeats, "median_s": self.median_s,
                "iqr_s": self.iqr_s, "mode": self.mode}


def bench_forward(graph: LayerGraph, resolution: int, repeats: int = 20,
                  seed: int = 0, warmup: int = 2) -> BenchResult:
    """Median CPU wall time of a single-image forward pass.

    Runs in eval mode with single-precision weights; warmup runs are
    excluded from the statistics.
    """
    if repeats < 20:
        raise ValueError("benchmark needs at least 20 repeats")
    check_resolution(resolution)
    if not graph._materialized:
        graph.materialize(seed=seed, dtype=np.float32)
    graph.train(False)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 3, resolution, resolution)).astype(np.float32)
    for _ in range(warmup):
        graph.forward(x)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        graph.forward(x)
        times.append(time.perf_counter() - t0)
    q25, med, q75 = np.percentile(times, [25, 50, 75])
    return BenchResult(model=graph.name, resolution=resolution, repeats=repeats,
                       median_s=float(med), iqr_s=float(q75 - q25))


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

def _fmt_delta(pct) -> str:
    return f"({pct:+.1f}%)" if pct is not None else ""


def emit_report(reports, fmt: str = "markdown") -> str:
    """Render one or more CostReports as json, csv, or a markdown table."""
    if isinstance(reports, CostReport):
        reports = [reports]
    if fmt == "json":
        return json.dumps({"schema": 1, "reports": [r.to_dict() for r in reports]},
                          indent=2, sort_keys=True)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["model", "resolution", "layer_id", "kind", "stage",
                    "params", "flops"])
        for r in reports:
            for row in r.rows:
                w.writerow([r.model, r.resolution, row["id"], row["kind"],
                            row["stage"], row["params"], row["flops"]])
            w.writerow([r.model, r.resolution, "total", "", "",
                        r.total_params, r.total_flops])
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| Model | #Param.(M) | FLOPs(G) |",
                 "|---|---|---|"]
        for r in reports:
            pd = r.total_deltas.get("params_pct") if r.baseline else None
            fd = r.total_deltas.get("flops_pct") if r.baseline else None
            lines.append(f"| {r.model} | {r.params_m:.1f}{_fmt_delta(pd)} "
                         f"| {r.gflops:.1f}{_fmt_delta(fd)} |")
        lines.append("")
        lines.append(f"_{FOOTER}_")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}; expected json, csv, or markdown")


def parse_report_json(text: str) -> list[CostReport]:
    d = json.loads(text)
    return [CostReport.from_dict(r) for r in d["reports"]]
