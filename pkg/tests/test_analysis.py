"""Analyzer tests: closed-form counts, resolution covariance, comparisons,
report round-trips, and the micro-benchmark plumbing."""

import csv
import io

import numpy as np
import pytest

from octavenet import autograd as ag
from octavenet.analysis import (CostReport, bench_forward, compare,
                                count_costs, emit_report, parse_report_json)
from octavenet.costmodel import CostAccumulator, CountTensor
from octavenet.layers import ConvLayer
from octavenet.zoo import build_octave_yolo, build_yolov8


class TestClosedForm:
    def test_single_conv_counts(self):
        # 3x3, c_in 16, c_out 32, 64x64 output, no bias
        layer = ConvLayer(16, 32, 3)
        acc = CostAccumulator()
        layer(CountTensor((1, 16, 64, 64), acc))
        assert layer.param_count() == 4608
        assert acc.flops == 2 * 9 * 16 * 32 * 64 * 64 == 37_748_736

    def test_conv_count_equals_mac_oracle(self):
        # the analyzer's conv FLOPs are exactly 2x the multiply-accumulate
        # count implied by the loop oracle's innermost trip count
        c_in, c_out, k, size, stride, pad = 3, 5, 3, 8, 2, 1
        out = (size + 2 * pad - k) // stride + 1
        macs = k * k * c_in * c_out * out * out
        layer = ConvLayer(c_in, c_out, k, stride)
        acc = CostAccumulator()
        layer(CountTensor((1, c_in, size, size), acc))
        assert acc.flops == 2 * macs

    def test_bias_counted(self):
        layer = ConvLayer(4, 4, 1, bias=True)
        assert layer.param_count() == 4 * 4 + 4

    def test_resolution_covariance(self):
        # fully convolutional: 2x the side means exactly 4x the FLOPs
        g = build_yolov8("n")
        lo = count_costs(g, 320)
        hi = count_costs(g, 640)
        assert hi.total_flops == 4 * lo.total_flops
        assert hi.total_params == lo.total_params

    def test_attention_breaks_quadratic_scaling(self):
        # FSSA's token-token matmuls grow quartically, so the octave model
        # scales slightly faster than 4x
        g = build_octave_yolo("n")
        lo = count_costs(g, 320)
        hi = count_costs(g, 640)
        assert hi.total_flops > 4 * lo.total_flops


class TestCompare:
    def test_self_compare_is_zero(self):
        r = count_costs(build_yolov8("n"), 640)
        d = compare(r, r)
        assert d.total_deltas == {"params_pct": 0.0, "flops_pct": 0.0}
        assert all(row["params_delta_pct"] == 0.0 for row in d.rows)

    def test_resolution_mismatch_raises(self):
        g = build_yolov8("n")
        with pytest.raises(ValueError):
            compare(count_costs(g, 320), count_costs(g, 640))

    def test_sign_convention(self):
        # cheaper model reports negative deltas
        ours = count_costs(build_octave_yolo("n"), 640)
        base = count_costs(build_yolov8("n"), 640)
        d = compare(ours, base)
        assert d.total_deltas["params_pct"] < 0
        assert d.total_deltas["flops_pct"] < 0


class TestEmit:
    def make_reports(self):
        base = count_costs(build_yolov8("n"), 640)
        oct_ = compare(count_costs(build_octave_yolo("n"), 640), base)
        return [base, oct_]

    def test_json_roundtrip(self):
        reports = self.make_reports()
        back = parse_report_json(emit_report(reports, "json"))
        for a, b in zip(reports, back):
            assert a.model == b.model
            assert a.total_params == b.total_params
            assert a.total_flops == b.total_flops
            assert a.rows == b.rows
            assert a.total_deltas == b.total_deltas

    def test_csv_column_sums(self):
        reports = self.make_reports()
        rows = list(csv.DictReader(io.StringIO(emit_report(reports, "csv"))))
        for rep in reports:
            body = [r for r in rows if r["model"] == rep.model and r["layer_id"] != "total"]
            total = [r for r in rows if r["model"] == rep.model and r["layer_id"] == "total"][0]
            assert sum(int(r["params"]) for r in body) == int(total["params"]) == rep.total_params
            assert sum(int(r["flops"]) for r in body) == int(total["flops"]) == rep.total_flops

    def test_markdown_five_scale_comparison(self):
        reports = []
        for s in "nsmlx":
            base = count_costs(build_yolov8(s), 640)
            reports += [base, compare(count_costs(build_octave_yolo(s), 640), base)]
        md = emit_report(reports, "markdown")
        body = [l for l in md.splitlines() if l.startswith("| ") and "Model" not in l
                and "---" not in l]
        assert len(body) == 10
        assert "MAC=2 FLOPs" in md

    def test_unknown_format_raises(self):
        with pytest.raises(ValueError):
            emit_report(self.make_reports(), "yaml")

    def test_totals_match_row_sums_invariant(self):
        r = count_costs(build_octave_yolo("s"), 640)
        assert r.total_params == sum(row["params"] for row in r.rows)
        assert r.total_flops == sum(row["flops"] for row in r.rows)


class TestBench:
    def test_repeats_floor(self):
        with pytest.raises(ValueError):
            bench_forward(build_yolov8("n"), 64, repeats=5)

    def test_stability_and_schema(self):
        g = build_yolov8("n")
        a = bench_forward(g, 64, repeats=20)
        b = bench_forward(g, 64, repeats=20)
        assert a.mode == "serial-reference"
        assert a.median_s > 0 and b.median_s > 0
        # stability smoke check: medians of repeated runs stay close
        assert abs(a.median_s - b.median_s) / max(a.median_s, b.median_s) < 0.25
        d = a.to_dict()
        assert d["schema"] == 1 and d["repeats"] == 20

    def test_flops_per_second_finite(self):
        g = build_octave_yolo("n")
        r = bench_forward(g, 64, repeats=20)
        flops = count_costs(g, 64).total_flops
        rate = flops / r.median_s
        assert np.isfinite(rate) and rate > 0
