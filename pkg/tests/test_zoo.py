"""Model-zoo tests: graph construction, detection-scale outputs,
determinism, and input validation."""

import json

import numpy as np
import pytest

from octavenet.tensor import ShapeError
from octavenet.zoo import (MODEL_NAMES, SCALES, build_model,
                           build_octave_yolo, build_yolov8)


class TestConstruction:
    def test_model_names_cover_both_families(self):
        assert "yolov8-n" in MODEL_NAMES and "octave-yolo-x" in MODEL_NAMES
        assert len(MODEL_NAMES) == 10

    def test_build_model_dispatch(self):
        assert build_model("yolov8-s").name == "yolov8-s"
        assert build_model("octave-yolo-m").name == "octave-yolo-m"

    def test_unknown_model_raises(self):
        with pytest.raises(ValueError):
            build_model("resnet-50")

    def test_ablation_intermediates_are_tagged(self):
        g = build_octave_yolo("n", use_fsb=True, use_dsdown=False, use_fssa=False)
        assert g.name == "octave-yolo-n[f]"
        g = build_octave_yolo("n", use_fsb=True, use_dsdown=True, use_fssa=False)
        assert g.name == "octave-yolo-n[fd]"

    def test_octave_swaps_block_kinds(self):
        kinds_base = {n.kind for n in build_yolov8("n").nodes}
        kinds_oct = {n.kind for n in build_octave_yolo("n").nodes}
        assert "C2f" in kinds_base and "C2f" not in kinds_oct
        assert {"FSB", "DSDown", "FSSA"} <= kinds_oct

    def test_scale_spec_channel_rule(self):
        # width multiplier then snap up to a multiple of 8, capped by ratio
        assert SCALES["n"].channels(64) == 16
        assert SCALES["m"].channels(1024) == 576  # min(1024, 768) * 0.75
        assert SCALES["x"].channels(1024) == 640

    def test_depth_rule(self):
        assert SCALES["n"].repeats(6) == 2
        assert SCALES["l"].repeats(6) == 6
        assert SCALES["m"].repeats(3) == 2


class TestForward:
    @pytest.mark.parametrize("name", ["yolov8-n", "octave-yolo-n"])
    def test_three_detection_scales(self, name):
        g = build_model(name).materialize(seed=0, dtype=np.float32)
        g.train(False)
        outs = g.forward(np.zeros((1, 3, 64, 64), dtype=np.float32))
        assert [o.shape[2] for o in outs] == [8, 4, 2]  # strides 8/16/32
        assert all(o.shape[1] == 144 for o in outs)     # 4*reg_max + nc

    def test_all_ten_graphs_build_and_count(self):
        for name in MODEL_NAMES:
            g = build_model(name)
            assert g.param_count() > 0
            rows = g.trace(64)
            assert sum(r["flops"] for r in rows) > 0

    def test_forward_requires_materialize(self):
        g = build_yolov8("n")
        with pytest.raises(RuntimeError):
            g.forward(np.zeros((1, 3, 64, 64)))

    def test_resolution_must_divide_32(self):
        g = build_yolov8("n").materialize(seed=0, dtype=np.float32)
        with pytest.raises(ShapeError):
            g.forward(np.zeros((1, 3, 60, 60), dtype=np.float32))
        with pytest.raises(ShapeError):
            g.trace(100)

    def test_forward_is_deterministic(self):
        outs = []
        for _ in range(2):
            g = build_octave_yolo("n").materialize(seed=7, dtype=np.float64)
            g.train(False)
            x = np.random.default_rng(1).standard_normal((1, 3, 64, 64))
            outs.append(g.forward(x))
        for a, b in zip(*outs):
            np.testing.assert_array_equal(a, b)


class TestExport:
    def test_json_export_is_stable(self):
        a = json.dumps(build_octave_yolo("s").to_json_dict(64), sort_keys=True)
        b = json.dumps(build_octave_yolo("s").to_json_dict(64), sort_keys=True)
        assert a == b

    def test_json_schema_fields(self):
        d = build_yolov8("n").to_json_dict(64)
        assert d["schema"] == 1
        assert d["scale"] == "n"
        node = d["nodes"][0]
        assert set(node) >= {"id", "kind", "stage", "params", "inputs", "out_shape"}

    def test_param_count_matches_trace(self):
        g = build_yolov8("s")
        rows = g.trace(64)
        assert sum(r["params"] for r in rows) == g.param_count()
