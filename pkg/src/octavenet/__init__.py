"""Cross-frequency YOLO building blocks with cost-analysis tooling."""

from . import analysis, autograd, blocks, octave, tensor, zoo
from .analysis import BenchResult, CostReport, bench_forward, compare, count_costs, emit_report
from .octave import OctaveConv, OctaveConvParams, OctaveTensor, cfp_merge, cfp_split, octave_conv
from .zoo import LayerGraph, ScaleSpec, build_model, build_octave_yolo, build_yolov8

__version__ = "0.1.0"
