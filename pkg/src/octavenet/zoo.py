"""Declarative construction of the YOLOv8 baselines and their
cross-frequency variants as layer graphs.

The layout mirrors the open YOLOv8 reference: a stride-2 stem, four
[downsample + C2f] stages, SPPF, a PAFPN neck with two up-fusion and two
down-fusion blocks, and a decoupled detect head at strides 8/16/32.  The
variants swap C2f for FSB, stride-2 convs for DS-downsampling, and insert
one FSSA after SPPF.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .blocks import (C2f, Concat, ConvUnit, DSDown, DetectHead, FSB, FSSA,
                     SPPF, Upsample)
from .costmodel import CostAccumulator, CountTensor
from .nn import Module, make_divisible
from .tensor import ShapeError

# Low-frequency channel fraction used by the cross-frequency models.  0.5
# splits evenly; smaller values keep more channels at full resolution.
MODEL_ALPHA = 0.5


@dataclass(frozen=True)
class ScaleSpec:
    """Depth/width/max-channel scaling of one model size."""

    name: str
    depth: float
    width: float
    ratio: float  # max channels = 512 * ratio

    def channels(self, c: int) -> int:
        return make_divisible(min(c, int(512 * self.ratio)) * self.width, 8)

    def repeats(self, n: int) -> int:
        return max(round(n * self.depth), 1)


SCALES = {
    "n": ScaleSpec("n", 1 / 3, 0.25, 2.0),
    "s": ScaleSpec("s", 1 / 3, 0.50, 2.0),
    "m": ScaleSpec("m", 2 / 3, 0.75, 1.5),
    "l": ScaleSpec("l", 1.0, 1.00, 1.0),
    "x": ScaleSpec("x", 1.0, 1.25, 1.0),
}


@dataclass
class GraphNode:
    id: int
    kind: str
    module: Module
    inputs: list  # ids; -1 denotes the network input
    stage: str
    c_out: int


@dataclass
class LayerGraph:
    name: str
    scale: ScaleSpec
    nodes: list = field(default_factory=list)
    outputs: list = field(default_factory=list)  # ids feeding the head
    _materialized: bool = False

    def add(self, module: Module, inputs, stage: str, c_out: int) -> int:
        nid = len(self.nodes)
        self.nodes.append(GraphNode(nid, module.KIND, module, list(inputs), stage, c_out))
        return nid

    def param_count(self) -> int:
        return sum(n.module.param_count() for n in self.nodes)

    def materialize(self, seed: int = 0, dtype=np.float64) -> "LayerGraph":
        rng = np.random.default_rng(seed)
        for n in self.nodes:
            n.module.materialize(rng, dtype)
        self._materialized = True
        return self

    def train(self, mode: bool = True) -> "LayerGraph":
        for n in self.nodes:
            n.module.train(mode)
        return self

    def forward(self, x: np.ndarray):
        """Execute the DAG; returns the three detection-scale maps."""
        check_resolution(x.shape[2])
        check_resolution(x.shape[3])
        if not self._materialized:
            raise RuntimeError("graph must be materialized before forward()")
        last_use = {}
        for n in self.nodes:
            for i in n.inputs:
                last_use[i] = n.id
        values = {-1: ag.leaf(x)}
        out = None
        with ag.no_grad():
            for n in self.nodes:
                args = [values[i] for i in n.inputs]
                out = n.module(*args)
                values[n.id] = out
                for i in n.inputs:  # free activations once no later node needs them
                    if last_use[i] == n.id:
                        del values[i]
        return [o.value for o in out]  # detect head returns a list

    def trace(self, resolution: int):
        """Shape/cost propagation: per-node (out_shape, params, flops)."""
        check_resolution(resolution)
        shapes = {-1: (1, 3, resolution, resolution)}
        rows = []
        for n in self.nodes:
            acc = CostAccumulator()
            args = [CountTensor(shapes[i], acc) for i in n.inputs]
            out = n.module(*args)
            if isinstance(out, list):
                shape = [o.shape for o in out]
            else:
                shape = out.shape
            shapes[n.id] = shape
            rows.append({"id": n.id, "kind": n.kind, "stage": n.stage,
                         "params": n.module.param_count(), "flops": acc.flops,
                         "out_shape": _shape_json(shape)})
        return rows

    def to_json_dict(self, resolution: int = 640) -> dict:
        rows = self.trace(resolution)
        return {
            "schema": 1,
            "name": self.name,
            "scale": self.scale.name,
            "resolution": resolution,
            "nodes": [{"id": r["id"], "kind": r["kind"], "stage": r["stage"],
                       "params": r["params"], "inputs": self.nodes[r["id"]].inputs,
                       "out_shape": r["out_shape"]} for r in rows],
        }


def _shape_json(shape):
    if isinstance(shape, list):
        return [list(s) for s in shape]
    return list(shape)


def check_resolution(res: int) -> None:
    if res % 32:
        raise ShapeError(f"input resolution must be divisible by 32, got {res}")


def _skeleton(graph: LayerGraph, sc: ScaleSpec, *, block, down, fssa=None,
              block_neck=None):
    """Shared YOLOv8 topology; ``block``/``down`` build the stage blocks and
    the stride-2 downsampling layers, ``fssa`` optionally follows SPPF."""
    block_neck = block_neck or block
    c1, c2, c3, c4, c5 = (sc.channels(c) for c in (64, 128, 256, 512, 1024))
    d3, d6 = sc.repeats(3), sc.repeats(6)

    x = graph.add(ConvUnit(3, c1, 3, 2), [-1], "P1", c1)  # stem stays a plain conv
    x = graph.add(down(c1, c2), [x], "P2", c2)
    x = graph.add(block(c2, c2, d3, True), [x], "P2", c2)
    x = graph.add(down(c2, c3), [x], "P3", c3)
    p3 = graph.add(block(c3, c3, d6, True), [x], "P3", c3)
    x = graph.add(down(c3, c4), [p3], "P4", c4)
    p4 = graph.add(block(c4, c4, d6, True), [x], "P4", c4)
    x = graph.add(down(c4, c5), [p4], "P5", c5)
    x = graph.add(block(c5, c5, d3, True), [x], "P5", c5)
    p5 = graph.add(SPPF(c5, c5), [x], "P5", c5)
    if fssa is not None:
        p5 = graph.add(fssa(c5), [p5], "P5", c5)

    x = graph.add(Upsample(), [p5], "neck", c5)
    x = graph.add(Concat(), [x, p4], "neck", c5 + c4)
    n4 = graph.add(block_neck(c5 + c4, c4, d3, False), [x], "neck", c4)
    x = graph.add(Upsample(), [n4], "neck", c4)
    x = graph.add(Concat(), [x, p3], "neck", c4 + c3)
    n3 = graph.add(block_neck(c4 + c3, c3, d3, False), [x], "neck", c3)
    x = graph.add(down(c3, c3), [n3], "neck", c3)
    x = graph.add(Concat(), [x, n4], "neck", c3 + c4)
    h4 = graph.add(block_neck(c3 + c4, c4, d3, False), [x], "neck", c4)
    x = graph.add(down(c4, c4), [h4], "neck", c4)
    x = graph.add(Concat(), [x, p5], "neck", c4 + c5)
    h5 = graph.add(block_neck(c4 + c5, c5, d3, False), [x], "neck", c5)

    graph.add(DetectHead((c3, c4, c5)), [n3, h4, h5], "head", 0)
    graph.outputs = [n3, h4, h5]


def build_yolov8(scale: ScaleSpec | str) -> LayerGraph:
    """YOLOv8-{n,s,m,l,x} baseline graph."""
    sc = SCALES[scale] if isinstance(scale, str) else scale
    graph = LayerGraph(name=f"yolov8-{sc.name}", scale=sc)
    _skeleton(graph, sc,
              block=lambda c1, c2, n, s: C2f(c1, c2, n, s),
              down=lambda c1, c2: ConvUnit(c1, c2, 3, 2))
    return graph


def build_octave_yolo(scale: ScaleSpec | str, use_fsb: bool = True,
                      use_dsdown: bool = True, use_fssa: bool = True,
                      alpha: float = MODEL_ALPHA,
                      backbone_only: bool = False) -> LayerGraph:
    """Octave-YOLO graph; flags reproduce the ablation intermediates."""
    sc = SCALES[scale] if isinstance(scale, str) else scale
    tags = "".join(t for t, on in (("f", use_fsb), ("d", use_dsdown), ("a", use_fssa)) if on)
    name = f"octave-yolo-{sc.name}" if tags == "fda" else f"octave-yolo-{sc.name}[{tags}]"
    graph = LayerGraph(name=name, scale=sc)

    if use_fsb:
        block = lambda c1, c2, n, s: FSB(c1, c2, n, s, alpha=alpha)
        block_neck = block if not backbone_only else (lambda c1, c2, n, s: C2f(c1, c2, n, s))
    else:
        block = block_neck = lambda c1, c2, n, s: C2f(c1, c2, n, s)
    if use_dsdown:
        down = lambda c1, c2: DSDown(c1, c2)
    else:
        down = lambda c1, c2: ConvUnit(c1, c2, 3, 2)
    fssa = (lambda c: FSSA(c, alpha=alpha)) if use_fssa else None

    _skeleton(graph, sc, block=block, down=down, fssa=fssa, block_neck=block_neck)
    return graph


def build_model(name: str, **octave_opts) -> LayerGraph:
    """Build a model by CLI name, e.g. 'yolov8-n' or 'octave-yolo-s'."""
    key = name.lower()
    if key.startswith("yolov8-"):
        return build_yolov8(key.removeprefix("yolov8-"))
    if key.startswith("octave-yolo-"):
        return build_octave_yolo(key.removeprefix("octave-yolo-"), **octave_opts)
    raise ValueError(f"unknown model {name!r}; expected yolov8-<n|s|m|l|x> "
                     f"or octave-yolo-<n|s|m|l|x>")


MODEL_NAMES = [f"{fam}-{s}" for fam in ("yolov8", "octave-yolo") for s in SCALES]
