"""Symbolic tensors for static cost accounting.

A ``CountTensor`` carries only a shape and a reference to a shared
accumulator.  The autograd ops accept it in place of a real node and add
closed-form FLOP counts instead of computing, so the analyzer follows the
exact same code path as execution.

Conventions (calibrated against the published YOLOv8-N 8.7 GFLOPs figure):
one multiply-accumulate counts as 2 FLOPs; batchnorm 4 FLOPs/element;
pooling 1 FLOP per input-window element; other elementwise ops 1
FLOP/element.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class CostAccumulator:
    flops: int = 0
    detail: dict = field(default_factory=dict)

    def add(self, kind: str, flops) -> None:
        flops = int(flops)
        self.flops += flops
        self.detail[kind] = self.detail.get(kind, 0) + flops


class CountTensor:
    """Shape-only stand-in for a tensor during cost counting."""

    __slots__ = ("shape", "acc")

    def __init__(self, shape: tuple, acc: CostAccumulator):
        self.shape = tuple(int(s) for s in shape)
        self.acc = acc

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def spawn(self, shape: tuple) -> "CountTensor":
        return CountTensor(shape, self.acc)

    def __repr__(self):
        return f"CountTensor{self.shape}"


def is_count(x) -> bool:
    return isinstance(x, CountTensor)


def shape_of(w) -> tuple:
    """Shape of a weight argument that may be a Param, Node, or ndarray."""
    return tuple(w.shape)
