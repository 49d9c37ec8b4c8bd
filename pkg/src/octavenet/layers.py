"""Primitive layers: convolution, batchnorm, and the Conv-BN-SiLU unit."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .costmodel import is_count
from .nn import Module, Param


class ConvLayer(Module):
    """Bare 2-D convolution with zero padding (default "same": k//2)."""

    def __init__(self, c1: int, c2: int, k: int = 1, stride: int = 1,
                 padding: int | None = None, groups: int = 1, bias: bool = False):
        super().__init__()
        self.c1, self.c2, self.k = c1, c2, k
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        self.groups = groups
        self.weight = Param((c2, c1 // groups, k, k), init="kaiming")
        self.bias = Param((c2,), init="zeros") if bias else None

    def forward(self, x):
        b = None
        if self.bias is not None:
            b = self.bias if is_count(x) else self.bias.node()
        return ag.conv2d(x, self._w(self.weight, x), b,
                         self.stride, self.padding, self.groups)


class BatchNorm2d(Module):
    """Per-channel batchnorm; train mode uses batch stats and updates the
    running estimates, eval mode uses the running estimates."""

    def __init__(self, c: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.c = c
        self.eps = eps
        self.momentum = momentum
        self.gamma = Param((c,), init="ones")
        self.beta = Param((c,), init="zeros")
        self.running_mean = None
        self.running_var = None

    def _on_materialize(self, dtype):
        self.running_mean = np.zeros(self.c, dtype=dtype)
        self.running_var = np.ones(self.c, dtype=dtype)

    def forward(self, x):
        if is_count(x):
            y, _, _ = ag.batchnorm_train(x, None, None, self.eps)
            return y
        if self.training:
            y, mean, var = ag.batchnorm_train(x, self.gamma.node(), self.beta.node(), self.eps)
            m = x.value.shape[0] * x.value.shape[2] * x.value.shape[3]
            unbiased = var * (m / (m - 1)) if m > 1 else var
            mom = self.momentum
            self.running_mean = (1 - mom) * self.running_mean + mom * mean
            self.running_var = (1 - mom) * self.running_var + mom * unbiased
            return y
        return ag.batchnorm_eval(x, self.gamma.node(), self.beta.node(),
                                 self.running_mean, self.running_var, self.eps)


class ConvUnit(Module):
    """Conv + BatchNorm + SiLU, the basic YOLO building unit."""

    KIND = "ConvUnit"

    def __init__(self, c1: int, c2: int, k: int = 1, stride: int = 1, groups: int = 1):
        super().__init__()
        self.conv = ConvLayer(c1, c2, k, stride, groups=groups, bias=False)
        self.bn = BatchNorm2d(c2)

    def forward(self, x):
        return ag.silu(self.bn(self.conv(x)))
