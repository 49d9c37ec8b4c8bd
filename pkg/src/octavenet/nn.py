"""Tiny module system: parameter bookkeeping, lazy materialization, modes.

Parameters are declared by shape only; ``materialize`` allocates them with a
seeded RNG.  This lets the cost analyzer walk arbitrarily large models
without touching memory for weights.
"""

from __future__ import annotations

import math

import numpy as np

from . import autograd as ag
from .costmodel import is_count


class Param:
    """A weight declared by shape; the array exists only after materialize()."""

    __slots__ = ("shape", "init", "value")

    def __init__(self, shape: tuple, init: str = "kaiming"):
        self.shape = tuple(int(s) for s in shape)
        self.init = init
        self.value = None

    @property
    def numel(self) -> int:
        n = 1
        for s in self.shape:
            n *= s
        return n

    def allocate(self, rng: np.random.Generator, dtype) -> None:
        if self.init == "kaiming":
            fan_in = self.numel // self.shape[0] if len(self.shape) > 1 else self.shape[0]
            bound = math.sqrt(6.0 / max(fan_in, 1))
            self.value = rng.uniform(-bound, bound, self.shape).astype(dtype)
        elif self.init == "ones":
            self.value = np.ones(self.shape, dtype=dtype)
        elif self.init == "zeros":
            self.value = np.zeros(self.shape, dtype=dtype)
        else:
            raise ValueError(f"unknown init {self.init!r}")

    def node(self) -> ag.Node:
        if self.value is None:
            raise RuntimeError("parameter used before materialize()")
        return ag.leaf(self.value)


class Module:
    """Base class with torch-like attribute registration."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_training", True)

    def __setattr__(self, key, value):
        if isinstance(value, Param):
            self._params[key] = value
        elif isinstance(value, Module):
            self._modules[key] = value
        object.__setattr__(self, key, value)

    # -- traversal ---------------------------------------------------------

    def named_parameters(self, prefix: str = ""):
        for k, p in self._params.items():
            yield (f"{prefix}{k}", p)
        for k, m in self._modules.items():
            yield from m.named_parameters(f"{prefix}{k}.")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def param_count(self) -> int:
        return sum(p.numel for p in self.parameters())

    def materialize(self, rng: np.random.Generator, dtype=np.float64) -> "Module":
        for p in self.parameters():
            p.allocate(rng, dtype)
        for m in self.modules():
            m._on_materialize(dtype)
        return self

    def _on_materialize(self, dtype) -> None:
        """Hook for non-parameter buffers (e.g. running statistics)."""

    def modules(self):
        yield self
        for m in self._modules.values():
            yield from m.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            object.__setattr__(m, "_training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    @property
    def training(self) -> bool:
        return self._training

    # -- execution ---------------------------------------------------------

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def _w(self, param: Param, x):
        """Weight argument for the ops: the Param itself when counting."""
        return param if is_count(x) else param.node()


class ModuleList(Module):
    def __init__(self, mods=()):
        super().__init__()
        self._items = []
        for m in mods:
            self.append(m)

    def append(self, m: Module):
        setattr(self, str(len(self._items)), m)
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def make_divisible(x: float, divisor: int = 8) -> int:
    """Round up to the nearest multiple of divisor (YOLO width convention)."""
    return max(divisor, int(math.ceil(x / divisor) * divisor))
