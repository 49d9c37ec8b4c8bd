"""Octave convolution and the cross-frequency split/merge operators.

An octave feature map keeps a full-resolution high-frequency tensor next to
a half-resolution low-frequency tensor.  The convolution runs four weight
paths (H->H, H->L, L->H, L->L): the H->L path pools before convolving, the
L->H path convolves then upsamples by nearest-neighbor, and absent paths
(alpha 0 or 1) contribute nothing.

Two layers of API live here: a functional, numpy-only ``octave_conv`` used
as the verification surface, and the :class:`OctaveConv` module used inside
blocks (optionally with per-branch BatchNorm + SiLU after the two-path
summation).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from . import tensor as T
from .layers import BatchNorm2d, ConvLayer
from .nn import Module

DEFAULT_ALPHA = 0.5


@dataclass
class OctaveTensor:
    """High-frequency map plus low-frequency map at half spatial size."""

    high: np.ndarray
    low: np.ndarray

    def __post_init__(self):
        if self.high is not None and self.low is not None:
            n, _, h, w = self.high.shape
            nl, _, hl, wl = self.low.shape
            if n != nl or hl * 2 != h or wl * 2 != w:
                raise T.ShapeError(
                    f"low part must be half resolution of high: {self.high.shape} vs {self.low.shape}")

    @property
    def channels(self) -> int:
        c = 0
        if self.high is not None:
            c += self.high.shape[1]
        if self.low is not None:
            c += self.low.shape[1]
        return c


def split_counts(alpha: float, c: int) -> tuple[int, int]:
    """(high, low) channel partition for a given alpha."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    c_low = int(round(alpha * c))
    return c - c_low, c_low


@dataclass
class OctaveConvParams:
    """Four-path convolution weights plus the alpha bookkeeping.

    ``weights`` maps path names 'hh', 'hl', 'lh', 'll' to (weight, bias)
    pairs; paths with zero input or output channels are absent.  Stride is
    fixed to 1 and padding to k//2.
    """

    alpha_in: float
    alpha_out: float
    c_in: int
    c_out: int
    k: int
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c_in_h, self.c_in_l = split_counts(self.alpha_in, self.c_in)
        self.c_out_h, self.c_out_l = split_counts(self.alpha_out, self.c_out)
        expected = _expected_paths(self.c_in_h, self.c_in_l, self.c_out_h, self.c_out_l)
        if set(self.weights) != set(expected):
            raise T.ShapeError(
                f"paths {sorted(self.weights)} do not match alpha partition {sorted(expected)}")
        for name, (co, ci) in expected.items():
            w = self.weights[name][0]
            if w.shape != (co, ci, self.k, self.k):
                raise T.ShapeError(
                    f"path {name} weight shape {w.shape} != {(co, ci, self.k, self.k)}")


def _expected_paths(cih: int, cil: int, coh: int, col: int) -> dict:
    expected = {}
    if cih and coh:
        expected["hh"] = (coh, cih)
    if cih and col:
        expected["hl"] = (col, cih)
    if cil and coh:
        expected["lh"] = (coh, cil)
    if cil and col:
        expected["ll"] = (col, cil)
    return expected


def random_octave_params(rng: np.random.Generator, c_in: int, c_out: int, k: int,
                         alpha_in: float, alpha_out: float, bias: bool = False,
                         dtype=np.float64) -> OctaveConvParams:
    """Gaussian-initialized parameters for testing and verification."""
    cih, cil = split_counts(alpha_in, c_in)
    coh, col = split_counts(alpha_out, c_out)
    weights = {}
    for name, (co, ci) in _expected_paths(cih, cil, coh, col).items():
        w = rng.standard_normal((co, ci, k, k)).astype(dtype)
        b = rng.standard_normal(co).astype(dtype) if bias else None
        weights[name] = (w, b)
    return OctaveConvParams(alpha_in, alpha_out, c_in, c_out, k, weights)


def _conv(x, path, k):
    w, b = path
    return T.conv2d(x, w, b, stride=1, padding=k // 2)


def octave_conv(x, p: OctaveConvParams):
    """Functional octave convolution over numpy arrays.

    Accepts a plain tensor when alpha_in is 0 (all-high) or 1 (all-low) and
    returns a plain tensor when alpha_out is 0 or 1; otherwise operates on
    :class:`OctaveTensor`.
    """
    if isinstance(x, OctaveTensor):
        if p.c_in_h == 0 or p.c_in_l == 0:
            raise T.ShapeError("degenerate alpha_in expects a plain tensor input")
        xh, xl = x.high, x.low
    elif p.c_in_l == 0:
        xh, xl = x, None
    elif p.c_in_h == 0:
        xh, xl = None, x
    else:
        raise T.ShapeError("alpha_in in (0,1) requires an OctaveTensor input")

    if xh is not None:
        if xh.shape[1] != p.c_in_h:
            raise T.ShapeError(f"high input has {xh.shape[1]} channels, alpha partition expects {p.c_in_h}")
        if (p.c_out_l or p.c_in_l) and (xh.shape[2] % 2 or xh.shape[3] % 2):
            raise T.ShapeError(f"high branch needs even spatial dims, got {xh.shape[2:]}")
    if xl is not None and xl.shape[1] != p.c_in_l:
        raise T.ShapeError(f"low input has {xl.shape[1]} channels, alpha partition expects {p.c_in_l}")

    yh = yl = None
    if "hh" in p.weights:
        yh = _conv(xh, p.weights["hh"], p.k)
    if "lh" in p.weights:
        up = T.upsample_nearest2x(_conv(xl, p.weights["lh"], p.k))
        yh = up if yh is None else yh + up
    if "hl" in p.weights:
        yl = _conv(T.avg_pool2x2(xh), p.weights["hl"], p.k)
    if "ll" in p.weights:
        low = _conv(xl, p.weights["ll"], p.k)
        yl = low if yl is None else yl + low

    if p.c_out_l == 0:
        return yh
    if p.c_out_h == 0:
        return yl
    return OctaveTensor(yh, yl)


def cfp_split(x: np.ndarray, alpha: float, c_out: int, k: int = 1,
              params: OctaveConvParams | None = None,
              rng: np.random.Generator | None = None) -> OctaveTensor:
    """Split a plain feature map into frequencies: octave conv with alpha_in=0."""
    if params is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        params = random_octave_params(rng, x.shape[1], c_out, k, 0.0, alpha, dtype=x.dtype)
    if params.alpha_in != 0.0:
        raise ValueError("cfp_split requires alpha_in = 0")
    return octave_conv(x, params)


def cfp_merge(x: OctaveTensor, c_out: int, k: int = 1,
              params: OctaveConvParams | None = None,
              rng: np.random.Generator | None = None) -> np.ndarray:
    """Fuse frequencies back to a plain map: octave conv with alpha_out=0."""
    c_in = x.channels
    if params is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        alpha_in = x.low.shape[1] / c_in
        params = random_octave_params(rng, c_in, c_out, k, alpha_in, 0.0, dtype=x.high.dtype)
        # rounding of alpha_in must land exactly on the actual partition
        if params.c_in_l != x.low.shape[1]:
            raise T.ShapeError("channel partition not representable by alpha rounding")
    if params.alpha_out != 0.0:
        raise ValueError("cfp_merge requires alpha_out = 0")
    return octave_conv(x, params)


class OctaveConv(Module):
    """Four-path octave convolution module with explicit channel partition.

    When ``norm_act`` is set, each output branch gets BatchNorm + SiLU after
    its two contributing paths are summed (the Conv-BN-SiLU convention of
    the surrounding architecture).
    """

    def __init__(self, c_in_h: int, c_in_l: int, c_out_h: int, c_out_l: int,
                 k: int = 1, norm_act: bool = True):
        super().__init__()
        if (c_in_h + c_in_l) == 0 or (c_out_h + c_out_l) == 0:
            raise ValueError("octave conv needs input and output channels")
        self.c_in_h, self.c_in_l = c_in_h, c_in_l
        self.c_out_h, self.c_out_l = c_out_h, c_out_l
        self.k = k
        self.norm_act = norm_act
        if c_in_h and c_out_h:
            self.hh = ConvLayer(c_in_h, c_out_h, k)
        if c_in_h and c_out_l:
            self.hl = ConvLayer(c_in_h, c_out_l, k)
        if c_in_l and c_out_h:
            self.lh = ConvLayer(c_in_l, c_out_h, k)
        if c_in_l and c_out_l:
            self.ll = ConvLayer(c_in_l, c_out_l, k)
        if norm_act:
            if c_out_h:
                self.bn_h = BatchNorm2d(c_out_h)
            if c_out_l:
                self.bn_l = BatchNorm2d(c_out_l)

    @classmethod
    def from_alphas(cls, c_in: int, c_out: int, k: int, alpha_in: float,
                    alpha_out: float, norm_act: bool = True) -> "OctaveConv":
        cih, cil = split_counts(alpha_in, c_in)
        coh, col = split_counts(alpha_out, c_out)
        return cls(cih, cil, coh, col, k, norm_act)

    def forward(self, xh, xl=None):
        yh = yl = None
        if hasattr(self, "hh"):
            yh = self.hh(xh)
        if hasattr(self, "lh"):
            up = ag.upsample_nearest2x(self.lh(xl))
            yh = up if yh is None else ag.add(yh, up)
        if hasattr(self, "hl"):
            yl = self.hl(ag.avg_pool2x2(xh))
        if hasattr(self, "ll"):
            low = self.ll(xl)
            yl = low if yl is None else ag.add(yl, low)
        if self.norm_act:
            if yh is not None:
                yh = ag.silu(self.bn_h(yh))
            if yl is not None:
                yl = ag.silu(self.bn_l(yl))
        if yl is None:
            return yh
        if yh is None:
            return yl
        return yh, yl
