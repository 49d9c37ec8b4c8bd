"""Composite blocks: the YOLOv8 baseline units (Conv unit, Bottleneck, C2f,
SPPF, detect head) and their cross-frequency replacements (DW bottleneck,
FSB, FSSA, DS-downsample).

All blocks are pure given immutable parameters; only train-mode batchnorm
mutates state (its running estimates).
"""

from __future__ import annotations

from . import autograd as ag
from .costmodel import is_count
from .layers import BatchNorm2d, ConvLayer, ConvUnit
from .nn import Module, ModuleList
from .octave import DEFAULT_ALPHA, OctaveConv, split_counts
from .tensor import ShapeError


class Bottleneck(Module):
    """Two 3x3 Conv units with optional residual (YOLOv8 C2f interior)."""

    KIND = "Bottleneck"

    def __init__(self, c1: int, c2: int, shortcut: bool = True):
        super().__init__()
        self.cv1 = ConvUnit(c1, c2, 3)
        self.cv2 = ConvUnit(c2, c2, 3)
        self.shortcut = shortcut and c1 == c2

    def forward(self, x):
        y = self.cv2(self.cv1(x))
        return ag.add(x, y) if self.shortcut else y


class DWBottleneck(Module):
    """Depthwise 3x3 then pointwise 1x1, both with BN+SiLU; optional residual.

    Spatial mixing and channel mixing are separated, so the parameter count
    drops from 9*c^2 per 3x3 conv to 9*c + c^2.
    """

    KIND = "DWBottleneck"

    def __init__(self, c1: int, c2: int | None = None, shortcut: bool = True):
        super().__init__()
        c2 = c1 if c2 is None else c2
        if shortcut and c1 != c2:
            raise ShapeError(f"shortcut needs c_in == c_out, got {c1} != {c2}")
        self.dw = ConvUnit(c1, c1, 3, groups=c1)
        self.pw = ConvUnit(c1, c2, 1)
        self.shortcut = shortcut and c1 == c2

    def forward(self, x):
        y = self.pw(self.dw(x))
        return ag.add(x, y) if self.shortcut else y


class C2f(Module):
    """YOLOv8 block: 1x1 expand, channel split, chained bottlenecks with
    dense aggregation, 1x1 fuse."""

    KIND = "C2f"

    def __init__(self, c1: int, c2: int, n: int = 1, shortcut: bool = False):
        super().__init__()
        self.c_hidden = c2 // 2
        self.cv1 = ConvUnit(c1, 2 * self.c_hidden, 1)
        self.cv2 = ConvUnit((2 + n) * self.c_hidden, c2, 1)
        self.bottlenecks = ModuleList(
            Bottleneck(self.c_hidden, self.c_hidden, shortcut) for _ in range(n))

    def forward(self, x):
        y = ag.split_channels(self.cv1(x), [self.c_hidden, self.c_hidden])
        for b in self.bottlenecks:
            y.append(b(y[-1]))
        return self.cv2(ag.concat_channels(y))


class FSB(Module):
    """Frequency separable block: octave-split, run depthwise bottlenecks on
    the half-resolution low branch only (dense aggregation, C2f style), and
    octave-merge with the untouched high branch."""

    KIND = "FSB"

    def __init__(self, c1: int, c2: int, n: int = 1, shortcut: bool = False,
                 alpha: float = DEFAULT_ALPHA, split_k: int = 1,
                 bottleneck: str = "dw"):
        super().__init__()
        self.alpha = alpha
        self.c_high, self.c_low = split_counts(alpha, c2)
        self.n = n if self.c_low else 0
        self.split = OctaveConv(c1, 0, self.c_high, self.c_low, split_k, norm_act=True)
        if bottleneck == "dw":
            mk = lambda: DWBottleneck(self.c_low, shortcut=shortcut)
        elif bottleneck == "standard":
            mk = lambda: Bottleneck(self.c_low, self.c_low, shortcut)
        else:
            raise ValueError(f"unknown bottleneck kind {bottleneck!r}")
        self.bottlenecks = ModuleList(mk() for _ in range(self.n))
        self.merge = OctaveConv(self.c_high, (1 + self.n) * self.c_low, c2, 0,
                                split_k, norm_act=True)

    def forward(self, x):
        if self.c_low == 0:
            # degenerate all-high configuration: two 1x1 conv units
            return self.merge(self.split(x))
        high, low = self.split(x)
        lows = [low]
        for b in self.bottlenecks:
            lows.append(b(lows[-1]))
        return self.merge(high, ag.concat_channels(lows))


class MultiHeadSelfAttention(Module):
    """Scaled dot-product attention over the flattened token grid.

    Q/K/V and the output projection are 1x1 convolutions; scores are scaled
    by 1/sqrt(d_head) per head.  No positional terms.  After an execution
    forward, ``last_attention`` holds the (n*heads, tokens, tokens) softmax
    matrix for inspection.
    """

    KIND = "MHSA"

    def __init__(self, c: int, heads: int):
        super().__init__()
        if heads < 1 or c % heads:
            raise ShapeError(f"heads={heads} must divide channels={c}")
        self.c = c
        self.heads = heads
        self.d_head = c // heads
        self.q = ConvLayer(c, c, 1)
        self.k = ConvLayer(c, c, 1)
        self.v = ConvLayer(c, c, 1)
        self.proj = ConvLayer(c, c, 1)
        self.last_attention = None

    def forward(self, x):
        n, c, h, w = x.shape
        t = h * w
        heads = self.heads

        def to_heads(z):
            return ag.reshape(z, (n * heads, self.d_head, t))

        q = to_heads(self.q(x))
        k = to_heads(self.k(x))
        v = to_heads(self.v(x))
        scores = ag.scale(ag.bmm(ag.transpose(q, (0, 2, 1)), k), self.d_head ** -0.5)
        attn = ag.softmax_lastdim(scores)
        if not is_count(x):
            self.last_attention = attn.value
        out = ag.bmm(v, ag.transpose(attn, (0, 2, 1)))
        out = ag.reshape(out, (n, c, h, w))
        return self.proj(out)


class AttentionBlock(Module):
    """Pre-norm transformer block on a feature map: BN + MHSA + residual,
    then BN + 1x1-conv FFN (expand x2, SiLU) + residual.  BatchNorm stands
    in for LayerNorm throughout."""

    KIND = "AttentionBlock"

    def __init__(self, c: int, heads: int, ffn_ratio: int = 2):
        super().__init__()
        self.bn1 = BatchNorm2d(c)
        self.mhsa = MultiHeadSelfAttention(c, heads)
        self.bn2 = BatchNorm2d(c)
        self.ffn1 = ConvLayer(c, ffn_ratio * c, 1)
        self.ffn2 = ConvLayer(ffn_ratio * c, c, 1)

    def forward(self, x):
        x = ag.add(x, self.mhsa(self.bn1(x)))
        return ag.add(x, self.ffn2(ag.silu(self.ffn1(self.bn2(x)))))


class FSSA(Module):
    """Frequency separable self-attention: octave-split, run the attention
    block on the half-resolution low branch only, octave-merge back."""

    KIND = "FSSA"

    def __init__(self, c: int, heads: int | None = None,
                 alpha: float = DEFAULT_ALPHA, split_k: int = 1):
        super().__init__()
        self.c_high, self.c_low = split_counts(alpha, c)
        if self.c_low == 0:
            raise ShapeError("FSSA needs a non-empty low-frequency branch")
        if heads is None:
            heads = max(self.c_low // 64, 1)
            while self.c_low % heads:  # keep ~64-dim heads while dividing evenly
                heads -= 1
        if self.c_low % heads:
            raise ShapeError(f"heads={heads} must divide low channels={self.c_low}")
        self.heads = heads
        self.split = OctaveConv(c, 0, self.c_high, self.c_low, split_k, norm_act=True)
        self.attn = AttentionBlock(self.c_low, heads)
        self.merge = OctaveConv(self.c_high, self.c_low, c, 0, split_k, norm_act=True)

    def forward(self, x):
        high, low = self.split(x)
        return self.merge(high, self.attn(low))


class DSDown(Module):
    """Depthwise separable downsampling: depthwise 3x3 stride 2 reduces
    resolution, pointwise 1x1 raises channels."""

    KIND = "DSDown"

    def __init__(self, c1: int, c2: int):
        super().__init__()
        self.dw = ConvUnit(c1, c1, 3, stride=2, groups=c1)
        self.pw = ConvUnit(c1, c2, 1)

    def forward(self, x):
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"downsampling needs even spatial dims, got {h}x{w}")
        return self.pw(self.dw(x))


class SPPF(Module):
    """Spatial pyramid pooling (fast): 1x1 reduce, three chained 5x5
    stride-1 max pools, concat, 1x1 expand."""

    KIND = "SPPF"

    def __init__(self, c1: int, c2: int, pool_k: int = 5):
        super().__init__()
        c_ = c1 // 2
        self.cv1 = ConvUnit(c1, c_, 1)
        self.cv2 = ConvUnit(4 * c_, c2, 1)
        self.pool_k = pool_k

    def forward(self, x):
        y = [self.cv1(x)]
        for _ in range(3):
            y.append(ag.max_pool2d(y[-1], self.pool_k, 1, self.pool_k // 2))
        return self.cv2(ag.concat_channels(y))


class Upsample(Module):
    KIND = "Upsample"

    def __init__(self):
        super().__init__()

    def forward(self, x):
        return ag.upsample_nearest2x(x)


class Concat(Module):
    KIND = "Concat"

    def __init__(self):
        super().__init__()

    def forward(self, *xs):
        return ag.concat_channels(list(xs))


class DetectHead(Module):
    """Decoupled anchor-free detect head: per scale, a 3x3-3x3-1x1 box
    branch (4*reg_max outputs) and a 3x3-3x3-1x1 class branch.

    Only the convolutional cost matters here; loss and assignment are out
    of scope, so the forward returns the raw per-scale maps.
    """

    KIND = "DetectHead"

    def __init__(self, ch: tuple, nc: int = 80, reg_max: int = 16):
        super().__init__()
        self.nc = nc
        self.reg_max = reg_max
        c2 = max(16, ch[0] // 4, 4 * reg_max)
        c3 = max(ch[0], min(nc, 100))
        self.box = ModuleList(
            _Branch(c, c2, 4 * reg_max) for c in ch)
        self.cls = ModuleList(
            _Branch(c, c3, nc) for c in ch)

    def forward(self, *xs):
        outs = []
        for x, box, cls in zip(xs, self.box, self.cls):
            outs.append(ag.concat_channels([box(x), cls(x)]))
        return outs


class _Branch(Module):
    def __init__(self, c_in: int, c_mid: int, c_out: int):
        super().__init__()
        self.cv1 = ConvUnit(c_in, c_mid, 3)
        self.cv2 = ConvUnit(c_mid, c_mid, 3)
        self.out = ConvLayer(c_mid, c_out, 1, bias=True)

    def forward(self, x):
        return self.out(self.cv2(self.cv1(x)))
