"""Dense 4-D tensor kernels.

Tensors are plain numpy arrays laid out (batch, channel, height, width).
Everything here is a pure function: no global state, bit-identical output
for identical input.  Convolution is computed directly by accumulating one
GEMM per kernel offset, which keeps memory bounded at high resolution;
correctness is pinned against a seven-loop oracle in the test suite.

Backward kernels live here too so all the index arithmetic stays in one
place; the autograd module only wires them together.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class ShapeError(ValueError):
    """Raised when tensor shapes do not satisfy a kernel's contract."""


def _as4d(x: np.ndarray, name: str = "x") -> np.ndarray:
    if x.ndim != 4:
        raise ShapeError(f"{name} must be 4-D (n, c, h, w), got shape {x.shape}")
    return x


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def conv_out_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def _check_conv(x, w, stride, padding, groups):
    _as4d(x, "x")
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ShapeError(f"weight must be (c_out, c_in/groups, k, k), got {w.shape}")
    n, c_in, h, wd = x.shape
    c_out, cpg, k, _ = w.shape
    if stride < 1 or padding < 0 or groups < 1:
        raise ShapeError(f"bad conv hyperparameters stride={stride} padding={padding} groups={groups}")
    if c_in % groups or c_out % groups:
        raise ShapeError(f"groups={groups} must divide c_in={c_in} and c_out={c_out}")
    if cpg != c_in // groups:
        raise ShapeError(f"weight expects c_in/groups={cpg}, input has c_in={c_in} with groups={groups}")
    ho = conv_out_size(h, k, stride, padding)
    wo = conv_out_size(wd, k, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"kernel {k} does not fit input {h}x{wd} with padding {padding}")
    return n, c_in, h, wd, c_out, k, ho, wo


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def conv2d(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None = None,
           stride: int = 1, padding: int = 0, groups: int = 1) -> np.ndarray:
    """Direct cross-correlation, NCHW layout, zero padding."""
    n, c_in, h, wd, c_out, k, ho, wo = _check_conv(x, w, stride, padding, groups)
    xp = _pad(x, padding)
    out = np.zeros((n, c_out, ho, wo), dtype=x.dtype)
    hi = (ho - 1) * stride + 1
    wi = (wo - 1) * stride + 1
    if groups == 1:
        for di in range(k):
            for dj in range(k):
                xs = xp[:, :, di:di + hi:stride, dj:dj + wi:stride]
                # (n, ho, wo, c_out) <- (n, c_in, ho, wo) x (c_out, c_in)
                out += np.moveaxis(np.tensordot(xs, w[:, :, di, dj], axes=([1], [1])), 3, 1)
    elif groups == c_in and c_in == c_out:
        # depthwise: one scalar weight per channel and offset
        for di in range(k):
            for dj in range(k):
                xs = xp[:, :, di:di + hi:stride, dj:dj + wi:stride]
                out += xs * w[:, 0, di, dj].reshape(1, -1, 1, 1)
    else:
        cig, cog = c_in // groups, c_out // groups
        for g in range(groups):
            out[:, g * cog:(g + 1) * cog] = conv2d(
                x[:, g * cig:(g + 1) * cig], w[g * cog:(g + 1) * cog],
                None, stride, padding, 1)
    if bias is not None:
        if bias.shape != (c_out,):
            raise ShapeError(f"bias must have shape ({c_out},), got {bias.shape}")
        out += bias.reshape(1, -1, 1, 1)
    return out


def conv2d_input_grad(dy: np.ndarray, w: np.ndarray, x_shape: tuple,
                      stride: int = 1, padding: int = 0, groups: int = 1) -> np.ndarray:
    n, c_in, h, wd = x_shape
    c_out, cpg, k, _ = w.shape
    ho, wo = dy.shape[2], dy.shape[3]
    dxp = np.zeros((n, c_in, h + 2 * padding, wd + 2 * padding), dtype=dy.dtype)
    hi = (ho - 1) * stride + 1
    wi = (wo - 1) * stride + 1
    if groups == 1:
        for di in range(k):
            for dj in range(k):
                # (n, c_in, ho, wo) <- (n, c_out, ho, wo) x (c_out, c_in)
                g = np.moveaxis(np.tensordot(dy, w[:, :, di, dj], axes=([1], [0])), 3, 1)
                dxp[:, :, di:di + hi:stride, dj:dj + wi:stride] += g
    elif groups == c_in and c_in == c_out:
        for di in range(k):
            for dj in range(k):
                dxp[:, :, di:di + hi:stride, dj:dj + wi:stride] += \
                    dy * w[:, 0, di, dj].reshape(1, -1, 1, 1)
    else:
        cig, cog = c_in // groups, c_out // groups
        for g in range(groups):
            dxp[:, g * cig:(g + 1) * cig] += _pad(conv2d_input_grad(
                dy[:, g * cog:(g + 1) * cog], w[g * cog:(g + 1) * cog],
                (n, cig, h, wd), stride, padding, 1), padding)
        return dxp[:, :, padding:padding + h, padding:padding + wd] if padding else dxp
    if padding:
        return dxp[:, :, padding:padding + h, padding:padding + wd]
    return dxp


def conv2d_weight_grad(dy: np.ndarray, x: np.ndarray, w_shape: tuple,
                       stride: int = 1, padding: int = 0, groups: int = 1) -> np.ndarray:
    c_out, cpg, k, _ = w_shape
    n, c_in, h, wd = x.shape
    ho, wo = dy.shape[2], dy.shape[3]
    xp = _pad(x, padding)
    dw = np.zeros(w_shape, dtype=dy.dtype)
    hi = (ho - 1) * stride + 1
    wi = (wo - 1) * stride + 1
    if groups == 1:
        for di in range(k):
            for dj in range(k):
                xs = xp[:, :, di:di + hi:stride, dj:dj + wi:stride]
                dw[:, :, di, dj] = np.tensordot(dy, xs, axes=([0, 2, 3], [0, 2, 3]))
    elif groups == c_in and c_in == c_out:
        for di in range(k):
            for dj in range(k):
                xs = xp[:, :, di:di + hi:stride, dj:dj + wi:stride]
                dw[:, 0, di, dj] = np.einsum("nchw,nchw->c", dy, xs)
    else:
        cig, cog = c_in // groups, c_out // groups
        for g in range(groups):
            dw[g * cog:(g + 1) * cog] = conv2d_weight_grad(
                dy[:, g * cog:(g + 1) * cog], x[:, g * cig:(g + 1) * cig],
                (cog, cig, k, k), stride, padding, 1)
    return dw


# ---------------------------------------------------------------------------
# pooling / resampling
# ---------------------------------------------------------------------------

def avg_pool2x2(x: np.ndarray) -> np.ndarray:
    """Mean over non-overlapping 2x2 windows; requires even spatial dims."""
    n, c, h, w = _as4d(x).shape
    if h % 2 or w % 2:
        raise ShapeError(f"avg_pool2x2 needs even spatial dims, got {h}x{w}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def avg_pool2x2_grad(dy: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(dy, 2, axis=2), 2, axis=3) * 0.25


def upsample_nearest2x(x: np.ndarray) -> np.ndarray:
    """Replicate every element into a 2x2 block."""
    _as4d(x)
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)


def upsample_nearest2x_grad(dy: np.ndarray) -> np.ndarray:
    n, c, h, w = dy.shape
    return dy.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def max_pool2d(x: np.ndarray, k: int, stride: int = 1, padding: int = 0,
               return_indices: bool = False):
    """Max pooling with -inf padding; optionally returns flat window argmax."""
    n, c, h, w = _as4d(x).shape
    ho = conv_out_size(h, k, stride, padding)
    wo = conv_out_size(w, k, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"pool window {k} does not fit input {h}x{w} with padding {padding}")
    if padding:
        xp = np.full((n, c, h + 2 * padding, w + 2 * padding), -np.inf, dtype=x.dtype)
        xp[:, :, padding:padding + h, padding:padding + w] = x
    else:
        xp = x
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride].reshape(n, c, ho, wo, k * k)
    if return_indices:
        idx = win.argmax(axis=-1)
        out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        return out, idx
    return win.max(axis=-1)


def max_pool2d_grad(dy: np.ndarray, idx: np.ndarray, x_shape: tuple,
                    k: int, stride: int = 1, padding: int = 0) -> np.ndarray:
    n, c, h, w = x_shape
    ho, wo = dy.shape[2], dy.shape[3]
    dxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=dy.dtype)
    ii, jj = np.meshgrid(np.arange(ho), np.arange(wo), indexing="ij")
    rows = ii[None, None] * stride + idx // k
    cols = jj[None, None] * stride + idx % k
    nn = np.arange(n).reshape(-1, 1, 1, 1)
    cc = np.arange(c).reshape(1, -1, 1, 1)
    np.add.at(dxp, (np.broadcast_to(nn, idx.shape), np.broadcast_to(cc, idx.shape), rows, cols), dy)
    if padding:
        return dxp[:, :, padding:padding + h, padding:padding + w]
    return dxp


# ---------------------------------------------------------------------------
# normalization / activation
# ---------------------------------------------------------------------------

def batchnorm_train(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float):
    """Normalize with batch statistics over (n, h, w) per channel.

    Returns (y, xhat, mean, var) with biased variance; the caller owns the
    running-statistics update.
    """
    _as4d(x)
    if gamma.shape[0] != x.shape[1]:
        raise ShapeError(f"gamma has {gamma.shape[0]} channels, input has {x.shape[1]}")
    mean = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))
    xhat = (x - mean.reshape(1, -1, 1, 1)) / np.sqrt(var + eps).reshape(1, -1, 1, 1)
    y = gamma.reshape(1, -1, 1, 1) * xhat + beta.reshape(1, -1, 1, 1)
    return y, xhat, mean, var


def batchnorm_train_grad(dy: np.ndarray, xhat: np.ndarray, gamma: np.ndarray, var: np.ndarray,
                         eps: float):
    """Gradients of train-mode batchnorm wrt (x, gamma, beta)."""
    m = dy.shape[0] * dy.shape[2] * dy.shape[3]
    dgamma = np.einsum("nchw,nchw->c", dy, xhat)
    dbeta = dy.sum(axis=(0, 2, 3))
    inv = (gamma / np.sqrt(var + eps)).reshape(1, -1, 1, 1)
    dx = inv * (dy - (dbeta / m).reshape(1, -1, 1, 1) - xhat * (dgamma / m).reshape(1, -1, 1, 1))
    return dx, dgamma, dbeta


def batchnorm_eval(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                   running_mean: np.ndarray, running_var: np.ndarray, eps: float) -> np.ndarray:
    _as4d(x)
    if gamma.shape[0] != x.shape[1]:
        raise ShapeError(f"gamma has {gamma.shape[0]} channels, input has {x.shape[1]}")
    scale = gamma / np.sqrt(running_var + eps)
    shift = beta - running_mean * scale
    return x * scale.reshape(1, -1, 1, 1) + shift.reshape(1, -1, 1, 1)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def silu_grad(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return dy * (s * (1.0 + x * (1.0 - s)))


# ---------------------------------------------------------------------------
# linear algebra / glue
# ---------------------------------------------------------------------------

def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul needs (m,k)x(k,n), got {a.shape} x {b.shape}")
    return a @ b


def softmax_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise softmax along the last axis, numerically stabilized."""
    z = a - a.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def concat_channels(xs: list[np.ndarray]) -> np.ndarray:
    if not xs:
        raise ShapeError("concat_channels needs at least one tensor")
    ref = xs[0]
    for t in xs[1:]:
        if t.shape[0] != ref.shape[0] or t.shape[2:] != ref.shape[2:]:
            raise ShapeError(f"concat_channels shape mismatch: {ref.shape} vs {t.shape}")
    return np.concatenate(xs, axis=1)


def split_channels(x: np.ndarray, sizes: list[int]) -> list[np.ndarray]:
    if sum(sizes) != x.shape[1]:
        raise ShapeError(f"split sizes {sizes} do not sum to c={x.shape[1]}")
    return list(np.split(x, np.cumsum(sizes)[:-1], axis=1))


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return a + b


# ---------------------------------------------------------------------------
# serialization: raw little-endian stream + JSON sidecar
# ---------------------------------------------------------------------------

_DTYPES = {"float32": np.float32, "float64": np.float64}


def save_tensor(x: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    dtype = np.dtype(x.dtype).name
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported dtype {dtype}")
    x.astype("<" + np.dtype(x.dtype).str[1:]).tofile(path)
    sidecar = {"shape": list(x.shape), "dtype": dtype, "byte_order": "little"}
    Path(str(path) + ".json").write_text(json.dumps(sidecar))


def load_tensor(path: str | Path) -> np.ndarray:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    if meta.get("byte_order", "little") != "little":
        raise ValueError("only little-endian streams are supported")
    dt = np.dtype(_DTYPES[meta["dtype"]]).newbyteorder("<")
    data = np.fromfile(path, dtype=dt)
    return data.astype(_DTYPES[meta["dtype"]]).reshape(meta["shape"])
