"""Minimal reverse-mode differentiation over the tensor kernels.

The graph is taped eagerly: every op returns a :class:`Node` holding the
forward value, its parents, and a closure producing parent gradients.  The
only consumer is the finite-difference verification harness, so the design
favors obviousness over speed.

Every op also accepts a :class:`~octavenet.costmodel.CountTensor`, in which
case it records closed-form FLOPs and propagates shapes instead of
computing.  This keeps the static analyzer on the same code path as
execution.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .costmodel import CountTensor, is_count, shape_of


class AutogradError(RuntimeError):
    pass


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable taping inside the context (used for plain inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Node:
    """One value in the computation DAG."""

    __slots__ = ("value", "parents", "backward_rule", "grad", "name")

    def __init__(self, value, parents=(), backward_rule=None, name=""):
        self.value = np.asarray(value)
        self.parents = tuple(parents)
        self.backward_rule = backward_rule
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node({self.name or 'tensor'}, shape={self.value.shape})"


def leaf(value, name: str = "") -> Node:
    return Node(value, name=name)


def _make(value, parents, backward_rule, name=""):
    if not _grad_enabled:
        return Node(value, name=name)
    return Node(value, parents, backward_rule, name=name)


def backward(root: Node) -> dict:
    """Accumulate d(root)/d(node) into every reachable node.

    Returns a mapping node -> gradient array.  The root must hold a single
    scalar; fan-out gradients accumulate additively.
    """
    if root.value.size != 1:
        raise AutogradError(f"backward root must be scalar, got shape {root.value.shape}")
    order = []
    state: dict[int, int] = {}  # 0 = on stack, 1 = done
    stack = [(root, iter(root.parents))]
    state[id(root)] = 0
    nodes = {id(root): root}
    while stack:
        node, it = stack[-1]
        advanced = False
        for parent in it:
            s = state.get(id(parent))
            if s == 0:
                raise AutogradError("cycle detected in computation graph")
            if s is None:
                state[id(parent)] = 0
                nodes[id(parent)] = parent
                stack.append((parent, iter(parent.parents)))
                advanced = True
                break
        if not advanced:
            state[id(node)] = 1
            order.append(node)
            stack.pop()

    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node.backward_rule is None:
            continue
        parent_grads = node.backward_rule(g)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None:
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg
    result = {}
    for nid, g in grads.items():
        node = nodes[nid]
        node.grad = g
        result[node] = g
    return result


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------

def conv2d(x, w, bias=None, stride: int = 1, padding: int = 0, groups: int = 1):
    if is_count(x):
        c_out, cpg, k, _ = shape_of(w)
        n, c_in, h, wd = x.shape
        ho = T.conv_out_size(h, k, stride, padding)
        wo = T.conv_out_size(wd, k, stride, padding)
        x.acc.add("conv", 2 * k * k * cpg * c_out * ho * wo * n)
        if bias is not None:
            x.acc.add("bias", n * c_out * ho * wo)
        return x.spawn((n, c_out, ho, wo))
    b = bias.value if bias is not None else None
    y = T.conv2d(x.value, w.value, b, stride, padding, groups)

    def rule(dy):
        dx = T.conv2d_input_grad(dy, w.value, x.value.shape, stride, padding, groups)
        dw = T.conv2d_weight_grad(dy, x.value, w.value.shape, stride, padding, groups)
        if bias is not None:
            return dx, dw, dy.sum(axis=(0, 2, 3))
        return dx, dw

    parents = (x, w) if bias is None else (x, w, bias)
    return _make(y, parents, rule, "conv2d")


def avg_pool2x2(x):
    if is_count(x):
        n, c, h, w = x.shape
        x.acc.add("pool", x.size)
        return x.spawn((n, c, h // 2, w // 2))
    y = T.avg_pool2x2(x.value)
    return _make(y, (x,), lambda dy: (T.avg_pool2x2_grad(dy),), "avg_pool2x2")


def upsample_nearest2x(x):
    if is_count(x):
        n, c, h, w = x.shape
        return x.spawn((n, c, 2 * h, 2 * w))
    y = T.upsample_nearest2x(x.value)
    return _make(y, (x,), lambda dy: (T.upsample_nearest2x_grad(dy),), "upsample2x")


def max_pool2d(x, k: int, stride: int = 1, padding: int = 0):
    if is_count(x):
        n, c, h, w = x.shape
        ho = T.conv_out_size(h, k, stride, padding)
        wo = T.conv_out_size(w, k, stride, padding)
        x.acc.add("pool", n * c * ho * wo * k * k)
        return x.spawn((n, c, ho, wo))
    y, idx = T.max_pool2d(x.value, k, stride, padding, return_indices=True)
    shape = x.value.shape
    return _make(y, (x,), lambda dy: (T.max_pool2d_grad(dy, idx, shape, k, stride, padding),),
                 "max_pool2d")


def batchnorm_train(x, gamma, beta, eps: float = 1e-5):
    """Train-mode batchnorm; returns (node, batch_mean, batch_var)."""
    if is_count(x):
        x.acc.add("norm", 4 * x.size)
        return x.spawn(x.shape), None, None
    y, xhat, mean, var = T.batchnorm_train(x.value, gamma.value, beta.value, eps)

    def rule(dy):
        return T.batchnorm_train_grad(dy, xhat, gamma.value, var, eps)

    return _make(y, (x, gamma, beta), rule, "batchnorm"), mean, var


def batchnorm_eval(x, gamma, beta, running_mean, running_var, eps: float = 1e-5):
    if is_count(x):
        x.acc.add("norm", 4 * x.size)
        return x.spawn(x.shape)
    y = T.batchnorm_eval(x.value, gamma.value, beta.value, running_mean, running_var, eps)
    scale = (gamma.value / np.sqrt(running_var + eps)).reshape(1, -1, 1, 1)

    def rule(dy):
        xhat = (x.value - running_mean.reshape(1, -1, 1, 1)) / np.sqrt(running_var + eps).reshape(1, -1, 1, 1)
        return dy * scale, np.einsum("nchw,nchw->c", dy, xhat), dy.sum(axis=(0, 2, 3))

    return _make(y, (x, gamma, beta), rule, "batchnorm_eval")


def silu(x):
    if is_count(x):
        x.acc.add("act", x.size)
        return x.spawn(x.shape)
    y = T.silu(x.value)
    return _make(y, (x,), lambda dy: (T.silu_grad(dy, x.value),), "silu")


def add(a, b):
    if is_count(a):
        a.acc.add("elementwise", a.size)
        return a.spawn(a.shape)
    y = T.add(a.value, b.value)
    return _make(y, (a, b), lambda dy: (dy, dy), "add")


def scale(x, s: float):
    if is_count(x):
        x.acc.add("elementwise", x.size)
        return x.spawn(x.shape)
    return _make(x.value * s, (x,), lambda dy: (dy * s,), "scale")


def concat_channels(xs):
    if is_count(xs[0]):
        ref = xs[0]
        return ref.spawn((ref.shape[0], sum(t.shape[1] for t in xs)) + ref.shape[2:])
    y = T.concat_channels([t.value for t in xs])
    sizes = [t.value.shape[1] for t in xs]

    def rule(dy):
        return tuple(T.split_channels(dy, sizes))

    return _make(y, tuple(xs), rule, "concat")


def split_channels(x, sizes):
    if is_count(x):
        if sum(sizes) != x.shape[1]:
            raise T.ShapeError(f"split sizes {sizes} do not sum to c={x.shape[1]}")
        return [x.spawn((x.shape[0], s) + x.shape[2:]) for s in sizes]
    parts = T.split_channels(x.value, sizes)
    bounds = np.cumsum([0] + list(sizes))
    out = []
    for i, p in enumerate(parts):
        lo, hi = bounds[i], bounds[i + 1]

        def rule(dy, lo=lo, hi=hi):
            dx = np.zeros_like(x.value)
            dx[:, lo:hi] = dy
            return (dx,)

        out.append(_make(p, (x,), rule, f"split[{i}]"))
    return out


def reshape(x, shape):
    if is_count(x):
        return x.spawn(shape)
    old = x.value.shape
    return _make(x.value.reshape(shape), (x,), lambda dy: (dy.reshape(old),), "reshape")


def transpose(x, axes):
    if is_count(x):
        return x.spawn(tuple(x.shape[a] for a in axes))
    inv = np.argsort(axes)
    return _make(x.value.transpose(axes), (x,), lambda dy: (dy.transpose(inv),), "transpose")


def bmm(a, b):
    """Batched matmul: (B, m, k) x (B, k, n) -> (B, m, n)."""
    if is_count(a):
        B, m, k = a.shape
        n = b.shape[2]
        a.acc.add("matmul", 2 * B * m * k * n)
        return a.spawn((B, m, n))
    if a.value.shape[0] != b.value.shape[0] or a.value.shape[2] != b.value.shape[1]:
        raise T.ShapeError(f"bmm needs (B,m,k)x(B,k,n), got {a.value.shape} x {b.value.shape}")
    y = a.value @ b.value

    def rule(dy):
        return dy @ b.value.transpose(0, 2, 1), a.value.transpose(0, 2, 1) @ dy

    return _make(y, (a, b), rule, "bmm")


def matmul(a, b):
    """Plain 2-D matmul."""
    if is_count(a):
        m, k = a.shape
        n = b.shape[1]
        a.acc.add("matmul", 2 * m * k * n)
        return a.spawn((m, n))
    y = T.matmul(a.value, b.value)
    return _make(y, (a, b), lambda dy: (dy @ b.value.T, a.value.T @ dy), "matmul")


def softmax_lastdim(x):
    if is_count(x):
        x.acc.add("act", 3 * x.size)
        return x.spawn(x.shape)
    y = T.softmax_rows(x.value)

    def rule(dy):
        return (y * (dy - (dy * y).sum(axis=-1, keepdims=True)),)

    return _make(y, (x,), rule, "softmax")


def sum_all(x):
    """Reduce to a scalar (1,1,1,1) node, the canonical backward root."""
    if is_count(x):
        x.acc.add("elementwise", x.size)
        return x.spawn((1, 1, 1, 1))
    y = np.full((1, 1, 1, 1), x.value.sum(), dtype=x.value.dtype)
    return _make(y, (x,), lambda dy: (np.full_like(x.value, float(dy.reshape(-1)[0])),), "sum")


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    """Outcome of one analytic-vs-numeric gradient comparison."""

    name: str
    h: float
    tol: float
    max_rel_err: float
    passed: bool
    coords: int

    def to_dict(self) -> dict:
        return {"name": self.name, "h": self.h, "tol": self.tol,
                "max_rel_err": self.max_rel_err, "passed": self.passed,
                "coords": self.coords}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _rel_err(a: np.ndarray, f: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-8)
    return float(np.max(np.abs(a - f) / denom))


def finite_diff_check(f, x: np.ndarray, h: float = 1e-5, tol: float = 1e-4,
                      name: str = "x") -> GradCheckReport:
    """Compare the taped gradient of ``f`` against central differences.

    ``f`` maps a Node to a scalar Node.  The central-difference oracle
    evaluates f twice per coordinate and never touches the taped path.
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    x = np.asarray(x, dtype=np.float64)
    root = f(leaf(x, name))
    if not np.all(np.isfinite(root.value)):
        raise AutogradError("function produced non-finite values")
    grads = backward(root)
    analytic = None
    for node, g in grads.items():
        if node.name == name and node.value.shape == x.shape:
            analytic = g
            break
    if analytic is None:
        raise AutogradError(f"input node {name!r} not reached by backward pass")

    numeric = np.zeros_like(x)
    flat = x.reshape(-1)
    num_flat = numeric.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(leaf(x, name)).value.reshape(-1)[0])
            flat[i] = orig - h
            fm = float(f(leaf(x, name)).value.reshape(-1)[0])
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise AutogradError("non-finite function value during finite differences")
            num_flat[i] = (fp - fm) / (2.0 * h)

    err = _rel_err(analytic, numeric)
    return GradCheckReport(name=name, h=h, tol=tol, max_rel_err=err,
                           passed=err <= tol, coords=int(flat.size))
