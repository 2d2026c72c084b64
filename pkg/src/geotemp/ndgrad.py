"""Dense tensors with define-by-run reverse-mode differentiation.

Every operation returns a new :class:`Tensor` that remembers its parents and a
backward rule mapping the output gradient to parent gradients. Calling
:func:`backward` traces the graph into a :class:`Tape` (topological order)
and replays it in reverse.

Arrays keep the floating dtype they were created with; python scalars and
lists default to float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    pass


class BatchSizeError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


def _as_array(data, dtype=None) -> np.ndarray:
    if dtype is None and isinstance(data, (np.ndarray, np.generic)) and data.dtype.kind == "f":
        return np.asarray(data)
    return np.asarray(data, dtype=dtype or np.float64)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self.op = "leaf"
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(_wrap(other, self.dtype), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other, self.dtype), mul(self, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self) -> "Tensor":
        return total(self)

    def mean(self) -> "Tensor":
        return mul(total(self), 1.0 / self.data.size)


def _wrap(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype or np.float64))


def _make(data: np.ndarray, parents: Iterable[Tensor], backward: BackwardFn, op: str) -> Tensor:
    parents = tuple(parents)
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        out.op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# tape and backward


@dataclass
class Tape:
    """Topologically ordered records of the operations behind a result."""

    records: list[Tensor] = field(default_factory=list)

    @classmethod
    def trace(cls, root: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        return cls(order)

    def leaves(self) -> list[Tensor]:
        return [t for t in self.records if t.is_leaf]


def backward(loss: Tensor, tape: Tape | None = None, inputs: Iterable[Tensor] = ()) -> dict[int, np.ndarray]:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every leaf on the tape.

    Leaves listed in ``inputs`` that the loss does not depend on get a zero
    gradient. Existing ``.grad`` values are overwritten, not summed.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    inputs = list(inputs)
    for leaf in inputs:
        leaf.grad = np.zeros_like(leaf.data)
    if not loss.requires_grad:
        return {}
    tape = tape or Tape.trace(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.records):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return {id(t): t.grad for t in tape.leaves()}


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b, a.dtype)
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), bw, "add")


def mul(a, b) -> Tensor:
    """Elementwise product; ``b`` may be a python scalar."""
    a = _wrap(a)
    if not isinstance(b, Tensor):
        s = float(b)

        def bw_scalar(g):
            return (g * s,)

        return _make(a.data * a.dtype.type(s), (a,), bw_scalar, "scale")
    out = a.data * b.data

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), bw, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), bw, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as (in, out)."""
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


def total(x: Tensor) -> Tensor:
    def bw(g):
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.asarray(x.data.sum(), dtype=x.dtype), (x,), bw, "sum")


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Concatenate along ``axis`` (the feature axis by default)."""
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat shape mismatch: {[t.shape for t in tensors]}") from exc
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return np.split(g, splits, axis=axis)

    return _make(out, tensors, bw, "concat")


def broadcast_rows(x: Tensor, n: int) -> Tensor:
    """Repeat a single-row (1, D) tensor to (n, D)."""
    if x.data.ndim != 2 or x.shape[0] != 1:
        raise DimensionError(f"broadcast_rows needs shape (1, D), got {x.shape}")
    out = np.repeat(x.data, n, axis=0)

    def bw(g):
        return (g.sum(axis=0, keepdims=True),)

    return _make(out, (x,), bw, "broadcast_rows")


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)

    def bw(g):
        return (g.reshape(x.shape),)

    return _make(out, (x,), bw, "reshape")


def index_cols(x: Tensor, cols: Sequence[int]) -> Tensor:
    cols = list(cols)
    out = x.data[:, cols]

    def bw(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (slice(None), cols), g)
        return (gx,)

    return _make(out, (x,), bw, "index_cols")


# ---------------------------------------------------------------------------
# pointwise nonlinearities


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def bw(g):
        return (g * (x.data > 0),)

    return _make(out, (x,), bw, "relu")


def sigmoid(x: Tensor) -> Tensor:
    s = _stable_sigmoid(x.data)

    def bw(g):
        return (g * s * (1 - s),)

    return _make(s, (x,), bw, "sigmoid")


def sin(x: Tensor) -> Tensor:
    def bw(g):
        return (g * np.cos(x.data),)

    return _make(np.sin(x.data), (x,), bw, "sin")


def cos(x: Tensor) -> Tensor:
    def bw(g):
        return (-g * np.sin(x.data),)

    return _make(np.cos(x.data), (x,), bw, "cos")


_ELEMENTWISE = {"relu": relu, "sigmoid": sigmoid, "sin": sin, "cos": cos}


def elementwise(kind: str, x: Tensor) -> Tensor:
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}") from None
    return fn(x)


# ---------------------------------------------------------------------------
# convolution and pooling (NCHW)


def _im2col(xd: np.ndarray, kh: int, kw: int, s: int, Ho: int, Wo: int) -> np.ndarray:
    """(B, C, H, W) -> (B*Ho*Wo, kh*kw*C) with columns ordered (i, j, c)."""
    B, C = xd.shape[:2]
    xt = np.ascontiguousarray(xd.transpose(0, 2, 3, 1))
    cols = np.empty((B, Ho, Wo, kh, kw, C), dtype=xd.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xt[:, i : i + s * Ho : s, j : j + s * Wo : s, :]
    return cols.reshape(B * Ho * Wo, kh * kw * C)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Valid cross-correlation. ``x`` is (C, H, W) or (B, C, H, W)."""
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.ndim != 4 or kernels.data.ndim != 4:
        raise DimensionError(f"conv2d expects (B,C,H,W) input and (O,C,kH,kW) kernels, got {x.shape} and {kernels.shape}")
    B, C, H, W = xd.shape
    O, Ck, kh, kw = kernels.shape
    if Ck != C:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape}, kernels {kernels.shape}")
    if kh > H or kw > W:
        raise DimensionError(f"conv2d kernel {kernels.shape} larger than input {x.shape}")
    s = int(stride)
    Ho = (H - kh) // s + 1
    Wo = (W - kw) // s + 1
    cols = _im2col(xd, kh, kw, s, Ho, Wo)
    wmat = kernels.data.transpose(0, 2, 3, 1).reshape(O, kh * kw * C)
    out = cols @ wmat.T  # B*Ho*Wo, O
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(out.reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2))
    if single:
        out = out[0]

    def bw(g):
        g4 = g[None] if single else g
        gmat = g4.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, O)
        gk = None
        if kernels.requires_grad:
            gk = (gmat.T @ cols).reshape(O, kh, kw, C).transpose(0, 3, 1, 2).copy()
        gx = None
        if x.requires_grad:
            gcols = (gmat @ wmat).reshape(B, Ho, Wo, kh, kw, C)
            gxt = np.zeros((B, H, W, C), dtype=xd.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxt[:, i : i + s * Ho : s, j : j + s * Wo : s, :] += gcols[:, :, :, i, j, :]
            gx4 = np.ascontiguousarray(gxt.transpose(0, 3, 1, 2))
            gx = gx4[0] if single else gx4
        grads = [gx, gk]
        if bias is not None:
            grads.append(gmat.sum(axis=0))
        return grads

    parents = (x, kernels) if bias is None else (x, kernels, bias)
    return _make(out, parents, bw, "conv2d")


def maxpool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping max pooling; trailing rows/cols that do not fill a window are dropped.

    The gradient goes to the first maximal element of each window (row-major).
    """
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    H, W = xd.shape[-2:]
    Ho, Wo = H // size, W // size
    if Ho == 0 or Wo == 0:
        raise DimensionError(f"maxpool2d window {size} larger than input {x.shape}")
    offsets = [(i, j) for i in range(size) for j in range(size)]

    def window(a, i, j):
        return a[:, :, i : i + size * Ho : size, j : j + size * Wo : size]

    out = window(xd, 0, 0).copy()
    for i, j in offsets[1:]:
        np.maximum(out, window(xd, i, j), out=out)
    result = out[0] if single else out

    def bw(g):
        g4 = g[None] if single else g
        gx = np.zeros_like(xd)
        taken = np.zeros(out.shape, dtype=bool)
        for i, j in offsets:
            hit = (window(xd, i, j) == out) & ~taken
            window(gx, i, j)[...] = g4 * hit
            taken |= hit
        return (gx[0] if single else gx,)

    return _make(result, (x,), bw, "maxpool2d")


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the two trailing spatial axes: (B, C, H, W) -> (B, C)."""
    hw = x.shape[-1] * x.shape[-2]
    out = x.data.mean(axis=(-2, -1))

    def bw(g):
        return (np.broadcast_to(g[..., None, None] / hw, x.shape).copy(),)

    return _make(out, (x,), bw, "global_avg_pool")


# ---------------------------------------------------------------------------
# losses


def log_softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_np(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, target, reduction: str = "mean") -> Tensor:
    """Cross-entropy of integer targets under ``softmax(logits)``.

    ``reduction`` is ``"mean"`` (batch mean), ``"sum"`` or ``"none"`` (per-row).
    """
    target = np.asarray(target, dtype=np.int64)
    if logits.data.ndim != 2 or target.shape != (logits.shape[0],):
        raise DimensionError(f"logits {logits.shape} do not match targets {target.shape}")
    B, K = logits.shape
    if target.size and (target.min() < 0 or target.max() >= K):
        raise IndexError(f"target index out of range [0, {K})")
    logp = log_softmax_np(logits.data)
    rows = np.arange(B)
    per = -logp[rows, target]
    if reduction == "mean":
        out, scale = per.mean(), 1.0 / B
    elif reduction == "sum":
        out, scale = per.sum(), 1.0
    elif reduction == "none":
        out, scale = per, None
    else:
        raise ValueError(f"unknown reduction {reduction!r}")

    def bw(g):
        p = np.exp(logp)
        p[rows, target] -= 1
        if scale is None:
            return (p * g[:, None],)
        return (p * (g * scale),)

    return _make(np.asarray(out, dtype=logits.dtype), (logits,), bw, "softmax_xent")


def mse(pred: Tensor, target) -> Tensor:
    """Mean squared error over all elements."""
    target = np.asarray(target, dtype=pred.dtype)
    diff = pred.data - target
    n = diff.size

    def bw(g):
        return (g * 2.0 * diff / n,)

    return _make(np.asarray((diff**2).mean(), dtype=pred.dtype), (pred,), bw, "mse")


# ---------------------------------------------------------------------------
# batch normalization


class BatchNormState:
    """Running statistics for one batch-norm layer (not differentiated)."""

    def __init__(self, channels: int, momentum: float = 0.99, eps: float = 1e-5, dtype=np.float64):
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, train: bool) -> Tensor:
    """Normalize (B, C) or (B, C, H, W) activations per channel, then scale by ``gamma`` and shift by ``beta``.

    Statistics pool over the batch and, for feature maps, over space. Train
    mode uses batch statistics (biased variance) and updates the running
    averages in ``state``; eval mode uses the running averages.
    """
    if x.data.ndim not in (2, 4):
        raise DimensionError(f"batch_norm expects (B, C) or (B, C, H, W), got {x.shape}")
    axes = (0,) if x.data.ndim == 2 else (0, 2, 3)
    shape = (1, -1) if x.data.ndim == 2 else (1, -1, 1, 1)
    B = x.shape[0]
    n = x.data.size // x.shape[1]
    eps = state.eps
    if train:
        if B < 2:
            raise BatchSizeError(f"batch_norm in train mode needs batch size >= 2, got {B}")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        m = state.momentum
        state.running_mean *= m
        state.running_mean += (1 - m) * mu
        state.running_var *= m
        state.running_var += (1 - m) * var
    else:
        mu = state.running_mean
        var = state.running_var
    inv = (1.0 / np.sqrt(var + eps)).reshape(shape)
    xhat = (x.data - mu.reshape(shape)) * inv
    out = xhat * gamma.data.reshape(shape) + beta.data.reshape(shape)

    def bw(g):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        gxhat = g * gamma.data.reshape(shape)
        if train:
            gx = inv / n * (n * gxhat - gxhat.sum(axis=axes).reshape(shape)
                            - xhat * (gxhat * xhat).sum(axis=axes).reshape(shape))
        else:
            gx = gxhat * inv
        return gx, gg, gb

    return _make(out.astype(x.dtype, copy=False), (x, gamma, beta), bw, "batch_norm")

