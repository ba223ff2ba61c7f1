"""Dense tensors with reverse-mode differentiation.

Only what the codec needs: strided (transposed) convolution, per-pixel channel
mixing, padding, elementwise maths, reductions, plus Adam and global-norm
clipping. Feature maps use (batch, channel, height, width) layout; parameters
may have any rank.

Every operation checks its output for NaN/Inf and raises ``NumericError``
rather than letting a non-finite value propagate.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, GraphError, NumericError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference paths)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite value produced by {what}")


class Tensor:
    """An ndarray plus the record needed to differentiate through it."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op", "_consumed")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._op = "leaf"
        self._consumed = False

    # -- bookkeeping -------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self._op})"

    def backward(self) -> None:
        backward(self)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def record(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    """Wrap an operation result, attaching its backward rule when needed.

    ``backward_fn(grad)`` returns one gradient (or None) per parent.
    """
    _check_finite(data, op)
    out = Tensor(data)
    out._op = op
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _operands(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    else:
        a, b = as_tensor(a), as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ConfigError(f"shapes {a.shape} and {b.shape} do not broadcast") from exc
    return a, b


# ---------------------------------------------------------------------------
# Reverse pass


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires it.

    The record is consumed: calling again on the same graph raises GraphError.
    """
    if loss.size != 1:
        raise GraphError(f"loss must be scalar, got shape {loss.shape}")
    if loss._consumed:
        raise GraphError("graph already consumed by a previous backward call")
    if not loss.requires_grad:
        raise GraphError("loss does not depend on any tensor requiring grad")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if node._backward is None:
            if g is not None:
                _check_finite(g, "backward")
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        if g is None:
            node._consumed = True
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                pg = _unbroadcast(pg, parent.shape)
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
        node._backward = None
        node._parents = ()
        node._consumed = True
    loss._consumed = True


# ---------------------------------------------------------------------------
# Elementwise


def add(a, b) -> Tensor:
    a, b = _operands(a, b)
    return record(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a, b = _operands(a, b)
    return record(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    a, b = _operands(a, b)
    return record(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def div(a, b) -> Tensor:
    a, b = _operands(a, b)
    if np.any(b.data == 0):
        raise NumericError("division by zero")
    q = a.data / b.data
    return record(q, (a, b), lambda g: (g / b.data, -g * q / b.data), "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return record(-a.data, (a,), lambda g: (-g,), "neg")


def square(a) -> Tensor:
    a = as_tensor(a)
    return record(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise NumericError("sqrt of negative value")
    r = np.sqrt(a.data)
    return record(r, (a,), lambda g: (0.5 * g / r,), "sqrt")


def reciprocal(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data == 0):
        raise NumericError("reciprocal of zero")
    r = 1.0 / a.data
    return record(r, (a,), lambda g: (-g * r * r,), "reciprocal")


def tabs(a) -> Tensor:
    a = as_tensor(a)
    return record(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        r = np.exp(a.data)
    return record(r, (a,), lambda g: (g * r,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise NumericError("log of non-positive value")
    return record(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def cos(a) -> Tensor:
    a = as_tensor(a)
    return record(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),), "cos")


def sin(a) -> Tensor:
    a = as_tensor(a)
    return record(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),), "sin")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    r = np.tanh(a.data)
    return record(r, (a,), lambda g: (g * (1.0 - r * r),), "tanh")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = (a.data > 0).astype(a.dtype)
    return record(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    r = _sigmoid(a.data)
    return record(r, (a,), lambda g: (g * r * (1.0 - r),), "sigmoid")


def softplus(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    r = np.logaddexp(0.0, x).astype(x.dtype, copy=False)
    return record(r, (a,), lambda g: (g * _sigmoid(x),), "softplus")


def clamp_min(a, floor: float) -> Tensor:
    """max(a, floor); gradient flows only where the input is above the floor."""
    a = as_tensor(a)
    keep = a.data > floor
    r = np.where(keep, a.data, np.asarray(floor, dtype=a.dtype))
    return record(r, (a,), lambda g: (g * keep,), "clamp_min")


def pow_scalar(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0) and not float(exponent).is_integer():
        raise NumericError("fractional power of non-positive value")
    r = np.power(a.data, exponent)
    return record(r, (a,), lambda g: (g * exponent * np.power(a.data, exponent - 1),), "pow")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_UNARY = {
    "cos": cos,
    "tanh": tanh,
    "relu": relu,
    "square": square,
    "sqrt": sqrt,
    "reciprocal": reciprocal,
    "abs": tabs,
    "exp": exp,
    "log": log,
}
_BINARY = {"mul": mul, "add": add, "sub": sub}
ELEMENTWISE_KINDS = frozenset(_UNARY) | frozenset(_BINARY)


def elementwise(x, kind: str, other=None) -> Tensor:
    """Dispatch an elementwise kind by name.

    Binary kinds broadcast ``other`` against ``x``; a length-C vector is
    treated as a per-channel value for 4-D feature maps.
    """
    if kind in _UNARY:
        if other is not None:
            raise ConfigError(f"{kind} takes a single operand")
        return _UNARY[kind](x)
    if kind in _BINARY:
        if other is None:
            raise ConfigError(f"{kind} needs a second operand")
        x = as_tensor(x)
        other = as_tensor(other, dtype=x.dtype)
        if x.ndim == 4 and other.ndim == 1 and other.shape[0] == x.shape[1]:
            other = reshape(other, (1, -1, 1, 1))
        return _BINARY[kind](x, other)
    raise ConfigError(f"unknown elementwise kind {kind!r}")


# ---------------------------------------------------------------------------
# Shape and reductions


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    r = np.sum(a.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return record(np.asarray(r), (a,), bw, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return tsum(a, axis, keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def channel_vector(v: Tensor) -> Tensor:
    """View a length-C vector as (1, C, 1, 1) for broadcasting against maps."""
    return reshape(v, (1, -1, 1, 1))


def _pad_index(n: int, before: int, after: int, mode: str) -> np.ndarray:
    pos = np.arange(-before, n + after)
    if mode == "replicate" or (mode == "reflect" and n == 1):
        return np.clip(pos, 0, n - 1)
    if mode == "reflect":
        period = 2 * (n - 1)
        m = np.mod(pos, period)
        return np.where(m < n, m, period - m)
    raise ConfigError(f"unknown padding mode {mode!r}")


def pad2d(x, pads: tuple[int, int, int, int], mode: str = "zero") -> Tensor:
    """Pad the two spatial axes by (top, bottom, left, right).

    ``reflect`` mirrors without repeating the edge; at extent 1 it falls back
    to ``replicate``.
    """
    x = as_tensor(x)
    top, bottom, left, right = pads
    if min(pads) < 0:
        raise ConfigError("padding must be non-negative")
    if mode == "zero":
        r = np.pad(x.data, ((0, 0), (0, 0), (top, bottom), (left, right)))
        H, W = x.shape[2], x.shape[3]
        return record(r, (x,), lambda g: (g[:, :, top:top + H, left:left + W],), "pad")
    ih = _pad_index(x.shape[2], top, bottom, mode)
    iw = _pad_index(x.shape[3], left, right, mode)
    r = x.data[:, :, ih][:, :, :, iw]

    def bw(g):
        gw = np.zeros(g.shape[:3] + (x.shape[3],), dtype=g.dtype)
        np.add.at(gw, (slice(None), slice(None), slice(None), iw), g)
        gx = np.zeros(x.shape, dtype=g.dtype)
        np.add.at(gx, (slice(None), slice(None), ih), gw)
        return (gx,)

    return record(r, (x,), bw, "pad")


def crop2d(x, height: int, width: int) -> Tensor:
    """Keep the top-left height x width window."""
    x = as_tensor(x)

    def bw(g):
        out = np.zeros(x.shape, dtype=g.dtype)
        out[:, :, :height, :width] = g
        return (out,)

    return record(x.data[:, :, :height, :width].copy(), (x,), bw, "crop")


# ---------------------------------------------------------------------------
# Convolutions


def conv_output_size(n: int, kernel: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - kernel) // stride + 1


def _windows(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    return sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def _conv_fwd(x, w, stride, padding):
    win = _windows(x, w.shape[2], w.shape[3], stride, padding)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _conv_dx(g, w, stride, padding, x_shape):
    B, C, H, W = x_shape
    kh, kw = w.shape[2], w.shape[3]
    Ho, Wo = g.shape[2], g.shape[3]
    cols = np.tensordot(g, w, axes=([1], [0]))  # B, Ho, Wo, C, kh, kw
    cols = cols.transpose(0, 3, 4, 5, 1, 2)  # B, C, kh, kw, Ho, Wo
    dxp = np.zeros((B, C, H + 2 * padding + stride, W + 2 * padding + stride), dtype=g.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += cols[:, :, i, j]
    return dxp[:, :, padding:padding + H, padding:padding + W]


def _conv_dw(x, g, stride, padding, kshape):
    win = _windows(x, kshape[0], kshape[1], stride, padding)
    Ho, Wo = g.shape[2], g.shape[3]
    win = win[:, :, :Ho, :Wo]
    return np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))


def _check_conv(x: Tensor, weight: Tensor, bias: Tensor | None, channels_axis: int, stride: int):
    if x.ndim != 4 or weight.ndim != 4:
        raise ConfigError(f"conv expects 4-D input and weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[channels_axis]:
        raise ConfigError(f"input has {x.shape[1]} channels, weight expects {weight.shape[channels_axis]}")
    if bias is not None and bias.shape != (weight.shape[1 - channels_axis],):
        raise ConfigError(f"bias shape {bias.shape} does not match weight {weight.shape}")
    if stride < 1:
        raise ConfigError("stride must be positive")


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0, padding_mode: str = "zero") -> Tensor:
    """Cross-correlation; weight is (out_ch, in_ch, kh, kw)."""
    x, weight = as_tensor(x), as_tensor(weight)
    bias = None if bias is None else as_tensor(bias)
    _check_conv(x, weight, bias, 1, stride)
    if padding_mode != "zero" and padding:
        x = pad2d(x, (padding,) * 4, padding_mode)
        padding = 0
    kh, kw = weight.shape[2:]
    if x.shape[2] + 2 * padding < kh or x.shape[3] + 2 * padding < kw:
        raise ConfigError(f"input {x.shape} smaller than kernel {weight.shape}")
    out = _conv_fwd(x.data, weight.data, stride, padding)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def bw(g):
        gx = _conv_dx(g, weight.data, stride, padding, x.shape) if x.requires_grad else None
        gw = _conv_dw(x.data, g, stride, padding, (kh, kw)) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return record(out, parents, bw, "conv2d")


def conv_transpose2d(y, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Adjoint of ``conv2d`` with the same weight, upsampling by ``stride``.

    weight is (in_ch, out_ch, kh, kw) from this op's point of view, i.e. the
    weight of the conv2d it is the adjoint of. Output extents are exactly
    stride times the input extents.
    """
    y, weight = as_tensor(y), as_tensor(weight)
    bias = None if bias is None else as_tensor(bias)
    _check_conv(y, weight, bias, 0, stride)
    B, _, h, w = y.shape
    kh, kw = weight.shape[2:]
    H, W = h * stride, w * stride
    if conv_output_size(H, kh, stride, padding) != h or conv_output_size(W, kw, stride, padding) != w:
        raise ConfigError(
            f"kernel {kh}x{kw}, stride {stride}, padding {padding} cannot upsample {h}x{w} to {H}x{W}"
        )
    out_shape = (B, weight.shape[1], H, W)
    out = np.ascontiguousarray(_conv_dx(y.data, weight.data, stride, padding, out_shape))
    if bias is not None:
        out += bias.data[None, :, None, None]

    def bw(g):
        gy = _conv_fwd(g, weight.data, stride, padding) if y.requires_grad else None
        gw = _conv_dw(g, y.data, stride, padding, (kh, kw)) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return gy, gw, gb

    parents = (y, weight) if bias is None else (y, weight, bias)
    return record(out, parents, bw, "conv_transpose2d")


def dense_channelwise(x, weight, bias=None) -> Tensor:
    """Apply the same affine channel map (out_ch x in_ch) at every pixel."""
    x, weight = as_tensor(x), as_tensor(weight)
    bias = None if bias is None else as_tensor(bias)
    if x.ndim != 4 or weight.ndim != 2 or weight.shape[1] != x.shape[1]:
        raise ConfigError(f"dense map {weight.shape} incompatible with input {x.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ConfigError(f"bias shape {bias.shape} does not match weight {weight.shape}")
    out = np.tensordot(weight.data, x.data, axes=([1], [1])).transpose(1, 0, 2, 3)
    out = np.ascontiguousarray(out)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def bw(g):
        gx = None
        if x.requires_grad:
            gx = np.ascontiguousarray(np.tensordot(weight.data, g, axes=([0], [1])).transpose(1, 0, 2, 3))
        gw = np.tensordot(g, x.data, axes=([0, 2, 3], [0, 2, 3])) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return record(out, parents, bw, "dense")


# ---------------------------------------------------------------------------
# Optimisation


@dataclass
class AdamState:
    """Moment estimates for a fixed, ordered parameter list."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[Tensor], lr: float = 1e-4) -> AdamState:
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
            lr=lr,
        )


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamState,
              lr: float | None = None) -> None:
    """Bias-corrected Adam update, in place on ``params``."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ConfigError("parameter, gradient and state lists differ in length")
    lr = state.lr if lr is None else lr
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        if g.shape != p.shape or m.shape != p.shape:
            raise ConfigError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        if lr == 0.0:
            continue
        update = (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
        p.data = p.data - update


def global_norm(grads: Iterable[np.ndarray | None]) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads if g is not None))


def clip_global_norm(grads: Sequence[np.ndarray | None], threshold: float) -> tuple[list, float]:
    """Scale all gradients by threshold/norm when the joint L2 norm exceeds it.

    Returns the (possibly scaled) gradients and the pre-clip norm.
    """
    if threshold <= 0:
        raise ConfigError("clip threshold must be positive")
    norm = global_norm(grads)
    if norm <= threshold:
        return list(grads), norm
    scale = threshold / norm
    return [None if g is None else g * np.asarray(scale, dtype=g.dtype) for g in grads], norm


@dataclass
class Parameter:
    """Factory helpers for leaf tensors that require gradients."""

    dtype: type = np.float64
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def zeros(self, *shape) -> Tensor:
        return Tensor(np.zeros(shape, dtype=self.dtype), requires_grad=True)

    def full(self, shape, value) -> Tensor:
        return Tensor(np.full(shape, value, dtype=self.dtype), requires_grad=True)

    def glorot(self, shape, fan_in: int, fan_out: int, scale: float = 1.0) -> Tensor:
        limit = scale * math.sqrt(6.0 / (fan_in + fan_out))
        return Tensor(self.rng.uniform(-limit, limit, size=shape).astype(self.dtype), requires_grad=True)

    def array(self, values) -> Tensor:
        return Tensor(np.asarray(values, dtype=self.dtype), requires_grad=True)
