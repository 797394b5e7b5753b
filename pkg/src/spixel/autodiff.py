"""Reverse-mode automatic differentiation over dense numpy arrays.

A ``Tensor`` wraps a float32/float64 ndarray. While a ``Graph`` is active
(used as a context manager), every differentiable operation whose inputs
require gradients appends one node to the tape: the output tensor, the input
tensors, and a closure that maps the output gradient to input gradients.
``Graph.backward`` walks the tape once in reverse; a second walk on the same
graph raises. Without an active graph, operations are plain numpy compute
with no recording, which is what inference uses.

Shapes never broadcast except against 0-d scalars; mismatched operands raise
``ShapeError`` instead of silently broadcasting.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .errors import ConfigError, GraphUsageError, ShapeError

_FLOAT_TYPES = (np.float32, np.float64)


class Tensor:
    """Dense n-dimensional real array, optionally tracked for gradients."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_TYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _size_err(self)

    def numpy(self):
        return self.data

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return scalar_over(other, self)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def reshape(self, shape):
        return reshape(self, shape)

    def permute(self, axes):
        return permute(self, axes)

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"


def _size_err(t):
    raise ShapeError(f"expected a single-element tensor, got shape {t.shape}")


class Graph:
    """Tape of executed differentiable operations, walkable exactly once."""

    def __init__(self):
        self._nodes = []
        self._consumed = False

    def __enter__(self):
        global _ACTIVE
        if _ACTIVE is not None:
            raise GraphUsageError("another graph is already recording")
        _ACTIVE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE
        _ACTIVE = None
        return False

    def __len__(self):
        return len(self._nodes)

    def backward(self, loss, params=None):
        """Accumulate d(loss)/d(t) into ``t.grad`` for every tracked tensor.

        Returns a dict mapping each grad-flagged tensor touched by the tape
        (plus any in ``params``) to its gradient array; tensors the loss never
        reached get zeros. Raises ``GraphUsageError`` on a second call.
        """
        if self._consumed:
            raise GraphUsageError("this graph has already been walked backward")
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._consumed = True

        produced = set()
        tracked = []
        seen = set()
        for out, inputs, _ in self._nodes:
            produced.add(id(out))
            for t in (out, *inputs):
                if t.requires_grad and id(t) not in seen:
                    seen.add(id(t))
                    tracked.append(t)

        loss.grad = np.ones_like(loss.data)
        for out, inputs, fn in reversed(self._nodes):
            g = out.grad
            if g is None:
                continue
            grads = fn(g)
            for t, gt in zip(inputs, grads):
                if gt is None or not t.requires_grad:
                    continue
                t.grad = gt if t.grad is None else t.grad + gt
        self._nodes.clear()

        grad_map = {}
        for t in tracked:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            grad_map[t] = t.grad
        if params is not None:
            for t in params:
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
                grad_map[t] = t.grad
        return grad_map


_ACTIVE = None


def backward(loss, graph, params=None):
    """Functional spelling of ``graph.backward(loss)``."""
    return graph.backward(loss, params)


def record_op(out, inputs, backward_fn):
    """Append a custom differentiable op to the active graph, if any.

    ``backward_fn`` receives the output gradient array and must return a
    tuple of gradient arrays (or None) aligned with ``inputs``. This is the
    extension point the structured-op modules use.
    """
    g = _ACTIVE
    if g is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        g._nodes.append((out, inputs, backward_fn))
    return out


def _check_same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b):
    if not isinstance(b, Tensor):
        out = Tensor(a.data + b)
        return record_op(out, (a,), lambda g: (g,))
    _check_same_shape(a.data, b.data, "add")
    out = Tensor(a.data + b.data)
    return record_op(out, (a, b), lambda g: (g, g))


def sub(a, b):
    if not isinstance(b, Tensor):
        out = Tensor(a.data - b)
        return record_op(out, (a,), lambda g: (g,))
    _check_same_shape(a.data, b.data, "sub")
    out = Tensor(a.data - b.data)
    return record_op(out, (a, b), lambda g: (g, -g))


def neg(a):
    out = Tensor(-a.data)
    return record_op(out, (a,), lambda g: (-g,))


def mul(a, b):
    if not isinstance(b, Tensor):
        out = Tensor(a.data * b)
        return record_op(out, (a,), lambda g: (g * b,))
    _check_same_shape(a.data, b.data, "mul")
    ad, bd = a.data, b.data
    out = Tensor(ad * bd)
    return record_op(out, (a, b), lambda g: (g * bd, g * ad))


def div(a, b):
    if not isinstance(b, Tensor):
        return mul(a, 1.0 / b)
    _check_same_shape(a.data, b.data, "div")
    ad, bd = a.data, b.data
    out = Tensor(ad / bd)
    return record_op(out, (a, b), lambda g: (g / bd, -g * ad / (bd * bd)))


def scalar_over(c, b):
    """c / b for a python scalar c and tensor b."""
    bd = b.data
    out = Tensor(c / bd)
    return record_op(out, (b,), lambda g: (-g * c / (bd * bd),))


def texp(a):
    e = np.exp(a.data)
    out = Tensor(e)
    return record_op(out, (a,), lambda g: (g * e,))


def tlog(a):
    ad = a.data
    out = Tensor(np.log(ad))
    return record_op(out, (a,), lambda g: (g / ad,))


def tabs(a):
    ad = a.data
    out = Tensor(np.abs(ad))
    return record_op(out, (a,), lambda g: (g * np.sign(ad),))


def center_channels(a):
    """Subtract the per-position channel mean of a [C, ...] tensor.

    The centering projection is self-adjoint, so the backward pass applies
    the same projection to the gradient.
    """
    ad_ = a.data
    out = Tensor(ad_ - ad_.mean(axis=0, keepdims=True))
    return record_op(out, (a,), lambda g: (g - g.mean(axis=0, keepdims=True),))


def tsqrt(a):
    root = np.sqrt(a.data)
    out = Tensor(root)
    return record_op(out, (a,), lambda g: (g * 0.5 / root,))


def scale_by(a, s):
    """Multiply a tensor by a single-element tensor (broadcast scalar)."""
    if s.data.size != 1:
        raise ShapeError(f"scale_by needs a scalar tensor, got shape {s.shape}")
    sv = s.data.reshape(())
    ad_ = a.data
    out = Tensor(ad_ * sv)

    def bw(g):
        return (g * sv, (g * ad_).sum().reshape(s.data.shape))

    return record_op(out, (a, s), bw)


def clamp(a, lo=None, hi=None):
    """Clip to [lo, hi]; gradient flows only strictly inside the interval."""
    ad = a.data
    out = Tensor(np.clip(ad, lo, hi))
    inside = np.ones(ad.shape, bool)
    if lo is not None:
        inside &= ad > lo
    if hi is not None:
        inside &= ad < hi
    return record_op(out, (a,), lambda g: (g * inside,))


def leaky_relu(a, slope=0.1):
    if not 0.0 < slope < 1.0:
        raise ConfigError(f"leaky_relu slope must be in (0, 1), got {slope}")
    ad = a.data
    out = Tensor(np.maximum(ad, slope * ad))
    factor = np.where(ad > 0, ad.dtype.type(1.0), ad.dtype.type(slope))
    return record_op(out, (a,), lambda g: (g * factor,))


def softmax_channels(a, axis=1):
    """Softmax along ``axis`` with max-subtraction for overflow safety."""
    ad = a.data
    shifted = ad - ad.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def bw(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return record_op(out, (a,), bw)


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------


def tsum(a, axis=None):
    ad = a.data
    out = Tensor(ad.sum(axis=axis))

    def bw(g):
        if axis is None:
            return (np.full(ad.shape, g, ad.dtype) if np.ndim(g) == 0 else g * np.ones(ad.shape, ad.dtype),)
        return (np.broadcast_to(np.expand_dims(g, axis), ad.shape).copy(),)

    return record_op(out, (a,), bw)


def tmean(a, axis=None):
    ad = a.data
    count = ad.size if axis is None else ad.shape[axis]
    return mul(tsum(a, axis), 1.0 / count)


def reshape(a, shape):
    ad = a.data
    out = Tensor(ad.reshape(shape))
    return record_op(out, (a,), lambda g: (g.reshape(ad.shape),))


def permute(a, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor(np.ascontiguousarray(a.data.transpose(axes)))
    return record_op(out, (a,), lambda g: (np.ascontiguousarray(g.transpose(inv)),))


def concat(tensors, axis=1):
    datas = [t.data for t in tensors]
    out = Tensor(np.concatenate(datas, axis=axis))
    sizes = [d.shape[axis] for d in datas]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        slc = [slice(None)] * g.ndim
        pieces = []
        for i in range(len(sizes)):
            slc[axis] = slice(bounds[i], bounds[i + 1])
            pieces.append(np.ascontiguousarray(g[tuple(slc)]))
        return tuple(pieces)

    return record_op(out, tuple(tensors), bw)


def narrow(a, axis, start, stop):
    """Slice [start, stop) along ``axis``; gradient scatters back into zeros."""
    ad = a.data
    slc = [slice(None)] * ad.ndim
    slc[axis] = slice(start, stop)
    slc = tuple(slc)
    out = Tensor(np.ascontiguousarray(ad[slc]))

    def bw(g):
        full = np.zeros_like(ad)
        full[slc] = g
        return (full,)

    return record_op(out, (a,), bw)


def take_item(a, i):
    ad = a.data
    out = Tensor(np.ascontiguousarray(ad[i]))

    def bw(g):
        full = np.zeros_like(ad)
        full[i] = g
        return (full,)

    return record_op(out, (a,), bw)


def stack0(tensors):
    out = Tensor(np.stack([t.data for t in tensors], axis=0))

    def bw(g):
        return tuple(np.ascontiguousarray(g[i]) for i in range(len(tensors)))

    return record_op(out, tuple(tensors), bw)


def take_pixels(a, rows, cols):
    """Gather rows of an [H, W, C] map at the given pixel coordinates."""
    ad = a.data
    rows = np.asarray(rows, np.intp)
    cols = np.asarray(cols, np.intp)
    out = Tensor(ad[rows, cols])

    def bw(g):
        full = np.zeros_like(ad)
        np.add.at(full, (rows, cols), g)
        return (full,)

    return record_op(out, (a,), bw)


# ---------------------------------------------------------------------------
# structured ops backed by the kernel backends
# ---------------------------------------------------------------------------


def conv2d(x, w, b, stride=1, pad=1):
    xd, wd, bd = x.data, w.data, b.data
    if xd.ndim != 4 or wd.ndim != 4:
        raise ShapeError("conv2d expects x[N,C,H,W] and w[F,C,k,k]")
    n, c, h, wdt = xd.shape
    f, cw, k, k2 = wd.shape
    if k != k2 or k % 2 != 1:
        raise ShapeError(f"conv2d kernel must be square with odd size, got {k}x{k2}")
    if cw != c:
        raise ShapeError(f"conv2d channel mismatch: input {c}, kernel {cw}")
    if bd.shape != (f,):
        raise ShapeError(f"conv2d bias must have shape ({f},), got {bd.shape}")
    if pad < 0:
        raise ConfigError("conv2d pad must be >= 0")
    if (h + 2 * pad - k) % stride or (wdt + 2 * pad - k) % stride:
        raise ConfigError(
            f"conv2d output size not integral for input {h}x{wdt}, "
            f"kernel {k}, stride {stride}, pad {pad}"
        )
    out = Tensor(K.conv2d_fwd(xd, wd, bd, stride, pad))
    need_dx, need_dw = x.requires_grad, w.requires_grad

    def bw(g):
        dx, dw, db = K.conv2d_bwd(g, xd, wd, stride, pad, need_dx, need_dw)
        return (dx if need_dx else None, dw if need_dw else None, db)

    return record_op(out, (x, w, b), bw)


def conv_transpose2d(x, w, stride=2):
    xd, wd = x.data, w.data
    if stride != 2:
        raise ConfigError("conv_transpose2d supports stride 2 only")
    if xd.ndim != 4 or wd.ndim != 4 or wd.shape[2:] != (2, 2):
        raise ShapeError("conv_transpose2d expects x[N,C,h,w] and w[C,F,2,2]")
    if wd.shape[0] != xd.shape[1]:
        raise ShapeError(
            f"conv_transpose2d channel mismatch: input {xd.shape[1]}, kernel {wd.shape[0]}"
        )
    out = Tensor(K.convt2x2_fwd(xd, wd))
    need_dx, need_dw = x.requires_grad, w.requires_grad

    def bw(g):
        dx, dw = K.convt2x2_bwd(g, xd, wd, need_dx, need_dw)
        return (dx if need_dx else None, dw if need_dw else None)

    return record_op(out, (x, w), bw)


def max_pool2(x):
    xd = x.data
    if xd.ndim != 4:
        raise ShapeError("max_pool2 expects x[N,C,H,W]")
    if xd.shape[2] % 2 or xd.shape[3] % 2:
        raise ShapeError(f"max_pool2 needs even H and W, got {xd.shape[2]}x{xd.shape[3]}")
    y, idx = K.maxpool2_fwd(xd)
    out = Tensor(y)
    return record_op(out, (x,), lambda g: (K.maxpool2_bwd(g, idx),))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """Per-parameter Adam moments plus the shared step counter."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, beta1=0.9, beta2=0.999, eps=1e-8):
        state = cls(beta1=beta1, beta2=beta2, eps=eps)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update, applied in place.

    ``params`` maps names to Tensors, ``grads`` maps the same names to
    gradient arrays. Returns ``(params, state)``.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ShapeError(
                f"adam_step: gradient shape {g.shape} does not match "
                f"parameter {name!r} shape {p.data.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / c1
        vhat = v / c2
        p.data -= lr * mhat / (np.sqrt(vhat) + state.eps)
    return params, state
