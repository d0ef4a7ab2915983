"""Dense float64 tensors with a reverse-mode gradient tape.

Every primitive returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to one gradient per parent. Calling
:meth:`Tensor.backward` on a single-element tensor walks the recorded graph in
reverse topological order and accumulates into ``.grad`` of every leaf that
requires it. Gradients keep accumulating across calls until :meth:`zero_grad`.
"""
import contextlib
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from . import kernels
from .errors import ContractError, DimensionError

ArrayLike = Union[np.ndarray, float, int, Sequence]

_GRAD_ENABLED = True
DIV_GUARD = 1e-300


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled():
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple["Tensor", ...] = ()
        self._backward = None
        self.name = name

    # -- graph construction ------------------------------------------------
    @classmethod
    def _make(cls, data, parents, backward):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        if needs:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def is_leaf(self):
        return not self._parents

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- reverse pass ------------------------------------------------------
    def backward(self):
        if self.data.size != 1:
            raise ContractError(f"backward() needs a single-element root, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("root does not depend on any tensor that requires grad")
        order = topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def max(self, axis=None, keepdims=False):
        return reduce_max(self, axis, keepdims)

    @property
    def T(self):
        return transpose(self)


def topological_order(root):
    """Nodes reachable from ``root``, every parent before its children."""
    order, seen = [], set()
    stack = [(root, False)]
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
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def zeros(shape, requires_grad=False):
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad=False):
    return Tensor(np.ones(shape), requires_grad=requires_grad)


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _broadcast_shape(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return Tensor._make(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return Tensor._make(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return Tensor._make(a.data * b.data, (a, b), bw)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    if np.any(np.abs(b.data) < DIV_GUARD):
        raise ZeroDivisionError("divisor magnitude below 1e-300")

    def bw(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
    return Tensor._make(a.data / b.data, (a, b), bw)


def maximum(a, b):
    """Elementwise max; ties send the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    take_a = a.data >= b.data

    def bw(g):
        return _unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)
    return Tensor._make(np.maximum(a.data, b.data), (a, b), bw)


def power(a, p):
    a = as_tensor(a)
    p = float(p)

    def bw(g):
        return (g * p * a.data ** (p - 1.0),)
    return Tensor._make(a.data ** p, (a,), bw)


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor._make(out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise ValueError("log of non-positive value")
    return Tensor._make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return Tensor._make(out, (a,), lambda g: (g * 0.5 / out,))


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor._make(a.data * mask, (a,), lambda g: (g * mask,))


def sigmoid(a):
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return Tensor._make(out, (a,), lambda g: (g * out * (1.0 - out),))


def clip(a, lo, hi):
    """Clamp; gradient passes only where the input lies inside [lo, hi]."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return Tensor._make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def signed_sqrt(a):
    """sign(x) * sqrt(|x|). The derivative at exactly 0 is taken as 0."""
    a = as_tensor(a)
    mag = np.sqrt(np.abs(a.data))
    out = np.sign(a.data) * mag

    def bw(g):
        d = np.zeros_like(mag)
        nz = mag > 0
        d[nz] = 0.5 / mag[nz]
        return (g * d,)
    return Tensor._make(out, (a,), bw)


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def reshape(a, shape):
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {a.shape} ({a.size} elements) to {shape}") from None
    old = a.shape
    return Tensor._make(out, (a,), lambda g: (g.reshape(old),))


def transpose(a):
    """Swap the two trailing axes."""
    a = as_tensor(a)
    if a.ndim < 2:
        raise DimensionError("transpose needs at least 2 dimensions")
    out = np.swapaxes(a.data, -1, -2)
    return Tensor._make(out, (a,), lambda g: (np.swapaxes(g, -1, -2),))


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
                s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != axis % len(ref)):
            raise DimensionError(f"concat shape mismatch: {ref} vs {t.shape} on axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=axis))
    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b):
    """Matrix product of the trailing two axes; leading axes must agree."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    if a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2]:
        if not (a.ndim == 2 or b.ndim == 2):
            raise DimensionError(f"matmul batch dimensions differ: {a.shape} @ {b.shape}")

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
    return Tensor._make(a.data @ b.data, (a, b), bw)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def _norm_axes(a, axis):
    if axis is None:
        return tuple(range(a.ndim))
    if isinstance(axis, int):
        axis = (axis,)
    axes = tuple(sorted(ax % a.ndim for ax in axis))
    if any(a.shape[ax] == 0 for ax in axes) or a.size == 0:
        raise DimensionError("empty reduction")
    return axes


def _expand(g, shape, axes, keepdims):
    if not keepdims:
        for ax in axes:
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def reduce_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _norm_axes(a, axis)
    out = a.data.sum(axis=axes, keepdims=keepdims)
    return Tensor._make(out, (a,), lambda g: (_expand(g, a.shape, axes, keepdims).copy(),))


def reduce_mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _norm_axes(a, axis)
    count = int(np.prod([a.shape[ax] for ax in axes]))
    out = a.data.mean(axis=axes, keepdims=keepdims)
    return Tensor._make(out, (a,), lambda g: (_expand(g, a.shape, axes, keepdims) / count,))


def reduce_max(a, axis=None, keepdims=False):
    """Max over ``axis``; ties route the gradient to the lowest linear index."""
    a = as_tensor(a)
    axes = _norm_axes(a, axis)
    keep = [ax for ax in range(a.ndim) if ax not in axes]
    moved = np.transpose(a.data, keep + list(axes))
    lead = moved.shape[:len(keep)]
    flat = moved.reshape(lead + (-1,))
    idx = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    if keepdims:
        out_shaped = out.reshape([1 if ax in axes else a.shape[ax] for ax in range(a.ndim)])
    else:
        out_shaped = out

    def bw(g):
        g = np.asarray(g).reshape(lead)
        gf = np.zeros(flat.shape)
        np.put_along_axis(gf, idx[..., None], g[..., None], axis=-1)
        inv = np.argsort(keep + list(axes))
        return (np.transpose(gf.reshape(moved.shape), inv),)
    return Tensor._make(np.array(out_shaped, dtype=np.float64), (a,), bw)


def softmax(a, axis=-1):
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)
    return Tensor._make(out, (a,), bw)


def l2_normalize(a, axis=-1, eps=1e-12):
    """x / (||x||_2 + eps) along ``axis``; zero vectors map to zero."""
    a = as_tensor(a)
    nrm = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))
    den = nrm + eps
    out = a.data / den

    def bw(g):
        gx = (g * a.data).sum(axis=axis, keepdims=True)
        safe = np.where(nrm > 0, nrm, 1.0)
        corr = np.where(nrm > 0, a.data * gx / (den * den * safe), 0.0)
        return (g / den - corr,)
    return Tensor._make(out, (a,), bw)


# ---------------------------------------------------------------------------
# image ops
# ---------------------------------------------------------------------------

def conv2d(x, weight, bias=None, stride=1, padding=0):
    """Zero-padded cross-correlation, (n, c, h, w) * (o, c, k, k) -> (n, o, oh, ow)."""
    x, weight = as_tensor(x), as_tensor(weight)
    bias = None if bias is None else as_tensor(bias)
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError("conv2d expects 4-D input and weight")
    n, c, h, w = x.shape
    o, ci, k, k2 = weight.shape
    if ci != c:
        raise DimensionError(f"conv2d channel mismatch: input has {c}, weight expects {ci}")
    if k != k2:
        raise DimensionError("conv2d kernels must be square")
    oh = kernels.conv_out_size(h, k, stride, padding)
    ow = kernels.conv_out_size(w, k, stride, padding)
    if oh <= 0 or ow <= 0:
        raise DimensionError(f"conv2d output would be empty for input {h}x{w}")
    cols = kernels.im2col(x.data, k, stride, padding)
    wm = weight.data.reshape(o, -1)
    out = np.matmul(wm, cols)
    if bias is not None:
        out += bias.data.reshape(1, o, 1)
    out = out.reshape(n, o, oh, ow)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        gm = g.reshape(n, o, oh * ow)
        gw = np.matmul(gm, np.swapaxes(cols, 1, 2)).sum(axis=0).reshape(weight.shape)
        gx = None
        if x.requires_grad:
            gx = kernels.col2im(np.matmul(wm.T, gm), x.shape, k, stride, padding)
        if bias is None:
            return gx, gw
        return gx, gw, gm.sum(axis=(0, 2))
    return Tensor._make(out, parents, bw)


def batch_norm_train(x, gamma, beta, eps):
    """Normalise with batch statistics over (n, h, w). Returns output, mean, biased var."""
    x = as_tensor(x)
    mean = x.data.mean(axis=(0, 2, 3), keepdims=True)
    var = x.data.var(axis=(0, 2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    g4 = gamma.data.reshape(1, -1, 1, 1)
    out = xhat * g4 + beta.data.reshape(1, -1, 1, 1)
    m = x.size // x.shape[1]

    def bw(g):
        dxhat = g * g4
        gx = inv / m * (m * dxhat - dxhat.sum(axis=(0, 2, 3), keepdims=True)
                        - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True))
        return gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))
    return Tensor._make(out, (x, gamma, beta), bw), mean.reshape(-1), var.reshape(-1)


def resize_bilinear(x, size):
    """Bilinear resampling of (n, c, h, w) to spatial ``size``, half-pixel centres."""
    x = as_tensor(x)
    out_h, out_w = int(size[0]), int(size[1])
    if out_h <= 0 or out_w <= 0:
        raise DimensionError(f"resize target must be positive, got {size}")
    h, w = x.shape[2], x.shape[3]
    if (out_h, out_w) == (h, w):
        return x
    out = kernels.resize_forward(x.data, out_h, out_w)
    return Tensor._make(out, (x,), lambda g: (kernels.resize_backward(g, h, w),))


def separable_filter(x, rows, cols):
    """``rows @ x @ cols.T`` on the trailing two axes, with fixed operator matrices."""
    x = as_tensor(x)
    rows = np.asarray(rows, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.float64)
    if rows.shape[1] != x.shape[-2] or cols.shape[1] != x.shape[-1]:
        raise DimensionError("filter operator does not match input size")
    out = rows @ x.data @ cols.T
    return Tensor._make(out, (x,), lambda g: (rows.T @ g @ cols,))
