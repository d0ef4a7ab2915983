"""Hot inner loops: patch extraction for convolution and bilinear resampling.

Each public function dispatches to a numba kernel or a numpy path according to
:func:`hodinet._accel.backend`. Both paths compute the same values; the test
suite checks them against each other.
"""
import numpy as np

from . import _accel
from ._accel import try_jit


def conv_out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


# ---------------------------------------------------------------------------
# im2col / col2im
# ---------------------------------------------------------------------------

@try_jit
def _im2col_nb(x, k, stride, pad, oh, ow):
    n, c, h, w = x.shape
    cols = np.zeros((n, c * k * k, oh * ow))
    for b in range(n):
        for ci in range(c):
            for ki in range(k):
                for kj in range(k):
                    row = (ci * k + ki) * k + kj
                    for i in range(oh):
                        y = i * stride + ki - pad
                        if y < 0 or y >= h:
                            continue
                        for j in range(ow):
                            xx = j * stride + kj - pad
                            if xx < 0 or xx >= w:
                                continue
                            cols[b, row, i * ow + j] = x[b, ci, y, xx]
    return cols


@try_jit
def _col2im_nb(cols, n, c, h, w, k, stride, pad, oh, ow):
    x = np.zeros((n, c, h, w))
    for b in range(n):
        for ci in range(c):
            for ki in range(k):
                for kj in range(k):
                    row = (ci * k + ki) * k + kj
                    for i in range(oh):
                        y = i * stride + ki - pad
                        if y < 0 or y >= h:
                            continue
                        for j in range(ow):
                            xx = j * stride + kj - pad
                            if xx < 0 or xx >= w:
                                continue
                            x[b, ci, y, xx] += cols[b, row, i * ow + j]
    return x


def _im2col_np(x, k, stride, pad, oh, ow):
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, c, k, k, oh, ow))
    for ki in range(k):
        for kj in range(k):
            cols[:, :, ki, kj] = xp[:, :, ki:ki + stride * oh:stride, kj:kj + stride * ow:stride]
    return cols.reshape(n, c * k * k, oh * ow)


def _col2im_np(cols, n, c, h, w, k, stride, pad, oh, ow):
    cols = cols.reshape(n, c, k, k, oh, ow)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    for ki in range(k):
        for kj in range(k):
            xp[:, :, ki:ki + stride * oh:stride, kj:kj + stride * ow:stride] += cols[:, :, ki, kj]
    return xp[:, :, pad:pad + h, pad:pad + w].copy()


def im2col(x, k, stride=1, pad=0):
    """(n, c, h, w) -> (n, c*k*k, oh*ow), zero padded; row order is (c, ki, kj)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    oh = conv_out_size(x.shape[2], k, stride, pad)
    ow = conv_out_size(x.shape[3], k, stride, pad)
    if _accel.USE_NUMBA:
        return _im2col_nb(x, k, stride, pad, oh, ow)
    return _im2col_np(x, k, stride, pad, oh, ow)


def col2im(cols, shape, k, stride=1, pad=0):
    """Adjoint of :func:`im2col`: scatter-add columns back onto an image of ``shape``."""
    n, c, h, w = shape
    oh = conv_out_size(h, k, stride, pad)
    ow = conv_out_size(w, k, stride, pad)
    cols = np.ascontiguousarray(cols, dtype=np.float64)
    if _accel.USE_NUMBA:
        return _col2im_nb(cols, n, c, h, w, k, stride, pad, oh, ow)
    return _col2im_np(cols, n, c, h, w, k, stride, pad, oh, ow)


# ---------------------------------------------------------------------------
# bilinear resampling, half-pixel centres
# ---------------------------------------------------------------------------

def bilinear_taps(in_size, out_size):
    """Source indices and weights per output position along one axis.

    Half-pixel convention: ``src = (o + 0.5) * in/out - 0.5``, clamped at 0.
    Returns ``(i0, i1, frac)`` so ``out[o] = (1-frac)*x[i0] + frac*x[i1]``.
    """
    scale = in_size / out_size
    src = (np.arange(out_size) + 0.5) * scale - 0.5
    src = np.maximum(src, 0.0)
    i0 = np.minimum(np.floor(src).astype(np.int64), in_size - 1)
    i1 = np.minimum(i0 + 1, in_size - 1)
    frac = src - i0
    frac[i0 == in_size - 1] = 0.0
    return i0, i1, frac


def bilinear_matrix(in_size, out_size):
    """Dense (out_size, in_size) interpolation operator along one axis."""
    i0, i1, frac = bilinear_taps(in_size, out_size)
    m = np.zeros((out_size, in_size))
    rows = np.arange(out_size)
    np.add.at(m, (rows, i0), 1.0 - frac)
    np.add.at(m, (rows, i1), frac)
    return m


@try_jit
def _resize_fwd_nb(x, y0, y1, fy, x0, x1, fx):
    n, c, _, _ = x.shape
    oh = y0.shape[0]
    ow = x0.shape[0]
    out = np.empty((n, c, oh, ow))
    for b in range(n):
        for ch in range(c):
            for i in range(oh):
                a = y0[i]
                bb = y1[i]
                wy = fy[i]
                for j in range(ow):
                    l = x0[j]
                    r = x1[j]
                    wx = fx[j]
                    top = (1.0 - wx) * x[b, ch, a, l] + wx * x[b, ch, a, r]
                    bot = (1.0 - wx) * x[b, ch, bb, l] + wx * x[b, ch, bb, r]
                    out[b, ch, i, j] = (1.0 - wy) * top + wy * bot
    return out


@try_jit
def _resize_bwd_nb(g, h, w, y0, y1, fy, x0, x1, fx):
    n, c, oh, ow = g.shape
    dx = np.zeros((n, c, h, w))
    for b in range(n):
        for ch in range(c):
            for i in range(oh):
                a = y0[i]
                bb = y1[i]
                wy = fy[i]
                for j in range(ow):
                    l = x0[j]
                    r = x1[j]
                    wx = fx[j]
                    v = g[b, ch, i, j]
                    dx[b, ch, a, l] += (1.0 - wy) * (1.0 - wx) * v
                    dx[b, ch, a, r] += (1.0 - wy) * wx * v
                    dx[b, ch, bb, l] += wy * (1.0 - wx) * v
                    dx[b, ch, bb, r] += wy * wx * v
    return dx


def resize_forward(x, out_h, out_w):
    x = np.ascontiguousarray(x, dtype=np.float64)
    h, w = x.shape[2], x.shape[3]
    if _accel.USE_NUMBA:
        y0, y1, fy = bilinear_taps(h, out_h)
        x0, x1, fx = bilinear_taps(w, out_w)
        return _resize_fwd_nb(x, y0, y1, fy, x0, x1, fx)
    ry = bilinear_matrix(h, out_h)
    rx = bilinear_matrix(w, out_w)
    return ry @ x @ rx.T


def resize_backward(g, h, w):
    g = np.ascontiguousarray(g, dtype=np.float64)
    out_h, out_w = g.shape[2], g.shape[3]
    if _accel.USE_NUMBA:
        y0, y1, fy = bilinear_taps(h, out_h)
        x0, x1, fx = bilinear_taps(w, out_w)
        return _resize_bwd_nb(g, h, w, y0, y1, fy, x0, x1, fx)
    ry = bilinear_matrix(h, out_h)
    rx = bilinear_matrix(w, out_w)
    return ry.T @ g @ rx


# ---------------------------------------------------------------------------
# separable window filtering (valid positions only)
# ---------------------------------------------------------------------------

def gaussian_window(size=11, sigma=1.5):
    g = np.exp(-((np.arange(size) - size // 2) ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def window_matrix(in_size, taps):
    """(in_size - len(taps) + 1, in_size) banded matrix for valid 1-D correlation."""
    k = len(taps)
    out = in_size - k + 1
    m = np.zeros((out, in_size))
    for i in range(out):
        m[i, i:i + k] = taps
    return m


def uniform_window_matrix(in_size):
    return np.full((1, in_size), 1.0 / in_size)


def warmup():
    """Compile the numba kernels once (no-op on the numpy backend)."""
    if not _accel.USE_NUMBA:
        return
    x = np.zeros((1, 1, 4, 4))
    col2im(im2col(x, 3, 1, 1), x.shape, 3, 1, 1)
    resize_backward(resize_forward(x, 8, 8), 4, 4)


__all__ = [
    "conv_out_size", "im2col", "col2im", "bilinear_taps", "bilinear_matrix",
    "resize_forward", "resize_backward", "gaussian_window", "window_matrix",
    "uniform_window_matrix", "warmup",
]
