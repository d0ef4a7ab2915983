"""Binary netpbm I/O: P6 (RGB) and P5 (grayscale), maxval 255 only."""
import os

import numpy as np

from . import kernels
from .errors import ParseError, UnsupportedFormatError
from .tensor import Tensor

_WS = b" \t\n\r\v\f"


def _header(buf, path=None):
    """Parse magic, width, height, maxval; return them and the payload offset."""
    if len(buf) < 2 or buf[:1] != b"P":
        raise ParseError("not a netpbm file (bad magic)", 0, path)
    magic = buf[:2].decode("ascii", "replace")
    if magic not in ("P5", "P6"):
        raise UnsupportedFormatError(f"unsupported netpbm type {magic!r}; only P5/P6", 0, path)
    pos = 2
    fields = []
    while len(fields) < 3:
        # whitespace and comments between header fields
        while pos < len(buf) and (buf[pos] in _WS or buf[pos] == ord("#")):
            if buf[pos] == ord("#"):
                while pos < len(buf) and buf[pos] not in b"\n\r":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < len(buf) and 48 <= buf[pos] <= 57:
            pos += 1
        if pos == start:
            raise ParseError("expected a decimal header field", pos, path)
        fields.append(int(buf[start:pos]))
    if pos >= len(buf) or buf[pos] not in _WS:
        raise ParseError("header must end with a single whitespace byte", pos, path)
    pos += 1
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise ParseError(f"invalid dimensions {width}x{height}", start, path)
    if maxval != 255:
        raise UnsupportedFormatError(f"maxval {maxval} not supported (need 255)", start, path)
    return magic, width, height, maxval, pos


def decode(buf, path=None):
    """Bytes -> uint8 array, (h, w) for P5 or (h, w, 3) for P6."""
    buf = bytes(buf)
    magic, width, height, _, off = _header(buf, path)
    chans = 3 if magic == "P6" else 1
    need = width * height * chans
    have = len(buf) - off
    if have < need:
        raise ParseError(f"truncated payload: {have} of {need} bytes", len(buf), path)
    data = np.frombuffer(buf, dtype=np.uint8, count=need, offset=off)
    return data.reshape(height, width, chans) if chans == 3 else data.reshape(height, width)


def encode(arr):
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise ValueError("netpbm payload must be uint8")
    if arr.ndim == 2:
        head = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        head = f"P6\n{arr.shape[1]} {arr.shape[0]}\n255\n"
    else:
        raise ValueError(f"cannot encode array of shape {arr.shape}")
    return head.encode("ascii") + np.ascontiguousarray(arr).tobytes()


def read(path):
    with open(path, "rb") as fh:
        return decode(fh.read(), path)


def write(path, arr):
    with open(path, "wb") as fh:
        fh.write(encode(arr))


def to_bytes(p):
    """[0, 1] floats -> uint8 with round-half-up."""
    p = np.clip(np.asarray(p, dtype=np.float64), 0.0, 1.0)
    return np.floor(255.0 * p + 0.5).astype(np.uint8)


def load_image(path, role="rgb", size=None):
    """Read an image as a (1, c, h, w) tensor scaled to [0, 1].

    ``role`` is ``"rgb"`` (P6, or P5 replicated), ``"depth"`` (copied to
    three channels) or ``"gt"`` (one channel, binarised at 0.5 after resizing).
    """
    arr = read(path).astype(np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)
    if role == "rgb" and arr.shape[0] == 1:
        arr = np.repeat(arr, 3, axis=0)
    elif role == "depth":
        arr = np.repeat(arr.mean(axis=0, keepdims=True), 3, axis=0)
    elif role == "gt":
        arr = arr.mean(axis=0, keepdims=True)
    elif role != "rgb":
        raise ValueError(f"unknown role {role!r}")
    x = arr[None]
    if size is not None and tuple(size) != x.shape[2:]:
        x = kernels.resize_forward(x, int(size[0]), int(size[1]))
    if role == "gt":
        x = (x >= 0.5).astype(np.float64)
    return Tensor(x)


def save_saliency(p, path):
    """Write a single-channel map in [0, 1] as an 8-bit PGM."""
    data = p.data if isinstance(p, Tensor) else np.asarray(p)
    while data.ndim > 2 and data.shape[0] == 1:
        data = data[0]
    if data.ndim != 2:
        raise ValueError(f"saliency map must be single channel, got shape {np.shape(p)}")
    try:
        write(path, to_bytes(data))
    except OSError as exc:
        raise OSError(f"cannot write {os.fspath(path)}: {exc.strerror}") from exc
