"""Checkpoint files.

Layout (all integers little-endian)::

    magic        8 bytes   b"HODICKPT"
    version      u32       1
    config_len   u32       then that many bytes of UTF-8 JSON (sorted keys)
    count        u32       number of tensors
    per tensor:  name_len u16, name (UTF-8), ndim u8, ndim x u32 dims,
                 prod(dims) x float32 payload
    crc32        u32       zlib.crc32 of every preceding byte

Tensors are written in the model's definition order. Payloads are 32-bit, so
saving a model that was loaded from a checkpoint reproduces the file exactly.
"""
import json
import struct
import zlib
from collections import OrderedDict

import numpy as np

from .errors import ParseError

MAGIC = b"HODICKPT"
VERSION = 1


def dumps(state, config=None):
    parts = [MAGIC, struct.pack("<I", VERSION)]
    cfg = json.dumps(config or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts += [struct.pack("<I", len(cfg)), cfg, struct.pack("<I", len(state))]
    for name, arr in state.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def loads(buf, path=None):
    """Returns ``(config, state)`` with float64 arrays."""
    buf = bytes(buf)
    if len(buf) < len(MAGIC) + 8 or buf[:len(MAGIC)] != MAGIC:
        raise ParseError("not a checkpoint (bad magic)", 0, path)
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise ParseError("checksum mismatch", len(buf) - 4, path)
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(body):
            raise ParseError("truncated checkpoint", pos, path)
        vals = struct.unpack_from(fmt, body, pos)
        pos += size
        return vals

    (version,) = take("<I")
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", pos - 4, path)
    (clen,) = take("<I")
    config = json.loads(body[pos:pos + clen].decode("utf-8"))
    pos += clen
    (count,) = take("<I")
    state = OrderedDict()
    for _ in range(count):
        (nlen,) = take("<H")
        name = body[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I") if ndim else ()
        n = int(np.prod(shape)) if shape else 1
        if pos + 4 * n > len(body):
            raise ParseError(f"truncated payload for {name}", pos, path)
        arr = np.frombuffer(body, dtype="<f4", count=n, offset=pos).astype(np.float64)
        pos += 4 * n
        state[name] = arr.reshape(shape)
    if pos != len(body):
        raise ParseError("trailing bytes after tensor table", pos, path)
    return config, state


def save(path, model, config=None):
    with open(path, "wb") as fh:
        fh.write(dumps(model.state_dict(), config))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read(), path)
