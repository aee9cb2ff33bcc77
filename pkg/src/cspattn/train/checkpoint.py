"""Versioned binary checkpoints.

Layout (little-endian): magic ``CSPCKPT\\0``, u32 version, u32 entry count,
then per entry: u32 name length, UTF-8 name, u32 ndim, ndim x u64 dims,
and the float64 payload in C order.
"""

import struct

import numpy as np

from ..errors import CspError
from ..report import atomic_write

__all__ = ["MAGIC", "VERSION", "CheckpointError", "save_checkpoint", "load_checkpoint"]

MAGIC = b"CSPCKPT\0"
VERSION = 1


class CheckpointError(CspError, ValueError):
    pass


def encode(params):
    out = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack(f"<I{arr.ndim}Q", arr.ndim, *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def decode(blob):
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise CheckpointError("truncated checkpoint")
        vals = struct.unpack_from(fmt, blob, pos)
        pos += size
        return vals

    version, count = take("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    params = {}
    for _ in range(count):
        (length,) = take("<I")
        name = bytes(take(f"<{length}s")[0]).decode("utf-8")
        (ndim,) = take("<I")
        dims = take(f"<{ndim}Q")
        size = int(np.prod(dims)) * 8
        if pos + size > len(blob):
            raise CheckpointError("truncated checkpoint")
        params[name] = np.frombuffer(blob, dtype="<f8", count=size // 8, offset=pos).reshape(dims).astype(np.float64)
        pos += size
    if pos != len(blob):
        raise CheckpointError("trailing bytes after checkpoint")
    return params


def save_checkpoint(path, params):
    atomic_write(path, encode(params))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return decode(fh.read())
