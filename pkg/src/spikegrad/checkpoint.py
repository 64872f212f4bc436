"""Binary checkpoint container for named float64 arrays.

Layout (all integers little-endian):

    magic   4 bytes  b"SPKT"
    version u32      currently 1
    count   u32      number of entries
    entry   repeated count times:
        name_len u32
        name     UTF-8 bytes
        rank     u32
        dims     rank * u64
        data     prod(dims) * float64 (little-endian)

Entries round-trip bitwise and preserve insertion order.
"""

from __future__ import annotations

import struct
from collections import OrderedDict

import numpy as np

MAGIC = b"SPKT"
VERSION = 1


class CheckpointError(IOError):
    """Raised for corrupt headers, truncated payloads, or version mismatch."""


def save_checkpoint(params: "OrderedDict[str, np.ndarray] | dict[str, np.ndarray]", path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(params)))
        for name, arr in params.items():
            # note: ascontiguousarray would promote rank-0 arrays to rank 1
            a = np.asarray(arr, dtype="<f8", order="C")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
            fh.write(a.tobytes())


def load_checkpoint(path) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    if len(view) < 12 or bytes(view[:4]) != MAGIC:
        raise CheckpointError("corrupt header: bad magic")
    version, count = struct.unpack_from("<II", view, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<I", view, pos)
            pos += 4
            name = bytes(view[pos : pos + name_len]).decode("utf-8")
            if len(name.encode("utf-8")) != name_len:
                raise CheckpointError("truncated name")
            pos += name_len
            (rank,) = struct.unpack_from("<I", view, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}Q", view, pos)
            pos += 8 * rank
            n = 1
            for d in dims:
                n *= d
            nbytes = 8 * n
            if pos + nbytes > len(view):
                raise CheckpointError("truncated payload")
            arr = np.frombuffer(view, dtype="<f8", count=n, offset=pos).reshape(dims).copy()
            pos += nbytes
        except struct.error as exc:
            raise CheckpointError(f"truncated entry: {exc}") from exc
        out[name] = arr
    return out
