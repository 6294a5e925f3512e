"""Self-describing binary state snapshots (.skin files).

Layout (all little-endian): magic "SKIN", version, space descriptor
(d, number of physical dims, k, N, truncation), per-dimension boxes and
periodicity, the element table in canonical (|l|_1, l, j) order with one
(k+1)^d coefficient block each, then the field components.  Writing the
same state twice produces identical bytes; loading reproduces coefficients
exactly (no text round-off).
"""

from __future__ import annotations

from dataclasses import dataclass
import struct

import numpy as np

from .hiergrid import element_sort_key

__all__ = ["SnapshotData", "write_snapshot", "read_snapshot", "SnapshotError"]

MAGIC = b"SKIN"
VERSION = 2
TRUNCATION_CODES = {"full": 0, "sparse": 1, "adaptive": 2}
TRUNCATION_NAMES = {v: k for k, v in TRUNCATION_CODES.items()}


class SnapshotError(RuntimeError):
    pass


@dataclass
class SnapshotData:
    d: int
    dx: int
    k: int
    N: int
    truncation: str
    boxes: list[tuple[float, float, bool]]  # (lo, hi, periodic) per dim
    t: float
    keys: list
    blocks: np.ndarray  # (n_elements, (k+1)^d)
    fields: dict[str, np.ndarray]


def write_snapshot(path, data: SnapshotData) -> None:
    order = sorted(range(len(data.keys)), key=lambda i: element_sort_key(data.keys[i]))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<BBBBB", data.d, data.dx, data.k, data.N,
                             TRUNCATION_CODES[data.truncation]))
        fh.write(struct.pack("<d", data.t))
        for lo, hi, per in data.boxes:
            fh.write(struct.pack("<ddB", lo, hi, int(per)))
        fh.write(struct.pack("<Q", len(order)))
        bs = data.blocks.shape[1] if len(order) else (data.k + 1) ** data.d
        for i in order:
            levels, cells = data.keys[i]
            fh.write(struct.pack(f"<{data.d}B", *levels))
            fh.write(struct.pack(f"<{data.d}I", *cells))
            fh.write(np.ascontiguousarray(data.blocks[i], dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(data.fields)))
        for name in sorted(data.fields):
            arr = np.ascontiguousarray(data.fields[name], dtype="<f8")
            nb = name.encode()
            fh.write(struct.pack("<B", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise SnapshotError("truncated snapshot file")
    return buf


def read_snapshot(path) -> SnapshotData:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise SnapshotError("not a snapshot file (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != VERSION:
            raise SnapshotError(f"unsupported snapshot version {version}")
        d, dx, k, N, trunc = struct.unpack("<BBBBB", _read_exact(fh, 5))
        (t,) = struct.unpack("<d", _read_exact(fh, 8))
        boxes = []
        for _ in range(d):
            lo, hi, per = struct.unpack("<ddB", _read_exact(fh, 17))
            boxes.append((lo, hi, bool(per)))
        (count,) = struct.unpack("<Q", _read_exact(fh, 8))
        bs = (k + 1) ** d
        keys = []
        blocks = np.empty((count, bs))
        for i in range(count):
            levels = struct.unpack(f"<{d}B", _read_exact(fh, d))
            cells = struct.unpack(f"<{d}I", _read_exact(fh, 4 * d))
            blocks[i] = np.frombuffer(_read_exact(fh, 8 * bs), dtype="<f8")
            keys.append((tuple(levels), tuple(cells)))
        (nfields,) = struct.unpack("<I", _read_exact(fh, 4))
        fields = {}
        for _ in range(nfields):
            (nlen,) = struct.unpack("<B", _read_exact(fh, 1))
            name = _read_exact(fh, nlen).decode()
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
            shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim))
            n = int(np.prod(shape))
            fields[name] = np.frombuffer(_read_exact(fh, 8 * n),
                                         dtype="<f8").reshape(shape).copy()
        return SnapshotData(d, dx, k, N, TRUNCATION_NAMES[trunc], boxes, t,
                            keys, blocks, fields)
