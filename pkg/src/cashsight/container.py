"""Flat binary container for named float arrays (magic ``DNM1``).

Layout, all integers little-endian:

    magic   4 bytes  b"DNM1"
    version u32      currently 1
    count   u32      number of entries
    entry*  count times:
        name_len u32, name UTF-8 bytes
        dtype    u8   0 = float32, 1 = float64
        rank     u32
        dims     u32 x rank
        data     raw little-endian values, row-major

Round trips are bit-exact.  Any structural problem raises
:class:`ContainerFormatError` naming the offending field.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DNM1"
VERSION = 1
_DTYPE_TO_TAG = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_TAG_TO_DTYPE = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class ContainerFormatError(ValueError):
    """Malformed or truncated DNM1 container."""


def save_container(path: str | Path, entries: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, arr in entries.items():
        dt = np.dtype(arr.dtype).newbyteorder("<")
        if dt not in _DTYPE_TO_TAG:
            raise ValueError(f"entry {name!r}: unsupported dtype {arr.dtype}")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<B", _DTYPE_TO_TAG[dt]))
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        chunks.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, field: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ContainerFormatError(f"truncated container while reading {field}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, field: str) -> int:
        return struct.unpack("<I", self.take(4, field))[0]

    def u8(self, field: str) -> int:
        return self.take(1, field)[0]


def load_container(path: str | Path) -> dict[str, np.ndarray]:
    r = _Reader(Path(path).read_bytes())
    if r.take(4, "magic") != MAGIC:
        raise ContainerFormatError("bad magic: not a DNM1 container")
    version = r.u32("version")
    if version != VERSION:
        raise ContainerFormatError(f"unsupported version {version}")
    count = r.u32("entry count")
    entries: dict[str, np.ndarray] = {}
    for i in range(count):
        name_len = r.u32(f"entry {i} name length")
        name = r.take(name_len, f"entry {i} name").decode("utf-8")
        tag = r.u8(f"entry {name!r} dtype")
        if tag not in _TAG_TO_DTYPE:
            raise ContainerFormatError(f"entry {name!r}: unknown dtype tag {tag}")
        rank = r.u32(f"entry {name!r} rank")
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank, f"entry {name!r} dims"))
        dt = _TAG_TO_DTYPE[tag]
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw = r.take(n * dt.itemsize, f"entry {name!r} data")
        entries[name] = np.frombuffer(raw, dtype=dt).reshape(dims).copy()
    if r.pos != len(r.data):
        raise ContainerFormatError(f"{len(r.data) - r.pos} trailing bytes after last entry")
    return entries
