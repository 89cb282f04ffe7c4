"""HSWT tensor container.

Layout, all integers little-endian:

    magic "HSWT" | u16 version (=1) | u16 tensor_count
    per tensor: u16 name_len | name UTF-8 | u8 dtype | u8 ndim |
                u32 dim ... | payload (C order, little-endian)
    u16 meta_count
    per entry:  u16 key_len | key UTF-8 | u16 value_len | value UTF-8

dtype codes: 0 = float32, 1 = int8, 2 = int32.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError

_MAGIC = b"HSWT"
_VERSION = 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("i1"), 2: np.dtype("<i4")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.int8): 1, np.dtype(np.int32): 2}


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise FormatError("string field exceeds 65535 bytes")
    return struct.pack("<H", len(raw)) + raw


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("truncated HSWT file")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        n = self.u16()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("invalid UTF-8 in HSWT string field") from None


def save_tensors(path, tensors: dict, metadata: dict = None) -> None:
    """Write named tensors plus string metadata. Insertion order is kept."""
    metadata = metadata or {}
    if len(tensors) > 0xFFFF or len(metadata) > 0xFFFF:
        raise FormatError("too many tensors or metadata entries")
    parts = [_MAGIC, struct.pack("<HH", _VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        code = _CODES.get(arr.dtype)
        if code is None:
            raise FormatError(f"tensor '{name}' has unsupported dtype {arr.dtype}")
        if arr.ndim > 0xFF:
            raise FormatError(f"tensor '{name}' has too many dims")
        parts.append(_pack_str(name))
        parts.append(struct.pack("<BB", code, arr.ndim))
        for d in arr.shape:
            parts.append(struct.pack("<I", d))
        parts.append(arr.astype(_DTYPES[code]).tobytes())
    parts.append(struct.pack("<H", len(metadata)))
    for key, value in metadata.items():
        parts.append(_pack_str(key))
        parts.append(_pack_str(str(value)))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_tensors(path) -> tuple:
    """Read an HSWT file; returns (tensors, metadata) preserving file order."""
    with open(path, "rb") as fh:
        buf = fh.read()
    r = _Reader(buf)
    if r.take(4) != _MAGIC:
        raise FormatError("bad HSWT magic")
    version = r.u16()
    if version != _VERSION:
        raise FormatError(f"unsupported HSWT version {version}")
    count = r.u16()
    tensors = {}
    for _ in range(count):
        name = r.string()
        if name in tensors:
            raise FormatError(f"duplicate tensor '{name}'")
        code = r.u8()
        if code not in _DTYPES:
            raise FormatError(f"unknown dtype code {code}")
        ndim = r.u8()
        shape = tuple(r.u32() for _ in range(ndim))
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        dt = _DTYPES[code]
        payload = r.take(n * dt.itemsize)
        arr = np.frombuffer(payload, dtype=dt).reshape(shape)
        if code == 0:
            arr = arr.astype(np.float32)
        elif code == 2:
            arr = arr.astype(np.int32)
        else:
            arr = arr.astype(np.int8)
        tensors[name] = arr
    meta_count = r.u16()
    metadata = {}
    for _ in range(meta_count):
        key = r.string()
        metadata[key] = r.string()
    if r.pos != len(buf):
        raise FormatError(f"{len(buf) - r.pos} trailing bytes after HSWT payload")
    return tensors, metadata
