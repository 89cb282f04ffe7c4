"""File formats shared with the inference side.

The trainer deliberately does not import the inference package; the three
formats below are the whole contract between the two, so they are implemented
here from their byte-level definitions.

HSC cube: little-endian header "HSC1" | u8 stage | u8 reserved | u16 bands |
u32 height | u32 width, then float32 samples in band-major (bands, H, W)
C order. Stage codes: 0 reflectance, 1 aligned, 2 filtered, 3 normalized.

Label PGM: binary P5, maxval 255, one byte per pixel; 255 marks ignored
pixels.

HSWT tensor container, all integers little-endian:

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

STAGE_NAMES = ("reflectance", "aligned", "filtered", "normalized")

_HSC_MAGIC = b"HSC1"
_HSC_HEADER = struct.Struct("<4sBBHII")


def load_cube(path) -> tuple:
    """Read an HSC cube; returns (data (H, W, bands) float32, stage name)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HSC_HEADER.size:
        raise FormatError("truncated HSC header")
    magic, stage, _reserved, bands, height, width = _HSC_HEADER.unpack_from(buf)
    if magic != _HSC_MAGIC:
        raise FormatError(f"bad HSC magic {magic!r}")
    if stage >= len(STAGE_NAMES):
        raise FormatError(f"unknown HSC stage code {stage}")
    payload = buf[_HSC_HEADER.size:]
    need = bands * height * width * 4
    if len(payload) != need:
        raise FormatError(f"HSC payload length {len(payload)} != expected {need}")
    data = np.frombuffer(payload, dtype="<f4").reshape(bands, height, width)
    return data.transpose(1, 2, 0).astype(np.float32), STAGE_NAMES[stage]


def _pgm_tokens(buf: bytes):
    """Header tokens of a PGM, skipping whitespace and # comments."""
    pos = 0
    while True:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        yield buf[start:pos], pos


def load_labels(path) -> np.ndarray:
    """Read a P5 label PGM (maxval 255) as a (H, W) uint8 array."""
    with open(path, "rb") as fh:
        buf = fh.read()
    tokens = _pgm_tokens(buf)
    fields = []
    for _ in range(4):
        token, pos = next(tokens)
        fields.append(token)
    if fields[0] != b"P5":
        raise FormatError(f"not a binary PGM (magic {fields[0]!r})")
    try:
        width, height, maxval = (int(fields[i]) for i in (1, 2, 3))
    except ValueError:
        raise FormatError("non-numeric PGM header field") from None
    if maxval != 255:
        raise FormatError(f"label PGM must have maxval 255, got {maxval}")
    payload = buf[pos + 1:]
    if len(payload) != width * height:
        raise FormatError(f"PGM payload length {len(payload)} != {width * height}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


# ---------------------------------------------------------------------------
# HSWT
# ---------------------------------------------------------------------------

_HSWT_MAGIC = b"HSWT"
_HSWT_VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("i1"), 2: np.dtype("<i4")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.int8): 1, np.dtype(np.int32): 2}


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise FormatError("string field exceeds 65535 bytes")
    return struct.pack("<H", len(raw)) + raw


def save_tensors(path, tensors: dict, metadata: dict = None) -> None:
    """Write named tensors plus string metadata; insertion order is kept."""
    metadata = metadata or {}
    if len(tensors) > 0xFFFF or len(metadata) > 0xFFFF:
        raise FormatError("too many tensors or metadata entries")
    parts = [_HSWT_MAGIC, struct.pack("<HH", _HSWT_VERSION, len(tensors))]
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


def load_tensors(path) -> tuple:
    """Read an HSWT file; returns (tensors, metadata) preserving file order."""
    with open(path, "rb") as fh:
        buf = fh.read()
    r = _Reader(buf)
    if r.take(4) != _HSWT_MAGIC:
        raise FormatError("bad HSWT magic")
    version = r.u16()
    if version != _HSWT_VERSION:
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
        tensors[name] = arr.astype(np.float32 if code == 0 else
                                   np.int32 if code == 2 else np.int8)
    meta_count = r.u16()
    metadata = {}
    for _ in range(meta_count):
        key = r.string()
        metadata[key] = r.string()
    if r.pos != len(buf):
        raise FormatError(f"{len(buf) - r.pos} trailing bytes after HSWT payload")
    return tensors, metadata
