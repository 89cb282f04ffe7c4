"""Core data model and bit-exact file I/O.

Raw sensor frames travel as 16-bit binary PGM (P5, maxval 65535), label maps
as 8-bit PGM (P5, maxval 255), and cubes as HSC containers:

    magic "HSC1" | u8 stage | u8 reserved | u16 bands LE | u32 height LE |
    u32 width LE | payload float32 LE, band-major then row-major
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, FormatError

IGNORE_LABEL = 255

# Original annotation encoding: ten material classes numbered 1..10 plus the
# ignore value. Target schemes are dense from 0.
ORIGINAL_CLASS_NAMES = (
    "Road",
    "Road Marks",
    "Vegetation",
    "Painted Metal",
    "Sky",
    "Concrete/Stone/Brick",
    "Pedestrian/Cyclist",
    "Water",
    "Unpainted Metal",
    "Glass/Transparent Plastic",
)

MOSAIC_SIDE = 5
CUBE_BANDS = MOSAIC_SIDE * MOSAIC_SIDE
CANONICAL_CUBE_SHAPE = (216, 409)
CANONICAL_RAW_SHAPE = (1088, 2048)
CANONICAL_CROP_SHAPE = (CANONICAL_CUBE_SHAPE[0] * 5, CANONICAL_CUBE_SHAPE[1] * 5)


class Stage(enum.Enum):
    REFLECTANCE = 0
    ALIGNED = 1
    FILTERED = 2
    NORMALIZED = 3

    @classmethod
    def from_code(cls, code: int) -> "Stage":
        try:
            return cls(code)
        except ValueError:
            raise FormatError(f"unknown stage code {code}") from None


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RawMosaicFrame:
    """Single-plane 16-bit sensor frame carrying the 5x5 spectral mosaic."""

    height: int
    width: int
    data: np.ndarray  # (height, width) uint16
    exposure_tag: str = ""

    def __post_init__(self):
        if self.height < MOSAIC_SIDE or self.width < MOSAIC_SIDE:
            raise DataError(f"frame {self.height}x{self.width} smaller than the mosaic window")
        if self.data.shape != (self.height, self.width):
            raise DataError(f"data shape {self.data.shape} != ({self.height}, {self.width})")
        if self.data.dtype != np.uint16:
            raise DataError(f"raw frames are uint16, got {self.data.dtype}")
        object.__setattr__(self, "data", _frozen(self.data))


@dataclass(frozen=True)
class CalibrationSet:
    """Dark/white reference frames plus the mosaic band layout.

    ``layout`` maps macropixel offsets (dr, dc) in {0..4}^2 to band indices
    0..24 and must be a bijection.
    """

    dark: RawMosaicFrame
    white: RawMosaicFrame
    layout: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dark.data.shape != self.white.data.shape:
            raise DataError("dark and white frames differ in shape")
        if not self.layout:
            object.__setattr__(self, "layout", default_layout())
        keys = set(self.layout.keys())
        want = {(dr, dc) for dr in range(MOSAIC_SIDE) for dc in range(MOSAIC_SIDE)}
        if keys != want or sorted(self.layout.values()) != list(range(CUBE_BANDS)):
            raise ConfigError("layout must be a bijection {0..4}^2 -> {0..24}")

    def band_at(self, dr: int, dc: int) -> int:
        return self.layout[(dr, dc)]


def default_layout() -> dict:
    """Row-major band assignment: band = 5*dr + dc."""
    return {(dr, dc): MOSAIC_SIDE * dr + dc
            for dr in range(MOSAIC_SIDE) for dc in range(MOSAIC_SIDE)}


def layout_to_list(layout: dict) -> list:
    return [layout[(i // MOSAIC_SIDE, i % MOSAIC_SIDE)] for i in range(CUBE_BANDS)]


def layout_from_list(bands: list) -> dict:
    if sorted(bands) != list(range(CUBE_BANDS)):
        raise ConfigError("layout list must be a permutation of 0..24")
    return {(i // MOSAIC_SIDE, i % MOSAIC_SIDE): b for i, b in enumerate(bands)}


@dataclass(frozen=True)
class HyperCube:
    """H x W x B reflectance cube tagged with its pipeline stage."""

    height: int
    width: int
    bands: int
    data: np.ndarray  # (H, W, B) float32
    stage: Stage

    def __post_init__(self):
        if self.data.shape != (self.height, self.width, self.bands):
            raise DataError(f"cube shape {self.data.shape} != "
                            f"({self.height}, {self.width}, {self.bands})")
        if self.data.dtype != np.float32:
            raise DataError(f"cube payload is float32, got {self.data.dtype}")
        if not np.isfinite(self.data).all():
            raise DataError("cube contains non-finite values")
        if self.stage is Stage.NORMALIZED:
            if self.data.min() < 0.0 or self.data.max() > 1.0:
                raise DataError("normalized cube values must lie in [0, 1]")
        object.__setattr__(self, "data", _frozen(self.data))

    @classmethod
    def from_array(cls, data: np.ndarray, stage: Stage) -> "HyperCube":
        data = np.asarray(data, dtype=np.float32)
        h, w, b = data.shape
        return cls(h, w, b, data, stage)


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel class indices with 255 as the ignore value."""

    height: int
    width: int
    labels: np.ndarray  # (H, W) uint8

    def __post_init__(self):
        if self.labels.shape != (self.height, self.width):
            raise DataError(f"label shape {self.labels.shape} != ({self.height}, {self.width})")
        if self.labels.dtype != np.uint8:
            raise DataError(f"labels are uint8, got {self.labels.dtype}")
        object.__setattr__(self, "labels", _frozen(self.labels))

    @classmethod
    def from_array(cls, labels: np.ndarray) -> "LabelMap":
        labels = np.asarray(labels, dtype=np.uint8)
        h, w = labels.shape
        return cls(h, w, labels)

    def validate_classes(self, num_classes: int) -> None:
        bad = (self.labels != IGNORE_LABEL) & (self.labels >= num_classes)
        if bad.any():
            raise DataError(f"labels contain values >= {num_classes} that are not ignore")


@dataclass(frozen=True)
class ClassScheme:
    """Remapping of the ten original class IDs onto a dense target scheme."""

    name: str
    mapping: dict  # original id 1..10 -> target id
    class_names: tuple

    def __post_init__(self):
        if set(self.mapping.keys()) != set(range(1, 11)):
            raise ConfigError("mapping must cover the ten original class IDs 1..10")
        targets = set(self.mapping.values())
        if targets != set(range(len(self.class_names))):
            raise ConfigError("mapping targets must cover 0..C-1 for the named classes")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


def three_class_scheme() -> ClassScheme:
    """Road / Road Marks / No Drivable, everything else collapsing into the last."""
    mapping = {orig: 2 for orig in range(1, 11)}
    mapping[1] = 0
    mapping[2] = 1
    return ClassScheme("three_class", mapping, ("Road", "Road Marks", "No Drivable"))


def five_class_scheme() -> ClassScheme:
    """Road / Road Marks / Vegetation / Sky / Other."""
    mapping = {orig: 4 for orig in range(1, 11)}
    mapping[1] = 0
    mapping[2] = 1
    mapping[3] = 2
    mapping[5] = 3
    return ClassScheme("five_class", mapping,
                       ("Road", "Road Marks", "Vegetation", "Sky", "Other"))


def scheme_by_name(name: str) -> ClassScheme:
    if name == "three_class":
        return three_class_scheme()
    if name == "five_class":
        return five_class_scheme()
    raise ConfigError(f"unknown class scheme '{name}'")


def remap_labels(labels: LabelMap, scheme: ClassScheme) -> LabelMap:
    """Remap original 1..10 IDs onto the scheme's dense target IDs.

    Ignore pixels pass through untouched; any other value outside 1..10 is a
    data error.
    """
    src = labels.labels
    bad = (src != IGNORE_LABEL) & ((src < 1) | (src > 10))
    if bad.any():
        raise DataError("labels contain IDs outside 1..10 that are not ignore")
    lut = np.full(256, IGNORE_LABEL, dtype=np.uint8)
    for orig, tgt in scheme.mapping.items():
        lut[orig] = tgt
    return LabelMap.from_array(lut[src])


# ---------------------------------------------------------------------------
# PGM I/O (P5 binary)
# ---------------------------------------------------------------------------

def _read_pgm_header(buf: bytes):
    """Parse a P5 header, tolerating comments. Returns (width, height, maxval, offset)."""
    if buf[:2] != b"P5":
        raise FormatError("not a binary PGM (missing P5 magic)")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        token = buf[start:pos]
        if not token.isdigit():
            raise FormatError(f"malformed PGM header token {token!r}")
        fields.append(int(token))
    pos += 1  # single whitespace after maxval
    return fields[0], fields[1], fields[2], pos


def load_raw(path) -> RawMosaicFrame:
    """Load a 16-bit sensor frame from a P5 PGM with maxval 65535."""
    with open(path, "rb") as fh:
        buf = fh.read()
    width, height, maxval, off = _read_pgm_header(buf)
    if maxval != 65535:
        raise FormatError(f"raw frames are 16-bit PGM (maxval 65535), got maxval {maxval}")
    need = height * width * 2
    payload = buf[off:off + need]
    if len(payload) != need:
        raise FormatError(f"truncated PGM payload: expected {need} bytes, got {len(payload)}")
    data = np.frombuffer(payload, dtype=">u2").reshape(height, width).astype(np.uint16)
    return RawMosaicFrame(height, width, data)


def save_raw(frame: RawMosaicFrame, path) -> None:
    header = f"P5\n{frame.width} {frame.height}\n65535\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(frame.data.astype(">u2").tobytes())


def load_labels(path) -> LabelMap:
    """Load an 8-bit label map from a P5 PGM with maxval 255."""
    with open(path, "rb") as fh:
        buf = fh.read()
    width, height, maxval, off = _read_pgm_header(buf)
    if maxval != 255:
        raise FormatError(f"label maps are 8-bit PGM (maxval 255), got maxval {maxval}")
    need = height * width
    payload = buf[off:off + need]
    if len(payload) != need:
        raise FormatError(f"truncated PGM payload: expected {need} bytes, got {len(payload)}")
    return LabelMap.from_array(np.frombuffer(payload, dtype=np.uint8).reshape(height, width))


def save_labels(labels: LabelMap, path) -> None:
    header = f"P5\n{labels.width} {labels.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(labels.labels.tobytes())


# ---------------------------------------------------------------------------
# HSC cube container
# ---------------------------------------------------------------------------

_HSC_MAGIC = b"HSC1"
_HSC_HEADER = struct.Struct("<4sBBHII")


def save_cube(cube: HyperCube, path) -> None:
    if cube.bands > 0xFFFF or cube.height > 0xFFFFFFFF or cube.width > 0xFFFFFFFF:
        raise FormatError("cube dimensions overflow the HSC header")
    header = _HSC_HEADER.pack(_HSC_MAGIC, cube.stage.value, 0,
                              cube.bands, cube.height, cube.width)
    payload = cube.data.transpose(2, 0, 1).astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_cube(path) -> HyperCube:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HSC_HEADER.size:
        raise FormatError("truncated HSC header")
    magic, stage_code, _reserved, bands, height, width = _HSC_HEADER.unpack_from(buf)
    if magic != _HSC_MAGIC:
        raise FormatError(f"bad HSC magic {magic!r}")
    stage = Stage.from_code(stage_code)
    need = bands * height * width * 4
    payload = buf[_HSC_HEADER.size:]
    if len(payload) != need:
        raise FormatError(f"HSC payload length {len(payload)} != expected {need}")
    data = np.frombuffer(payload, dtype="<f4").reshape(bands, height, width)
    return HyperCube(height, width, bands, data.transpose(1, 2, 0).astype(np.float32), stage)
