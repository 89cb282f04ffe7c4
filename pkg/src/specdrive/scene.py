"""Synthetic drive-scene generator.

Builds a deterministic road scene at cube resolution (sky band, building
backdrop, vegetation strips, road trapezoid, dashed road marks), assigns one
smooth spectral signature per target class, adds Gaussian band noise, and
encodes everything back into a raw 5x5 mosaic frame plus matching calibration
references. The raw frame is exactly what the preprocessing front end expects,
so the generator closes the loop for end-to-end tests without real captures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .hypercube import (
    CUBE_BANDS,
    IGNORE_LABEL,
    MOSAIC_SIDE,
    CalibrationSet,
    ClassScheme,
    LabelMap,
    RawMosaicFrame,
    default_layout,
    remap_labels,
    scheme_by_name,
)

# Sensor margins around the demosaic crop, matching the canonical geometry
# (1088x2048 frame vs 1080x2045 crop at offset (4, 1)).
_MARGIN_TOP = 4
_MARGIN_BOTTOM = 4
_MARGIN_LEFT = 1
_MARGIN_RIGHT = 2


@dataclass(frozen=True)
class SceneSpec:
    """Parameters for one synthetic capture."""

    seed: int = 0
    rows: int = 216
    cols: int = 409
    scheme_name: str = "five_class"
    noise_sigma: float = 0.01
    illumination_gradient: float = 0.0
    dark_level: int = 200
    white_level: int = 3800
    full_frame_class: int = 0  # original ID 1..10; 0 means a full layout scene

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not -1.0 <= self.illumination_gradient <= 1.0:
            raise ConfigError("illumination_gradient must lie in [-1, 1]")
        if not 0 <= self.full_frame_class <= 10:
            raise ConfigError("full_frame_class must be 0 (off) or an original ID 1..10")
        lo = 4 if self.full_frame_class else 20
        if self.rows < lo or self.cols < lo:
            raise ConfigError(f"scene of {self.rows}x{self.cols} too small (need >= {lo})")
        if not 0 <= self.dark_level < self.white_level <= 65535:
            raise ConfigError("need 0 <= dark_level < white_level <= 65535")


@dataclass(frozen=True)
class SynthScene:
    """A rendered scene: raw capture, references, and ground truth."""

    spec: SceneSpec
    raw: RawMosaicFrame
    calibration: CalibrationSet
    truth: LabelMap  # scheme target IDs, boundary ring set to ignore
    original: LabelMap  # original IDs 1..10, no ring
    scheme: ClassScheme
    signatures: np.ndarray  # (C, bands) per target class
    reflectance: np.ndarray  # (rows, cols, bands) noisy field the raw encodes


def make_signatures(num_classes: int, bands: int = CUBE_BANDS, seed: int = 7,
                    knots: int = 6) -> np.ndarray:
    """Piecewise-linear reflectance signatures in [0.05, 0.95].

    Each class gets its own baseline level (evenly spaced so no two classes
    collapse onto each other) plus seeded random knot values interpolated
    linearly across the band axis, so any two signatures differ both in offset
    and in shape.
    """
    if num_classes < 1:
        raise ConfigError("need at least one class")
    if knots < 2:
        raise ConfigError("need at least two knots")
    rng = np.random.default_rng(seed)
    x = np.arange(bands, dtype=np.float64)
    xk = np.linspace(0.0, bands - 1.0, knots)
    sig = np.empty((num_classes, bands), dtype=np.float64)
    for c in range(num_classes):
        level = 0.15 + 0.7 * (c + 0.5) / num_classes
        yk = level + rng.uniform(-0.10, 0.10, size=knots)
        sig[c] = np.interp(x, xk, yk)
    return np.clip(sig, 0.05, 0.95).astype(np.float32)


def _layout_labels(rows: int, cols: int) -> np.ndarray:
    """Paint the original-ID layout: sky 5, buildings 6, vegetation 3,
    road 1, road marks 2."""
    lab = np.full((rows, cols), 6, dtype=np.uint8)
    sky_end = max(1, rows // 4)
    bg_end = max(sky_end + 1, (rows * 55) // 100)
    lab[:sky_end] = 5

    # Road trapezoid widening toward the bottom, vegetation on the shoulders.
    road_rows = rows - bg_end
    center = cols / 2.0
    for k, r in enumerate(range(bg_end, rows)):
        t = k / max(1, road_rows - 1)
        half = (0.30 + 0.25 * t) * cols
        lo = int(np.floor(center - half))
        hi = int(np.ceil(center + half))
        lab[r, max(0, lo):min(cols, hi)] = 1
        lab[r, :max(0, lo)] = 3
        lab[r, min(cols, hi):] = 3

    # Vegetation patches in the backdrop band.
    v0, v1 = sky_end, bg_end
    lab[v0:v1, (cols * 5) // 100:(cols * 20) // 100] = 3
    lab[v0:v1, (cols * 80) // 100:(cols * 95) // 100] = 3

    # Dashed center line on the road.
    hw = max(2, cols // 50)
    c0, c1 = int(center) - hw, int(center) + hw + 1
    dash = max(5, rows // 8)
    period = dash + max(3, dash // 2)
    for r in range(bg_end + 1, rows):
        if (r - bg_end) % period < dash:
            lab[r, c0:c1] = 2
    return lab


def _boundary_ring(lab: np.ndarray) -> np.ndarray:
    """Pixels with any differing label in their 8-neighborhood."""
    rows, cols = lab.shape
    p = np.pad(lab, 1, mode="edge")
    ring = np.zeros((rows, cols), dtype=bool)
    for dr in range(3):
        for dc in range(3):
            if dr == 1 and dc == 1:
                continue
            ring |= p[dr:dr + rows, dc:dc + cols] != lab
    return ring


def synth_scene(spec: SceneSpec, signatures: np.ndarray = None) -> SynthScene:
    """Render a scene and encode it as a raw mosaic capture.

    Pass ``signatures`` (C, 25) to override the seeded per-class spectra, e.g.
    to force a chosen class separation. The raw frame quantizes reflectance to
    sensor counts, so decoding with the returned references recovers the
    reflectance field to within half a count, i.e.
    0.5 / (white_level - dark_level).
    """
    rng = np.random.default_rng(spec.seed)
    scheme = scheme_by_name(spec.scheme_name)
    rows, cols = spec.rows, spec.cols

    if spec.full_frame_class:
        original = np.full((rows, cols), spec.full_frame_class, dtype=np.uint8)
        ring = np.zeros((rows, cols), dtype=bool)
    else:
        original = _layout_labels(rows, cols)
        ring = _boundary_ring(original)

    original_map = LabelMap.from_array(original)
    truth_arr = original.copy()
    truth_arr[ring] = IGNORE_LABEL
    truth = remap_labels(LabelMap.from_array(truth_arr), scheme)

    if not spec.full_frame_class:
        present = set(np.unique(truth.labels)) - {IGNORE_LABEL}
        if present != set(range(scheme.num_classes)):
            missing = sorted(set(range(scheme.num_classes)) - present)
            raise ConfigError(f"scene layout lost classes {missing}; enlarge the scene")

    # Spectral field: one signature per target class plus band noise and an
    # optional vertical illumination ramp.
    if signatures is None:
        signatures = make_signatures(scheme.num_classes, CUBE_BANDS, seed=spec.seed + 7)
    else:
        signatures = np.asarray(signatures, dtype=np.float32)
        if signatures.shape != (scheme.num_classes, CUBE_BANDS):
            raise ConfigError(f"signatures must be ({scheme.num_classes}, {CUBE_BANDS}), "
                              f"got {signatures.shape}")
    target = remap_labels(original_map, scheme).labels
    refl = signatures[target].astype(np.float64)
    if spec.illumination_gradient:
        ramp = 1.0 + spec.illumination_gradient * (
            np.linspace(0.0, 1.0, rows) - 0.5)
        refl = refl * ramp[:, None, None]
    if spec.noise_sigma > 0:
        refl = refl + rng.normal(0.0, spec.noise_sigma, refl.shape)
    refl = np.clip(refl, 0.02, 0.98).astype(np.float32)

    # Mosaic the field back onto the sensor grid.
    layout = default_layout()
    full = np.empty((rows * MOSAIC_SIDE, cols * MOSAIC_SIDE), dtype=np.float64)
    for (dr, dc), band in layout.items():
        full[dr::MOSAIC_SIDE, dc::MOSAIC_SIDE] = refl[:, :, band]

    dark_v, white_v = spec.dark_level, spec.white_level
    counts = np.rint(dark_v + full * (white_v - dark_v))
    crop = np.clip(counts, 0, 65535).astype(np.uint16)

    h = rows * MOSAIC_SIDE + _MARGIN_TOP + _MARGIN_BOTTOM
    w = cols * MOSAIC_SIDE + _MARGIN_LEFT + _MARGIN_RIGHT
    raw_arr = np.full((h, w), dark_v, dtype=np.uint16)
    raw_arr[_MARGIN_TOP:_MARGIN_TOP + rows * MOSAIC_SIDE,
            _MARGIN_LEFT:_MARGIN_LEFT + cols * MOSAIC_SIDE] = crop
    raw = RawMosaicFrame(h, w, raw_arr)

    dark = RawMosaicFrame(h, w, np.full((h, w), dark_v, dtype=np.uint16))
    white = RawMosaicFrame(h, w, np.full((h, w), white_v, dtype=np.uint16))
    calib = CalibrationSet(dark, white, layout)

    return SynthScene(spec, raw, calib, truth, original_map, scheme,
                      signatures, refl)
