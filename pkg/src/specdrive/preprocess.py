"""Raw mosaic frame to normalized hypercube.

The chain is fixed and fully staged: crop to a 5-multiple window, convert
counts to reflectance against the dark/white references, fold the mosaic into
a 25-band cube, optionally shift every band onto its macropixel center,
median filter, normalize. Each step is a pure function returning a cube
tagged with its stage, and run_pipeline times all six stages.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, DataError
from .hypercube import (
    MOSAIC_SIDE,
    CalibrationSet,
    HyperCube,
    RawMosaicFrame,
    Stage,
)

NORMALIZATION_MODES = ("per_band_minmax", "per_pixel_max")
ALIGNMENT_MODES = ("off", "bilinear")

# Division guard for the reflectance denominator: one millionth of the
# 16-bit full scale. Cells whose white/dark span falls below it read as dead.
DEFAULT_EPSILON_REF = 65535 * 1e-6


@dataclass(frozen=True)
class PreprocessConfig:
    crop_offset: tuple = (4, 1)
    median_kernel: int = 3
    normalization: str = "per_band_minmax"
    alignment: str = "bilinear"
    epsilon_ref: float = DEFAULT_EPSILON_REF

    def __post_init__(self):
        if self.median_kernel < 1 or self.median_kernel % 2 == 0:
            raise ConfigError(f"median_kernel must be odd and >= 1, got {self.median_kernel}")
        if self.normalization not in NORMALIZATION_MODES:
            raise ConfigError(f"unknown normalization '{self.normalization}'")
        if self.alignment not in ALIGNMENT_MODES:
            raise ConfigError(f"unknown alignment mode '{self.alignment}'")
        if len(self.crop_offset) != 2 or any(int(v) != v or v < 0 for v in self.crop_offset):
            raise ConfigError(f"crop_offset must be two non-negative integers")
        if self.epsilon_ref <= 0:
            raise ConfigError("epsilon_ref must be positive")
        object.__setattr__(self, "crop_offset",
                           (int(self.crop_offset[0]), int(self.crop_offset[1])))


_CONFIG_KEYS = ("crop_offset", "median_kernel", "normalization", "alignment",
                "epsilon_ref")


def load_config(path) -> PreprocessConfig:
    """Read a JSON preprocessing config; keys are exactly the config fields."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid config JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config JSON must be an object")
    unknown = sorted(set(doc) - set(_CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "crop_offset" in doc:
        doc["crop_offset"] = tuple(doc["crop_offset"])
    return PreprocessConfig(**doc)


def save_config(cfg: PreprocessConfig, path) -> None:
    doc = {"crop_offset": list(cfg.crop_offset), "median_kernel": cfg.median_kernel,
           "normalization": cfg.normalization, "alignment": cfg.alignment,
           "epsilon_ref": cfg.epsilon_ref}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class StageTiming:
    """Milliseconds per pipeline stage for one frame, in execution order."""

    crop: float = 0.0
    reflectance: float = 0.0
    demosaic: float = 0.0
    alignment: float = 0.0
    filtering: float = 0.0
    normalization: float = 0.0

    @property
    def total(self) -> float:
        return sum(getattr(self, f.name) for f in fields(self))

    def rows(self) -> list:
        out = [(f.name, getattr(self, f.name)) for f in fields(self)]
        out.append(("total", self.total))
        return out


def crop(frame: RawMosaicFrame, offset, out_dims=None) -> RawMosaicFrame:
    """Cut the demosaic window at ``offset``.

    With explicit ``out_dims`` the window must fit as given; otherwise the
    largest 5-multiple window below and right of the offset is taken (the
    canonical 1088x2048 frame at offset (4, 1) yields 1080x2045).
    """
    r0, c0 = int(offset[0]), int(offset[1])
    if r0 < 0 or c0 < 0:
        raise ConfigError(f"negative crop offset {offset}")
    if out_dims is None:
        ch = ((frame.height - r0) // MOSAIC_SIDE) * MOSAIC_SIDE
        cw = ((frame.width - c0) // MOSAIC_SIDE) * MOSAIC_SIDE
    else:
        ch, cw = int(out_dims[0]), int(out_dims[1])
    if ch < MOSAIC_SIDE or cw < MOSAIC_SIDE:
        raise ConfigError("cropped window smaller than one macropixel")
    if r0 + ch > frame.height or c0 + cw > frame.width:
        raise ConfigError(f"crop offset {offset} + window {ch}x{cw} exceeds "
                          f"frame {frame.height}x{frame.width}")
    return RawMosaicFrame(ch, cw, frame.data[r0:r0 + ch, c0:c0 + cw].copy(),
                          frame.exposure_tag)


def reflectance_correct(frame: RawMosaicFrame, dark: RawMosaicFrame,
                        white: RawMosaicFrame,
                        epsilon_ref: float = DEFAULT_EPSILON_REF) -> np.ndarray:
    """Per-pixel (I - D) / (W - D) clamped to [0, 1].

    Pixels whose reference span W - D falls below ``epsilon_ref`` carry no
    usable signal and map to 0.
    """
    if frame.data.shape != dark.data.shape or frame.data.shape != white.data.shape:
        raise DataError("frame and calibration references differ in shape")
    i = frame.data.astype(np.float64)
    d = dark.data.astype(np.float64)
    w = white.data.astype(np.float64)
    span = w - d
    ok = span >= epsilon_ref
    out = np.where(ok, (i - d) / np.where(ok, span, 1.0), 0.0)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def demosaic(plane: np.ndarray, layout: dict) -> HyperCube:
    """Fold the 5x5 mosaic plane into an (H/5, W/5, 25) cube.

    Cube band b collects the one mosaic site per macropixel that the layout
    assigns to b; resolution is not restored.
    """
    if plane.ndim != 2:
        raise DataError(f"expected a 2-D reflectance plane, got shape {plane.shape}")
    h, w = plane.shape
    if h % MOSAIC_SIDE or w % MOSAIC_SIDE:
        raise DataError(f"plane {h}x{w} is not a multiple of the mosaic side")
    rows, cols = h // MOSAIC_SIDE, w // MOSAIC_SIDE
    cube = np.empty((rows, cols, MOSAIC_SIDE * MOSAIC_SIDE), dtype=np.float32)
    for (dr, dc), band in layout.items():
        cube[:, :, band] = plane[dr::MOSAIC_SIDE, dc::MOSAIC_SIDE]
    return HyperCube(rows, cols, cube.shape[2], cube, Stage.REFLECTANCE)


def _shift1d(arr: np.ndarray, shift: float, axis: int) -> np.ndarray:
    """Linear-interpolation shift along one axis with replicated borders.

    output[i] = input[i - shift] sampled linearly, coordinates clamped to the
    valid range.
    """
    n = arr.shape[axis]
    pos = np.arange(n, dtype=np.float64) - shift
    pos = np.clip(pos, 0.0, n - 1.0)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n - 1)
    frac = pos - lo
    a = np.take(arr, lo, axis=axis)
    b = np.take(arr, hi, axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = n
    frac = frac.reshape(shape)
    return (1.0 - frac) * a + frac * b


def align_bands(cube: HyperCube, layout: dict) -> HyperCube:
    """Shift each band onto the macropixel center.

    A band sampled at mosaic offset (dr, dc) sits ((dr - 2) / 5, (dc - 2) / 5)
    cube-pixels away from the center, so it is translated by ((2 - dr) / 5,
    (2 - dc) / 5) with bilinear resampling and replicated borders. The two
    axes separate, which keeps this a pair of 1-D interpolations; the center
    band (2, 2) passes through untouched.
    """
    if cube.stage is not Stage.REFLECTANCE:
        raise DataError(f"alignment expects a REFLECTANCE cube, got {cube.stage.name}")
    out = np.empty_like(cube.data)
    data = cube.data.astype(np.float64)
    for (dr, dc), band in layout.items():
        sr = (2.0 - dr) / MOSAIC_SIDE
        sc = (2.0 - dc) / MOSAIC_SIDE
        shifted = data[:, :, band]
        if sr:
            shifted = _shift1d(shifted, sr, axis=0)
        if sc:
            shifted = _shift1d(shifted, sc, axis=1)
        out[:, :, band] = shifted.astype(np.float32)
    out = np.clip(out, 0.0, 1.0)
    return HyperCube(cube.height, cube.width, cube.bands, out, Stage.ALIGNED)


def median_filter(cube: HyperCube, k: int = 3) -> HyperCube:
    """Per-band k x k median with replicated borders. k = 1 is the identity."""
    if cube.stage not in (Stage.REFLECTANCE, Stage.ALIGNED):
        raise DataError(f"filtering expects a REFLECTANCE or ALIGNED cube, "
                        f"got {cube.stage.name}")
    if k < 1 or k % 2 == 0:
        raise ConfigError(f"median kernel must be odd and >= 1, got {k}")
    if k == 1:
        out = cube.data.copy()
    else:
        from scipy import ndimage
        out = np.empty_like(cube.data)
        for b in range(cube.bands):
            out[:, :, b] = ndimage.median_filter(cube.data[:, :, b],
                                                 size=k, mode="nearest")
    return HyperCube(cube.height, cube.width, cube.bands, out, Stage.FILTERED)


def normalize(cube: HyperCube, mode: str = "per_band_minmax") -> HyperCube:
    """Normalize a FILTERED cube into [0, 1].

    per_band_minmax rescales each band by its own min/max; a constant band
    maps to 0. per_pixel_max divides each spectrum by its peak; an all-zero
    spectrum stays 0.
    """
    if cube.stage is not Stage.FILTERED:
        raise DataError(f"normalization expects a FILTERED cube, got {cube.stage.name}")
    if mode not in NORMALIZATION_MODES:
        raise ConfigError(f"unknown normalization '{mode}'")
    data = cube.data.astype(np.float64)
    if mode == "per_band_minmax":
        lo = data.min(axis=(0, 1), keepdims=True)
        hi = data.max(axis=(0, 1), keepdims=True)
        span = hi - lo
        out = np.where(span > 0, (data - lo) / np.where(span > 0, span, 1.0), 0.0)
    else:
        peak = data.max(axis=2, keepdims=True)
        out = np.where(peak > 0, data / np.where(peak > 0, peak, 1.0), 0.0)
    out = np.clip(out, 0.0, 1.0).astype(np.float32)
    return HyperCube(cube.height, cube.width, cube.bands, out, Stage.NORMALIZED)


def run_pipeline(frame: RawMosaicFrame, calib: CalibrationSet,
                 cfg: PreprocessConfig = PreprocessConfig()) -> tuple:
    """Run all six stages with wall-clock timing.

    Returns (cube, StageTiming). With alignment off the stage is skipped but
    still reported (near-zero time), so the table always has six rows.
    """
    marks = {}

    def timed(name, fn):
        t0 = time.perf_counter()
        out = fn()
        marks[name] = (time.perf_counter() - t0) * 1000.0
        return out

    off = cfg.crop_offset
    fc = timed("crop", lambda: crop(frame, off))
    t0 = time.perf_counter()
    dc = crop(calib.dark, off, (fc.height, fc.width))
    wc = crop(calib.white, off, (fc.height, fc.width))
    plane = reflectance_correct(fc, dc, wc, cfg.epsilon_ref)
    marks["reflectance"] = (time.perf_counter() - t0) * 1000.0
    cube = timed("demosaic", lambda: demosaic(plane, calib.layout))
    if cfg.alignment == "bilinear":
        cube = timed("alignment", lambda: align_bands(cube, calib.layout))
    else:
        marks["alignment"] = 0.0
    cube = timed("filtering", lambda: median_filter(cube, cfg.median_kernel))
    cube = timed("normalization", lambda: normalize(cube, cfg.normalization))
    return cube, StageTiming(**marks)


def preprocess(frame: RawMosaicFrame, calib: CalibrationSet,
               cfg: PreprocessConfig = PreprocessConfig()) -> HyperCube:
    """run_pipeline without the timing report."""
    return run_pipeline(frame, calib, cfg)[0]
