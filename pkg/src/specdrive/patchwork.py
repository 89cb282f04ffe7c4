"""Overlapping patch grids and probability stitching.

Full frames are segmented as overlapping square patches whose per-pixel class
probabilities are averaged back into a frame-sized map. Patch starts are
spaced evenly from 0 to dim - patch with round-half-up arithmetic, so the
first patch hugs the top-left corner and the last one hugs the bottom-right.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .hypercube import LabelMap


def grid_starts(dim: int, patch: int, count: int) -> np.ndarray:
    """Start offsets of ``count`` patches along one axis.

    starts[i] = round_half_up(i * (dim - patch) / (count - 1)), computed in
    exact integer arithmetic. The first start is 0, the last is dim - patch,
    and the sequence is strictly increasing.
    """
    if patch < 1 or dim < patch:
        raise ConfigError(f"patch {patch} does not fit in dim {dim}")
    if count < 1:
        raise ConfigError("count must be >= 1")
    if count * patch < dim:
        raise ConfigError(f"{count} patches of {patch} cannot cover dim {dim}")
    span = dim - patch
    if count - 1 > span:
        raise ConfigError(f"{count} patches in dim {dim} would repeat offsets "
                          f"(at most {span + 1} fit)")
    if count == 1:
        return np.zeros(1, dtype=np.intp)
    i = np.arange(count, dtype=np.int64)
    starts = (2 * i * span + (count - 1)) // (2 * (count - 1))
    return starts.astype(np.intp)


def default_count(dim: int, patch: int) -> int:
    """Patch count giving a stride of at most half the patch size."""
    if dim == patch:
        return 1
    return int(np.ceil((dim - patch) / (patch // 2))) + 1


@dataclass(frozen=True)
class PatchGrid:
    """Row-major patch tiling of one height x width frame."""

    height: int
    width: int
    patch: int
    row_starts: np.ndarray
    col_starts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_starts", np.asarray(self.row_starts, dtype=np.intp))
        object.__setattr__(self, "col_starts", np.asarray(self.col_starts, dtype=np.intp))
        for starts, dim, name in ((self.row_starts, self.height, "row"),
                                  (self.col_starts, self.width, "col")):
            if len(starts) == 0 or starts[0] != 0 or starts[-1] != dim - self.patch:
                raise ConfigError(f"{name} starts must run 0 .. dim - patch")
            if len(starts) > 1 and not (np.diff(starts) > 0).all():
                raise ConfigError(f"{name} starts must be strictly increasing")

    @property
    def count(self) -> int:
        return len(self.row_starts) * len(self.col_starts)


def plan_grid(height: int, width: int, patch: int,
              n_rows: int, n_cols: int) -> PatchGrid:
    """Grid of n_rows x n_cols patches covering the frame exactly."""
    return PatchGrid(height, width, patch,
                     grid_starts(height, patch, n_rows),
                     grid_starts(width, patch, n_cols))


def extract_patches(data: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Stack grid patches row-major into (N, patch, patch, ...)."""
    if data.shape[:2] != (grid.height, grid.width):
        raise DataError(f"frame {data.shape[:2]} does not match the grid's "
                        f"{grid.height}x{grid.width}")
    p = grid.patch
    out = np.empty((grid.count, p, p) + data.shape[2:], dtype=data.dtype)
    n = 0
    for r in grid.row_starts:
        for c in grid.col_starts:
            out[n] = data[r:r + p, c:c + p]
            n += 1
    return out


def stitch(patch_scores: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Average per-patch probability maps into a frame-sized map.

    Overlapping pixels take the mean of all covering patches, then every
    pixel's distribution is renormalized to sum to one. Every pixel must be
    covered by at least one patch.
    """
    n, p, p2, classes = patch_scores.shape
    if n != grid.count or p != grid.patch or p2 != grid.patch:
        raise DataError("patch stack does not match the grid")
    acc = np.zeros((grid.height, grid.width, classes), dtype=np.float64)
    cover = np.zeros((grid.height, grid.width, 1), dtype=np.float64)
    k = 0
    for r in grid.row_starts:
        for c in grid.col_starts:
            acc[r:r + p, c:c + p] += patch_scores[k]
            cover[r:r + p, c:c + p] += 1.0
            k += 1
    if (cover == 0).any():
        raise DataError("grid leaves pixels uncovered")
    mean = acc / cover
    total = mean.sum(axis=2, keepdims=True)
    mean = np.where(total > 0, mean / np.where(total > 0, total, 1.0), mean)
    return mean.astype(np.float32)


def argmax_map(probs: np.ndarray) -> LabelMap:
    """Class map from a probability map; ties go to the lowest class index."""
    return LabelMap.from_array(np.argmax(probs, axis=2).astype(np.uint8))
