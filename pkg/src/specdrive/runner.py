"""Frame-level segmentation: patches in, stitched label maps out."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import fcn, quant
from .errors import DataError
from .hypercube import HyperCube, LabelMap
from .patchwork import PatchGrid, argmax_map, default_count, extract_patches, plan_grid, stitch


def auto_grid(height: int, width: int, patch: int = 0, depth: int = 2) -> PatchGrid:
    """Half-stride grid covering a frame; patch 0 picks 128 or the largest fit."""
    if not patch:
        m = 1 << depth
        patch = 128 if min(height, width) >= 128 else (min(height, width) // m) * m
    return plan_grid(height, width, patch,
                     default_count(height, patch), default_count(width, patch))


def segment_cube(cube, net_cfg: fcn.UNetConfig, model,
                 grid: PatchGrid = None, workers: int = 1) -> tuple:
    """Segment a cube with either a float weight dict or a QuantModel.

    The cube is cut into the grid's overlapping patches, each patch runs
    through the network, and per-patch probabilities are averaged back into
    one frame-sized map. ``workers`` > 1 fans patches out over a thread pool;
    patch order (and so the stitched result) does not depend on it. Returns
    (LabelMap, probabilities).
    """
    data = cube.data if isinstance(cube, HyperCube) else np.asarray(cube)
    if data.ndim != 3:
        raise DataError(f"expected (H, W, bands) data, got shape {data.shape}")
    h, w = data.shape[:2]
    if grid is None:
        grid = auto_grid(h, w, depth=net_cfg.depth)
    patches = extract_patches(data, grid)
    if isinstance(model, quant.QuantModel):
        run = lambda p: quant.forward_quantized(model, p)
    else:
        run = lambda p: fcn.forward(net_cfg, model, p)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            probs = np.stack(list(pool.map(run, patches)))
    else:
        probs = np.stack([run(p) for p in patches])
    frame_probs = stitch(probs, grid)
    return argmax_map(frame_probs), frame_probs
