"""Dataset scanning, splitting, and patch geometry.

A dataset directory holds paired files: every ``<stem>.hsc`` cube must sit
next to a ``<stem>.pgm`` label map of the same height and width. Label value
255 marks pixels excluded from both loss and accuracy.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .formats import load_cube, load_labels

# Proportions behind the canonical 162/57/57 train/val/test partition.
DEFAULT_SPLIT = (162 / 276, 57 / 276, 57 / 276)


def scan_pairs(data_dir) -> list:
    """Sorted (cube path, label path) pairs under one directory."""
    root = Path(data_dir)
    if not root.is_dir():
        raise ConfigError(f"dataset directory not found: {root}")
    pairs = []
    for cube in sorted(root.glob("*.hsc")):
        label = cube.with_suffix(".pgm")
        if not label.exists():
            raise DataError(f"cube {cube.name} has no matching {label.name}")
        pairs.append((cube, label))
    if not pairs:
        raise ConfigError(f"no .hsc/.pgm pairs under {root}")
    return pairs


def split_pairs(pairs, seed: int, ratios=DEFAULT_SPLIT) -> tuple:
    """Deterministic shuffled partition into (train, val, test) lists.

    Sizes are the rounded ratio shares with the remainder going to test, so
    276 items split exactly 162/57/57 under the default ratios.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ConfigError("split needs three non-negative ratios")
    if abs(sum(ratios) - 1.0) > 1e-6:
        raise ConfigError(f"split ratios sum to {sum(ratios)}, expected 1")
    n = len(pairs)
    order = np.random.default_rng(seed).permutation(n)
    n_train = min(n, round(n * ratios[0]))
    n_val = min(n - n_train, round(n * ratios[1]))
    train = [pairs[i] for i in order[:n_train]]
    val = [pairs[i] for i in order[n_train:n_train + n_val]]
    test = [pairs[i] for i in order[n_train + n_val:]]
    return train, val, test


def patch_starts(dim: int, patch: int, stride: int) -> list:
    """Window starts covering [0, dim) with a tail window flush to the end."""
    if patch > dim:
        raise ConfigError(f"patch {patch} exceeds dimension {dim}")
    if stride < 1:
        raise ConfigError("stride must be positive")
    starts = list(range(0, dim - patch + 1, stride))
    if starts[-1] != dim - patch:
        starts.append(dim - patch)
    return starts


def load_pair(pair) -> tuple:
    """One (cube (H, W, bands) float32, labels (H, W) uint8) pair."""
    cube, _stage = load_cube(pair[0])
    labels = load_labels(pair[1])
    if labels.shape != cube.shape[:2]:
        raise DataError(f"{Path(pair[1]).name}: label shape {labels.shape} != "
                        f"cube {cube.shape[:2]}")
    return cube, labels


def count_labels(labels, classes: int) -> np.ndarray:
    """Per-class pixel counts over label maps or PGM paths, 255 excluded."""
    if isinstance(labels, (np.ndarray, str, Path)):
        labels = [labels]
    counts = np.zeros(classes, dtype=np.int64)
    for lab in labels:
        if isinstance(lab, (str, Path)):
            lab = load_labels(lab)
        lab = np.asarray(lab)
        keep = lab[lab != 255]
        bad = keep[keep >= classes]
        if bad.size:
            raise DataError(f"label value {int(bad[0])} outside 0..{classes - 1}")
        counts += np.bincount(keep.astype(np.int64), minlength=classes)
    return counts


def compute_class_weights(labels, classes: int) -> np.ndarray:
    """Inverse-frequency weights normalized to sum 1.

    Classes with zero labeled pixels get weight 0 (with a warning); counts
    (90, 10) give (0.1, 0.9).
    """
    counts = count_labels(labels, classes)
    if not counts.sum():
        raise ConfigError("no labeled pixels in any class")
    weights = np.zeros(classes, dtype=np.float64)
    seen = counts > 0
    weights[seen] = 1.0 / counts[seen]
    for cls in np.flatnonzero(~seen):
        warnings.warn(f"class {cls} has no labeled pixels; weight set to 0",
                      stacklevel=2)
    return weights / weights.sum()
