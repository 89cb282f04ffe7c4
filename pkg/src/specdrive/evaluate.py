"""Segmentation metrics and Gaussian class-separability scores.

Per class, with TP/FN/FP from a confusion matrix whose rows are ground
truth:

    accuracy  = TP / (TP + FN)        (producer's accuracy / recall)
    precision = TP / (TP + FP)
    IoU       = TP / (TP + FN + FP)

A class absent from both truth and prediction scores 1.0; a class with no
true positives but any truth or predicted pixels scores 0.0. Three aggregates
cover each metric: Overall weights classes by truth support, Mean is the
plain class average, and Weighted uses inverse reference supports so rare
classes dominate.

Separability between classes is scored with the Jeffries-Matusita distance
under a Gaussian model,

    B  = 1/8 d' S^-1 d + 1/2 ln( det S / sqrt(det S1 det S2) )
    JM = 2 (1 - exp(-B))

with d the mean difference, S the average covariance, and every determinant
regularized by eps * I. The implementation is arranged so swapping the two
classes returns the bit-identical value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .hypercube import IGNORE_LABEL


def confusion(pred: np.ndarray, gt: np.ndarray, num_classes: int) -> np.ndarray:
    """Count (truth row, prediction column) pairs, skipping ignore pixels."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise DataError(f"prediction {pred.shape} and truth {gt.shape} differ")
    if num_classes < 2:
        raise ConfigError("need at least two classes")
    keep = gt != IGNORE_LABEL
    t = gt[keep].astype(np.int64)
    p = pred[keep].astype(np.int64)
    if t.size and (t.min() < 0 or t.max() >= num_classes):
        raise DataError(f"truth labels outside 0..{num_classes - 1}")
    if p.size and (p.min() < 0 or p.max() >= num_classes):
        raise DataError(f"predicted labels outside 0..{num_classes - 1}")
    cm = np.bincount(t * num_classes + p, minlength=num_classes * num_classes)
    return cm.reshape(num_classes, num_classes)


def _safe_ratio(tp: np.ndarray, denom: np.ndarray, fn: np.ndarray, fp: np.ndarray) -> np.ndarray:
    empty = (tp == 0) & (fn == 0) & (fp == 0)
    out = np.where(denom > 0, tp / np.where(denom > 0, denom, 1), 0.0)
    return np.where(empty, 1.0, out)


@dataclass(frozen=True)
class MetricsReport:
    num_classes: int
    confusion: np.ndarray  # (C, C) int64, rows are truth
    support: np.ndarray  # (C,) truth pixels per class
    accuracy: np.ndarray  # (C,)
    precision: np.ndarray
    iou: np.ndarray
    overall: dict  # metric name -> float
    mean: dict
    weighted: dict


METRIC_NAMES = ("accuracy", "precision", "iou")


def metrics(cm: np.ndarray, class_weights=None) -> MetricsReport:
    """Full per-class and aggregate metrics from a confusion matrix.

    ``class_weights`` are reference supports (e.g. training-set pixel counts)
    for the inverse-support Weighted aggregate; by default the matrix's own
    truth supports are used. A zero reference support drops that class from
    the Weighted aggregate; all-zero supports are a config error.
    """
    cm = np.asarray(cm, dtype=np.int64)
    c = cm.shape[0]
    if cm.shape != (c, c) or c < 2:
        raise DataError("confusion matrix must be square with >= 2 classes")
    if (cm < 0).any():
        raise DataError("confusion matrix counts must be >= 0")
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    fn = support - tp
    fp = predicted - tp

    per_class = {
        "accuracy": _safe_ratio(tp, tp + fn, fn, fp),
        "precision": _safe_ratio(tp, tp + fp, fn, fp),
        "iou": _safe_ratio(tp, tp + fn + fp, fn, fp),
    }

    ref = support if class_weights is None else np.asarray(class_weights, dtype=np.float64)
    if ref.shape != (c,):
        raise ConfigError(f"class_weights must have {c} entries")
    if (ref < 0).any() or not np.isfinite(ref).all():
        raise ConfigError("reference supports must be finite and >= 0")
    if not (ref > 0).any():
        raise ConfigError("weighted aggregates need at least one positive support")
    inv = np.where(ref > 0, 1.0 / np.where(ref > 0, ref, 1.0), 0.0)
    inv = inv / inv.sum()

    total = support.sum()
    overall = {}
    mean = {}
    weighted = {}
    for name in METRIC_NAMES:
        v = per_class[name]
        overall[name] = float((support * v).sum() / total) if total > 0 else 1.0
        mean[name] = float(v.mean())
        weighted[name] = float((inv * v).sum())
    return MetricsReport(c, cm, support.astype(np.int64), per_class["accuracy"],
                         per_class["precision"], per_class["iou"],
                         overall, mean, weighted)


def evaluate(pred: np.ndarray, gt: np.ndarray, num_classes: int,
             class_weights=None) -> MetricsReport:
    return metrics(confusion(pred, gt, num_classes), class_weights)


# ---------------------------------------------------------------------------
# Gaussian class statistics and Jeffries-Matusita separability
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassStats:
    """Gaussian summary of one class's spectra."""

    class_id: int
    count: int
    mean: np.ndarray  # (bands,)
    cov: np.ndarray  # (bands, bands), ddof=1


def gaussian_stats(x: np.ndarray) -> tuple:
    """Sample mean and covariance (ddof=1) of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError("need at least two sample rows")
    return x.mean(axis=0), np.cov(x, rowvar=False, ddof=1).reshape(x.shape[1], x.shape[1])


def class_stats(cubes, labels, num_classes: int) -> list:
    """Per-class Gaussian statistics pooled over one or more labeled cubes.

    ``cubes`` and ``labels`` are matching (H, W, B) and (H, W) arrays or
    equal-length lists of them. Ignore pixels contribute nothing; every class
    needs at least two pixels somewhere.
    """
    if not isinstance(cubes, (list, tuple)):
        cubes = [cubes]
        labels = [labels]
    if len(cubes) != len(labels):
        raise DataError("cube and label lists differ in length")
    if not cubes:
        raise DataError("need at least one labeled cube")
    if num_classes < 2:
        raise ConfigError("need at least two classes")
    pools = [[] for _ in range(num_classes)]
    for data, lab in zip(cubes, labels):
        data = np.asarray(data)
        lab = np.asarray(lab)
        if data.shape[:2] != lab.shape:
            raise DataError(f"cube {data.shape[:2]} and labels {lab.shape} differ")
        for c in range(num_classes):
            mask = lab == c
            if mask.any():
                pools[c].append(data[mask].reshape(-1, data.shape[-1]))
    out = []
    for c in range(num_classes):
        sp = (np.concatenate(pools[c], axis=0).astype(np.float64)
              if pools[c] else np.empty((0, 1)))
        if sp.shape[0] < 2:
            raise DataError(f"class {c} has {sp.shape[0]} pixels; need >= 2")
        m, cov = gaussian_stats(sp)
        out.append(ClassStats(c, sp.shape[0], m, cov))
    return out


def _default_eps(c1: np.ndarray, c2: np.ndarray) -> float:
    d = c1.shape[0]
    return 1e-6 * float(np.trace((c1 + c2) / 2.0)) / d


def bhattacharyya_gaussian(m1, c1, m2, c2, eps: float = -1.0) -> float:
    """Bhattacharyya distance between two Gaussians, symmetric in its arguments."""
    m1 = np.asarray(m1, dtype=np.float64)
    m2 = np.asarray(m2, dtype=np.float64)
    c1 = np.asarray(c1, dtype=np.float64)
    c2 = np.asarray(c2, dtype=np.float64)
    d = m1.shape[0]
    if m2.shape != (d,) or c1.shape != (d, d) or c2.shape != (d, d):
        raise DataError("mean/covariance shapes disagree")
    if eps < 0:
        eps = _default_eps(c1, c2)
    eye = eps * np.eye(d)
    s = (c1 + c2) / 2.0 + eye
    diff = m1 - m2
    try:
        quad = float(diff @ np.linalg.solve(s, diff))
    except np.linalg.LinAlgError:
        raise NumericError("average covariance is singular; raise eps") from None
    sign_s, logdet_s = np.linalg.slogdet(s)
    sign_1, logdet_1 = np.linalg.slogdet(c1 + eye)
    sign_2, logdet_2 = np.linalg.slogdet(c2 + eye)
    if sign_s <= 0 or sign_1 <= 0 or sign_2 <= 0:
        raise NumericError("covariance not positive definite; raise eps")
    b = quad / 8.0 + 0.5 * (logdet_s - 0.5 * (logdet_1 + logdet_2))
    if not np.isfinite(b):
        raise NumericError("non-finite Bhattacharyya distance")
    return b


def jm_distance(m1, c1, m2, c2, eps: float = -1.0) -> float:
    """JM distance in [0, 2]; 0 for identical classes, 2 when fully separable."""
    return 2.0 * (1.0 - np.exp(-bhattacharyya_gaussian(m1, c1, m2, c2, eps)))


def jm_matrix(stats: list, eps: float = -1.0) -> np.ndarray:
    """Pairwise JM distances between ClassStats entries.

    Returns a symmetric (C, C) matrix with a zero diagonal.
    """
    c = len(stats)
    if c < 2:
        raise ConfigError("need at least two classes")
    out = np.zeros((c, c), dtype=np.float64)
    for i in range(c):
        for j in range(i + 1, c):
            v = jm_distance(stats[i].mean, stats[i].cov,
                            stats[j].mean, stats[j].cov, eps)
            out[i, j] = out[j, i] = v
    return out


def jm_from_labels(cube_data, labels, num_classes: int, eps: float = -1.0) -> np.ndarray:
    """JM matrix straight from one or more labeled cubes."""
    return jm_matrix(class_stats(cube_data, labels, num_classes), eps)
