"""Delimited reports, rendered figures, and color previews.

Every report writer produces a CSV; the matching render_* function saves a
matplotlib figure next to it. Label previews are binary PPM images using a
fixed palette (ignore pixels are black).
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg", force=True)
import matplotlib.pyplot as plt
import numpy as np

import json

from .bench import BenchReport
from .errors import DataError
from .evaluate import METRIC_NAMES, MetricsReport
from .hypercube import IGNORE_LABEL, LabelMap
from .preprocess import StageTiming

# class index -> RGB; previews of three-class maps use the first three rows
PALETTE = (
    (96, 96, 96),    # road surface
    (255, 214, 0),   # road marks
    (40, 150, 40),   # vegetation
    (90, 170, 255),  # sky
    (200, 60, 160),  # other material
)
IGNORE_RGB = (0, 0, 0)


def _names(n: int, class_names) -> list:
    if class_names is None:
        return [f"class_{i}" for i in range(n)]
    if len(class_names) != n:
        raise DataError(f"expected {n} class names, got {len(class_names)}")
    return list(class_names)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def metrics_rows(report: MetricsReport, class_names=None) -> list:
    """Table rows: one per class plus Overall/Mean/Weighted aggregates."""
    names = _names(report.num_classes, class_names)
    rows = [["class", "support", "accuracy", "precision", "iou"]]
    for i, name in enumerate(names):
        rows.append([name, int(report.support[i]),
                     float(report.accuracy[i]), float(report.precision[i]),
                     float(report.iou[i])])
    total = int(report.support.sum())
    for label, agg in (("Overall", report.overall), ("Mean", report.mean),
                       ("Weighted", report.weighted)):
        rows.append([label, total] + [float(agg[m]) for m in METRIC_NAMES])
    return rows


def _write_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in rows:
            writer.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in row])


def write_metrics_csv(path, report: MetricsReport, class_names=None) -> None:
    _write_csv(path, metrics_rows(report, class_names))


def render_metrics_png(path, report: MetricsReport, class_names=None) -> None:
    """Grouped per-class bars for accuracy, precision, and IoU."""
    names = _names(report.num_classes, class_names)
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(1.8 + 1.1 * len(names), 3.6))
    for k, metric in enumerate(METRIC_NAMES):
        ax.bar(x + (k - 1) * 0.27, getattr(report, metric), width=0.25, label=metric)
    ax.set_xticks(x, names, rotation=20, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("score")
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title("Per-class metrics")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_confusion_csv(path, report: MetricsReport, class_names=None) -> None:
    names = _names(report.num_classes, class_names)
    rows = [["truth\\pred"] + names]
    for i, name in enumerate(names):
        rows.append([name] + [int(v) for v in report.confusion[i]])
    _write_csv(path, rows)


def render_confusion_png(path, report: MetricsReport, class_names=None) -> None:
    names = _names(report.num_classes, class_names)
    cm = report.confusion.astype(np.float64)
    norm = cm / np.maximum(cm.sum(axis=1, keepdims=True), 1)
    fig, ax = plt.subplots(figsize=(1.6 + 0.8 * len(names), 1.4 + 0.8 * len(names)))
    im = ax.imshow(norm, cmap="Blues", vmin=0.0, vmax=1.0)
    for i in range(len(names)):
        for j in range(len(names)):
            color = "white" if norm[i, j] > 0.6 else "black"
            ax.text(j, i, f"{norm[i, j]:.2f}", ha="center", va="center",
                    color=color, fontsize=8)
    ax.set_xticks(range(len(names)), names, rotation=30, ha="right", fontsize=8)
    ax.set_yticks(range(len(names)), names, fontsize=8)
    ax.set_xlabel("prediction")
    ax.set_ylabel("truth")
    ax.set_title("Row-normalized confusion")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# Separability
# ---------------------------------------------------------------------------

def write_jm_csv(path, jm: np.ndarray, class_names=None) -> None:
    names = _names(jm.shape[0], class_names)
    rows = [["class"] + names]
    for i, name in enumerate(names):
        rows.append([name] + [float(v) for v in jm[i]])
    _write_csv(path, rows)


def render_jm_png(path, jm: np.ndarray, class_names=None) -> None:
    names = _names(jm.shape[0], class_names)
    fig, ax = plt.subplots(figsize=(1.6 + 0.8 * len(names), 1.4 + 0.8 * len(names)))
    im = ax.imshow(jm, cmap="viridis", vmin=0.0, vmax=2.0)
    for i in range(len(names)):
        for j in range(len(names)):
            color = "black" if jm[i, j] > 1.4 else "white"
            ax.text(j, i, f"{jm[i, j]:.3f}", ha="center", va="center",
                    color=color, fontsize=8)
    ax.set_xticks(range(len(names)), names, rotation=30, ha="right", fontsize=8)
    ax.set_yticks(range(len(names)), names, fontsize=8)
    ax.set_title("Jeffries-Matusita separability")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# Benchmarks and timings
# ---------------------------------------------------------------------------

def write_bench_csv(path, result: BenchReport) -> None:
    rows = [["workload", "iteration", "ms"]]
    for i, t in enumerate(result.times_ms):
        rows.append([result.workload, i, float(t)])
    for key in ("fps_mean", "fps_median", "fps_min", "fps_max", "ms_mean", "ms_median"):
        rows.append([result.workload, key, float(result.stats[key])])
    _write_csv(path, rows)


def render_bench_png(path, result: BenchReport) -> None:
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(8, 3.2))
    ax0.plot(range(len(result.times_ms)), result.times_ms, marker="o")
    ax0.set_xlabel("iteration")
    ax0.set_ylabel("ms")
    ax0.set_title(f"{result.workload}: per-iteration time")
    fps = [1000.0 / t for t in result.times_ms]
    ax1.boxplot([fps], tick_labels=["fps"])
    ax1.axhline(result.stats["fps_mean"], color="tab:orange", ls="--", lw=1,
                label=f"mean {result.stats['fps_mean']:.2f}")
    ax1.legend(fontsize=8)
    ax1.set_title("throughput")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_timing_csv(path, timing: StageTiming) -> None:
    rows = [["stage", "ms"]]
    for name, ms in timing.rows():
        rows.append([name, float(ms)])
    _write_csv(path, rows)


def render_timing_png(path, timing: StageTiming) -> None:
    stages = timing.rows()[:-1]
    names = [s for s, _ in stages]
    vals = [v for _, v in stages]
    fig, ax = plt.subplots(figsize=(6.0, 3.2))
    ax.barh(range(len(names)), vals, color="tab:blue")
    ax.set_yticks(range(len(names)), names)
    ax.invert_yaxis()
    ax.set_xlabel("ms")
    ax.set_title(f"Stage timings (total {timing.total:.2f} ms)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# Label previews
# ---------------------------------------------------------------------------

def labels_to_rgb(labels: np.ndarray) -> np.ndarray:
    """Map class indices onto the fixed palette; ignore pixels go black."""
    labels = np.asarray(labels)
    if labels.max(initial=0) >= len(PALETTE) and not (labels == IGNORE_LABEL).all():
        used = np.unique(labels)
        bad = used[(used >= len(PALETTE)) & (used != IGNORE_LABEL)]
        if bad.size:
            raise DataError(f"no palette entry for classes {bad.tolist()}")
    lut = np.zeros((256, 3), dtype=np.uint8)
    for i, rgb in enumerate(PALETTE):
        lut[i] = rgb
    lut[IGNORE_LABEL] = IGNORE_RGB
    return lut[labels]


def save_preview_ppm(path, labels) -> None:
    """Binary PPM (P6, maxval 255) preview of a label map."""
    arr = labels.labels if isinstance(labels, LabelMap) else np.asarray(labels)
    rgb = labels_to_rgb(arr)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


# ---------------------------------------------------------------------------
# JSON and aligned text tables
# ---------------------------------------------------------------------------

def metrics_to_dict(report: MetricsReport, class_names=None) -> dict:
    names = _names(report.num_classes, class_names)
    per_class = []
    for i, name in enumerate(names):
        per_class.append({"class": name, "support": int(report.support[i]),
                          "accuracy": float(report.accuracy[i]),
                          "precision": float(report.precision[i]),
                          "iou": float(report.iou[i])})
    return {
        "num_classes": report.num_classes,
        "confusion": report.confusion.tolist(),
        "per_class": per_class,
        "overall": {m: float(report.overall[m]) for m in METRIC_NAMES},
        "mean": {m: float(report.mean[m]) for m in METRIC_NAMES},
        "weighted": {m: float(report.weighted[m]) for m in METRIC_NAMES},
    }


def write_metrics_json(path, report: MetricsReport, class_names=None) -> None:
    with open(path, "w") as fh:
        json.dump(metrics_to_dict(report, class_names), fh, indent=2)
        fh.write("\n")


def format_table(rows) -> str:
    """Align a list-of-lists into fixed-width columns; floats get 4 places."""
    txt = [[f"{v:.4f}" if isinstance(v, float) else str(v) for v in row]
           for row in rows]
    widths = [max(len(r[i]) for r in txt) for i in range(len(txt[0]))]
    lines = []
    for r in txt:
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                               for i, (c, w) in enumerate(zip(r, widths))))
    return "\n".join(lines)


def format_metrics_table(report: MetricsReport, class_names=None) -> str:
    return format_table(metrics_rows(report, class_names))


def format_timing_table(timing: StageTiming) -> str:
    rows = [["stage", "ms"]] + [[name, float(ms)] for name, ms in timing.rows()]
    return format_table(rows)


def format_bench_table(result: BenchReport) -> str:
    rows = [["quantity", "value"],
            ["workload", result.workload],
            ["iterations", result.iterations]]
    for key in ("fps_mean", "fps_median", "fps_min", "fps_max",
                "ms_mean", "ms_median"):
        rows.append([key, float(result.stats[key])])
    return format_table(rows)


def bench_to_dict(result: BenchReport) -> dict:
    doc = {"workload": result.workload, "iterations": result.iterations,
           "times_ms": [float(t) for t in result.times_ms],
           "stats": {k: float(v) for k, v in result.stats.items()}}
    if result.stage_timing is not None:
        doc["stage_timing_ms"] = {name: float(ms)
                                  for name, ms in result.stage_timing.rows()}
    return doc


def write_bench_json(path, result: BenchReport) -> None:
    with open(path, "w") as fh:
        json.dump(bench_to_dict(result), fh, indent=2)
        fh.write("\n")
