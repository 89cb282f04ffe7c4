"""Wall-clock benchmarking of pipeline stages and model forwards.

Reported throughput treats each iteration independently: the FPS of one
iteration taking t milliseconds is 1000 / t, and the summary statistics
(mean/median/min/max) are taken over those per-iteration FPS values. The
median is the lower middle element, so an even run count never interpolates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, fields

import numpy as np

from . import fcn, quant, spectral
from .errors import ConfigError, DataError
from .preprocess import PreprocessConfig, StageTiming, run_pipeline
from .scene import SceneSpec, synth_scene


def fps_stats(times_ms) -> dict:
    """Per-iteration FPS summary for a list of millisecond timings."""
    times = np.asarray(list(times_ms), dtype=np.float64)
    if times.size == 0:
        raise DataError("need at least one timing")
    if (times <= 0).any():
        raise DataError("timings must be positive")
    fps = 1000.0 / times
    srt = np.sort(fps)
    return {
        "fps_mean": float(fps.mean()),
        "fps_median": float(srt[(len(srt) - 1) // 2]),
        "fps_min": float(fps.min()),
        "fps_max": float(fps.max()),
        "ms_mean": float(times.mean()),
        "ms_median": float(np.sort(times)[(len(times) - 1) // 2]),
    }


@dataclass(frozen=True)
class BenchReport:
    workload: str
    iterations: int
    times_ms: tuple
    stats: dict
    stage_timing: StageTiming = None  # mean per stage, preprocessing workloads only


# ---------------------------------------------------------------------------
# Workloads. Builders return a zero-argument callable with inputs prebuilt;
# the callable may return a StageTiming for the per-stage breakdown.
# ---------------------------------------------------------------------------

_BENCH_ROWS, _BENCH_COLS, _BENCH_PATCH = 64, 128, 64


def _build_preprocess(seed: int):
    scene = synth_scene(SceneSpec(seed=seed, rows=_BENCH_ROWS, cols=_BENCH_COLS))
    cfg = PreprocessConfig()
    return lambda: run_pipeline(scene.raw, scene.calibration, cfg)[1]


def _build_unet_float(seed: int):
    cfg = fcn.UNetConfig(classes=5, patch=_BENCH_PATCH)
    weights = fcn.init_weights(cfg, seed=seed)
    rng = np.random.default_rng(seed + 1)
    x = rng.uniform(0.0, 1.0, (_BENCH_PATCH, _BENCH_PATCH, cfg.in_bands)).astype(np.float32)
    return lambda: fcn.forward(cfg, weights, x)


def _build_unet_quant(seed: int):
    cfg = fcn.UNetConfig(classes=5, patch=_BENCH_PATCH)
    weights = fcn.init_weights(cfg, seed=seed)
    rng = np.random.default_rng(seed + 1)
    x = rng.uniform(0.0, 1.0, (_BENCH_PATCH, _BENCH_PATCH, cfg.in_bands)).astype(np.float32)
    qm = quant.quantize_model(cfg, weights, [x])
    return lambda: quant.forward_quantized(qm, x)


def _build_mlp(seed: int):
    cfg = spectral.MlpConfig()
    weights = spectral.mlp_init_weights(cfg, seed=seed)
    rng = np.random.default_rng(seed + 1)
    x = rng.uniform(0.0, 1.0, (_BENCH_ROWS * _BENCH_COLS, cfg.in_bands))
    return lambda: spectral.mlp_forward(cfg, weights, x)


def _build_end_to_end(seed: int):
    scene = synth_scene(SceneSpec(seed=seed, rows=_BENCH_ROWS, cols=_BENCH_COLS))
    net = fcn.UNetConfig(classes=scene.scheme.num_classes, patch=_BENCH_PATCH)
    weights = fcn.init_weights(net, seed=seed)
    pre = PreprocessConfig()

    def run():
        from .runner import auto_grid, segment_cube
        cube, timing = run_pipeline(scene.raw, scene.calibration, pre)
        grid = auto_grid(cube.height, cube.width, _BENCH_PATCH)
        segment_cube(cube, net, weights, grid=grid)
        return timing

    return run


WORKLOADS = {
    "preprocess": _build_preprocess,
    "unet_float": _build_unet_float,
    "unet_quant": _build_unet_quant,
    "mlp": _build_mlp,
    "end_to_end": _build_end_to_end,
}


def run_bench(workload, iterations: int = 10, warmup: int = 3, seed: int = 0) -> BenchReport:
    """Time a named workload (or any zero-argument callable).

    Warmup iterations run first and are discarded. Workloads that return a
    StageTiming contribute a mean per-stage breakdown to the report.
    """
    if iterations < 1:
        raise ConfigError("iterations must be >= 1")
    if warmup < 0:
        raise ConfigError("warmup must be >= 0")
    if callable(workload):
        fn, name = workload, getattr(workload, "__name__", "callable")
    else:
        if workload not in WORKLOADS:
            known = ", ".join(sorted(WORKLOADS))
            raise ConfigError(f"unknown workload '{workload}' (known: {known})")
        fn, name = WORKLOADS[workload](seed), workload
    for _ in range(warmup):
        fn()
    times = []
    timings = []
    for _ in range(iterations):
        t0 = time.perf_counter()
        out = fn()
        times.append((time.perf_counter() - t0) * 1000.0)
        if isinstance(out, StageTiming):
            timings.append(out)
    breakdown = None
    if timings:
        means = {f.name: float(np.mean([getattr(t, f.name) for t in timings]))
                 for f in fields(StageTiming)}
        breakdown = StageTiming(**means)
    return BenchReport(name, iterations, tuple(times), fps_stats(times), breakdown)
