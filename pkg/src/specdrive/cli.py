"""Command-line front end.

Seven subcommands cover the full loop: synth renders a labeled scene to raw
sensor files, preprocess turns a raw capture into a cube, quantize converts a
float model to int8, infer segments a cube, eval scores a prediction,
separability reports JM distances, and bench times the hot paths.

Every run writes a JSON manifest next to its outputs recording the resolved
configuration, inputs, outputs, seed, tool version, and wall time, so any
artifact can be traced back to the exact invocation that made it.

Exit codes: 0 success, 2 usage or configuration error, 3 data or format
error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__, bench, fcn, quant, report, spectral
from .errors import (
    ConfigError,
    DataError,
    FormatError,
    NumericError,
    SpecdriveError,
    WeightError,
)
from .evaluate import class_stats, evaluate, jm_matrix
from .hypercube import (
    load_cube,
    load_labels,
    load_raw,
    save_cube,
    save_labels,
    save_raw,
    scheme_by_name,
)
from .preprocess import PreprocessConfig, load_config, run_pipeline
from .runner import auto_grid, segment_cube
from .scene import SceneSpec, synth_scene
from .patchwork import plan_grid

_ENV_SEED = "SPECDRIVE_SEED"


def _default_seed() -> int:
    raw = os.environ.get(_ENV_SEED)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{_ENV_SEED} must be an integer, got {raw!r}") from None


def _default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def write_manifest(path, subcommand: str, config: dict, inputs: dict,
                   outputs: dict, seed, wall_ms: float) -> None:
    """Atomically write the run manifest next to the outputs."""
    doc = {
        "tool": "specdrive",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "seed": seed,
        "wall_ms": round(wall_ms, 3),
    }
    path = str(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return str(path)


def _preprocess_config(args) -> PreprocessConfig:
    """JSON config plus flag overrides; flags win."""
    cfg = load_config(args.config) if args.config else PreprocessConfig()
    fields = {}
    if args.crop_offset is not None:
        parts = args.crop_offset.split(",")
        if len(parts) != 2:
            raise ConfigError("--crop-offset takes ROW,COL")
        fields["crop_offset"] = (int(parts[0]), int(parts[1]))
    if args.median_kernel is not None:
        fields["median_kernel"] = args.median_kernel
    if args.normalization is not None:
        fields["normalization"] = args.normalization
    if args.alignment is not None:
        fields["alignment"] = args.alignment
    if args.epsilon_ref is not None:
        fields["epsilon_ref"] = args.epsilon_ref
    if fields:
        base = {"crop_offset": cfg.crop_offset, "median_kernel": cfg.median_kernel,
                "normalization": cfg.normalization, "alignment": cfg.alignment,
                "epsilon_ref": cfg.epsilon_ref}
        base.update(fields)
        cfg = PreprocessConfig(**base)
    return cfg


def _preprocess_config_dict(cfg: PreprocessConfig) -> dict:
    return {"crop_offset": list(cfg.crop_offset), "median_kernel": cfg.median_kernel,
            "normalization": cfg.normalization, "alignment": cfg.alignment,
            "epsilon_ref": cfg.epsilon_ref}


def _expand_files(paths, suffix: str) -> list:
    """Expand files and directories into a sorted file list."""
    out = []
    for p in paths:
        if os.path.isdir(p):
            found = sorted(os.path.join(p, n) for n in os.listdir(p)
                           if n.endswith(suffix))
            if not found:
                raise DataError(f"no *{suffix} files in {p}")
            out.extend(found)
        else:
            out.append(p)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    t0 = time.perf_counter()
    doc = {}
    if args.config:
        with open(args.config) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid config JSON: {exc}") from None
        allowed = {"seed", "rows", "cols", "scheme_name", "noise_sigma",
                   "illumination_gradient", "dark_level", "white_level",
                   "full_frame_class"}
        unknown = sorted(set(doc) - allowed)
        if unknown:
            raise ConfigError(f"unknown scene config keys: {', '.join(unknown)}")
    if args.seed is not None:
        doc["seed"] = args.seed
    doc.setdefault("seed", _default_seed())
    if args.rows is not None:
        doc["rows"] = args.rows
    if args.cols is not None:
        doc["cols"] = args.cols
    if args.scheme is not None:
        doc["scheme_name"] = args.scheme
    if args.noise_sigma is not None:
        doc["noise_sigma"] = args.noise_sigma
    if args.illumination_gradient is not None:
        doc["illumination_gradient"] = args.illumination_gradient
    spec = SceneSpec(**doc)
    scene = synth_scene(spec)

    out = _ensure_dir(args.out_dir)
    paths = {name: os.path.join(out, name + ext)
             for name, ext in (("raw", ".pgm"), ("dark", ".pgm"), ("white", ".pgm"),
                               ("truth", ".pgm"), ("original", ".pgm"),
                               ("truth_preview", ".ppm"))}
    save_raw(scene.raw, paths["raw"])
    save_raw(scene.calibration.dark, paths["dark"])
    save_raw(scene.calibration.white, paths["white"])
    save_labels(scene.truth, paths["truth"])
    save_labels(scene.original, paths["original"])
    report.save_preview_ppm(paths["truth_preview"], scene.truth)

    cfg_doc = {"seed": spec.seed, "rows": spec.rows, "cols": spec.cols,
               "scheme_name": spec.scheme_name, "noise_sigma": spec.noise_sigma,
               "illumination_gradient": spec.illumination_gradient,
               "dark_level": spec.dark_level, "white_level": spec.white_level,
               "full_frame_class": spec.full_frame_class}
    write_manifest(os.path.join(out, "manifest.json"), "synth", cfg_doc,
                   {}, paths, spec.seed, (time.perf_counter() - t0) * 1000.0)
    print(f"synth: {spec.rows}x{spec.cols} {spec.scheme_name} scene "
          f"(seed {spec.seed}) -> {out}")
    return 0


def cmd_preprocess(args) -> int:
    t0 = time.perf_counter()
    cfg = _preprocess_config(args)
    frame = load_raw(args.raw)
    from .hypercube import CalibrationSet
    calib = CalibrationSet(load_raw(args.dark), load_raw(args.white))
    cube, timing = run_pipeline(frame, calib, cfg)
    save_cube(cube, args.out)
    write_manifest(str(args.out) + ".manifest.json", "preprocess",
                   _preprocess_config_dict(cfg),
                   {"raw": args.raw, "dark": args.dark, "white": args.white},
                   {"cube": str(args.out)}, None,
                   (time.perf_counter() - t0) * 1000.0)
    print(f"preprocess: {cube.height}x{cube.width}x{cube.bands} cube -> {args.out}")
    print(report.format_timing_table(timing))
    return 0


def cmd_quantize(args) -> int:
    t0 = time.perf_counter()
    cfg, weights = fcn.load_float_model(args.weights)
    cubes = [load_cube(p) for p in _expand_files(args.calib, ".hsc")]
    patches = []
    for cube in cubes:
        if cube.height >= cfg.patch and cube.width >= cfg.patch:
            grid = auto_grid(cube.height, cube.width, cfg.patch)
            from .patchwork import extract_patches
            patches.extend(extract_patches(cube.data, grid))
        else:
            m = 1 << cfg.depth
            if cube.height % m or cube.width % m:
                raise DataError(f"calibration cube {cube.height}x{cube.width} "
                                f"is not a multiple of {m}")
            patches.append(cube.data)
    qm = quant.quantize_model(cfg, weights, patches)
    quant.save_quant_model(args.out, qm)
    write_manifest(str(args.out) + ".manifest.json", "quantize",
                   {"patch": cfg.patch, "calib_patches": len(patches)},
                   {"weights": args.weights, "calib": args.calib},
                   {"model": str(args.out)}, None,
                   (time.perf_counter() - t0) * 1000.0)
    print(f"quantize: {len(patches)} calibration patches -> {args.out}")
    return 0


def _load_infer_model(args, cube):
    """Resolve the model from --weights or --random-weights."""
    if args.weights and args.random_weights:
        raise ConfigError("--weights and --random-weights are mutually exclusive")
    if args.random_weights:
        seed = args.seed if args.seed is not None else _default_seed()
        cfg = fcn.UNetConfig(classes=args.random_weights)
        weights = fcn.init_weights(cfg, seed=seed)
        if args.quantized:
            return cfg, quant.quantize_model(cfg, weights, [
                cube.data[:cfg.patch, :cfg.patch]
                if min(cube.height, cube.width) >= cfg.patch else cube.data]), seed
        return cfg, weights, seed
    if not args.weights:
        raise ConfigError("pass --weights FILE or --random-weights CLASSES")
    kind, payload = quant.load_any_model(args.weights)
    if args.quantized and kind != "int8":
        raise WeightError("--quantized expects an int8 model file")
    if not args.quantized and kind != "f32":
        raise WeightError("float inference expects a float model file; "
                          "pass --quantized for int8 models")
    if kind == "int8":
        return payload.cfg, payload, None
    cfg, weights = payload
    return cfg, weights, None


def cmd_infer(args) -> int:
    t0 = time.perf_counter()
    cube = load_cube(args.cube)
    cfg, model, seed = _load_infer_model(args, cube)
    if args.patch or args.grid_rows or args.grid_cols:
        patch = args.patch or cfg.patch
        n_rows = args.grid_rows or None
        n_cols = args.grid_cols or None
        from .patchwork import default_count
        grid = plan_grid(cube.height, cube.width, patch,
                         n_rows or default_count(cube.height, patch),
                         n_cols or default_count(cube.width, patch))
    else:
        grid = auto_grid(cube.height, cube.width,
                         cfg.patch if min(cube.height, cube.width) >= cfg.patch else 0,
                         cfg.depth)
    workers = args.workers if args.workers else _default_workers()
    labels, probs = segment_cube(cube, cfg, model, grid=grid, workers=workers)

    out = _ensure_dir(args.out_dir)
    paths = {"labels": os.path.join(out, "labels.pgm"),
             "probs": os.path.join(out, "probs.hsc"),
             "preview": os.path.join(out, "preview.ppm")}
    save_labels(labels, paths["labels"])
    from .hypercube import HyperCube, Stage
    save_cube(HyperCube.from_array(probs, Stage.NORMALIZED), paths["probs"])
    report.save_preview_ppm(paths["preview"], labels)
    cfg_doc = {"quantized": bool(args.quantized), "patch": grid.patch,
               "grid_rows": len(grid.row_starts), "grid_cols": len(grid.col_starts),
               "workers": workers, "classes": cfg.classes,
               "random_weights": args.random_weights or 0}
    write_manifest(os.path.join(out, "manifest.json"), "infer", cfg_doc,
                   {"cube": args.cube, "weights": args.weights or "(random)"},
                   paths, seed, (time.perf_counter() - t0) * 1000.0)
    print(f"infer: {grid.count} patches of {grid.patch} "
          f"({'int8' if args.quantized else 'float'}) -> {out}")
    return 0


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    scheme = scheme_by_name(args.scheme)
    pred = load_labels(args.pred)
    truth = load_labels(args.truth)
    class_weights = None
    if args.class_weights:
        class_weights = [float(v) for v in args.class_weights.split(",")]
    elif args.weights_from:
        refs = [load_labels(p) for p in _expand_files(args.weights_from, ".pgm")]
        counts = np.zeros(scheme.num_classes, dtype=np.float64)
        for ref in refs:
            for c in range(scheme.num_classes):
                counts[c] += int((ref.labels == c).sum())
        class_weights = counts
    rep = evaluate(pred.labels, truth.labels, scheme.num_classes, class_weights)

    out = _ensure_dir(args.out_dir)
    names = scheme.class_names
    paths = {"metrics_json": os.path.join(out, "metrics.json"),
             "metrics_csv": os.path.join(out, "metrics.csv"),
             "metrics_png": os.path.join(out, "metrics.png"),
             "confusion_csv": os.path.join(out, "confusion.csv"),
             "confusion_png": os.path.join(out, "confusion.png")}
    report.write_metrics_json(paths["metrics_json"], rep, names)
    report.write_metrics_csv(paths["metrics_csv"], rep, names)
    report.render_metrics_png(paths["metrics_png"], rep, names)
    report.write_confusion_csv(paths["confusion_csv"], rep, names)
    report.render_confusion_png(paths["confusion_png"], rep, names)
    cfg_doc = {"scheme": args.scheme,
               "class_weights": (list(map(float, class_weights))
                                 if class_weights is not None else None)}
    write_manifest(os.path.join(out, "manifest.json"), "eval", cfg_doc,
                   {"pred": args.pred, "truth": args.truth}, paths, None,
                   (time.perf_counter() - t0) * 1000.0)
    print(report.format_metrics_table(rep, names))
    return 0


def cmd_separability(args) -> int:
    t0 = time.perf_counter()
    scheme = scheme_by_name(args.scheme)
    cube_paths = _expand_files(args.cubes, ".hsc")
    label_paths = _expand_files(args.labels, ".pgm")
    if len(cube_paths) != len(label_paths):
        raise DataError(f"{len(cube_paths)} cubes vs {len(label_paths)} label maps")
    cubes = [load_cube(p).data for p in cube_paths]
    labels = [load_labels(p).labels for p in label_paths]
    stats = class_stats(cubes, labels, scheme.num_classes)
    jm = jm_matrix(stats, args.eps)

    out = _ensure_dir(args.out_dir)
    paths = {"jm_csv": os.path.join(out, "jm.csv"),
             "jm_png": os.path.join(out, "jm.png")}
    report.write_jm_csv(paths["jm_csv"], jm, scheme.class_names)
    report.render_jm_png(paths["jm_png"], jm, scheme.class_names)
    write_manifest(os.path.join(out, "manifest.json"), "separability",
                   {"scheme": args.scheme, "eps": args.eps},
                   {"cubes": cube_paths, "labels": label_paths}, paths, None,
                   (time.perf_counter() - t0) * 1000.0)
    rows = [["class"] + list(scheme.class_names)]
    for i, name in enumerate(scheme.class_names):
        rows.append([name] + [float(v) for v in jm[i]])
    print(report.format_table(rows))
    return 0


def cmd_bench(args) -> int:
    t0 = time.perf_counter()
    seed = args.seed if args.seed is not None else _default_seed()
    result = bench.run_bench(args.workload, iterations=args.iters,
                             warmup=args.warmup, seed=seed)
    out = _ensure_dir(args.out_dir)
    paths = {"bench_json": os.path.join(out, "bench.json"),
             "bench_csv": os.path.join(out, "bench.csv"),
             "bench_png": os.path.join(out, "bench.png")}
    report.write_bench_json(paths["bench_json"], result)
    report.write_bench_csv(paths["bench_csv"], result)
    report.render_bench_png(paths["bench_png"], result)
    if result.stage_timing is not None:
        paths["timing_csv"] = os.path.join(out, "timing.csv")
        paths["timing_png"] = os.path.join(out, "timing.png")
        report.write_timing_csv(paths["timing_csv"], result.stage_timing)
        report.render_timing_png(paths["timing_png"], result.stage_timing)
    write_manifest(os.path.join(out, "manifest.json"), "bench",
                   {"workload": args.workload, "iters": args.iters,
                    "warmup": args.warmup}, {}, paths, seed,
                   (time.perf_counter() - t0) * 1000.0)
    print(report.format_bench_table(result))
    if result.stage_timing is not None:
        print(report.format_timing_table(result.stage_timing))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="specdrive",
                                description="Snapshot-mosaic hyperspectral "
                                            "segmentation pipeline")
    p.add_argument("--version", action="version", version=f"specdrive {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="render a synthetic labeled capture")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--config", help="scene spec JSON; flags override")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--rows", type=int)
    sp.add_argument("--cols", type=int)
    sp.add_argument("--scheme", choices=("three_class", "five_class"))
    sp.add_argument("--noise-sigma", type=float)
    sp.add_argument("--illumination-gradient", type=float)
    sp.set_defaults(fn=cmd_synth)

    sp = sub.add_parser("preprocess", help="raw capture to normalized cube")
    sp.add_argument("--raw", required=True)
    sp.add_argument("--dark", required=True)
    sp.add_argument("--white", required=True)
    sp.add_argument("--out", required=True, help="output cube (.hsc)")
    sp.add_argument("--config", help="preprocessing config JSON; flags override")
    sp.add_argument("--crop-offset", help="ROW,COL")
    sp.add_argument("--median-kernel", type=int)
    sp.add_argument("--normalization", choices=("per_band_minmax", "per_pixel_max"))
    sp.add_argument("--alignment", choices=("off", "bilinear"))
    sp.add_argument("--epsilon-ref", type=float)
    sp.set_defaults(fn=cmd_preprocess)

    sp = sub.add_parser("quantize", help="float model to int8 with calibration")
    sp.add_argument("--weights", required=True, help="float model (.hswt)")
    sp.add_argument("--calib", required=True, nargs="+",
                    help="calibration cube files or directories")
    sp.add_argument("--out", required=True, help="output model (.hswt)")
    sp.set_defaults(fn=cmd_quantize)

    sp = sub.add_parser("infer", help="segment a cube")
    sp.add_argument("--cube", required=True)
    sp.add_argument("--weights", help="model file (.hswt)")
    sp.add_argument("--random-weights", type=int, metavar="CLASSES",
                    help="seeded random float model instead of --weights")
    sp.add_argument("--quantized", action="store_true",
                    help="run integer inference (int8 model)")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--patch", type=int, default=0)
    sp.add_argument("--grid-rows", type=int, default=0, help="0 = auto")
    sp.add_argument("--grid-cols", type=int, default=0, help="0 = auto")
    sp.add_argument("--workers", type=int, default=0, help="0 = all cores")
    sp.add_argument("--seed", type=int, help="seed for --random-weights")
    sp.set_defaults(fn=cmd_infer)

    sp = sub.add_parser("eval", help="score a prediction against ground truth")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--scheme", required=True, choices=("three_class", "five_class"))
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--class-weights", help="comma-separated reference supports")
    sp.add_argument("--weights-from", nargs="+",
                    help="label files/dirs whose class counts weight the aggregate")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("separability", help="JM distance between classes")
    sp.add_argument("--cubes", required=True, nargs="+",
                    help="cube files or directories")
    sp.add_argument("--labels", required=True, nargs="+",
                    help="label files or directories")
    sp.add_argument("--scheme", required=True, choices=("three_class", "five_class"))
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--eps", type=float, default=-1.0,
                    help="covariance regularizer; negative = auto")
    sp.set_defaults(fn=cmd_separability)

    sp = sub.add_parser("bench", help="time a workload")
    sp.add_argument("--workload", required=True, choices=sorted(bench.WORKLOADS))
    sp.add_argument("--iters", type=int, default=10)
    sp.add_argument("--warmup", type=int, default=3)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"specdrive: error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, DataError, WeightError, OSError) as exc:
        print(f"specdrive: error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"specdrive: error: {exc}", file=sys.stderr)
        return 4
    except SpecdriveError as exc:
        print(f"specdrive: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
