"""End-to-end tests for the command-line interface.

Everything goes through cli.main(argv) so exit codes, artifact layout, and
manifest contents are exercised exactly as a shell user would see them.
"""

import json
import os

import numpy as np
import pytest

from specdrive import cli, fcn
from specdrive.hypercube import Stage, load_cube, load_labels


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_manifest(path):
    with open(path) as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Shared workspace: one synthetic capture plus its preprocessed cube."""
    root = tmp_path_factory.mktemp("cli_ws")
    scene_dir = root / "scene"
    rc = run("synth", "--out-dir", scene_dir, "--rows", 64, "--cols", 96,
             "--seed", 7, "--noise-sigma", 0.02, "--scheme", "three_class")
    assert rc == 0
    cube_path = root / "cube.hsc"
    rc = run("preprocess", "--raw", scene_dir / "raw.pgm",
             "--dark", scene_dir / "dark.pgm", "--white", scene_dir / "white.pgm",
             "--out", cube_path)
    assert rc == 0
    return {"root": root, "scene": scene_dir, "cube": cube_path}


@pytest.fixture(scope="module")
def float_model(ws):
    cfg = fcn.UNetConfig(classes=3)
    weights = fcn.init_weights(cfg, seed=1)
    path = ws["root"] / "model_f32.hswt"
    fcn.save_float_model(path, cfg, weights)
    return path


@pytest.fixture(scope="module")
def quant_model(ws, float_model):
    path = ws["root"] / "model_i8.hswt"
    rc = run("quantize", "--weights", float_model, "--calib", ws["cube"],
             "--out", path)
    assert rc == 0
    return path


# ---------------------------------------------------------------------------
# Parser-level behavior
# ---------------------------------------------------------------------------

def test_version_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        run("--version")
    assert exc.value.code == 0
    assert "specdrive" in capsys.readouterr().out


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        run()
    assert exc.value.code == 2


def test_bad_choice_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("bench", "--workload", "nonsense", "--out-dir", tmp_path)
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def test_synth_artifacts_and_manifest(ws):
    scene = ws["scene"]
    for name in ("raw.pgm", "dark.pgm", "white.pgm", "truth.pgm",
                 "original.pgm", "truth_preview.ppm", "manifest.json"):
        assert (scene / name).exists(), name
    man = read_manifest(scene / "manifest.json")
    assert man["tool"] == "specdrive"
    assert man["subcommand"] == "synth"
    assert man["seed"] == 7
    assert man["config"]["rows"] == 64 and man["config"]["cols"] == 96
    assert man["config"]["noise_sigma"] == pytest.approx(0.02)
    assert man["wall_ms"] >= 0.0
    for path in man["outputs"].values():
        assert os.path.exists(path)
    raw = load_raw_shape(scene / "raw.pgm")
    assert raw == (64 * 5 + 8, 96 * 5 + 3)


def load_raw_shape(path):
    from specdrive.hypercube import load_raw
    frame = load_raw(path)
    return frame.data.shape


def test_synth_determinism(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    for out, seed in ((a, 5), (b, 5), (c, 6)):
        assert run("synth", "--out-dir", out, "--rows", 20, "--cols", 24,
                   "--seed", seed) == 0
    same = (a / "raw.pgm").read_bytes() == (b / "raw.pgm").read_bytes()
    diff = (a / "raw.pgm").read_bytes() != (c / "raw.pgm").read_bytes()
    assert same and diff


def test_synth_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "scene.json"
    cfg.write_text(json.dumps({"rows": 20, "cols": 24, "seed": 3,
                               "noise_sigma": 0.0}))
    out = tmp_path / "out"
    assert run("synth", "--out-dir", out, "--config", cfg, "--seed", 9) == 0
    man = read_manifest(out / "manifest.json")
    assert man["seed"] == 9
    assert man["config"]["rows"] == 20 and man["config"]["cols"] == 24
    assert man["config"]["noise_sigma"] == 0.0


def test_synth_unknown_config_key(tmp_path):
    cfg = tmp_path / "scene.json"
    cfg.write_text(json.dumps({"rows": 20, "cols": 20, "wavelength": 900}))
    assert run("synth", "--out-dir", tmp_path / "out", "--config", cfg) == 2


def test_synth_malformed_config_json(tmp_path):
    cfg = tmp_path / "scene.json"
    cfg.write_text("{not json")
    assert run("synth", "--out-dir", tmp_path / "out", "--config", cfg) == 2


def test_synth_env_seed(tmp_path, monkeypatch):
    monkeypatch.setenv("SPECDRIVE_SEED", "21")
    out = tmp_path / "out"
    assert run("synth", "--out-dir", out, "--rows", 20, "--cols", 24) == 0
    assert read_manifest(out / "manifest.json")["seed"] == 21


def test_synth_env_seed_flag_wins(tmp_path, monkeypatch):
    monkeypatch.setenv("SPECDRIVE_SEED", "21")
    out = tmp_path / "out"
    assert run("synth", "--out-dir", out, "--rows", 20, "--cols", 24,
               "--seed", 4) == 0
    assert read_manifest(out / "manifest.json")["seed"] == 4


def test_synth_bad_env_seed(tmp_path, monkeypatch):
    monkeypatch.setenv("SPECDRIVE_SEED", "not-a-number")
    assert run("synth", "--out-dir", tmp_path / "out", "--rows", 20,
               "--cols", 24) == 2


def test_synth_invalid_scene_params(tmp_path):
    assert run("synth", "--out-dir", tmp_path / "out", "--rows", 4,
               "--cols", 16) == 2


# ---------------------------------------------------------------------------
# preprocess
# ---------------------------------------------------------------------------

def test_preprocess_cube_and_manifest(ws):
    cube = load_cube(ws["cube"])
    assert (cube.height, cube.width, cube.bands) == (64, 96, 25)
    assert cube.stage is Stage.NORMALIZED
    man = read_manifest(str(ws["cube"]) + ".manifest.json")
    assert man["subcommand"] == "preprocess"
    assert man["config"]["median_kernel"] == 3
    assert man["config"]["normalization"] == "per_band_minmax"
    assert man["config"]["alignment"] == "bilinear"
    assert man["inputs"]["raw"].endswith("raw.pgm")
    assert man["outputs"]["cube"] == str(ws["cube"])


def test_preprocess_flags_override_config(ws, tmp_path):
    cfg = tmp_path / "pp.json"
    cfg.write_text(json.dumps({"median_kernel": 5, "alignment": "off"}))
    out = tmp_path / "cube.hsc"
    scene = ws["scene"]
    rc = run("preprocess", "--raw", scene / "raw.pgm", "--dark", scene / "dark.pgm",
             "--white", scene / "white.pgm", "--out", out,
             "--config", cfg, "--median-kernel", 3)
    assert rc == 0
    man = read_manifest(str(out) + ".manifest.json")
    assert man["config"]["median_kernel"] == 3
    assert man["config"]["alignment"] == "off"


def test_preprocess_missing_input(ws, tmp_path):
    scene = ws["scene"]
    rc = run("preprocess", "--raw", tmp_path / "missing.pgm",
             "--dark", scene / "dark.pgm", "--white", scene / "white.pgm",
             "--out", tmp_path / "cube.hsc")
    assert rc == 3


def test_preprocess_bad_crop_offset_syntax(ws, tmp_path):
    scene = ws["scene"]
    rc = run("preprocess", "--raw", scene / "raw.pgm", "--dark", scene / "dark.pgm",
             "--white", scene / "white.pgm", "--out", tmp_path / "cube.hsc",
             "--crop-offset", "4")
    assert rc == 2


def test_preprocess_crop_offset_out_of_range(ws, tmp_path):
    scene = ws["scene"]
    rc = run("preprocess", "--raw", scene / "raw.pgm", "--dark", scene / "dark.pgm",
             "--white", scene / "white.pgm", "--out", tmp_path / "cube.hsc",
             "--crop-offset", "326,1")
    assert rc == 2


def test_preprocess_deterministic_bytes(ws, tmp_path):
    scene = ws["scene"]
    out = tmp_path / "again.hsc"
    rc = run("preprocess", "--raw", scene / "raw.pgm", "--dark", scene / "dark.pgm",
             "--white", scene / "white.pgm", "--out", out)
    assert rc == 0
    assert out.read_bytes() == ws["cube"].read_bytes()


# ---------------------------------------------------------------------------
# quantize
# ---------------------------------------------------------------------------

def test_quantize_outputs(ws, quant_model):
    assert quant_model.exists()
    man = read_manifest(str(quant_model) + ".manifest.json")
    assert man["subcommand"] == "quantize"
    assert man["config"]["calib_patches"] == 1
    assert man["inputs"]["weights"].endswith("model_f32.hswt")


def test_quantize_rejects_missing_calib(ws, float_model, tmp_path):
    rc = run("quantize", "--weights", float_model,
             "--calib", tmp_path / "nope.hsc", "--out", tmp_path / "m.hswt")
    assert rc == 3


def test_quantize_empty_calib_dir(ws, float_model, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    rc = run("quantize", "--weights", float_model, "--calib", empty,
             "--out", tmp_path / "m.hswt")
    assert rc == 3


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------

def test_infer_random_weights(ws, tmp_path):
    out = tmp_path / "inf"
    rc = run("infer", "--cube", ws["cube"], "--random-weights", 3,
             "--seed", 5, "--out-dir", out)
    assert rc == 0
    labels = load_labels(out / "labels.pgm")
    assert labels.labels.shape == (64, 96)
    assert labels.labels.max() < 3
    probs = load_cube(out / "probs.hsc")
    assert probs.stage is Stage.NORMALIZED
    assert probs.data.shape == (64, 96, 3)
    np.testing.assert_allclose(probs.data.sum(axis=2), 1.0, atol=1e-5)
    assert (out / "preview.ppm").exists()
    man = read_manifest(out / "manifest.json")
    assert man["subcommand"] == "infer"
    assert man["seed"] == 5
    assert man["config"]["classes"] == 3
    assert man["config"]["random_weights"] == 3
    assert man["config"]["quantized"] is False
    assert man["inputs"]["weights"] == "(random)"


def test_infer_two_runs_byte_identical(ws, tmp_path):
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        rc = run("infer", "--cube", ws["cube"], "--random-weights", 3,
                 "--seed", 5, "--out-dir", out)
        assert rc == 0
        outs.append(out)
    a, b = outs
    for name in ("labels.pgm", "probs.hsc", "preview.ppm"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_infer_float_weights_file(ws, float_model, tmp_path):
    out = tmp_path / "inf"
    rc = run("infer", "--cube", ws["cube"], "--weights", float_model,
             "--out-dir", out)
    assert rc == 0
    man = read_manifest(out / "manifest.json")
    assert man["config"]["quantized"] is False
    assert man["inputs"]["weights"].endswith("model_f32.hswt")


def test_infer_quantized(ws, quant_model, tmp_path):
    out = tmp_path / "inf"
    rc = run("infer", "--cube", ws["cube"], "--weights", quant_model,
             "--quantized", "--out-dir", out)
    assert rc == 0
    labels = load_labels(out / "labels.pgm")
    assert labels.labels.max() < 3
    man = read_manifest(out / "manifest.json")
    assert man["config"]["quantized"] is True


def test_infer_kind_mismatch(ws, float_model, quant_model, tmp_path):
    rc = run("infer", "--cube", ws["cube"], "--weights", float_model,
             "--quantized", "--out-dir", tmp_path / "a")
    assert rc == 3
    rc = run("infer", "--cube", ws["cube"], "--weights", quant_model,
             "--out-dir", tmp_path / "b")
    assert rc == 3


def test_infer_model_flags_mutually_exclusive(ws, float_model, tmp_path):
    rc = run("infer", "--cube", ws["cube"], "--weights", float_model,
             "--random-weights", 3, "--out-dir", tmp_path / "x")
    assert rc == 2


def test_infer_requires_a_model(ws, tmp_path):
    assert run("infer", "--cube", ws["cube"], "--out-dir", tmp_path / "x") == 2


def test_infer_missing_cube(tmp_path):
    rc = run("infer", "--cube", tmp_path / "missing.hsc", "--random-weights", 3,
             "--out-dir", tmp_path / "x")
    assert rc == 3


def test_infer_explicit_grid(ws, tmp_path):
    out = tmp_path / "inf"
    rc = run("infer", "--cube", ws["cube"], "--random-weights", 3, "--seed", 1,
             "--patch", 32, "--grid-rows", 2, "--grid-cols", 3,
             "--out-dir", out)
    assert rc == 0
    man = read_manifest(out / "manifest.json")
    assert man["config"]["patch"] == 32
    assert man["config"]["grid_rows"] == 2
    assert man["config"]["grid_cols"] == 3


def test_infer_workers_do_not_change_bytes(ws, tmp_path):
    outs = []
    for name, workers in (("w1", 1), ("w4", 4)):
        out = tmp_path / name
        rc = run("infer", "--cube", ws["cube"], "--random-weights", 3,
                 "--seed", 5, "--workers", workers, "--out-dir", out)
        assert rc == 0
        outs.append(out)
    a, b = outs
    assert (a / "labels.pgm").read_bytes() == (b / "labels.pgm").read_bytes()
    assert (a / "probs.hsc").read_bytes() == (b / "probs.hsc").read_bytes()


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def test_eval_perfect_prediction(ws, tmp_path):
    out = tmp_path / "eval"
    truth = ws["scene"] / "truth.pgm"
    rc = run("eval", "--pred", truth, "--truth", truth,
             "--scheme", "three_class", "--out-dir", out)
    assert rc == 0
    for name in ("metrics.json", "metrics.csv", "metrics.png",
                 "confusion.csv", "confusion.png", "manifest.json"):
        assert (out / name).exists(), name
    doc = json.loads((out / "metrics.json").read_text())
    assert doc["overall"]["accuracy"] == pytest.approx(1.0)
    assert doc["mean"]["iou"] == pytest.approx(1.0)


def test_eval_class_weights_flag(ws, tmp_path):
    out = tmp_path / "eval"
    truth = ws["scene"] / "truth.pgm"
    rc = run("eval", "--pred", truth, "--truth", truth, "--scheme", "three_class",
             "--out-dir", out, "--class-weights", "1,2,3")
    assert rc == 0
    man = read_manifest(out / "manifest.json")
    assert man["config"]["class_weights"] == [1.0, 2.0, 3.0]


def test_eval_weights_from_counts(ws, tmp_path):
    out = tmp_path / "eval"
    truth = ws["scene"] / "truth.pgm"
    rc = run("eval", "--pred", truth, "--truth", truth, "--scheme", "three_class",
             "--out-dir", out, "--weights-from", truth)
    assert rc == 0
    man = read_manifest(out / "manifest.json")
    lab = load_labels(truth).labels
    want = [float((lab == c).sum()) for c in range(3)]
    assert man["config"]["class_weights"] == want


def test_eval_wrong_weight_count(ws, tmp_path):
    truth = ws["scene"] / "truth.pgm"
    rc = run("eval", "--pred", truth, "--truth", truth, "--scheme", "three_class",
             "--out-dir", tmp_path / "x", "--class-weights", "1,2")
    assert rc == 2


def test_eval_shape_mismatch(ws, tmp_path):
    from specdrive.hypercube import LabelMap, save_labels
    other = tmp_path / "small.pgm"
    save_labels(LabelMap.from_array(np.zeros((8, 8), dtype=np.uint8)), other)
    rc = run("eval", "--pred", other, "--truth", ws["scene"] / "truth.pgm",
             "--scheme", "three_class", "--out-dir", tmp_path / "x")
    assert rc == 3


# ---------------------------------------------------------------------------
# separability
# ---------------------------------------------------------------------------

def test_separability_outputs(ws, tmp_path):
    out = tmp_path / "sep"
    rc = run("separability", "--cubes", ws["cube"],
             "--labels", ws["scene"] / "truth.pgm",
             "--scheme", "three_class", "--out-dir", out)
    assert rc == 0
    for name in ("jm.csv", "jm.png", "manifest.json"):
        assert (out / name).exists(), name
    rows = (out / "jm.csv").read_text().strip().splitlines()
    assert len(rows) == 4
    header = rows[0].split(",")
    assert header[0] == "class" and len(header) == 4
    grid = [[float(v) for v in r.split(",")[1:]] for r in rows[1:]]
    for i in range(3):
        assert grid[i][i] == pytest.approx(0.0)
        for j in range(3):
            assert grid[i][j] == pytest.approx(grid[j][i])
            assert 0.0 <= grid[i][j] <= 2.0


def test_separability_count_mismatch(ws, tmp_path):
    rc = run("separability", "--cubes", ws["cube"], ws["cube"],
             "--labels", ws["scene"] / "truth.pgm",
             "--scheme", "three_class", "--out-dir", tmp_path / "x")
    assert rc == 3


def test_separability_constant_cube_numeric_error(tmp_path):
    from specdrive.hypercube import HyperCube, LabelMap, save_cube, save_labels
    data = np.full((6, 6, 3), 0.5, dtype=np.float32)
    labels = np.arange(36, dtype=np.uint8).reshape(6, 6) % 3
    cube_path = tmp_path / "flat.hsc"
    lab_path = tmp_path / "flat.pgm"
    save_cube(HyperCube.from_array(data, Stage.NORMALIZED), cube_path)
    save_labels(LabelMap.from_array(labels), lab_path)
    rc = run("separability", "--cubes", cube_path, "--labels", lab_path,
             "--scheme", "three_class", "--out-dir", tmp_path / "x")
    assert rc == 4
    rc = run("separability", "--cubes", cube_path, "--labels", lab_path,
             "--scheme", "three_class", "--out-dir", tmp_path / "y",
             "--eps", 0.5)
    assert rc == 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def test_bench_mlp(tmp_path):
    out = tmp_path / "bench"
    rc = run("bench", "--workload", "mlp", "--iters", 2, "--warmup", 1,
             "--out-dir", out)
    assert rc == 0
    for name in ("bench.json", "bench.csv", "bench.png", "manifest.json"):
        assert (out / name).exists(), name
    assert not (out / "timing.csv").exists()
    doc = json.loads((out / "bench.json").read_text())
    assert doc["workload"] == "mlp"
    assert doc["iterations"] == 2
    assert doc["stats"]["fps_mean"] > 0
    assert "stage_timing_ms" not in doc


def test_bench_preprocess_breakdown(tmp_path):
    out = tmp_path / "bench"
    rc = run("bench", "--workload", "preprocess", "--iters", 1, "--warmup", 0,
             "--out-dir", out)
    assert rc == 0
    assert (out / "timing.csv").exists()
    assert (out / "timing.png").exists()
    man = read_manifest(out / "manifest.json")
    assert "timing_csv" in man["outputs"]


def test_bench_bad_iterations(tmp_path):
    assert run("bench", "--workload", "mlp", "--iters", 0,
               "--out-dir", tmp_path / "x") == 2


# ---------------------------------------------------------------------------
# Hygiene
# ---------------------------------------------------------------------------

def test_no_temp_files_left_behind(ws):
    leftovers = [n for n in os.listdir(ws["scene"]) if n.endswith(".tmp")]
    assert leftovers == []
