"""Shared fixtures: synthetic datasets produced through the companion CLI.

The trainer consumes cubes and labels only as files, so the fixtures shell
out to the `specdrive` executable to build them. All scenes share one
generator seed (class spectra are then identical across scenes) while the
varied sizes give every scene a different spatial layout.
"""

import shutil
import subprocess
from pathlib import Path

import pytest

SPECDRIVE = shutil.which("specdrive")

TINY_SIZES = [(40, 56), (44, 60), (48, 64), (40, 64), (44, 56), (48, 60)]
FULL_SIZES = [(144, 224), (148, 228), (152, 232), (156, 236), (160, 240),
              (144, 240), (152, 224), (160, 228), (148, 236), (156, 224)]


def _run(*argv):
    proc = subprocess.run([str(a) for a in argv], capture_output=True, text=True)
    if proc.returncode:
        raise AssertionError(f"{argv[0]} {argv[1]} failed ({proc.returncode}):\n"
                             f"{proc.stderr}")
    return proc


def build_dataset(root: Path, sizes, seed: int = 5) -> Path:
    assert SPECDRIVE, "specdrive executable not on PATH; install the primary package"
    root.mkdir(parents=True, exist_ok=True)
    for i, (rows, cols) in enumerate(sizes):
        work = root / f"work{i}"
        _run(SPECDRIVE, "synth", "--out-dir", work, "--seed", seed,
             "--rows", rows, "--cols", cols, "--scheme", "three_class",
             "--noise-sigma", "0")
        _run(SPECDRIVE, "preprocess", "--raw", work / "raw.pgm",
             "--dark", work / "dark.pgm", "--white", work / "white.pgm",
             "--out", work / "cube.hsc")
        shutil.copy(work / "cube.hsc", root / f"scene_{i:02d}.hsc")
        shutil.copy(work / "truth.pgm", root / f"scene_{i:02d}.pgm")
        shutil.rmtree(work)
    return root


@pytest.fixture(scope="session")
def tiny_ds(tmp_path_factory) -> Path:
    """Six small noiseless scenes for fast training tests."""
    return build_dataset(tmp_path_factory.mktemp("tiny_ds"), TINY_SIZES)


@pytest.fixture(scope="session")
def full_ds(tmp_path_factory) -> Path:
    """Ten patch-sized noiseless scenes for the full training run."""
    return build_dataset(tmp_path_factory.mktemp("full_ds"), FULL_SIZES)


@pytest.fixture(scope="session")
def trained_full(tmp_path_factory, full_ds):
    """One canonical training run on the full dataset: (weights, log)."""
    from hsitrain import TrainConfig, train

    out_dir = tmp_path_factory.mktemp("trained")
    weights = out_dir / "unet.hswt"
    log = train(full_ds, TrainConfig(seed=0, epochs=50), weights,
                out_dir / "train_log.json")
    return weights, log
