import numpy as np
import pytest

from specdrive.scene import SceneSpec, synth_scene


@pytest.fixture(scope="session")
def small_scene():
    """80x120 five-class scene with mild noise, shared read-only."""
    return synth_scene(SceneSpec(seed=11, rows=80, cols=120, noise_sigma=0.02))


@pytest.fixture(scope="session")
def clean_scene():
    """Noise-free scene for exact recovery checks."""
    return synth_scene(SceneSpec(seed=3, rows=64, cols=96, noise_sigma=0.0))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
