import numpy as np
import pytest

from seldkit.scene_synth import SourceBank, procedural_bank


@pytest.fixture(scope="session")
def small_bank(tmp_path_factory) -> SourceBank:
    """Procedural bank shared by synthesis tests: 5 classes x 6 examples."""
    root = tmp_path_factory.mktemp("bank")
    return procedural_bank(root, n_classes=5, examples_per_class=6, seed=11,
                           duration_range=(0.3, 1.2))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
