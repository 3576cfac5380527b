import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import numpy as np
import pytest

from camoadapt import numcore as nc
from camoadapt.config import Config
from camoadapt.datagen import generate_set, quantize


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _clean_tape():
    with nc.fresh_tape():
        yield


@pytest.fixture
def small_config():
    """A 32-px, 2-block model that trains in well under a second per few steps."""
    return Config(image_size=32, patch_size=8, embed_dim=16, heads=2, depth=2, adapter_bottleneck=4, steps=6)


@pytest.fixture
def small_samples(small_config):
    return [quantize(s) for s in generate_set(3, seed=7, size=small_config.image_size)]


TRAINABLE_PATTERNS = (
    r"encoder\.blocks\.\d+\.adapter_(rgb|depth)\..+",
    r"encoder\.blocks\.\d+\.norm1\.(gain|bias)",
    r"bc\..+",
    r"mixer\..+",
    r"decoder_(rgb|depth)\..+",
    r"prompt\.(corner|no_mask)",
)


def expected_trainable(name: str) -> bool:
    """The trainable set by name; everything else is frozen backbone, expert or prompt PE."""
    import re
    return any(re.fullmatch(p, name) for p in TRAINABLE_PATTERNS)


@pytest.fixture(scope="session")
def overfit_samples():
    """Four 64-px scenes at camouflage strength 0.8, as written to and read from disk."""
    return [quantize(s) for s in generate_set(4, seed=0, size=64, camouflage=0.8)]
