import os

for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import numpy as np
import pytest

from drumcritic.audio import SampleLibrary, Waveform, load_library
from drumcritic.demolib import make_demo_library
from drumcritic.features import MfccSettings


@pytest.fixture(scope="session")
def library_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("samples")
    make_demo_library(path)
    return path


@pytest.fixture(scope="session")
def library(library_dir):
    return load_library(library_dir)


@pytest.fixture(scope="session")
def tiny_library():
    """Analytic one-shots: a unit impulse and two short known signals."""
    impulse = np.zeros(4)
    impulse[0] = 1.0
    decay = np.exp(-np.arange(2000) / 300.0) * 0.45
    tone = 0.3 * np.sin(2 * np.pi * 440 * np.arange(1000) / 44100.0)
    ring = np.exp(-np.arange(8000) / 900.0) * 0.4  # long enough to cross a bar boundary from step 15
    return SampleLibrary(
        {
            "impulse": Waveform(impulse),
            "decay": Waveform(decay),
            "tone": Waveform(tone),
            "ring": Waveform(ring),
        }
    )


@pytest.fixture(scope="session")
def fast_mfcc():
    return MfccSettings(dtype="float32")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
