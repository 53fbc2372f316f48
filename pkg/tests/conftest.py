import numpy as np
import pytest

from ice_localizer.corpus import SynthConfig, generate_synthetic


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Three-patient synthetic corpus at the small frame size."""
    out = tmp_path_factory.mktemp("small_corpus")
    return generate_synthetic(3, seed=7, cfg=SynthConfig.small(), out_dir=out)


@pytest.fixture(scope="session")
def desk_corpus(tmp_path_factory):
    """Twelve-patient corpus backing the end-to-end acceptance run."""
    out = tmp_path_factory.mktemp("desk_corpus")
    return generate_synthetic(12, seed=7, cfg=SynthConfig.small(), out_dir=out)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
