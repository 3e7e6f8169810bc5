import numpy as np
import pytest

from epban.synth import build_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """5 references x 3 variants at 16x16: enough rows for every split."""
    out = tmp_path_factory.mktemp("tiny")
    build_dataset(n_refs=5, variants_per_ref=3, size=16, seed=3, out_dir=out)
    return out / "manifest.csv"
