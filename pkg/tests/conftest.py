import numpy as np
import pytest

from imgcloak.detector import generate_corpus, load_bundled_detector, save_corpus


@pytest.fixture(scope="session")
def detector():
    return load_bundled_detector()


@pytest.fixture(scope="session")
def held_out_scenes():
    """200 scenes, one shape of each kind, disjoint from the training seed."""
    return generate_corpus(200, seed=77, full_kind=True)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(6, seed=301, full_kind=True)


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory, small_corpus):
    path = tmp_path_factory.mktemp("dataset")
    save_corpus(str(path), small_corpus)
    return str(path)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
