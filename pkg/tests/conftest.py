import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from spoofbench.data.synthetic import generate_corpus


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Small synthetic corpus shared by data/trainer/CLI tests."""
    root = tmp_path_factory.mktemp("corpus")
    return generate_corpus(root, n_utts=48, seed=7, duration_range=(0.3, 0.7))


@pytest.fixture(scope="session")
def corpus_csv(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus_csv")
    return generate_corpus(root, n_utts=24, seed=9, duration_range=(0.3, 0.5),
                           table_format="csv")
