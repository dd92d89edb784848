import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from phonodec.vocab import Vocabulary, default_vocab


@pytest.fixture(scope="session")
def cmu_vocab():
    return default_vocab()


@pytest.fixture
def tiny_vocab():
    return Vocabulary(("W", "AH", "T", "D", "UW", "SIL"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_logprob(rng, frames, vocab_size, scale=2.0):
    """Row-normalized random log-probabilities from gaussian scores."""
    from scipy.special import log_softmax
    return log_softmax(rng.normal(0.0, scale, size=(frames, vocab_size)), axis=1)
