import numpy as np
import pytest

from vqstego.bits import StegoKey
from vqstego.config import default_config
from vqstego.pipeline import Pipeline
from vqstego.token_model import Distribution


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture(scope="session")
def pipe(cfg):
    return Pipeline.from_config(cfg)


@pytest.fixture(scope="session")
def tokenizer(pipe):
    return pipe.tokenizer


@pytest.fixture()
def key():
    return StegoKey(bytes(range(32)))


def two_token_dist():
    """The worked two-token example: a -> [0, 0.4), b -> [0.4, 1.0)."""
    return Distribution(np.array([0, 1]), np.array([0.4, 0.6]))


def uniform_dist(n):
    return Distribution(np.arange(n), np.full(n, 1.0 / n))
