import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_symmetric(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) * scale
    return (a + a.T) / 2.0


def random_psd(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) * scale
    return a @ a.T / n


def random_distribution(rng, d):
    p = rng.random(1 << d)
    return p / p.sum()
