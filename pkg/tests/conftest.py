import numpy as np
import pytest
from hypothesis import settings

from smog.core import Categorical, Continuous, Dataset, Survival

settings.register_profile("smog", deadline=None, max_examples=200)
settings.load_profile("smog")


def central_gradient(f, x, h=1e-6):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def random_dataset(rng, n=60, d=4, kind="gaussian", k=3):
    X = rng.standard_normal((n, d))
    t = rng.choice([-1.0, 1.0], size=n)
    eta = X[:, 0] * 0.5 + t * 0.3 + (X[:, 1] * t) * 0.4
    if kind == "gaussian":
        resp = Continuous(eta + rng.standard_normal(n))
    elif kind == "multinomial":
        resp = Categorical(rng.integers(1, k + 1, size=n), k)
    else:
        time = rng.exponential(1.0, n) / np.exp(eta)
        status = (rng.random(n) < 0.8).astype(int)
        status[0] = 1
        resp = Survival(time, status)
    return Dataset(resp, t, X)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
