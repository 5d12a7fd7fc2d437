# -*- coding: utf-8 -*-
import numpy as np
import pytest

from services.config import get_settings
from services.moments import new_moments


@pytest.fixture(autouse=True)
def _single_thread(monkeypatch):
    monkeypatch.setenv("RAVG_THREADS", "1")
    monkeypatch.delenv("RAVG_DEBUG", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_data(rng, n=200, p=8, support=(1, 4), noise=0.5, corr=0.5):
    z = rng.standard_normal(n)
    X = corr * z[:, None] + rng.standard_normal((n, p)) + rng.uniform(-3, 3, size=p)
    X *= rng.uniform(0.5, 4.0, size=p)
    beta = np.zeros(p)
    beta[list(support)] = rng.uniform(1.0, 2.0, size=len(support))
    y = 1.5 + X @ beta + noise * rng.standard_normal(n)
    return X, y, beta


@pytest.fixture
def small_data(rng):
    return make_data(rng)


def moments_of(X, y, mode=None):
    m = new_moments(X.shape[1]) if mode is None else new_moments(X.shape[1], mode)
    for x_i, y_i in zip(X, y):
        m.update(x_i, y_i)
    return m


def raw_standardized(X, y):
    """Oráculo: centra e escala a matriz bruta (variância 1/n) e forma o sistema normal."""
    n = X.shape[0]
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    Z = (X - mu) / sd
    yc = y - y.mean()
    return Z.T @ Z / n, Z.T @ yc / n, mu, sd


def raw_top_k(v, k):
    order = sorted(range(len(v)), key=lambda j: (-abs(v[j]), j))
    return np.array(sorted(order[:k]))
