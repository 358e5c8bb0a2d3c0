"""Synthetic binary classification problems.

``waveform``, ``twonorm`` and ``ringnorm`` are Breiman's generators (CART
book / "Bias, variance and arcing classifiers"), as used by the classic
benchmark collections. ``gaussian_blobs`` is a small separable toy used in
tests and demos.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset


def _base_waves():
    i = np.arange(1, 22)
    h1 = np.maximum(6 - np.abs(i - 11), 0).astype(float)
    h2 = np.maximum(6 - np.abs(i - 15), 0).astype(float)
    h3 = np.maximum(6 - np.abs(i - 7), 0).astype(float)
    return h1, h2, h3


def waveform(m: int, seed: int = 0, positive_class: int = 0) -> Dataset:
    """21-feature waveform data; class ``positive_class`` vs. the other two."""
    rng = np.random.default_rng(seed)
    h1, h2, h3 = _base_waves()
    pairs = [(h1, h2), (h1, h3), (h2, h3)]
    cls = rng.integers(0, 3, size=m)
    u = rng.random(m)[:, None]
    X = np.empty((m, 21))
    for c, (a, b) in enumerate(pairs):
        sel = cls == c
        X[sel] = u[sel] * a + (1 - u[sel]) * b
    X += rng.standard_normal((m, 21))
    y = np.where(cls == positive_class, 1, -1)
    return Dataset(X=X, y_true=y, feature_names=[f"x{k}" for k in range(21)])


def twonorm(m: int, d: int = 20, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    a = 2.0 / np.sqrt(d)
    y = rng.choice([-1, 1], size=m)
    X = rng.standard_normal((m, d)) + a * y[:, None]
    return Dataset(X=X, y_true=y, feature_names=[f"x{k}" for k in range(d)])


def ringnorm(m: int, d: int = 20, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    a = 1.0 / np.sqrt(d)
    y = rng.choice([-1, 1], size=m)
    X = np.where(y[:, None] > 0, 2.0 * rng.standard_normal((m, d)), rng.standard_normal((m, d)) + a)
    return Dataset(X=X, y_true=y, feature_names=[f"x{k}" for k in range(d)])


def gaussian_blobs(m: int, d: int = 5, separation: float = 1.0, seed: int = 0) -> Dataset:
    """Two isotropic Gaussians at ``+-separation * e`` (``e`` a fixed unit vector),
    rescaled so every row has norm at most 1."""
    rng = np.random.default_rng(seed)
    e = np.ones(d) / np.sqrt(d)
    y = rng.choice([-1, 1], size=m)
    X = rng.standard_normal((m, d)) + separation * y[:, None] * e
    X /= np.linalg.norm(X, axis=1).max()
    return Dataset(X=X, y_true=y, feature_names=[f"x{k}" for k in range(d)])


GENERATORS = {
    "waveform": waveform,
    "twonorm": twonorm,
    "ringnorm": ringnorm,
    "gaussian": gaussian_blobs,
}
