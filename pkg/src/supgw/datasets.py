"""Reproducible synthetic point clouds used by the experiment protocols."""

from __future__ import annotations

import numpy as np


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def ellipse(n, axes=(2.0, 1.0), dim=2, seed=None):
    """``n`` points uniform in angle on an ellipse in the ``xy`` plane of R^dim."""
    rng = _rng(seed)
    t = rng.uniform(0, 2 * np.pi, n)
    x = np.zeros((n, dim))
    x[:, 0] = axes[0] * np.cos(t)
    x[:, 1] = axes[1] * np.sin(t)
    return x


def sphere(n, radius=1.0, center=(0.0, 0.0, 0.0), seed=None):
    """``n`` points uniform on a sphere surface."""
    rng = _rng(seed)
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.asarray(center) + radius * v


def square(n, side=1.0, center=(0.0, 0.0), seed=None):
    """``n`` points uniform in an axis-aligned square."""
    rng = _rng(seed)
    return np.asarray(center) + side * (rng.uniform(size=(n, 2)) - 0.5)


def disk(n, radius=1.0, center=(0.0, 0.0), seed=None):
    """``n`` points uniform in a disk."""
    rng = _rng(seed)
    r = radius * np.sqrt(rng.uniform(size=n))
    t = rng.uniform(0, 2 * np.pi, n)
    return np.asarray(center) + np.c_[r * np.cos(t), r * np.sin(t)]


def ellipse_mixtures(n=100, m=100, seed=0):
    """Source: half 3-D ellipse, half sphere. Target: 30% 2-D ellipse, 70% square."""
    rng = _rng(seed)
    n_e = n // 2
    x = np.vstack([
        ellipse(n_e, axes=(2.0, 1.0), dim=3, seed=rng),
        sphere(n - n_e, radius=0.5, center=(3.5, 0.0, 0.0), seed=rng),
    ])
    m_e = int(round(0.3 * m))
    y = np.vstack([
        ellipse(m_e, axes=(2.0, 1.0), dim=2, seed=rng),
        square(m - m_e, side=1.0, center=(3.5, 0.0), seed=rng),
    ])
    return x, y


def two_disks(n=80, m=80, seed=0):
    """Two disks of radius 1 and 2."""
    rng = _rng(seed)
    return disk(n, 1.0, seed=rng), disk(m, 2.0, seed=rng)


def two_clusters(n=500, seed=0, separation=2.5, weights=(0.6, 0.4), spreads=(0.6, 0.4)):
    """Two Gaussian blobs of unequal size and spread, close enough for the
    kNN graph to stay connected."""
    rng = _rng(seed)
    n1 = int(round(weights[0] * n))
    a = rng.normal(scale=spreads[0], size=(n1, 2))
    b = rng.normal(scale=spreads[1], size=(n - n1, 2)) + np.array([separation, 0.0])
    return np.vstack([a, b])
