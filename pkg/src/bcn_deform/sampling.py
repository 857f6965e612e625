"""Seeded random draws of chamber points, global points and tangent vectors."""

import numpy as np

from .params import GlobalPoint, LocalPoint


def random_p_hat(rng, x, n, first=(0.05, 0.5), gap=(0.05, 0.6)):
    """Interior ``p_hat``: ``-p_1`` and each excess gap drawn uniformly from the given ranges."""
    p1 = -rng.uniform(*first)
    gaps = abs(x) / 2 + rng.uniform(*gap, size=n - 1)
    return np.concatenate([[p1], p1 - np.cumsum(gaps)])


def random_local_point(rng, x, n, q_range=np.pi, **kwargs):
    p = random_p_hat(rng, x, n, **kwargs)
    q = rng.uniform(-q_range, q_range, size=n)
    return LocalPoint(p, q)


def random_global_point(rng, n, zeros=0, radius=0.9):
    """Random ``z`` with ``|z_n| < radius``; ``zeros`` randomly chosen components are set to 0."""
    z = (rng.normal(size=n) + 1j * rng.normal(size=n)) / np.sqrt(2)
    z[-1] = rng.uniform(0, radius) * np.exp(1j * rng.uniform(-np.pi, np.pi))
    if zeros:
        z[rng.choice(n, size=min(zeros, n), replace=False)] = 0
    return GlobalPoint(z)


def random_tangent(rng, n):
    """Standard normal real tangent vector of length ``2n``."""
    return rng.normal(size=2 * n)


def sutherland_point(n):
    """Fixed well-separated ``(q, p)`` in ``pi/2 > q_1 > ... > q_n > 0``."""
    q = np.pi / 2 * np.arange(n, 0, -1) / (n + 1)
    p = np.resize([0.4, -0.7, 0.2], n)
    return q, p


def random_schneider_point(rng, x, n, top=(-1.0, 1.0), gap=(0.3, 1.0)):
    """``(Q, P)`` with ``Q_1`` in ``top`` and gaps exceeding ``|x|/2`` by a draw from ``gap``."""
    q1 = rng.uniform(*top)
    gaps = abs(x) / 2 + rng.uniform(*gap, size=n - 1)
    Q = np.concatenate([[q1], q1 - np.cumsum(gaps)])
    P = rng.uniform(-np.pi, np.pi, size=n)
    return Q, P
