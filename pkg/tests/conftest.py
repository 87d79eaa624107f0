"""Shared helpers: seeded random fixtures and independent oracles."""

import numpy as np
import pytest

from pointreg.geometry import AffineTransform, TpsTransform

IDENTITY_6 = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


def make_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def random_points(rng, n=None, lo=0.0, hi=1.0) -> np.ndarray:
    if n is None:
        n = int(rng.integers(3, 9))
    return rng.uniform(lo, hi, (n, 2))


def random_affine(rng, spread=0.3) -> AffineTransform:
    """Affine near identity; redrawn until safely invertible."""
    while True:
        params = IDENTITY_6 + rng.uniform(-spread, spread, 6)
        if abs(params[0] * params[4] - params[1] * params[3]) > 0.1:
            return AffineTransform(params)


def random_tps(rng, spread=0.15) -> TpsTransform:
    return TpsTransform(rng.uniform(-spread, spread, 18))


def random_transform(rng, kind, spread=0.3):
    return random_affine(rng, spread) if kind == "affine" else random_tps(rng, spread / 2)


def brute_force_nn(queries, references):
    """Independent double-loop nearest-neighbor oracle (lowest index wins ties)."""
    indices = []
    distances = []
    for q in queries:
        best_j = 0
        best_d = None
        for j, r in enumerate(references):
            d = np.sqrt((q[0] - r[0]) ** 2 + (q[1] - r[1]) ** 2)
            if best_d is None or d < best_d:
                best_d = d
                best_j = j
        indices.append(best_j)
        distances.append(best_d)
    return np.array(indices), np.array(distances)


@pytest.fixture
def rng():
    return make_rng(20240817)
