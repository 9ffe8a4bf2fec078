import numpy as np
import pytest

from fplid import GaussianOracle, MlpScore
from fplid.manifolds import random_rotation


def randomized_mlp(dim, seed=0, sizes=(16, 8, 4, 8, 16), embed=8, scale=1.0):
    """Small MLP with random (nonzero) weights everywhere, including the
    output head, for derivative and kernel tests."""
    model = MlpScore(dim, layer_sizes=sizes, time_embed_dim=embed, seed=seed)
    rng = np.random.default_rng(seed + 1000)
    for w in model.weights:
        w[:] = rng.normal(0.0, scale / np.sqrt(w.shape[0]), w.shape)
    for b in model.biases:
        b[:] = rng.normal(0.0, 0.05, b.shape)
    return model


def affine_oracle(d, dim, sched, seed=0, mean_scale=1.0):
    """Gaussian oracle supported on a random d-dimensional affine subspace
    of R^dim. Returns (oracle, basis Q, eigenvalues, mean)."""
    rng = np.random.default_rng(seed)
    q = random_rotation(dim, rng)
    eigs = np.zeros(dim)
    eigs[:d] = rng.uniform(0.5, 2.0, size=d)
    mean = rng.normal(0.0, mean_scale, dim)
    return GaussianOracle(mean, q, eigs, sched), q, eigs, mean


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
