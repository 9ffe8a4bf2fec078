"""Compiled kernels must be drop-in replacements for the NumPy reference."""

import numpy as np
import pytest

from conftest import randomized_mlp
from fplid import _mlp_numpy

cy = pytest.importorskip("fplid._mlp_cy")


@pytest.mark.parametrize("sizes", [(8,), (16, 8, 16), (32, 16, 8, 16, 32)],
                         ids=["L0", "L1", "L2"])
def test_forward_matches(sizes, rng):
    model = randomized_mlp(5, seed=7, sizes=sizes)
    a0 = model.embed(rng.normal(size=(9, 5)), 0.41)
    ref = _mlp_numpy.forward(model.weights, model.biases, model.skips, a0)
    out = cy.forward(model.weights, model.biases, model.skips, a0)
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("sizes", [(8,), (16, 8, 16), (32, 16, 8, 16, 32)],
                         ids=["L0", "L1", "L2"])
def test_tangents_match(sizes, rng):
    model = randomized_mlp(5, seed=8, sizes=sizes)
    a0 = model.embed(rng.normal(size=(6, 5)), 0.13)
    v = np.ascontiguousarray(rng.normal(size=(6, 3, 5)))
    ref_y, ref_t = _mlp_numpy.forward_tangent(model.weights, model.biases,
                                              model.skips, a0, v, 5)
    out_y, out_t = cy.forward_tangent(model.weights, model.biases,
                                      model.skips, a0, v, 5)
    np.testing.assert_allclose(out_y, ref_y, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(out_t, ref_t, rtol=1e-12, atol=1e-14)


def test_identity_tangents_match_explicit_basis(rng):
    model = randomized_mlp(4, seed=9)
    a0 = model.embed(rng.normal(size=(5, 4)), 0.6)
    eye = np.ascontiguousarray(np.broadcast_to(np.eye(4), (5, 4, 4)))
    for impl in (_mlp_numpy, cy):
        y_id, t_id = impl.forward_tangent(model.weights, model.biases,
                                          model.skips, a0, None, 4)
        y_ex, t_ex = impl.forward_tangent(model.weights, model.biases,
                                          model.skips, a0, eye, 4)
        np.testing.assert_allclose(t_id, t_ex, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(y_id, y_ex, rtol=1e-12, atol=1e-14)


def test_per_sample_times(rng):
    model = randomized_mlp(3, seed=10)
    x = rng.normal(size=(4, 3))
    ts = np.array([0.1, 0.4, 0.7, 0.9])
    batched = model.score_batch(x, ts)
    single = np.stack([model.score(row, t) for row, t in zip(x, ts)])
    np.testing.assert_allclose(batched, single, rtol=1e-12, atol=1e-14)
