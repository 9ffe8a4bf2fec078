import math

import numpy as np
import pytest

from conftest import affine_oracle, randomized_mlp
from fplid import GaussianOracle, MlpScore, VESchedule, VPSchedule
from fplid.flipd import flipd
from fplid.manifolds import random_rotation
from fplid.schedules import default_schedule
from fplid.scorenet import (
    EpsilonAdapter,
    build_topology,
    sample_backward,
    score,
    score_jvp,
    time_features,
    trace_jacobian_exact,
)

VE = VESchedule(0.01, 50.0)
VP = default_schedule()


def test_topology_shapes():
    shapes, skips = build_topology((256, 128, 64, 128, 256), 138, 10)
    assert shapes == [(138, 256), (256, 128), (128 + 256, 64),
                      (64 + 138, 128), (128, 256), (256, 10)]
    assert skips == [-1, -1, 1, 0, -1, -1]
    shapes, skips = build_topology((32,), 12, 4)
    assert shapes == [(12, 32), (32, 4)] and skips == [-1, -1]
    with pytest.raises(ValueError):
        build_topology((8, 4), 12, 4)


def test_time_features_shape_and_range():
    feats = time_features(0.3, 16)
    assert feats.shape == (1, 16)
    assert np.all(np.abs(feats) <= 1.0)


def test_oracle_score_isotropic_matches_closed_form(rng):
    # sigma^2(t) = 1 under VE happens at lam = 1, i.e. delta = 0
    t = VE.t_of_delta(0.0)
    oracle = GaussianOracle.isotropic(5, VE)
    x = rng.normal(size=5)
    assert score(oracle, x, t) == pytest.approx(-x / 2.0, rel=1e-12)
    assert score(oracle, np.zeros(5), 0.4) == pytest.approx(np.zeros(5), abs=0.0)


def test_zero_weight_mlp_is_zero_score(rng):
    model = MlpScore(4, layer_sizes=(16, 8, 16), time_embed_dim=8, seed=1)
    x = rng.normal(size=4)
    assert np.all(score(model, x, 0.7) == 0.0)
    assert np.all(model.score_batch(rng.normal(size=(6, 4)), 0.2) == 0.0)
    assert trace_jacobian_exact(model, x, 0.5) == 0.0


def test_oracle_jvp(rng):
    t = VE.t_of_delta(0.0)
    oracle = GaussianOracle.isotropic(5, VE)
    e1 = np.eye(5)[0]
    assert score_jvp(oracle, rng.normal(size=5), t, e1) == pytest.approx(-e1 / 2)
    assert score_jvp(oracle, rng.normal(size=5), 0.3, np.zeros(5)) == pytest.approx(np.zeros(5))


def test_mlp_jvp_matches_central_differences(rng):
    model = randomized_mlp(6, seed=2)
    h = 1e-4
    for _ in range(100):
        x = rng.normal(size=6)
        t = rng.uniform(0.05, 0.95)
        v = rng.normal(size=6)
        jvp = score_jvp(model, x, t, v)
        fd = (score(model, x + h * v, t) - score(model, x - h * v, t)) / (2 * h)
        err = np.linalg.norm(jvp - fd) / max(np.linalg.norm(fd), 1e-12)
        assert err < 1e-3


def test_trace_examples():
    t = VE.t_of_delta(0.0)  # sigma^2 = 1
    oracle = GaussianOracle.isotropic(10, VE)
    assert trace_jacobian_exact(oracle, np.zeros(10), t) == pytest.approx(-5.0)
    # eigenvalues (0, 0, 1) at sigma^2 = 0.01
    t = VE.t_of_delta(math.log(0.1))
    oracle = GaussianOracle(np.zeros(3), np.eye(3), np.array([0.0, 0.0, 1.0]), VE)
    expected = -(2.0 / 0.01 + 1.0 / 1.01)
    assert trace_jacobian_exact(oracle, np.zeros(3), t) == pytest.approx(expected, rel=1e-9)


def test_trace_is_sum_of_basis_jvps(rng):
    model = randomized_mlp(5, seed=3)
    x = rng.normal(size=5)
    total = sum(score_jvp(model, x, 0.3, np.eye(5)[i])[i] for i in range(5))
    assert trace_jacobian_exact(model, x, 0.3) == pytest.approx(total, rel=1e-12)


def test_oracle_orthonormality_enforced(rng):
    bad = np.eye(4)
    bad[0, 1] = 1e-6
    with pytest.raises(ValueError, match="orthonormal"):
        GaussianOracle(np.zeros(4), bad, np.ones(4), VP)


def test_dimension_mismatch_errors(rng):
    model = randomized_mlp(4, seed=4)
    with pytest.raises(ValueError):
        model.score(rng.normal(size=5), 0.3)
    with pytest.raises(ValueError):
        model.score_jvp(rng.normal(size=4), 0.3, rng.normal(size=3))
    oracle = GaussianOracle.isotropic(4, VP)
    with pytest.raises(ValueError):
        oracle.score_batch(rng.normal(size=(2, 5)), 0.3)


def test_oracle_flipd_schedule_invariant_at_matched_delta(rng):
    """FLIPD from the exact oracle depends on the data and delta only, not
    on which schedule family realizes the noise scale."""
    q = random_rotation(6, rng)
    eigs = rng.uniform(0.05, 3.0, size=6)
    mean = rng.normal(size=6)
    o_ve = GaussianOracle(mean, q, eigs, VE)
    o_vp = GaussianOracle(mean, q, eigs, VP)
    for delta in (math.log(0.02), math.log(0.2), -0.5):
        x = rng.normal(size=6)
        f_ve = flipd(VE, o_ve, x, VE.t_of_delta(delta))
        f_vp = flipd(VP, o_vp, x, VP.t_of_delta(delta))
        assert f_ve == pytest.approx(f_vp, abs=1e-6)


class LinearEps:
    """Linear noise-prediction network eps(x, step) = A x + step * b."""

    def __init__(self, a, b):
        self.a = a
        self.b = b
        self.dim = a.shape[0]

    def epsilon(self, x, step):
        return self.a @ x + step * self.b

    def epsilon_jvp(self, x, step, v):
        return self.a @ v


def test_epsilon_adapter_matches_ddpm_formula(rng):
    """FLIPD written for discrete noise-prediction networks,

        D - sigma(t) tr(grad eps(psi x)) + ||eps(psi x)||^2,

    agrees with FLIPD through the adapted score when the discretization
    divides the time grid exactly."""
    dim = 4
    a = rng.normal(size=(dim, dim)) * 0.3
    b = rng.normal(size=dim) * 1e-4
    n_steps = 1000
    adapter = EpsilonAdapter(LinearEps(a, b), n_steps, VP)
    x = rng.normal(size=dim)
    for t in (0.25, 0.5, 0.75):
        step = int(round(t * n_steps))
        psi = float(VP.psi(t))
        sigma = float(VP.sigma(t))
        eps_val = a @ (psi * x) + step * b
        direct = dim - sigma * np.trace(a) + eps_val @ eps_val
        assert flipd(VP, adapter, x, t) == pytest.approx(direct, abs=1e-8)


def test_epsilon_adapter_score_value(rng):
    a = rng.normal(size=(3, 3))
    adapter = EpsilonAdapter(LinearEps(a, np.zeros(3)), 100, VP)
    x = rng.normal(size=3)
    expected = -(a @ x) / float(VP.sigma(0.42))
    assert adapter.score(x, 0.42) == pytest.approx(expected)


def test_sample_backward_oracle_vp_mean():
    oracle = GaussianOracle.isotropic(3, VP)
    samples = sample_backward(oracle, VP, n=10_000, steps=300, seed=5)
    se = 1.0 / math.sqrt(10_000)
    assert np.all(np.abs(samples.mean(axis=0)) < 3 * se)
    # marginal stays N(0, I) along the exact-score backward path
    assert np.allclose(samples.std(axis=0), 1.0, atol=0.05)


def test_sample_backward_rejects_too_few_steps():
    oracle = GaussianOracle.isotropic(2, VP)
    with pytest.raises(ValueError):
        sample_backward(oracle, VP, n=10, steps=0, seed=0)
    with pytest.raises(ValueError):
        sample_backward(oracle, VP, n=10, steps=50, seed=0)


def test_sample_backward_zero_score_matches_linear_recursion():
    """With a zero score the sampler is a linear Gaussian recursion whose
    variance we can propagate exactly along the same time grid."""
    from fplid.schedules import T_MIN

    model = MlpScore(2, layer_sizes=(8, 4, 8), time_embed_dim=8, seed=0)
    n, steps = 20_000, 150
    samples = sample_backward(model, VP, n=n, steps=steps, seed=6)
    ts = np.linspace(1.0, T_MIN, steps + 1)
    var = 1.0
    for k in range(steps):
        h = float(ts[k] - ts[k + 1])
        b, g2 = VP.drift_diffusion(float(ts[k]))
        var = (1.0 - h * b) ** 2 * var + g2 * h
    pooled = samples.var()
    assert pooled == pytest.approx(var, rel=0.05)
    assert np.abs(samples.mean()) < 3 * math.sqrt(var / (n * 2))
