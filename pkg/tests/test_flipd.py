import math

import numpy as np
import pytest

from conftest import affine_oracle, randomized_mlp
from fplid import GaussianOracle, MlpScore, VESchedule
from fplid.flipd import (
    ExactTrace,
    HutchinsonTrace,
    LidCurve,
    default_t_grid,
    default_trace_mode,
    flipd,
    flipd_auto,
    flipd_batch,
    flipd_curve,
    nu,
    nu_batch,
)
from fplid.lidl import DeltaGrid, log_rho_trajectory, regression_slope
from fplid.manifolds import random_rotation
from fplid.schedules import default_schedule

VP = default_schedule()
VE = VESchedule(0.01, 50.0)


def test_nu_zero_score_model():
    model = MlpScore(4, layer_sizes=(8, 4, 8), time_embed_dim=8, seed=0)
    assert nu(VP, model, np.ones(4), 0.3) == 0.0
    assert flipd(VP, model, np.ones(4), 0.3) == 10.0 - 6.0  # D = 4


def test_nu_isotropic_oracle_closed_form():
    # sigma^2 = 1 under VE at x = 0: nu = 1 * (-D/2 + 0)
    t = VE.t_of_delta(0.0)
    for dim in (3, 10):
        oracle = GaussianOracle.isotropic(dim, VE)
        assert nu(VE, oracle, np.zeros(dim), t) == pytest.approx(-dim / 2.0)


def test_nu_evaluates_at_rescaled_point(rng):
    """nu must evaluate the score at psi(t) x, not at x."""
    oracle = GaussianOracle.isotropic(3, VP)
    x = rng.normal(size=3)
    t = 0.4
    psi = float(VP.psi(t))
    s = oracle.score(psi * x, t)
    expected = float(VP.sigma2(t)) * (oracle.trace_jacobian_exact(None, t) + s @ s)
    assert nu(VP, oracle, x, t) == pytest.approx(expected, rel=1e-12)


def test_flipd_isotropic_value():
    # D + sigma^2 * (-D / (1 + sigma^2)) at x = 0 for VE, sigma^2 = 0.01
    t = VE.t_of_delta(math.log(0.1))
    oracle = GaussianOracle.isotropic(10, VE)
    assert flipd(VE, oracle, np.zeros(10), t) == pytest.approx(10.0 / 1.01, rel=1e-9)


def test_hutchinson_rademacher_exact_for_diagonal_jacobian(rng):
    """Rademacher probes satisfy e' diag(m) e = sum(m) exactly."""
    oracle = GaussianOracle(np.zeros(5), np.eye(5), rng.uniform(0.1, 2.0, 5), VP)
    x = rng.normal(size=5)
    exact = nu(VP, oracle, x, 0.3, ExactTrace())
    one_probe = nu(VP, oracle, x, 0.3, HutchinsonTrace(k=1, seed=11))
    assert one_probe == pytest.approx(exact, rel=1e-12)


def test_hutchinson_unbiased_mean_within_3_se(rng):
    """The mean of 10^4 Rademacher quadratic forms lands within 3 standard
    errors of the exact Jacobian trace."""
    from fplid.flipd import _draw_probes

    model = randomized_mlp(6, seed=15)
    t = 0.2
    x_scaled = float(VP.psi(t)) * rng.normal(size=6)
    exact = model.trace_jacobian_exact(x_scaled, t)
    probes = _draw_probes(HutchinsonTrace(k=10_000, seed=3), 1, 6, [0])[0]
    _, tangents = model.score_and_quadform_batch(x_scaled[None, :], t,
                                                 probes[None, :, :])
    per_sample = np.array([p @ model.score_jvp(x_scaled, t, p) for p in probes])
    se = per_sample.std(ddof=1) / math.sqrt(per_sample.size)
    assert abs(per_sample.mean() - exact) < 3 * se
    assert tangents[0] == pytest.approx(per_sample.mean(), rel=1e-10)


def test_gaussian_probes_supported(rng):
    model = randomized_mlp(4, seed=16)
    val = nu(VP, model, rng.normal(size=4), 0.3,
             HutchinsonTrace(k=64, noise="gaussian", seed=2))
    assert np.isfinite(val)


def test_hutchinson_point_streams_order_independent(rng):
    model = randomized_mlp(4, seed=17)
    x = rng.normal(size=(6, 4))
    mode = HutchinsonTrace(k=4, seed=5)
    full = nu_batch(VP, model, x, 0.25, mode, point_indices=np.arange(6))
    flipped = nu_batch(VP, model, x[::-1], 0.25, mode,
                       point_indices=np.arange(6)[::-1])
    np.testing.assert_allclose(full, flipped[::-1], rtol=1e-12)


def test_default_trace_mode_switch():
    assert isinstance(default_trace_mode(100), ExactTrace)
    mode = default_trace_mode(101)
    assert isinstance(mode, HutchinsonTrace) and mode.k == 50


def test_trace_mode_validation():
    with pytest.raises(ValueError):
        HutchinsonTrace(k=0)
    with pytest.raises(ValueError):
        HutchinsonTrace(noise="uniform")


def test_fokker_planck_time_derivative_cross_check(rng):
    """d/dt log p(x, t) from the score form

        -D b(t) - b(t) <x, s> + g^2/2 (tr grad s + ||s||^2)

    must match central differences of the closed-form Gaussian log density.
    """
    oracle, _, _, _ = affine_oracle(0, 5, VP, seed=18)  # full-rank fallback below
    q = random_rotation(5, np.random.default_rng(18))
    oracle = GaussianOracle(np.zeros(5), q, np.linspace(0.3, 2.0, 5), VP)
    h = 1e-5
    for t in (0.1, 0.35, 0.7):
        x = rng.normal(size=5)
        b, g2 = VP.drift_diffusion(t)
        s = oracle.score(x, t)
        tr = oracle.trace_jacobian_exact(x, t)
        rhs = -5 * b - b * (x @ s) + 0.5 * g2 * (tr + s @ s)
        fd = (oracle.log_marginal(x, t + h) - oracle.log_marginal(x, t - h)) / (2 * h)
        assert rhs == pytest.approx(fd, rel=1e-4)


def test_flipd_consistent_with_lidl_slope(rng):
    """FLIPD at t(delta) equals the local regression slope of log rho."""
    oracle, q, eigs, mean = affine_oracle(3, 8, VP, seed=19)
    x = mean + q[:, :3] @ (0.4 * np.sqrt(eigs[:3]))
    delta_bar = math.log(0.05)
    grid = DeltaGrid(tuple(delta_bar + s for s in (-0.05, -0.025, 0.0, 0.025, 0.05)))
    traj = log_rho_trajectory(VP, oracle, x, grid)
    slope = regression_slope(grid.as_array(), traj)
    f = flipd(VP, oracle, x, VP.t_of_delta(delta_bar))
    assert abs(f - slope - 8) < 0.05


def test_theorem_limit_affine_case(rng):
    """For a d-dim affine Gaussian, FLIPD approaches d from below as the
    noise scale shrinks, and sits within 0.05 of d at e^delta = 0.01."""
    dim = 10
    for d in range(1, dim):
        oracle, q, eigs, mean = affine_oracle(d, dim, VP, seed=100 + d)
        # tangent offsets below the per-direction std keep convergence monotone
        coeff = 0.5 * np.sqrt(eigs[:d]) * rng.uniform(-1, 1, size=d)
        x = mean + q[:, :d] @ coeff
        deltas = np.log(np.geomspace(0.01, 0.3, 12))
        vals = np.array([flipd(VP, oracle, x, VP.t_of_delta(dl)) for dl in deltas])
        assert abs(vals[0] - d) < 0.05
        assert np.all(np.diff(vals) < 0)  # monotone toward d as delta drops
        assert np.all(vals <= d + 1e-9)


def test_curve_matches_pointwise_calls(rng):
    oracle = GaussianOracle.isotropic(4, VP)
    x = rng.normal(size=4)
    grid = np.linspace(0.05, 0.9, 12)
    curve = flipd_curve(VP, oracle, x, t_grid=grid)
    direct = [flipd(VP, oracle, x, t) for t in grid]
    np.testing.assert_allclose(curve.values, direct, rtol=1e-12)


def test_full_rank_curve_strictly_decreasing():
    """Isotropic full-rank data: FLIPD(0, t) = D psi^2/(psi^2 + sigma^2),
    strictly decreasing in t."""
    oracle = GaussianOracle.isotropic(6, VP)
    curve = flipd_curve(VP, oracle, np.zeros(6))
    expected = 6.0 * VP.psi(curve.t_grid) ** 2
    np.testing.assert_allclose(curve.values, expected, rtol=1e-10)
    assert np.all(np.diff(curve.values) < 0)


def test_default_grid_is_50_interior_points():
    grid = default_t_grid()
    assert grid.shape == (50,)
    assert 0.0 < grid[0] and grid[-1] < 1.0


def test_curve_validation():
    with pytest.raises(ValueError):
        LidCurve(np.array([0.1, 0.1]), np.array([1.0, 2.0]), np.zeros(2))
    with pytest.raises(ValueError):
        LidCurve(np.array([0.1, 0.2]), np.array([1.0, np.nan]), np.zeros(2))


def test_multiscale_oracle_curve_and_knee(rng):
    """Gaussian with eigenvalues (1e-4 x3, 1 x3, 1e3 x4): the curve
    plateaus near 7 at small t0 and passes near 4 around t0 = 0.6; the
    detected knee sits at small t0 on the 7-plateau shoulder."""
    eigs = np.concatenate([np.full(3, 1e-4), np.ones(3), np.full(4, 1e3)])
    oracle = GaussianOracle(np.zeros(10), random_rotation(10, rng), eigs, VP)
    curve = flipd_curve(VP, oracle, np.zeros(10))
    plateau = curve.values[(curve.t_grid >= 0.015) & (curve.t_grid <= 0.06)]
    assert np.all(np.abs(plateau - 7.0) < 0.2)
    near_06 = curve.values[np.argmin(np.abs(curve.t_grid - 0.6))]
    assert abs(near_06 - 4.0) < 0.3
    est = flipd_auto(VP, oracle, np.zeros(10))
    assert not est.fallback
    assert est.t0 < 0.2
    assert 6.0 < est.lid < 7.3


def test_flipd_auto_isotropic_ve():
    est = flipd_auto(VE, GaussianOracle.isotropic(2, VE), np.zeros(2))
    assert not est.fallback
    assert est.lid == pytest.approx(2.0, abs=0.25)


def test_flipd_auto_fallback_on_kneeless_curve():
    """A curve with no knee falls back to t0 = 0.05, flagged."""

    class LinearInT:
        # scores chosen so nu(t) is exactly linear in t: no curvature, no knee
        dim = 2

        def score_and_trace_batch(self, x, t):
            n = x.shape[0]
            tr = (1.0 + 2.0 * t) / float(VP.sigma2(t))
            return np.zeros((n, 2)), np.full(n, tr)

    est = flipd_auto(VP, LinearInT(), np.zeros(2))
    assert est.fallback
    assert est.t0 == pytest.approx(0.05, abs=0.011)  # nearest grid point


def test_grid_bounds_validated():
    oracle = GaussianOracle.isotropic(2, VP)
    with pytest.raises(ValueError):
        flipd_curve(VP, oracle, np.zeros(2), t_grid=np.array([0.0, 0.5]))
    with pytest.raises(ValueError):
        flipd_curve(VP, oracle, np.zeros(2), t_grid=np.array([0.5, 1.0]))


def test_batch_matches_single(rng):
    model = randomized_mlp(3, seed=21)
    x = rng.normal(size=(5, 3))
    batch = flipd_batch(VP, model, x, 0.3)
    single = [flipd(VP, model, row, 0.3) for row in x]
    np.testing.assert_allclose(batch, single, rtol=1e-12)
