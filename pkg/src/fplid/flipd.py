"""Fokker-Planck LID estimation.

The rate of change of the log density of data convolved with noise at log
scale delta, expressed through the score at diffusion time t = t(delta):

    nu(t; s, x) = sigma2(t) * ( tr grad s(psi(t) x, t) + ||s(psi(t) x, t)||^2 )

and the LID estimate is FLIPD(x, t0) = D + nu(t0; s, x). Estimates are not
clamped: negative values are reported as-is since they flag model misfit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kneedle import kneedle
from .schedules import Schedule, T_MIN

FALLBACK_T0 = 0.05


@dataclass(frozen=True)
class ExactTrace:
    """Deterministic trace via one JVP per coordinate."""


@dataclass(frozen=True)
class HutchinsonTrace:
    """Stochastic trace (1/k) sum_k e_k' (grad s) e_k with isotropic probes."""

    k: int = 50
    noise: str = "rademacher"  # or "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("Hutchinson sample count must be at least 1")
        if self.noise not in ("rademacher", "gaussian"):
            raise ValueError(f"unknown probe distribution {self.noise!r}")


def default_trace_mode(dim: int):
    """Exact traces up to D=100, Hutchinson k=50 beyond."""
    return ExactTrace() if dim <= 100 else HutchinsonTrace(k=50)


def _draw_probes(mode: HutchinsonTrace, n: int, dim: int, point_indices):
    """Per-point probe blocks from independent streams keyed by
    (seed, point index), so batch results are order-independent."""
    out = np.empty((n, mode.k, dim))
    for row, idx in enumerate(point_indices):
        rng = np.random.default_rng(np.random.Philox(key=(mode.seed, int(idx))))
        if mode.noise == "rademacher":
            out[row] = rng.integers(0, 2, size=(mode.k, dim)) * 2.0 - 1.0
        else:
            out[row] = rng.standard_normal((mode.k, dim))
    return out


def nu_batch(sched: Schedule, model, x, t, mode=None, point_indices=None):
    """nu(t; s, x_i) for every row of x, at a single time t."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.dim:
        raise ValueError(f"points of dim {x.shape[1]} but model dim {model.dim}")
    t = max(float(t), T_MIN)  # stability floor: keeps sigma(t) off zero
    if mode is None:
        mode = default_trace_mode(model.dim)
    x_scaled = float(sched.psi(t)) * x
    if isinstance(mode, ExactTrace):
        scores, traces = model.score_and_trace_batch(x_scaled, t)
    else:
        if point_indices is None:
            point_indices = np.arange(x.shape[0])
        probes = _draw_probes(mode, x.shape[0], model.dim, point_indices)
        scores, traces = model.score_and_quadform_batch(x_scaled, t, probes)
    if not np.all(np.isfinite(scores)):
        raise FloatingPointError(f"non-finite score at t = {t:g}")
    return float(sched.sigma2(t)) * (traces + np.sum(scores * scores, axis=1))


def nu(sched: Schedule, model, x, t, mode=None):
    return float(nu_batch(sched, model, np.asarray(x)[None, :], t, mode)[0])


def flipd(sched: Schedule, model, x, t0, mode=None):
    """LID estimate D + nu(t0); negative values are preserved."""
    return model.dim + nu(sched, model, x, t0, mode)


def flipd_batch(sched: Schedule, model, x, t0, mode=None, point_indices=None):
    return model.dim + nu_batch(sched, model, x, t0, mode, point_indices)


@dataclass
class LidCurve:
    """FLIPD over a grid of t0 for one query point."""

    t_grid: np.ndarray
    values: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t_grid.shape != self.values.shape:
            raise ValueError("grid and values must have equal length")
        if np.any(np.diff(self.t_grid) <= 0):
            raise ValueError("t grid must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("curve values must be finite")


def default_t_grid(num: int = 50):
    """num uniform points on (0, 1), endpoints excluded."""
    return np.linspace(0.0, 1.0, num + 1, endpoint=False)[1:]


def curve_matrix(sched: Schedule, model, x, t_grid=None, mode=None):
    """FLIPD curves for a batch: returns (t_grid, values of shape (n, m))."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if t_grid is None:
        t_grid = default_t_grid()
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] < T_MIN or t_grid[-1] >= 1.0:
        raise ValueError(f"t grid must lie inside [{T_MIN:g}, 1)")
    values = np.empty((x.shape[0], t_grid.shape[0]))
    for j, t0 in enumerate(t_grid):
        try:
            values[:, j] = flipd_batch(sched, model, x, float(t0), mode)
        except FloatingPointError as exc:
            raise FloatingPointError(f"{exc} (grid index {j})") from exc
    return t_grid, values


def flipd_curve(sched: Schedule, model, x, t_grid=None, mode=None) -> LidCurve:
    x = np.asarray(x, dtype=float)
    grid, values = curve_matrix(sched, model, x[None, :], t_grid, mode)
    return LidCurve(t_grid=grid, values=values[0], x=x)


@dataclass
class AutoEstimate:
    lid: float
    t0: float
    fallback: bool  # no knee found; evaluated at FALLBACK_T0 instead


def auto_from_curve(t_grid, values, sensitivity: float = 1.0) -> AutoEstimate:
    knee = kneedle(t_grid, values, sensitivity)
    if knee is None:
        j = int(np.argmin(np.abs(t_grid - FALLBACK_T0)))
        return AutoEstimate(lid=float(values[j]), t0=float(t_grid[j]),
                            fallback=True)
    j = int(np.argmin(np.abs(t_grid - knee)))
    return AutoEstimate(lid=float(values[j]), t0=float(knee), fallback=False)


def flipd_auto(sched: Schedule, model, x, mode=None,
               sensitivity: float = 1.0) -> AutoEstimate:
    """Build the 50-point curve, detect its knee, and read FLIPD there;
    falls back to t0 = 0.05 (flagged) when no knee is found."""
    curve = flipd_curve(sched, model, x, mode=mode)
    return auto_from_curve(curve.t_grid, curve.values, sensitivity)


def flipd_auto_batch(sched: Schedule, model, x, mode=None,
                     sensitivity: float = 1.0, t_grid=None):
    """Vectorized flipd_auto over the rows of x (curves share the grid)."""
    grid, values = curve_matrix(sched, model, x, t_grid, mode)
    return [auto_from_curve(grid, row, sensitivity) for row in values]
