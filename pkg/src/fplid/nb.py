"""Normal-bundle LID baseline.

At small noise the score points orthogonally toward the data manifold, so
K scores evaluated at noised copies of x span (approximately) the normal
space. Stacking them into S(x) in R^{D x K} and estimating rank S gives
LID(x) ~= D - rank S(x). Noised copies are drawn from the schedule's own
transition kernel N(psi(t0) x, sigma2(t0) I), i.e. the variance-preserving
adaptation when used with a VP schedule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kneedle import kneedle
from .schedules import Schedule, T_MIN

TAU_FLOOR = 1e-3  # geometric threshold sweep cannot start at 0


@dataclass(frozen=True)
class NbConfig:
    t0: float = 0.01
    k_columns: int | None = None  # None: 4 * D
    threshold_mode: str = "max_gap"  # or "kneedle"
    num_tau: int = 100
    tau_max: float = 1000.0
    seed: int = 0

    def __post_init__(self):
        if self.t0 < T_MIN:
            raise ValueError(f"t0 must be at least {T_MIN:g}")
        if self.k_columns is not None and self.k_columns < 1:
            raise ValueError("need at least one score column")
        if self.threshold_mode not in ("max_gap", "kneedle"):
            raise ValueError(f"unknown threshold mode {self.threshold_mode!r}")


def max_gap_rank(singular_values) -> int:
    """Rank as the index before the largest consecutive singular-value gap."""
    sv = np.asarray(singular_values, dtype=float)
    if sv.size < 2:
        return sv.size
    gaps = sv[:-1] - sv[1:]
    return int(np.argmax(gaps)) + 1


def kneedle_rank(singular_values, num_tau: int = 100, tau_max: float = 1000.0,
                 sensitivity: float = 1.0) -> int:
    """Rank at the plateau of the rank-vs-threshold step curve.

    Sweeps num_tau geometric thresholds in [TAU_FLOOR, tau_max]; rank(tau)
    decreases stepwise from full to 0, and the start of its plateau is a
    knee of the curve over log tau. Falls back to the max-gap rank when no
    knee is detected.
    """
    sv = np.asarray(singular_values, dtype=float)
    taus = np.geomspace(TAU_FLOOR, tau_max, num_tau)
    ranks = (sv[None, :] > taus[:, None]).sum(axis=1)
    knee = kneedle(np.log(taus), ranks.astype(float), sensitivity)
    if knee is None:
        return max_gap_rank(sv)
    return int(ranks[np.argmin(np.abs(np.log(taus) - knee))])


def score_column_singular_values(sched: Schedule, model, x, cfg: NbConfig,
                                 point_index: int = 0):
    """Singular values of the D x K matrix of scores at noised copies of x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise ValueError(f"expected a point of dim {model.dim}, got {x.shape}")
    k = cfg.k_columns if cfg.k_columns is not None else 4 * model.dim
    rng = np.random.default_rng(np.random.Philox(key=(cfg.seed, int(point_index))))
    noised = (float(sched.psi(cfg.t0)) * x
              + float(sched.sigma(cfg.t0)) * rng.standard_normal((k, model.dim)))
    s_matrix = model.score_batch(noised, cfg.t0).T
    return np.linalg.svd(s_matrix, compute_uv=False)


def nb_estimate(sched: Schedule, model, x, cfg: NbConfig = NbConfig(),
                point_index: int = 0) -> float:
    sv = score_column_singular_values(sched, model, x, cfg, point_index)
    if cfg.threshold_mode == "kneedle":
        rank = kneedle_rank(sv, cfg.num_tau, cfg.tau_max)
    else:
        rank = max_gap_rank(sv)
    return float(model.dim - rank)


def nb_batch(sched: Schedule, model, x, cfg: NbConfig = NbConfig()):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.array([nb_estimate(sched, model, row, cfg, i)
                     for i, row in enumerate(x)])
