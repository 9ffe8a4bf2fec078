"""Batch estimation drivers: run one estimator over an n x D matrix of
query points and emit per-point records.

Each point uses an independent RNG stream keyed by (seed, original point
index), so results are independent of evaluation order and of the worker
count. Chunks of points can be farmed out to worker processes; everything
a worker needs (schedule, model, parameters) pickles cleanly.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import flipd as fp
from . import lidl, modelfree, nb
from .schedules import Schedule


@dataclass
class PointRecord:
    index: int
    estimator: str
    lid: float
    t0_or_knee: float | None = None
    extra: dict = field(default_factory=dict)


def _run_chunked(worker, x, indices, workers: int):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    indices = np.asarray(indices, dtype=int)
    if workers <= 1 or x.shape[0] < 2 * workers:
        return worker((x, indices))
    chunks = [(x[lo::workers], indices[lo::workers]) for lo in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(worker, chunks))
    records = [r for part in parts for r in part]
    records.sort(key=lambda r: r.index)
    return records


@dataclass
class _FlipdFixed:
    sched: Schedule
    model: object
    t0: float
    mode: object

    def __call__(self, chunk):
        x, indices = chunk
        lids = fp.flipd_batch(self.sched, self.model, x, self.t0, self.mode,
                              point_indices=indices)
        trace = _trace_label(self.mode, self.model.dim)
        return [PointRecord(int(i), "flipd", float(v), self.t0,
                            {"trace_mode": trace})
                for i, v in zip(indices, lids)]


@dataclass
class _FlipdAuto:
    sched: Schedule
    model: object
    mode: object
    sensitivity: float = 1.0

    def __call__(self, chunk):
        x, indices = chunk
        grid, values = fp.curve_matrix(self.sched, self.model, x, mode=self.mode)
        trace = _trace_label(self.mode, self.model.dim)
        out = []
        for i, row in zip(indices, values):
            est = fp.auto_from_curve(grid, row, self.sensitivity)
            out.append(PointRecord(int(i), "flipd_auto", est.lid, est.t0,
                                   {"fallback_flag": int(est.fallback),
                                    "trace_mode": trace}))
        return out


@dataclass
class _Lidl:
    sched: Schedule
    model: object
    grid: lidl.DeltaGrid
    mode: object
    rk_steps: int = 16

    def __call__(self, chunk):
        x, indices = chunk
        out = []
        for i, row in zip(indices, x):
            est = lidl.lidl_estimate(self.sched, self.model, row, self.grid,
                                     self.mode, self.rk_steps)
            out.append(PointRecord(int(i), "lidl", float(est), None,
                                   {"slope": float(est - self.model.dim)}))
        return out


@dataclass
class _NormalBundle:
    sched: Schedule
    model: object
    cfg: nb.NbConfig

    def __call__(self, chunk):
        x, indices = chunk
        out = []
        for i, row in zip(indices, x):
            est = nb.nb_estimate(self.sched, self.model, row, self.cfg, int(i))
            out.append(PointRecord(int(i), "nb", float(est), self.cfg.t0,
                                   {"rank": int(self.model.dim - est),
                                    "threshold_mode": self.cfg.threshold_mode}))
        return out


@dataclass
class _Lpca:
    index: modelfree.NeighborIndex
    alpha_fo: float = 0.05

    def __call__(self, chunk):
        x, indices = chunk
        return [PointRecord(int(i), "lpca",
                            float(modelfree.lpca_estimate(self.index, row,
                                                          self.alpha_fo)),
                            None, {"k": self.index.k})
                for i, row in zip(indices, x)]


@dataclass
class _Mle:
    index: modelfree.NeighborIndex

    def __call__(self, chunk):
        x, indices = chunk
        return [PointRecord(int(i), "mle",
                            float(modelfree.mle_estimate(self.index, row)),
                            None, {"k": self.index.k})
                for i, row in zip(indices, x)]


def _trace_label(mode, dim):
    mode = mode if mode is not None else fp.default_trace_mode(dim)
    if isinstance(mode, fp.ExactTrace):
        return "exact"
    return f"hutchinson_k{mode.k}_{mode.noise}"


def estimate_flipd(sched, model, x, indices, t0=0.05, mode=None, workers=1):
    return _run_chunked(_FlipdFixed(sched, model, float(t0), mode), x, indices,
                        workers)


def estimate_flipd_auto(sched, model, x, indices, mode=None, workers=1,
                        sensitivity=1.0):
    return _run_chunked(_FlipdAuto(sched, model, mode, sensitivity), x,
                        indices, workers)


def estimate_lidl(sched, model, x, indices, grid=None, mode=None,
                  rk_steps=16, workers=1):
    grid = grid if grid is not None else lidl.default_delta_grid()
    return _run_chunked(_Lidl(sched, model, grid, mode, rk_steps), x, indices,
                        workers)


def estimate_nb(sched, model, x, indices, cfg=None, workers=1):
    cfg = cfg if cfg is not None else nb.NbConfig()
    return _run_chunked(_NormalBundle(sched, model, cfg), x, indices, workers)


def estimate_lpca(dataset_points, x, indices, alpha_fo=0.05, k=None, workers=1):
    index = modelfree.NeighborIndex(dataset_points, k)
    return _run_chunked(_Lpca(index, alpha_fo), x, indices, workers)


def estimate_mle(dataset_points, x, indices, k=None, workers=1):
    index = modelfree.NeighborIndex(dataset_points, k)
    return _run_chunked(_Mle(index), x, indices, workers)
