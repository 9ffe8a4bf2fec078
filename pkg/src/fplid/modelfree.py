"""Model-free LID baselines: local PCA and the nearest-neighbour maximum
likelihood estimator. Both consume a brute-force Euclidean neighbour index
(benchmark sizes stay small enough that no approximate structure is
needed)."""

from __future__ import annotations

import warnings

import numpy as np


class NeighborIndex:
    """Exact k-nearest-neighbour lookups over a fixed dataset."""

    def __init__(self, data, k: int | None = None):
        self.data = np.atleast_2d(np.asarray(data, dtype=float))
        n, dim = self.data.shape
        if k is None:
            k = 1000 if dim > 100 else 100
        if k >= n:
            raise ValueError(f"k = {k} must be smaller than the dataset size {n}")
        self.k = int(k)
        self._sq_norms = np.sum(self.data * self.data, axis=1)

    def query(self, point, k: int | None = None):
        """Distances and indices of the k nearest points, ascending."""
        k = self.k if k is None else k
        point = np.asarray(point, dtype=float)
        sq = self._sq_norms - 2.0 * (self.data @ point) + point @ point
        idx = np.argpartition(sq, k - 1)[:k]
        idx = idx[np.argsort(sq[idx], kind="stable")]
        return np.sqrt(np.maximum(sq[idx], 0.0)), idx


def lpca_estimate(index: NeighborIndex, query, alpha_fo: float = 0.05) -> int:
    """Eigenvalue count of the local PCA above alpha_fo times the largest.

    PCA is taken over the k nearest neighbours centered at their mean.
    """
    if not 0.0 < alpha_fo < 1.0:
        raise ValueError("alpha_fo must lie in (0, 1)")
    if index.k < 2:
        raise ValueError("LPCA needs at least 2 neighbours")
    _, idx = index.query(query)
    nbrs = index.data[idx]
    centered = nbrs - nbrs.mean(axis=0)
    cov = centered.T @ centered / centered.shape[0]
    eigvals = np.linalg.eigvalsh(cov)
    top = eigvals[-1]
    if top <= 0.0:
        return 0
    return int(np.sum(eigvals > alpha_fo * top))


def mle_estimate(index: NeighborIndex, query) -> float:
    """Levina-Bickel estimate from nearest-neighbour distances:

        m(x) = [ (1/(k-1)) sum_{j<k} ln(T_k / T_j) ]^(-1)

    Zero distances (duplicate points, or the query itself when it belongs
    to the dataset) are dropped with a warning.
    """
    dists, _ = index.query(query)
    if np.any(dists == 0.0):
        warnings.warn("dropping zero-distance neighbours in MLE estimate")
        dists = dists[dists > 0.0]
    k = dists.shape[0]
    if k < 2:
        raise ValueError("MLE needs at least 2 neighbours at positive distance")
    mean_log = np.mean(np.log(dists[-1] / dists[:-1]))
    return float(1.0 / mean_log)


def mle_aggregate(estimates) -> float:
    """Dataset-level aggregation: average the inverse estimates, then invert
    (the harmonic correction for the Levina-Bickel estimator)."""
    estimates = np.asarray(estimates, dtype=float)
    return float(1.0 / np.mean(1.0 / estimates))
