"""Evaluation metrics for LID estimates against ground-truth labels."""

from __future__ import annotations

import numpy as np


def mae(estimates, labels) -> float:
    """Mean absolute error between per-point estimates and true LIDs."""
    estimates = np.asarray(estimates, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if estimates.shape != labels.shape:
        raise ValueError("estimates and labels must have equal length")
    return float(np.mean(np.abs(estimates - labels)))


def concordance(estimates, labels, exclude_label_ties: bool = False,
                chunk: int = 512) -> float:
    """Rank agreement between estimates and labels.

    Counts ordered pairs (i, j), i != j, with label_i <= label_j for which
    estimate_i <= estimate_j, normalized by N choose 2. A perfect tie-free
    estimator scores exactly 1; because tied labels qualify in both orders,
    the literal formula can exceed 1 when estimates tie as well.

    With exclude_label_ties=True only strictly ordered label pairs count,
    normalized by their own number.
    """
    est = np.asarray(estimates, dtype=float)
    lab = np.asarray(labels, dtype=float)
    if est.shape != lab.shape:
        raise ValueError("estimates and labels must have equal length")
    n = est.shape[0]
    if n < 2:
        raise ValueError("concordance needs at least 2 points")
    satisfied = 0
    qualifying = 0
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        li = lab[lo:hi, None]
        ei = est[lo:hi, None]
        if exclude_label_ties:
            qual = li < lab[None, :]
        else:
            qual = li <= lab[None, :]
            block = np.arange(lo, hi)
            qual[block - lo, block] = False  # drop i == j
        satisfied += int(np.count_nonzero(qual & (ei <= est[None, :])))
        qualifying += int(np.count_nonzero(qual))
    if exclude_label_ties:
        if qualifying == 0:
            raise ValueError("no strictly ordered label pairs")
        return satisfied / qualifying
    return satisfied / (n * (n - 1) / 2.0)
