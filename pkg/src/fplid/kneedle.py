"""Knee detection for discrete curves.

Normalizes the curve to the unit square, orients it to be increasing and
concave by sign flips, and scans the difference curve d = y - x for the
first local maximum that later drops by more than sensitivity * (mean x
gap). Returns the knee location on the original x axis, or None.
"""

from __future__ import annotations

import numpy as np


def kneedle(xs, ys, sensitivity: float = 1.0, select: str = "first"):
    """select="first" returns the earliest confirmed knee on the x axis
    (the stabilization point of multi-knee curves); select="max" returns
    the most prominent one (largest difference-curve peak)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-d arrays of equal length")
    if xs.shape[0] < 5:
        raise ValueError("knee detection needs at least 5 points")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("xs must be strictly increasing")
    if sensitivity <= 0:
        raise ValueError("sensitivity must be positive")
    if select not in ("first", "max"):
        raise ValueError(f"unknown knee selection {select!r}")

    x_span = xs[-1] - xs[0]
    y_span = ys.max() - ys.min()
    if y_span == 0.0:
        return None
    xn = (xs - xs[0]) / x_span
    yn = (ys - ys.min()) / y_span

    # Orient to increasing...
    index = np.arange(xs.shape[0])
    if yn[-1] < yn[0]:
        yn = 1.0 - yn
    # ...and concave (curve above the normalized chord y = x), rotating the
    # whole curve 180 degrees when it is convex.
    if np.mean(yn - xn) < 0.0:
        xn = (1.0 - xn)[::-1]
        yn = (1.0 - yn)[::-1]
        index = index[::-1]

    d = yn - xn
    n = d.shape[0]
    threshold_gap = sensitivity * np.mean(np.diff(xn))
    knees = []
    for i in range(1, n - 1):
        if d[i] > d[i - 1] and d[i] >= d[i + 1]:  # local maximum
            if np.any(d[i + 1:] < d[i] - threshold_gap):
                knees.append(index[i])
    if not knees:
        return None
    # Multi-knee curves: report the earliest knee on the original axis
    # (orientation flips can reverse the scan order).
    return float(xs[min(knees)])
