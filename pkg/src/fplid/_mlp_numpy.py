"""Pure-NumPy kernels for the bottleneck MLP with skip connections.

These are the reference implementations of the hot paths; `fplid.backend`
swaps in the compiled twins from `_mlp_cy` when they are importable. Both
operate on the same flat representation: a list of weight matrices (rows =
concatenated [previous-layer, skip-source] features), a list of bias
vectors, and `skips[j]` giving the activation index concatenated into
transform j (-1 for none, 0 for the embedded network input).

Tangents propagate in shape (n, r, width): r directions per sample, seeded
only on the leading `dx` coordinates of the input (the time-embedding block
of the input carries no x-dependence).
"""

import numpy as np
from scipy.special import expit


def _silu_and_deriv(z):
    s = expit(z)
    return z * s, s * (1.0 + z * (1.0 - s))


def _mm3(t, w):
    n, r, p = t.shape
    return (t.reshape(n * r, p) @ w).reshape(n, r, w.shape[1])


def forward(weights, biases, skips, a0):
    """Evaluate the network on a batch a0 of embedded inputs."""
    nt = len(weights)
    acts = [a0]
    for j in range(nt):
        w, b, skip = weights[j], biases[j], skips[j]
        prev = acts[j]
        p = prev.shape[1]
        z = prev @ w[:p] + b
        if skip >= 0:
            z += acts[skip] @ w[p:]
        if j < nt - 1:
            z *= expit(z)
        acts.append(z)
    return acts[nt]


def forward_tangent(weights, biases, skips, a0, v, dx):
    """Evaluate the network and push tangent directions through it.

    v has shape (n, r, dx), seeding r directions on the leading dx input
    coordinates; v=None means the dx standard basis directions (r = dx),
    for which the first-layer tangent is a broadcast slice of the weights.
    Returns (output, output tangents of shape (n, r, out)).
    """
    nt = len(weights)
    n = a0.shape[0]

    def seed(w_block):
        # tangent contribution of a block fed by the embedded input
        if v is None:
            return np.broadcast_to(w_block[:dx], (n, dx, w_block.shape[1]))
        return _mm3(v, w_block[:dx])

    acts = [a0]
    tans = [None]
    for j in range(nt):
        w, b, skip = weights[j], biases[j], skips[j]
        prev = acts[j]
        p = prev.shape[1]
        z = prev @ w[:p] + b
        t = seed(w[:p]) if j == 0 else _mm3(tans[j], w[:p])
        if skip >= 0:
            z += acts[skip] @ w[p:]
            t = t + (seed(w[p:]) if skip == 0 else _mm3(tans[skip], w[p:]))
        if j < nt - 1:
            z, dz = _silu_and_deriv(z)
            t = t * dz[:, None, :]
        acts.append(z)
        tans.append(t)
    return acts[nt], tans[nt]


def forward_cache(weights, biases, skips, a0):
    """Forward pass retaining activations and SiLU derivatives for backprop."""
    nt = len(weights)
    acts = [a0]
    derivs = []
    for j in range(nt):
        w, b, skip = weights[j], biases[j], skips[j]
        prev = acts[j]
        p = prev.shape[1]
        z = prev @ w[:p] + b
        if skip >= 0:
            z += acts[skip] @ w[p:]
        if j < nt - 1:
            z, dz = _silu_and_deriv(z)
            derivs.append(dz)
        else:
            derivs.append(None)
        acts.append(z)
    return acts, derivs


def backward(weights, skips, acts, derivs, d_out):
    """Backpropagate d_out (gradient w.r.t. the network output) through a
    cached forward pass; returns per-transform (dW, db) gradients."""
    nt = len(weights)
    d_acts = [None] * (nt + 1)
    d_acts[nt] = d_out
    grads_w = [None] * nt
    grads_b = [None] * nt
    for j in range(nt - 1, -1, -1):
        w, skip = weights[j], skips[j]
        dz = d_acts[j + 1] if derivs[j] is None else d_acts[j + 1] * derivs[j]
        prev = acts[j]
        p = prev.shape[1]
        gw = np.empty_like(w)
        gw[:p] = prev.T @ dz
        if skip >= 0:
            gw[p:] = acts[skip].T @ dz
        grads_w[j] = gw
        grads_b[j] = dz.sum(axis=0)
        _acc(d_acts, j, dz @ w[:p].T)
        if skip >= 0:
            _acc(d_acts, skip, dz @ w[p:].T)
    return grads_w, grads_b


def _acc(store, idx, val):
    if store[idx] is None:
        store[idx] = val
    else:
        store[idx] += val
