"""Score-function representations.

Three interchangeable models expose the same surface — score values,
Jacobian-vector products, and exact Jacobian traces:

* `MlpScore` — trainable bottleneck MLP with skip connections and a
  sinusoidal time embedding.
* `GaussianOracle` — closed-form score of a Gaussian data distribution
  pushed through the forward SDE; exact at every noise level.
* `EpsilonAdapter` — wraps a discrete-time noise-prediction network as a
  continuous-time score model.

All models are immutable after construction/training as far as evaluation
is concerned, so concurrent read-only use is safe.
"""

from __future__ import annotations

import math

import numpy as np

from . import backend
from .schedules import Schedule, T_MIN


def time_features(t, dim: int):
    """Sinusoidal embedding of t: sin/cos at `dim`/2 geometric frequencies
    spanning 1 to 1e4."""
    half = dim // 2
    freqs = np.geomspace(1.0, 1e4, half)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    angles = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def build_topology(layer_sizes, in_features: int, out_dim: int):
    """Transform shapes for the bottleneck-with-skips architecture.

    For hidden sizes <h1..h_{2L+1}>: transforms 1..L contract plainly
    (h_{i-1} x h_i, with h_0 the embedded input), transform L+i concatenates
    layer L+i-1 with skip source layer L-i (shape (h_{L+i-1}+h_{L-i}) x
    h_{L+i}), the final hidden transform and the linear output head have no
    skip. Returns (shapes, skips): shapes[j] = (fan_in, fan_out), skips[j] =
    activation index concatenated into transform j or -1.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) % 2 != 1 or any(s < 1 for s in sizes):
        raise ValueError("layer_sizes must be an odd-length list of positive ints")
    big_l = (len(sizes) - 1) // 2
    h = [in_features] + sizes
    shapes, skips = [], []
    for i in range(1, big_l + 1):
        shapes.append((h[i - 1], h[i]))
        skips.append(-1)
    for i in range(1, big_l + 1):
        j = big_l + i
        shapes.append((h[j - 1] + h[big_l - i], h[j]))
        skips.append(big_l - i)
    shapes.append((h[2 * big_l], h[2 * big_l + 1]))
    skips.append(-1)
    shapes.append((h[2 * big_l + 1], out_dim))
    skips.append(-1)
    return shapes, skips


DEFAULT_LAYER_SIZES = (256, 128, 64, 128, 256)


class MlpScore:
    """Trainable MLP score network s(x, t) with output dim = input dim."""

    def __init__(self, dim: int, layer_sizes=DEFAULT_LAYER_SIZES,
                 time_embed_dim: int = 128, seed: int = 0):
        self.dim = int(dim)
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        self.time_embed_dim = int(time_embed_dim)
        self.in_features = self.dim + self.time_embed_dim
        self.shapes, self.skips = build_topology(
            self.layer_sizes, self.in_features, self.dim)
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in self.shapes:
            self.weights.append(rng.normal(0.0, 1.0 / math.sqrt(fan_in),
                                           size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        # Zero output head: the untrained model is the zero score.
        self.weights[-1][:] = 0.0

    # -- parameter plumbing (used by the trainer and checkpoints) --

    def parameters(self):
        return self.weights + self.biases

    def set_parameters(self, params):
        nw = len(self.weights)
        for i, p in enumerate(params[:nw]):
            self.weights[i] = np.ascontiguousarray(p, dtype=float)
        for i, p in enumerate(params[nw:]):
            self.biases[i] = np.ascontiguousarray(p, dtype=float)

    def copy(self):
        other = MlpScore.__new__(MlpScore)
        other.__dict__.update(self.__dict__)
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    # -- evaluation --

    def embed(self, x, t):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected points of dim {self.dim}, got {x.shape[1]}")
        feats = time_features(t, self.time_embed_dim)
        if feats.shape[0] == 1 and x.shape[0] > 1:
            feats = np.broadcast_to(feats, (x.shape[0], feats.shape[1]))
        return np.ascontiguousarray(np.concatenate([x, feats], axis=1))

    def score(self, x, t):
        return self.score_batch(np.asarray(x, dtype=float)[None, :], t)[0]

    def score_batch(self, x, t):
        return backend.mlp_forward(self.weights, self.biases, self.skips,
                                   self.embed(x, t))

    def score_jvp(self, x, t, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"expected direction of dim {self.dim}, got {v.shape}")
        _, tan = backend.mlp_forward_tangent(
            self.weights, self.biases, self.skips,
            self.embed(np.asarray(x, dtype=float)[None, :], t),
            np.ascontiguousarray(v[None, None, :]), self.dim)
        return tan[0, 0]

    def score_and_trace_batch(self, x, t, chunk_elems: int = 4_000_000):
        """Scores and exact Jacobian traces for a batch, chunked to bound the
        (n, dim, width) tangent workspace."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = x.shape[0]
        rows = max(1, chunk_elems // (self.dim * max(self.layer_sizes)))
        scores = np.empty((n, self.dim))
        traces = np.empty(n)
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        for lo in range(0, n, rows):
            hi = min(n, lo + rows)
            tc = t if t_arr.shape[0] == 1 else t_arr[lo:hi]
            y, tan = backend.mlp_forward_tangent(
                self.weights, self.biases, self.skips,
                self.embed(x[lo:hi], tc), None, self.dim)
            scores[lo:hi] = y
            traces[lo:hi] = np.trace(tan, axis1=1, axis2=2)
        return scores, traces

    def score_and_quadform_batch(self, x, t, probes):
        """Scores and Hutchinson quadratic forms mean_k e_k' J e_k for
        per-sample probe blocks of shape (n, k, dim)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        probes = np.ascontiguousarray(probes, dtype=float)
        y, tan = backend.mlp_forward_tangent(
            self.weights, self.biases, self.skips, self.embed(x, t),
            probes, self.dim)
        return y, np.einsum("nkd,nkd->n", probes, tan) / probes.shape[1]

    def trace_jacobian_exact(self, x, t):
        return float(self.score_and_trace_batch(
            np.asarray(x, dtype=float)[None, :], t)[1][0])


class GaussianOracle:
    """Exact score of N(mean, cov) data under a given schedule.

    cov = Q diag(eigvals) Q' with orthonormal Q; the marginal at time t is
    N(psi(t) mean, psi(t)^2 cov + sigma2(t) I), full rank whenever
    sigma(t) > 0 even if cov is singular.
    """

    def __init__(self, mean, eigvecs, eigvals, schedule: Schedule):
        self.mean = np.asarray(mean, dtype=float)
        self.eigvecs = np.asarray(eigvecs, dtype=float)
        self.eigvals = np.asarray(eigvals, dtype=float)
        self.schedule = schedule
        self.dim = self.mean.shape[0]
        if self.eigvecs.shape != (self.dim, self.dim):
            raise ValueError("eigenvector matrix must be D x D")
        if np.any(self.eigvals < 0):
            raise ValueError("eigenvalues must be nonnegative")
        err = np.abs(self.eigvecs.T @ self.eigvecs - np.eye(self.dim)).max()
        if err > 1e-10:
            raise ValueError(f"eigenvector matrix not orthonormal (error {err:g})")

    @classmethod
    def isotropic(cls, dim: int, schedule: Schedule, variance: float = 1.0):
        return cls(np.zeros(dim), np.eye(dim), np.full(dim, variance), schedule)

    @classmethod
    def from_covariance(cls, mean, cov, schedule: Schedule):
        vals, vecs = np.linalg.eigh(np.asarray(cov, dtype=float))
        return cls(mean, vecs, np.clip(vals, 0.0, None), schedule)

    def _inv_eigs(self, t):
        psi = float(self.schedule.psi(t))
        sig2 = float(self.schedule.sigma2(t))
        return psi, 1.0 / (psi * psi * self.eigvals + sig2)

    def score(self, x, t):
        return self.score_batch(np.asarray(x, dtype=float)[None, :], t)[0]

    def score_batch(self, x, t):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected points of dim {self.dim}, got {x.shape[1]}")
        psi, inv = self._inv_eigs(t)
        c = (x - psi * self.mean) @ self.eigvecs
        return -(c * inv) @ self.eigvecs.T

    def score_jvp(self, x, t, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"expected direction of dim {self.dim}, got {v.shape}")
        _, inv = self._inv_eigs(t)
        return -self.eigvecs @ (inv * (self.eigvecs.T @ v))

    def trace_jacobian_exact(self, x, t):
        _, inv = self._inv_eigs(t)
        return float(-np.sum(inv))

    def score_and_trace_batch(self, x, t):
        x = np.atleast_2d(x)
        return self.score_batch(x, t), np.full(x.shape[0],
                                               self.trace_jacobian_exact(None, t))

    def score_and_quadform_batch(self, x, t, probes):
        x = np.atleast_2d(x)
        _, inv = self._inv_eigs(t)
        pc = probes @ self.eigvecs
        quad = -np.einsum("nkd,nkd->n", pc, pc * inv) / probes.shape[1]
        return self.score_batch(x, t), quad

    # Closed forms used as test oracles.

    def log_marginal(self, x, t):
        """log N(x; psi mean, psi^2 cov + sigma2 I)."""
        psi = float(self.schedule.psi(t))
        sig2 = float(self.schedule.sigma2(t))
        var = psi * psi * self.eigvals + sig2
        c = (np.asarray(x, dtype=float) - psi * self.mean) @ self.eigvecs
        return float(-0.5 * (np.sum(np.log(2.0 * np.pi * var)) + np.sum(c * c / var)))

    def log_convolved(self, x, delta):
        """log of the data density convolved with N(0, e^(2 delta) I)."""
        var = self.eigvals + math.exp(2.0 * delta)
        c = (np.asarray(x, dtype=float) - self.mean) @ self.eigvecs
        return float(-0.5 * (np.sum(np.log(2.0 * np.pi * var)) + np.sum(c * c / var)))


class EpsilonAdapter:
    """Continuous-time score view of a discrete noise-prediction network.

    The wrapped model must expose epsilon(x, step) and epsilon_jvp(x, step,
    v) for integer steps 0..n_steps. The adapted score is
    -epsilon(x, round(t * n_steps)) / sigma(t).
    """

    def __init__(self, eps_model, n_steps: int, schedule: Schedule):
        self.eps_model = eps_model
        self.n_steps = int(n_steps)
        self.schedule = schedule
        self.dim = eps_model.dim

    def _step(self, t):
        return int(round(float(t) * self.n_steps))

    def _inv_sigma(self, t):
        return 1.0 / float(self.schedule.sigma(max(float(t), T_MIN)))

    def score(self, x, t):
        return -self.eps_model.epsilon(np.asarray(x, dtype=float),
                                       self._step(t)) * self._inv_sigma(t)

    def score_batch(self, x, t):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.stack([self.score(row, t) for row in x])

    def score_jvp(self, x, t, v):
        return -self.eps_model.epsilon_jvp(np.asarray(x, dtype=float),
                                           self._step(t), v) * self._inv_sigma(t)

    def trace_jacobian_exact(self, x, t):
        eye = np.eye(self.dim)
        return float(sum(self.score_jvp(x, t, eye[i])[i] for i in range(self.dim)))

    def score_and_trace_batch(self, x, t):
        x = np.atleast_2d(x)
        scores = self.score_batch(x, t)
        traces = np.array([self.trace_jacobian_exact(row, t) for row in x])
        return scores, traces

    def score_and_quadform_batch(self, x, t, probes):
        x = np.atleast_2d(x)
        scores = self.score_batch(x, t)
        quads = np.empty(x.shape[0])
        for i, row in enumerate(x):
            vals = [probes[i, k] @ self.score_jvp(row, t, probes[i, k])
                    for k in range(probes.shape[1])]
            quads[i] = np.mean(vals)
        return scores, quads


def score(model, x, t):
    """s(x, t) for any score model."""
    return model.score(x, t)


def score_jvp(model, x, t, v):
    """(grad_x s(x,t)) v via forward-mode differentiation."""
    return model.score_jvp(x, t, v)


def trace_jacobian_exact(model, x, t):
    """Exact tr(grad_x s) as the sum of basis-vector JVPs."""
    return model.trace_jacobian_exact(x, t)


def sample_backward(model, sched: Schedule, n: int, steps: int, seed: int,
                    t_end: float = T_MIN):
    """Euler-Maruyama integration of the approximate backward SDE from the
    Gaussian reference at t=1 down to t_end; qualitative sanity checks only.
    """
    if steps < 100:
        raise ValueError("steps must be at least 100")
    rng = np.random.default_rng(np.random.Philox(key=seed))
    dim = model.dim
    y = rng.normal(0.0, sched.reference_std(), size=(n, dim))
    ts = np.linspace(1.0, t_end, steps + 1)
    for k in range(steps):
        t = float(ts[k])
        h = float(ts[k] - ts[k + 1])
        b, g2 = sched.drift_diffusion(t)
        drift = g2 * model.score_batch(y, t) - b * y
        y = y + h * drift + math.sqrt(g2 * h) * rng.standard_normal((n, dim))
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(
                f"backward sampling diverged at step {k} (t={t:.4f})")
    return y
