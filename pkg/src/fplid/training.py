"""Denoising score matching training for MlpScore.

Per sample: draw t ~ U(t_min, 1) and eps ~ N(0, I), noise the point as
x_t = psi(t) x + sigma(t) eps, and regress the score network against
-eps/sigma(t):

    loss = mean_i  w(t_i) || s(x_t_i, t_i) + eps_i / sigma(t_i) ||^2

with w(t) = g^2(t)/2 (likelihood weighting) or sigma^2(t) (uniform).
Optimized with AdamW under linear warmup followed by cosine decay. All
randomness is counter-based (Philox keyed by seed and epoch) so runs are
reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .schedules import Schedule

DIVERGENCE_LIMIT = 1e6


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss {loss:.3g})")
        self.epoch = epoch
        self.loss = loss


def default_epochs(dim: int) -> int:
    """Epoch budget by ambient dimension."""
    if dim <= 10:
        return 200
    if dim <= 100:
        return 400
    if dim <= 800:
        return 800
    return 1000


@dataclass
class TrainConfig:
    lr: float = 1e-4
    epochs: int | None = None  # None: pick by ambient dimension
    batch_size: int = 256
    warmup_steps: int = 500
    weighting: str = "likelihood"  # or "uniform"
    t_min: float = 1e-4
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0.0 < self.t_min < 1.0:
            raise ValueError("t_min must lie in (0, 1)")
        if self.weighting not in ("likelihood", "uniform"):
            raise ValueError(f"unknown weighting {self.weighting!r}")


def loss_weights(sched: Schedule, t, weighting: str):
    if weighting == "likelihood":
        _, g2 = sched.drift_diffusion(t)
        return 0.5 * g2
    return sched.sigma2(t)


def dsm_loss_given(model, sched: Schedule, batch, t, eps, weighting="likelihood"):
    """DSM loss for fixed (t, eps) draws; the deterministic core of dsm_loss."""
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    t = np.asarray(t, dtype=float)
    sigma = sched.sigma(t)
    x_t = sched.psi(t)[:, None] * batch + sigma[:, None] * eps
    resid = model.score_batch(x_t, t) + eps / sigma[:, None]
    w = loss_weights(sched, t, weighting)
    loss = float(np.mean(w * np.sum(resid * resid, axis=1)))
    if not math.isfinite(loss):
        bad = t[~np.isfinite(np.sum(resid * resid, axis=1))]
        raise FloatingPointError(f"non-finite DSM loss (offending t: {bad[:5]})")
    return loss


def draw_noise(rng, n, dim, t_min):
    t = rng.uniform(t_min, 1.0, size=n)
    eps = rng.standard_normal((n, dim))
    return t, eps


def dsm_loss(model, sched: Schedule, batch, rng, weighting="likelihood",
             t_min=1e-4):
    """Monte Carlo DSM loss on a batch, drawing (t, eps) from rng."""
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    if batch.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    t, eps = draw_noise(rng, batch.shape[0], batch.shape[1], t_min)
    return dsm_loss_given(model, sched, batch, t, eps, weighting)


def dsm_loss_and_grads(model, sched: Schedule, batch, t, eps,
                       weighting="likelihood"):
    """Loss plus analytic gradients w.r.t. all weights and biases."""
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    n = batch.shape[0]
    sigma = sched.sigma(t)
    x_t = sched.psi(t)[:, None] * batch + sigma[:, None] * eps
    a0 = model.embed(x_t, t)
    acts, derivs = backend.mlp_forward_cache(model.weights, model.biases,
                                             model.skips, a0)
    resid = acts[-1] + eps / sigma[:, None]
    w = loss_weights(sched, t, weighting)
    loss = float(np.mean(w * np.sum(resid * resid, axis=1)))
    if not math.isfinite(loss):
        bad = t[~np.isfinite(np.sum(resid * resid, axis=1))]
        raise FloatingPointError(f"non-finite DSM loss (offending t: {bad[:5]})")
    d_out = (2.0 / n) * w[:, None] * resid
    grads_w, grads_b = backend.mlp_backward(model.weights, model.skips,
                                            acts, derivs, d_out)
    return loss, grads_w + grads_b


class AdamW:
    """Adaptive moments with decoupled weight decay."""

    def __init__(self, params, lr, weight_decay=0.01, betas=(0.9, 0.999),
                 eps=1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.step_count = 0

    def step(self, grads, lr_scale=1.0):
        self.step_count += 1
        lr = self.lr * lr_scale
        c1 = 1.0 - self.b1 ** self.step_count
        c2 = 1.0 - self.b2 ** self.step_count
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= lr * ((m / c1) / (np.sqrt(v / c2) + self.eps)
                       + self.weight_decay * p)


def lr_schedule(step: int, total_steps: int, warmup_steps: int) -> float:
    """Linear warmup then cosine decay, as a multiplier on the base lr."""
    if warmup_steps > 0 and step < warmup_steps:
        return (step + 1) / warmup_steps
    span = max(1, total_steps - warmup_steps)
    frac = min(1.0, (step - warmup_steps) / span)
    return 0.5 * (1.0 + math.cos(math.pi * frac))


@dataclass
class TrainResult:
    model: object
    loss_trace: list = field(default_factory=list)


def train(model, sched: Schedule, dataset, cfg: TrainConfig) -> TrainResult:
    """Train in place; returns the model with its per-epoch mean loss trace.

    Deterministic given cfg.seed: epoch e shuffles and draws noise from a
    Philox stream keyed by (seed, e).
    """
    dataset = np.atleast_2d(np.asarray(dataset, dtype=float))
    if dataset.shape[1] != model.dim:
        raise ValueError(
            f"dataset dim {dataset.shape[1]} != model dim {model.dim}")
    n = dataset.shape[0]
    epochs = cfg.epochs if cfg.epochs is not None else default_epochs(model.dim)
    steps_per_epoch = max(1, math.ceil(n / cfg.batch_size))
    total_steps = epochs * steps_per_epoch
    opt = AdamW(model.parameters(), cfg.lr, cfg.weight_decay)
    trace = []
    step = 0
    for epoch in range(epochs):
        rng = np.random.default_rng(np.random.Philox(key=(cfg.seed, epoch)))
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, cfg.batch_size):
            batch = dataset[order[lo:lo + cfg.batch_size]]
            t, eps = draw_noise(rng, batch.shape[0], batch.shape[1], cfg.t_min)
            loss, grads = dsm_loss_and_grads(model, sched, batch, t, eps,
                                             cfg.weighting)
            if loss > DIVERGENCE_LIMIT:
                raise TrainingDiverged(epoch, loss)
            opt.step(grads, lr_schedule(step, total_steps, cfg.warmup_steps))
            epoch_loss += loss * batch.shape[0]
            step += 1
        trace.append(epoch_loss / n)
    return TrainResult(model=model, loss_trace=trace)
