"""Diffusion noise schedules.

Every schedule describes a forward SDE dX = f(X,t)dt + g(t)dW on t in [0,1]
with linear drift f(x,t) = b(t)x, whose transition kernel is the Gaussian

    p(x_t | x_0) = N(x_t; psi(t) x_0, sigma2(t) I).

The noise-to-signal ratio lam(t) = sigma(t)/psi(t) is strictly increasing,
which lets us convert between diffusion time t and a log noise scale delta
via  lam(t) = e^delta.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod

import numpy as np

# Floor applied to t wherever sigma(t) ends up in a denominator; scores blow
# up as t -> 0 so callers clamp to this instead of evaluating at 0.
T_MIN = 1e-5


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return t


class Schedule(ABC):
    """Base class: subclasses provide psi, sigma2, drift_diffusion, lam."""

    @abstractmethod
    def psi(self, t):
        """Mean scaling of the transition kernel."""

    @abstractmethod
    def sigma2(self, t):
        """Variance of the transition kernel."""

    @abstractmethod
    def drift_diffusion(self, t):
        """Coefficients (b(t), g2(t)) with f(x,t) = b(t) x."""

    def sigma(self, t):
        return np.sqrt(self.sigma2(t))

    def lam(self, t):
        return self.sigma(t) / self.psi(t)

    def log_lam(self, t):
        return np.log(self.lam(t))

    def t_of_delta(self, delta):
        """Invert lam: the unique t in (0, 1] with lam(t) = e^delta.

        Subclasses override with closed forms; this fallback bisects
        log lam(t) = delta to 1e-12.
        """
        delta = float(delta)
        self._check_delta_range(delta)
        lo, hi = 0.0, 1.0
        target = delta
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if hi - lo < 1e-12:
                break
            tm = max(mid, 1e-300)
            if self.log_lam(tm) < target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def _check_delta_range(self, delta):
        hi = float(self.log_lam(1.0))
        if delta > hi + 1e-12:
            raise ValueError(
                f"e^delta = {math.exp(delta):g} exceeds lam(1) = {math.exp(hi):g}; "
                f"admissible delta interval is (-inf, {hi:.6g}]"
            )

    def reference_std(self) -> float:
        """Std of the Gaussian reference approximating the t=1 marginal:
        N(0, sigma2(1) I) for VE, N(0, I) for VP/SubVP."""
        return 1.0

    def to_config(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.to_config()})"

    def __eq__(self, other):
        return type(self) is type(other) and self.to_config() == other.to_config()


class _BetaSchedule(Schedule):
    """Shared machinery for families driven by a linear beta(t)."""

    def __init__(self, beta0: float, beta1: float):
        if beta0 <= 0 or beta1 <= 0:
            raise ValueError("beta0 and beta1 must be positive")
        self.beta0 = float(beta0)
        self.beta1 = float(beta1)

    def beta(self, t):
        t = _check_t(t)
        return self.beta0 + (self.beta1 - self.beta0) * t

    def beta_integral(self, t):
        """B(t) = integral of beta from 0 to t (closed form, beta linear)."""
        t = _check_t(t)
        return self.beta0 * t + 0.5 * (self.beta1 - self.beta0) * t * t

    def _t_of_beta_integral(self, B):
        """Solve B(t) = B for t; quadratic in t for linear beta."""
        a = 0.5 * (self.beta1 - self.beta0)
        if abs(a) < 1e-300:
            return B / self.beta0
        disc = self.beta0 * self.beta0 + 4.0 * a * B
        return (-self.beta0 + math.sqrt(disc)) / (2.0 * a)

    def psi(self, t):
        return np.exp(-0.5 * self.beta_integral(t))


class VPSchedule(_BetaSchedule):
    """Variance preserving: f = -beta(t)x/2, g^2 = beta(t)."""

    def sigma2(self, t):
        return -np.expm1(-self.beta_integral(t))

    def lam(self, t):
        # sqrt(e^B - 1), expm1 keeps precision near t = 0
        return np.sqrt(np.expm1(self.beta_integral(t)))

    def log_lam(self, t):
        return 0.5 * np.log(np.expm1(self.beta_integral(t)))

    def drift_diffusion(self, t):
        b = self.beta(t)
        return -0.5 * b, b

    def t_of_delta(self, delta):
        delta = float(delta)
        self._check_delta_range(delta)
        # lam^2 = e^B - 1  =>  B = log1p(e^(2 delta))
        B = math.log1p(math.exp(2.0 * delta))
        return self._t_of_beta_integral(B)

    def to_config(self):
        return {"kind": "vp", "beta0": self.beta0, "beta1": self.beta1}


class SubVPSchedule(_BetaSchedule):
    """Sub-variance preserving: f = -beta(t)x/2, g^2 = beta(t)(1 - e^(-2B))."""

    def sigma2(self, t):
        return np.expm1(-self.beta_integral(t)) ** 2

    def lam(self, t):
        # e^(B/2) - e^(-B/2) = 2 sinh(B/2)
        return 2.0 * np.sinh(0.5 * self.beta_integral(t))

    def drift_diffusion(self, t):
        b = self.beta(t)
        B = self.beta_integral(t)
        return -0.5 * b, b * (-np.expm1(-2.0 * B))

    def t_of_delta(self, delta):
        delta = float(delta)
        self._check_delta_range(delta)
        B = 2.0 * math.asinh(0.5 * math.exp(delta))
        return self._t_of_beta_integral(B)

    def to_config(self):
        return {"kind": "subvp", "beta0": self.beta0, "beta1": self.beta1}


class VESchedule(Schedule):
    """Variance exploding: zero drift, geometric sigma(t).

    sigma(0) = sigma_min is treated as the smallest representable scale,
    so lam ranges over [sigma_min, sigma_max] rather than starting at 0.
    """

    def __init__(self, sigma_min: float = 0.01, sigma_max: float = 50.0):
        if sigma_min <= 0 or sigma_max <= sigma_min:
            raise ValueError("need 0 < sigma_min < sigma_max")
        self.sigma_min = float(sigma_min)
        self.sigma_max = float(sigma_max)
        self._log_ratio = math.log(sigma_max / sigma_min)

    def psi(self, t):
        t = _check_t(t)
        return np.ones_like(t) if t.ndim else 1.0

    def sigma(self, t):
        t = _check_t(t)
        return self.sigma_min * (self.sigma_max / self.sigma_min) ** t

    def sigma2(self, t):
        return self.sigma(t) ** 2

    def lam(self, t):
        return self.sigma(t)

    def drift_diffusion(self, t):
        # d(sigma^2)/dt = 2 log(smax/smin) sigma^2(t)
        g2 = 2.0 * self._log_ratio * self.sigma2(t)
        b = np.zeros_like(g2) if np.ndim(g2) else 0.0
        return b, g2

    def t_of_delta(self, delta):
        delta = float(delta)
        lo = math.log(self.sigma_min)
        hi = math.log(self.sigma_max)
        if delta < lo - 1e-12 or delta > hi + 1e-12:
            raise ValueError(
                f"e^delta = {math.exp(delta):g} outside [sigma_min, sigma_max]; "
                f"admissible delta interval is [{lo:.6g}, {hi:.6g}]"
            )
        t = (delta - lo) / self._log_ratio
        return min(max(t, 0.0), 1.0)

    def reference_std(self):
        return float(self.sigma(1.0))

    def to_config(self):
        return {"kind": "ve", "sigma_min": self.sigma_min, "sigma_max": self.sigma_max}


def default_schedule() -> Schedule:
    """VP with beta(t) = 0.1 + 20t, the setting used for all benchmarks."""
    return VPSchedule(0.1, 20.1)


def schedule_from_config(cfg: dict) -> Schedule:
    kind = cfg.get("kind", "").lower()
    if kind == "vp":
        return VPSchedule(cfg["beta0"], cfg["beta1"])
    if kind == "subvp":
        return SubVPSchedule(cfg["beta0"], cfg["beta1"])
    if kind == "ve":
        return VESchedule(cfg["sigma_min"], cfg["sigma_max"])
    raise ValueError(f"unknown schedule kind {cfg.get('kind')!r}")
