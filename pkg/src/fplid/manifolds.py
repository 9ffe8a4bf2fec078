"""Synthetic manifold mixtures with ground-truth LID labels.

Each component draws from a simple d-dimensional base distribution
(uniform, Gaussian or Laplace), is zero-padded to the ambient dimension,
rotated by a random orthogonal matrix, standardized per coordinate, and
translated to its mode. Modes are placed so that every pair is at least
`mode_separation` apart, keeping components from mixing and their labels
unambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BASES = ("uniform", "gaussian", "laplace")


@dataclass(frozen=True)
class ManifoldComponent:
    base: str
    dim: int
    weight: float | None = None  # None: equal weights

    def __post_init__(self):
        if self.base not in BASES:
            raise ValueError(f"unknown base distribution {self.base!r}")
        if self.dim < 1:
            raise ValueError("component dimension must be at least 1")


@dataclass(frozen=True)
class ManifoldSpec:
    components: tuple
    ambient_dim: int
    mode_separation: float = 20.0
    seed: int = 0

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValueError("need at least one component")
        for c in comps:
            if c.dim > self.ambient_dim:
                raise ValueError(
                    f"component dim {c.dim} exceeds ambient dim {self.ambient_dim}")
        given = [c.weight for c in comps if c.weight is not None]
        if given and (len(given) != len(comps) or abs(sum(given) - 1.0) > 1e-9):
            raise ValueError("weights must be omitted or sum to 1")

    def weights(self):
        if self.components[0].weight is None:
            return np.full(len(self.components), 1.0 / len(self.components))
        return np.array([c.weight for c in self.components])


@dataclass
class LabeledDataset:
    points: np.ndarray
    lid_labels: np.ndarray
    component_ids: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.lid_labels = np.asarray(self.lid_labels, dtype=int)
        self.component_ids = np.asarray(self.component_ids, dtype=int)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]


def random_rotation(dim: int, rng) -> np.ndarray:
    """Orthonormal matrix from the QR decomposition of a Gaussian matrix,
    sign-fixed so the factorization is unique."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def _place_modes(count: int, dim: int, separation: float, rng,
                 max_attempts: int = 10_000):
    if count == 1:
        return rng.normal(0.0, separation, size=(1, dim))
    for _ in range(max_attempts):
        modes = rng.normal(0.0, separation, size=(count, dim))
        diffs = modes[:, None, :] - modes[None, :, :]
        dists = np.sqrt((diffs * diffs).sum(-1))
        np.fill_diagonal(dists, np.inf)
        if dists.min() >= separation:
            return modes
    raise RuntimeError(
        f"could not place {count} modes at separation {separation} "
        f"in {max_attempts} attempts")


def _base_sample(base: str, n: int, d: int, rng):
    if base == "uniform":
        return rng.random((n, d))
    if base == "gaussian":
        return rng.standard_normal((n, d))
    return rng.laplace(size=(n, d))


def generate(spec: ManifoldSpec, n: int) -> LabeledDataset:
    """Sample n labelled points from the manifold mixture; deterministic
    given spec.seed (component sizes are multinomial in the weights)."""
    if n < len(spec.components):
        raise ValueError("need at least one point per component")
    rng = np.random.default_rng(np.random.Philox(key=spec.seed))
    dim = spec.ambient_dim
    modes = _place_modes(len(spec.components), dim, spec.mode_separation, rng)
    sizes = rng.multinomial(n, spec.weights())
    points, labels, comp_ids = [], [], []
    for ci, (comp, size, mode) in enumerate(zip(spec.components, sizes, modes)):
        base = _base_sample(comp.base, int(size), comp.dim, rng)
        padded = np.zeros((int(size), dim))
        padded[:, :comp.dim] = base
        rotated = padded @ random_rotation(dim, rng).T
        std = rotated.std(axis=0)
        std[std < 1e-12] = 1.0
        standardized = (rotated - rotated.mean(axis=0)) / std
        points.append(standardized + mode)
        labels.append(np.full(int(size), comp.dim))
        comp_ids.append(np.full(int(size), ci))
    return LabeledDataset(np.concatenate(points), np.concatenate(labels),
                          np.concatenate(comp_ids))


# -- fixed toy manifolds --

def lollipop(n: int, seed: int = 0) -> LabeledDataset:
    """2-d disk (candy) + 1-d segment (stick) + 0-d point in the plane,
    sampled with equal probability."""
    rng = np.random.default_rng(np.random.Philox(key=seed))
    sizes = rng.multinomial(n, [1 / 3, 1 / 3, 1 / 3])
    r = np.sqrt(rng.random(sizes[0]))
    theta = 2.0 * np.pi * rng.random(sizes[0])
    candy = np.column_stack([r * np.cos(theta), 2.5 + r * np.sin(theta)])
    stick = np.column_stack([np.zeros(sizes[1]), 1.4 * rng.random(sizes[1])])
    dot = np.tile([0.0, -0.5], (sizes[2], 1))
    points = np.concatenate([candy, stick, dot])
    labels = np.concatenate([np.full(sizes[0], 2), np.full(sizes[1], 1),
                             np.full(sizes[2], 0)])
    comp = np.concatenate([np.full(sizes[0], 0), np.full(sizes[1], 1),
                           np.full(sizes[2], 2)])
    return LabeledDataset(points, labels, comp)


def swiss_roll(n: int, seed: int = 0) -> LabeledDataset:
    """Classic 2-d swiss roll embedded in R^3."""
    rng = np.random.default_rng(np.random.Philox(key=seed))
    t = 1.5 * np.pi * (1.0 + 2.0 * rng.random(n))
    height = 21.0 * rng.random(n)
    points = np.column_stack([t * np.cos(t), height, t * np.sin(t)])
    return LabeledDataset(points, np.full(n, 2), np.zeros(n, dtype=int))


def string_within_doughnut(n: int, seed: int = 0,
                           major_radius: float = 10.0,
                           minor_radius: float = 1.0) -> LabeledDataset:
    """Uniform mixture of a 2-torus and its 1-d major circle in R^3."""
    rng = np.random.default_rng(np.random.Philox(key=seed))
    sizes = rng.multinomial(n, [0.5, 0.5])
    u = 2.0 * np.pi * rng.random(sizes[0])
    v = _torus_poloidal(sizes[0], major_radius, minor_radius, rng)
    ring = major_radius + minor_radius * np.cos(v)
    torus = np.column_stack([ring * np.cos(u), ring * np.sin(u),
                             minor_radius * np.sin(v)])
    u2 = 2.0 * np.pi * rng.random(sizes[1])
    circle = np.column_stack([major_radius * np.cos(u2),
                              major_radius * np.sin(u2), np.zeros(sizes[1])])
    points = np.concatenate([torus, circle])
    labels = np.concatenate([np.full(sizes[0], 2), np.full(sizes[1], 1)])
    comp = np.concatenate([np.full(sizes[0], 0), np.full(sizes[1], 1)])
    return LabeledDataset(points, labels, comp)


def _torus_poloidal(n: int, major: float, minor: float, rng):
    """Poloidal angles weighted by surface area via rejection sampling."""
    out = np.empty(n)
    filled = 0
    while filled < n:
        cand = 2.0 * np.pi * rng.random(2 * (n - filled))
        accept = rng.random(cand.shape[0]) < (major + minor * np.cos(cand)) / (major + minor)
        kept = cand[accept][:n - filled]
        out[filled:filled + kept.shape[0]] = kept
        filled += kept.shape[0]
    return out
