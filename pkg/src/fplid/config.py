"""Experiment configuration: one YAML file fully determines a run.

Sections: manifold (or toy), schedule, model, train, estimate, plus the
global seed and output directory. The parsed config round-trips losslessly
through to_dict/from_dict, and its canonical JSON hash stamps every output
file for provenance.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .flipd import ExactTrace, HutchinsonTrace
from .manifolds import ManifoldComponent, ManifoldSpec
from .nb import NbConfig
from .schedules import Schedule, default_schedule, schedule_from_config
from .training import TrainConfig

TOY_NAMES = ("lollipop", "swiss_roll", "string_within_doughnut")
ESTIMATOR_NAMES = ("flipd", "flipd_auto", "lidl", "nb", "lpca", "mle")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ModelConfig:
    layer_sizes: tuple = (256, 128, 64, 128, 256)
    time_embed_dim: int = 128

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) % 2 != 1:
            raise ConfigError("model.layer_sizes must have odd length")


@dataclass
class DataConfig:
    n_points: int = 100_000
    toy: str | None = None
    spec: ManifoldSpec | None = None
    seed: int = 0

    def __post_init__(self):
        if (self.toy is None) == (self.spec is None):
            raise ConfigError("exactly one of manifold.components / manifold.toy required")
        if self.toy is not None and self.toy not in TOY_NAMES:
            raise ConfigError(f"unknown toy manifold {self.toy!r}")


@dataclass
class EstimateConfig:
    subsample: int = 4096
    seed: int = 0
    estimators: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "runs/experiment"
    data: DataConfig = None
    schedule: Schedule = field(default_factory=default_schedule)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    estimate: EstimateConfig = field(default_factory=EstimateConfig)

    def to_dict(self) -> dict:
        data = {"n_points": self.data.n_points, "seed": self.data.seed}
        if self.data.toy is not None:
            data["toy"] = self.data.toy
        else:
            spec = self.data.spec
            data.update({
                "ambient_dim": spec.ambient_dim,
                "mode_separation": spec.mode_separation,
                "components": [
                    {"base": c.base, "dim": c.dim,
                     **({"weight": c.weight} if c.weight is not None else {})}
                    for c in spec.components],
            })
        train = {k: getattr(self.train, k) for k in
                 ("lr", "epochs", "batch_size", "warmup_steps", "weighting",
                  "t_min", "weight_decay", "seed")}
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "manifold": data,
            "schedule": self.schedule.to_config(),
            "model": {"layer_sizes": list(self.model.layer_sizes),
                      "time_embed_dim": self.model.time_embed_dim},
            "train": train,
            "estimate": {"subsample": self.estimate.subsample,
                         "seed": self.estimate.seed,
                         "estimators": self.estimate.estimators},
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            return cls._parse(dict(raw))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def _parse(cls, raw: dict) -> "ExperimentConfig":
        seed = int(raw.get("seed", 0))
        man = dict(raw.get("manifold", {}))
        data_seed = int(man.get("seed", seed))
        if "toy" in man:
            data = DataConfig(n_points=int(man.get("n_points", 100_000)),
                              toy=man["toy"], seed=data_seed)
        else:
            comps = tuple(
                ManifoldComponent(c["base"], int(c["dim"]), c.get("weight"))
                for c in man["components"])
            spec = ManifoldSpec(components=comps,
                                ambient_dim=int(man["ambient_dim"]),
                                mode_separation=float(man.get("mode_separation", 20.0)),
                                seed=data_seed)
            data = DataConfig(n_points=int(man.get("n_points", 100_000)),
                              spec=spec, seed=data_seed)
        sched = (schedule_from_config(raw["schedule"]) if "schedule" in raw
                 else default_schedule())
        mc = raw.get("model", {})
        model = ModelConfig(tuple(mc.get("layer_sizes", (256, 128, 64, 128, 256))),
                            int(mc.get("time_embed_dim", 128)))
        tc = dict(raw.get("train", {}))
        tc.setdefault("seed", seed)
        train = TrainConfig(**tc)
        ec = dict(raw.get("estimate", {}))
        estimators = ec.get("estimators", {})
        for name in estimators:
            if name not in ESTIMATOR_NAMES:
                raise ConfigError(f"unknown estimator {name!r}")
        est = EstimateConfig(subsample=int(ec.get("subsample", 4096)),
                             seed=int(ec.get("seed", seed)),
                             estimators=estimators)
        cfg = cls(seed=seed, output_dir=str(raw.get("output_dir", "runs/experiment")),
                  data=data, schedule=sched, model=model, train=train, estimate=est)
        cfg.validate_estimators()
        return cfg

    def validate_estimators(self):
        """Cross-check estimator parameter blocks against their modules."""
        for name, params in self.estimate.estimators.items():
            params = params or {}
            try:
                if name in ("flipd", "flipd_auto", "lidl"):
                    trace_mode(params.get("trace", "exact"),
                               params.get("hutchinson_k", 50), self.seed)
                if name == "nb":
                    NbConfig(t0=float(params.get("t0", 0.01)),
                             k_columns=params.get("k_columns"),
                             threshold_mode=params.get("threshold", "max_gap"),
                             seed=self.seed)
                if name == "flipd":
                    t0 = float(params.get("t0", 0.05))
                    if not 0.0 < t0 < 1.0:
                        raise ValueError(f"flipd t0 = {t0} outside (0, 1)")
            except ValueError as exc:
                raise ConfigError(f"estimator {name!r}: {exc}") from exc


def trace_mode(kind: str, k: int, seed: int):
    if kind == "exact":
        return ExactTrace()
    if kind == "hutchinson":
        return HutchinsonTrace(k=int(k), seed=seed)
    raise ValueError(f"unknown trace mode {kind!r}")


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return ExperimentConfig.from_dict(raw)


def save_config(path, cfg: ExperimentConfig):
    with open(path, "w") as fh:
        fh.write(f"# config_hash={config_hash(cfg)}\n")
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)


def config_hash(cfg: ExperimentConfig) -> str:
    canonical = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
