"""Experiment orchestration CLI.

Verbs: generate, train, estimate, report. One config file determines a
run; outputs land in the config's output directory (overridable with
--out) and every file embeds the config hash. Existing outputs are never
overwritten without --force.

Exit codes: 0 success, 2 validation error, 3 numeric failure.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np
import yaml

from . import batch, dataio, manifolds
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (
    ConfigError,
    ExperimentConfig,
    config_hash,
    load_config,
    save_config,
    trace_mode,
)
from .flipd import curve_matrix
from .lidl import DeltaGrid, default_delta_grid
from .metrics import concordance, mae
from .nb import NbConfig
from .scorenet import MlpScore
from .training import TrainingDiverged, train

EXIT_VALIDATION = 2
EXIT_NUMERIC = 3

MODEL_BASED = ("flipd", "flipd_auto", "lidl", "nb")


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load(config_path, out_override, seed_override) -> ExperimentConfig:
    try:
        cfg = load_config(config_path)
    except (ConfigError, OSError, yaml.YAMLError) as exc:
        _fail(EXIT_VALIDATION, f"{config_path}: {exc}")
    if out_override:
        cfg.output_dir = str(out_override)
    if seed_override is not None:
        cfg.seed = int(seed_override)
        cfg.train.seed = int(seed_override)
    return cfg


def _out_path(cfg: ExperimentConfig, name: str, force: bool) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    if path.exists() and not force:
        _fail(EXIT_VALIDATION,
              f"{path} already exists; pass --force to overwrite")
    return path


def _dataset(cfg: ExperimentConfig) -> manifolds.LabeledDataset:
    data = cfg.data
    if data.toy is not None:
        maker = getattr(manifolds, data.toy)
        return maker(data.n_points, seed=data.seed)
    return manifolds.generate(data.spec, data.n_points)


_config_opt = click.option("--config", "config_path", required=True,
                           type=click.Path(exists=True, dir_okay=False))
_out_opt = click.option("--out", "out_dir", default=None,
                        type=click.Path(file_okay=False))
_seed_opt = click.option("--seed", default=None, type=int,
                         help="Override the global seed.")
_force_opt = click.option("--force", is_flag=True,
                          help="Overwrite existing outputs.")
_workers_opt = click.option("--workers", default=1, type=int,
                            help="Worker processes for batch estimation.")


@click.group()
def main():
    """Train score models and estimate local intrinsic dimension."""


@main.command()
@_config_opt
@_out_opt
@_seed_opt
@_force_opt
def generate(config_path, out_dir, seed, force):
    """Sample the configured dataset to dataset.csv + a frozen config copy."""
    cfg = _load(config_path, out_dir, seed)
    chash = config_hash(cfg)
    ds_path = _out_path(cfg, "dataset.csv", force)
    ds = _dataset(cfg)
    dataio.write_dataset_csv(ds_path, ds, {"config_hash": chash})
    save_config(_out_path(cfg, "config.yaml", force), cfg)
    click.echo(f"wrote {ds_path} ({ds.n} points, dim {ds.dim})")


@main.command(name="train")
@_config_opt
@_out_opt
@_seed_opt
@_force_opt
def train_cmd(config_path, out_dir, seed, force):
    """Train the score network on dataset.csv; writes checkpoint + loss CSV."""
    cfg = _load(config_path, out_dir, seed)
    chash = config_hash(cfg)
    ds_path = Path(cfg.output_dir) / "dataset.csv"
    if not ds_path.exists():
        _fail(EXIT_VALIDATION, f"{ds_path} not found; run generate first")
    ckpt_path = _out_path(cfg, "checkpoint.flpd", force)
    loss_path = _out_path(cfg, "loss.csv", force)
    ds, _ = dataio.read_dataset_csv(ds_path)
    model = MlpScore(ds.dim, layer_sizes=cfg.model.layer_sizes,
                     time_embed_dim=cfg.model.time_embed_dim, seed=cfg.seed)
    try:
        result = train(model, cfg.schedule, ds.points, cfg.train)
    except TrainingDiverged as exc:
        _fail(EXIT_NUMERIC, str(exc))
    except FloatingPointError as exc:
        _fail(EXIT_NUMERIC, str(exc))
    save_checkpoint(ckpt_path, model, cfg.schedule, bytes.fromhex(chash))
    dataio.write_loss_csv(loss_path, result.loss_trace, {"config_hash": chash})
    final = result.loss_trace[-1] if result.loss_trace else float("nan")
    click.echo(f"wrote {ckpt_path} (final mean loss {final:.6g})")


def _subsample(cfg: ExperimentConfig, n: int):
    count = min(cfg.estimate.subsample, n)
    rng = np.random.default_rng(np.random.Philox(key=(cfg.estimate.seed, 0)))
    return np.sort(rng.choice(n, size=count, replace=False))


def _run_estimator(name, params, cfg, ds, queries, indices, workers):
    params = params or {}
    if name in MODEL_BASED:
        ckpt = Path(cfg.output_dir) / "checkpoint.flpd"
        if not ckpt.exists():
            _fail(EXIT_VALIDATION, f"{ckpt} not found; run train first")
        model, sched, _ = load_checkpoint(ckpt)
        if model.dim != ds.dim:
            _fail(EXIT_VALIDATION,
                  f"checkpoint dim {model.dim} != dataset dim {ds.dim}")
        mode = trace_mode(params.get("trace", "exact"),
                          params.get("hutchinson_k", 50), cfg.estimate.seed)
        if name == "flipd":
            return batch.estimate_flipd(sched, model, queries, indices,
                                        t0=float(params.get("t0", 0.05)),
                                        mode=mode, workers=workers)
        if name == "flipd_auto":
            return batch.estimate_flipd_auto(sched, model, queries, indices,
                                             mode=mode, workers=workers)
        if name == "lidl":
            grid = (DeltaGrid.from_stds(params["noise_stds"])
                    if "noise_stds" in params else default_delta_grid())
            return batch.estimate_lidl(sched, model, queries, indices,
                                       grid=grid, mode=mode,
                                       rk_steps=int(params.get("rk_steps", 16)),
                                       workers=workers)
        nb_cfg = NbConfig(t0=float(params.get("t0", 0.01)),
                          k_columns=params.get("k_columns"),
                          threshold_mode=params.get("threshold", "max_gap"),
                          seed=cfg.estimate.seed)
        return batch.estimate_nb(sched, model, queries, indices, cfg=nb_cfg,
                                 workers=workers)
    if name == "lpca":
        return batch.estimate_lpca(ds.points, queries, indices,
                                   alpha_fo=float(params.get("alpha_fo", 0.05)),
                                   k=params.get("k"), workers=workers)
    if name == "mle":
        return batch.estimate_mle(ds.points, queries, indices,
                                  k=params.get("k"), workers=workers)
    _fail(EXIT_VALIDATION, f"unknown estimator {name!r}")


@main.command()
@_config_opt
@click.option("--estimator", "estimator", required=True,
              help="One of flipd, flipd_auto, lidl, nb, lpca, mle.")
@_workers_opt
@_out_opt
@_seed_opt
@_force_opt
def estimate(config_path, estimator, workers, out_dir, seed, force):
    """Run one estimator over the evaluation subsample; writes a results CSV."""
    cfg = _load(config_path, out_dir, seed)
    if estimator not in MODEL_BASED + ("lpca", "mle"):
        _fail(EXIT_VALIDATION, f"unknown estimator {estimator!r}")
    ds_path = Path(cfg.output_dir) / "dataset.csv"
    if not ds_path.exists():
        _fail(EXIT_VALIDATION, f"{ds_path} not found; run generate first")
    out_path = _out_path(cfg, f"estimates_{estimator}.csv", force)
    ds, _ = dataio.read_dataset_csv(ds_path)
    indices = _subsample(cfg, ds.n)
    queries = ds.points[indices]
    params = cfg.estimate.estimators.get(estimator, {})
    try:
        records = _run_estimator(estimator, params, cfg, ds, queries, indices,
                                 workers)
    except FloatingPointError as exc:
        _fail(EXIT_NUMERIC, str(exc))
    meta = {"config_hash": config_hash(cfg),
            "dataset_hash": dataio.file_sha256(ds_path)}
    dataio.write_records_csv(out_path, records, meta)
    click.echo(f"wrote {out_path} ({len(records)} points)")


@main.command()
@click.argument("results", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@_config_opt
@click.option("--curve-point", "curve_points", multiple=True, type=int,
              help="Also emit the 50-point FLIPD curve for this dataset index.")
@_out_opt
@_seed_opt
@_force_opt
def report(results, config_path, curve_points, out_dir, seed, force):
    """Aggregate result CSVs into MAE / concordance metric tables."""
    cfg = _load(config_path, out_dir, seed)
    chash = config_hash(cfg)
    ds_path = Path(cfg.output_dir) / "dataset.csv"
    if not ds_path.exists():
        _fail(EXIT_VALIDATION, f"{ds_path} not found; run generate first")
    ds, _ = dataio.read_dataset_csv(ds_path)
    ds_hash = dataio.file_sha256(ds_path)
    rows = []
    for path in results:
        records, meta = dataio.read_records_csv(path)
        if not records:
            _fail(EXIT_VALIDATION, f"{path}: no records")
        if meta.get("dataset_hash") not in (None, ds_hash):
            _fail(EXIT_VALIDATION,
                  f"{path}: computed against a different dataset")
        estimates = np.array([r.lid for r in records])
        labels = ds.lid_labels[np.array([r.index for r in records])]
        rows.append((records[0].estimator, mae(estimates, labels),
                     concordance(estimates, labels)))
    metrics_path = _out_path(cfg, "metrics.csv", force)
    text_path = _out_path(cfg, "metrics.txt", force)
    with open(metrics_path, "w") as fh:
        fh.write(f"# config_hash={chash}\n# dataset_hash={ds_hash}\n")
        fh.write("dataset,estimator,mae,concordance\n")
        for name, m, c in rows:
            fh.write(f"{ds_path.name},{name},{repr(m)},{repr(c)}\n")
    with open(text_path, "w") as fh:
        fh.write(f"# config_hash={chash}\n")
        fh.write(f"dataset: {ds_path.name} ({ds.n} points, dim {ds.dim})\n\n")
        for group, title in ((MODEL_BASED, "model-based"),
                             (("lpca", "mle"), "model-free")):
            members = [r for r in rows if r[0] in group]
            if not members:
                continue
            fh.write(f"{title}\n")
            fh.write(f"{'estimator':<12} {'MAE':>10} {'concordance':>12}\n")
            for name, m, c in members:
                fh.write(f"{name:<12} {m:>10.4f} {c:>12.4f}\n")
            fh.write("\n")
    for point in curve_points:
        _emit_curve(cfg, ds, int(point), chash, force)
    click.echo(f"wrote {metrics_path} and {text_path}")


def _emit_curve(cfg, ds, point, chash, force):
    ckpt = Path(cfg.output_dir) / "checkpoint.flpd"
    if not ckpt.exists():
        _fail(EXIT_VALIDATION, f"{ckpt} not found; curves need a trained model")
    if not 0 <= point < ds.n:
        _fail(EXIT_VALIDATION, f"curve point {point} outside dataset")
    model, sched, _ = load_checkpoint(ckpt)
    grid, values = curve_matrix(sched, model, ds.points[point][None, :])
    path = _out_path(cfg, f"curve_point{point}.csv", force)
    dataio.write_curve_csv(path, grid, values[0], {"config_hash": chash,
                                                   "point_index": point})


if __name__ == "__main__":
    main()
