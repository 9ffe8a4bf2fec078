"""CSV persistence for datasets, loss traces, and estimate records.

Every file starts with `# key=value` provenance comments (at minimum the
experiment config hash). Floats are written with repr for lossless
round-trips and byte-stable output.
"""

from __future__ import annotations

import csv
import hashlib

import numpy as np

from .batch import PointRecord
from .manifolds import LabeledDataset


def _write_meta(fh, meta: dict):
    for key in sorted(meta):
        fh.write(f"# {key}={meta[key]}\n")


def _read_meta(fh):
    meta = {}
    pos = fh.tell()
    while True:
        line = fh.readline()
        if not line.startswith("#"):
            fh.seek(pos)
            return meta
        key, _, value = line[1:].strip().partition("=")
        meta[key] = value
        pos = fh.tell()


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_dataset_csv(path, ds: LabeledDataset, meta: dict):
    with open(path, "w", newline="") as fh:
        _write_meta(fh, meta)
        writer = csv.writer(fh)
        writer.writerow([f"x_{i}" for i in range(ds.dim)]
                        + ["lid_label", "component_id"])
        for row, label, comp in zip(ds.points, ds.lid_labels, ds.component_ids):
            writer.writerow([repr(v) for v in row] + [int(label), int(comp)])


def read_dataset_csv(path):
    """Returns (LabeledDataset, meta dict)."""
    with open(path, newline="") as fh:
        meta = _read_meta(fh)
        reader = csv.reader(fh)
        header = next(reader)
        dim = len(header) - 2
        points, labels, comps = [], [], []
        for row in reader:
            points.append([float(v) for v in row[:dim]])
            labels.append(int(row[dim]))
            comps.append(int(row[dim + 1]))
    return LabeledDataset(np.asarray(points), np.asarray(labels),
                          np.asarray(comps)), meta


def write_loss_csv(path, trace, meta: dict):
    with open(path, "w", newline="") as fh:
        _write_meta(fh, meta)
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, loss in enumerate(trace):
            writer.writerow([epoch, repr(float(loss))])


def write_records_csv(path, records: list, meta: dict):
    extra_keys = sorted({k for r in records for k in r.extra})
    with open(path, "w", newline="") as fh:
        _write_meta(fh, meta)
        writer = csv.writer(fh)
        writer.writerow(["point_index", "estimator", "lid_estimate",
                         "t0_or_knee"] + extra_keys)
        for r in records:
            t0 = "" if r.t0_or_knee is None else repr(float(r.t0_or_knee))
            writer.writerow([r.index, r.estimator, repr(float(r.lid)), t0]
                            + [_fmt(r.extra.get(k, "")) for k in extra_keys])


def read_records_csv(path):
    """Returns (records, meta dict)."""
    with open(path, newline="") as fh:
        meta = _read_meta(fh)
        reader = csv.reader(fh)
        header = next(reader)
        extra_keys = header[4:]
        records = []
        for row in reader:
            extra = dict(zip(extra_keys, row[4:]))
            t0 = float(row[3]) if row[3] else None
            records.append(PointRecord(int(row[0]), row[1], float(row[2]),
                                       t0, extra))
    return records, meta


def write_curve_csv(path, t_grid, values, meta: dict):
    with open(path, "w", newline="") as fh:
        _write_meta(fh, meta)
        writer = csv.writer(fh)
        writer.writerow(["t0", "lid"])
        for t, v in zip(t_grid, values):
            writer.writerow([repr(float(t)), repr(float(v))])


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()
