"""Self-describing binary checkpoints for trained score networks.

Layout (all little-endian):

    magic "FLPD" | version u32 | config hash 32 bytes (zeros if none)
    | D u32 | time_embed_dim u32 | n_sizes u32 | layer_sizes u32 * n
    | schedule kind u8 + 3 pad | two schedule params f64
    | weight blocks: per transform, W row-major f64 then bias f64

Weight shapes are reconstructed from the architecture metadata.
"""

from __future__ import annotations

import struct

import numpy as np

from .schedules import Schedule, SubVPSchedule, VESchedule, VPSchedule
from .scorenet import MlpScore

MAGIC = b"FLPD"
VERSION = 1

_KIND_CODES = {"vp": 0, "subvp": 1, "ve": 2}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def _schedule_params(sched: Schedule):
    cfg = sched.to_config()
    kind = cfg["kind"]
    if kind in ("vp", "subvp"):
        return _KIND_CODES[kind], cfg["beta0"], cfg["beta1"]
    return _KIND_CODES["ve"], cfg["sigma_min"], cfg["sigma_max"]


def _schedule_from_params(code: int, p0: float, p1: float) -> Schedule:
    kind = _KIND_NAMES[code]
    if kind == "vp":
        return VPSchedule(p0, p1)
    if kind == "subvp":
        return SubVPSchedule(p0, p1)
    return VESchedule(p0, p1)


def save_checkpoint(path, model: MlpScore, sched: Schedule,
                    config_hash: bytes = b""):
    if len(config_hash) > 32:
        raise ValueError("config hash must be at most 32 bytes")
    code, p0, p1 = _schedule_params(sched)
    sizes = model.layer_sizes
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(config_hash.ljust(32, b"\0"))
        fh.write(struct.pack("<III", model.dim, model.time_embed_dim, len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        fh.write(struct.pack("<B3x", code))
        fh.write(struct.pack("<dd", p0, p1))
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (model, schedule, config_hash)."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a score-network checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        config_hash = fh.read(32)
        dim, embed, n_sizes = struct.unpack("<III", fh.read(12))
        sizes = struct.unpack(f"<{n_sizes}I", fh.read(4 * n_sizes))
        (code,) = struct.unpack("<B3x", fh.read(4))
        p0, p1 = struct.unpack("<dd", fh.read(16))
        model = MlpScore(dim, layer_sizes=sizes, time_embed_dim=embed)
        for i, (fan_in, fan_out) in enumerate(model.shapes):
            w = np.frombuffer(fh.read(8 * fan_in * fan_out), dtype="<f8")
            model.weights[i] = w.reshape(fan_in, fan_out).copy()
            b = np.frombuffer(fh.read(8 * fan_out), dtype="<f8")
            model.biases[i] = b.copy()
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after weight blocks")
    return model, _schedule_from_params(code, p0, p1), config_hash
