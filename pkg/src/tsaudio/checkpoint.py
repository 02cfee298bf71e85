"""Bit-exact checkpoint persistence.

A checkpoint is a single .npz holding every student/teacher tensor, the
optimizer moments, and a JSON metadata record (format version, config hash,
step, seed, normalization stats). Writes go through a temp file + rename so
a crash never leaves a partial checkpoint behind.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .autodiff import Tensor
from .errors import CheckpointError
from .frontend import NormalizationStats
from .optim import AdamWState
from .params import Params, is_buffer

FORMAT_VERSION = 1


def stable_hash(obj) -> str:
    """Short digest of a JSON-serializable object, invariant to key order."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save_checkpoint(path: str, *, step: int, student: Params, teacher: Params,
                    opt: AdamWState, seed: int, stats: NormalizationStats,
                    config_hash: str) -> None:
    arrays: dict[str, np.ndarray] = {}
    for name, t in student.items():
        arrays[f"student/{name}"] = t.data
    for name, t in teacher.items():
        arrays[f"teacher/{name}"] = t.data
    for name, a in opt.m.items():
        arrays[f"opt.m/{name}"] = a
    for name, a in opt.v.items():
        arrays[f"opt.v/{name}"] = a
    meta = {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash,
        "step": step,
        "seed": seed,
        "opt": {"step": opt.step, "beta1": opt.beta1, "beta2": opt.beta2,
                "eps": opt.eps},
        "stats": {"global_min": stats.global_min, "global_max": stats.global_max},
    }
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        np.savez(f, **arrays)
    os.replace(tmp, path)


def load_checkpoint(path: str, expect_hash: str | None = None) -> dict:
    """Load a checkpoint into plain arrays plus parsed metadata."""
    if not os.path.exists(path):
        raise CheckpointError(f"no checkpoint at {path}")
    try:
        with np.load(path) as z:
            arrays = {k: z[k] for k in z.files}
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if "__meta__" not in arrays:
        raise CheckpointError(f"checkpoint {path} carries no metadata")
    meta = json.loads(arrays.pop("__meta__").tobytes().decode())
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"format version {meta.get('format_version')} != {FORMAT_VERSION}")
    if expect_hash is not None and meta["config_hash"] != expect_hash:
        raise CheckpointError(
            f"checkpoint config hash {meta['config_hash']} does not match "
            f"the requested config {expect_hash}")

    def collect(prefix: str) -> dict[str, np.ndarray]:
        return {k.removeprefix(prefix): v for k, v in arrays.items()
                if k.startswith(prefix)}

    return {
        "meta": meta,
        "student": collect("student/"),
        "teacher": collect("teacher/"),
        "opt_m": collect("opt.m/"),
        "opt_v": collect("opt.v/"),
    }


def params_from_arrays(arrays: dict[str, np.ndarray], trainable: bool) -> Params:
    out = {}
    for name, a in arrays.items():
        t = Tensor(a.copy())
        t.requires_grad = trainable and not is_buffer(name)
        out[name] = t
    return out


def opt_from_arrays(loaded: dict) -> AdamWState:
    o = loaded["meta"]["opt"]
    return AdamWState(m={k: v.copy() for k, v in loaded["opt_m"].items()},
                      v={k: v.copy() for k, v in loaded["opt_v"].items()},
                      step=o["step"], beta1=o["beta1"], beta2=o["beta2"],
                      eps=o["eps"])


def stats_from_meta(loaded: dict) -> NormalizationStats:
    s = loaded["meta"]["stats"]
    return NormalizationStats(s["global_min"], s["global_max"])
