"""Helpers for flat name->Tensor parameter dictionaries.

Batch-norm running statistics are buffers: they live in the same dict (so
checkpoints and EMA see them) but receive no gradients and no optimizer
updates.
"""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import ndtri

from .autodiff import Tensor

_BUFFER_SUFFIXES = (".bn.running_mean", ".bn.running_var")

Params = dict[str, Tensor]


def is_buffer(name: str) -> bool:
    return name.endswith(_BUFFER_SUFFIXES)


def trainable_names(params: Params) -> list[str]:
    return [n for n in params if not is_buffer(n)]


def zero_grads(params: Params) -> None:
    for t in params.values():
        t.grad = None


def collect_grads(params: Params) -> dict[str, np.ndarray]:
    """Gradients of all trainable tensors after a backward pass (zeros if unused)."""
    out = {}
    for n in trainable_names(params):
        t = params[n]
        out[n] = t.grad if t.grad is not None else np.zeros_like(t.data)
    return out


def copy_params(params: Params, requires_grad: bool = False) -> Params:
    out = {}
    for n, t in params.items():
        c = Tensor(t.data.copy())
        c.requires_grad = requires_grad and not is_buffer(n)
        out[n] = c
    return out


def params_checksum(params: Params) -> str:
    """Order-independent digest of every tensor's bytes; detects any mutation."""
    h = hashlib.sha256()
    for n in sorted(params):
        h.update(n.encode())
        h.update(np.ascontiguousarray(params[n].data).tobytes())
    return h.hexdigest()


def trunc_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    """Normal(0, std) truncated at +-2 std, via inverse-CDF sampling."""
    from scipy.stats import norm  # local: only used at init time

    lo, hi = norm.cdf(-2.0), norm.cdf(2.0)
    return ndtri(rng.uniform(lo, hi, size=shape)) * std
