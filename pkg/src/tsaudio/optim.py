"""AdamW, SGD, cosine schedules, and layer-wise finetuning factors.

Schedule shapes: learning rate ramps linearly from 0 to the peak over the
warm-up steps, then follows 0.5*(1+cos(pi*t)) down to the final value; weight
decay and the EMA decay follow the same cosine interpolation between their
endpoints over the whole horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .params import Params, trainable_names

# -- optimizers -------------------------------------------------------------


def decay_allowed(name: str) -> bool:
    """Decoupled weight decay applies to weight matrices only: biases,
    norm gains, and the positional/CLS/mask embeddings are exempt."""
    return name.endswith(".w") and ".ln" not in name and ".bn." not in name


@dataclass
class AdamWState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adamw(params: Params) -> AdamWState:
    names = trainable_names(params)
    return AdamWState(m={n: np.zeros_like(params[n].data) for n in names},
                      v={n: np.zeros_like(params[n].data) for n in names})


def adamw_step(params: Params, grads: dict[str, np.ndarray],
               state: AdamWState, lr: float, wd: float) -> None:
    """One bias-corrected AdamW update, in place."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if wd and decay_allowed(name):
            update = update + wd * params[name].data
        params[name].data = params[name].data - lr * update


def sgd_step(params: Params, grads: dict[str, np.ndarray], lr: float,
             factors: dict[str, float] | None = None) -> None:
    """Plain SGD with optional per-tensor learning-rate factors."""
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {name}")
        f = factors.get(name, 1.0) if factors else 1.0
        params[name].data = params[name].data - lr * f * g


# -- schedules ---------------------------------------------------------------


def cosine_interp(step: int, total_steps: int, start: float, end: float) -> float:
    """start -> end along 0.5*(1+cos(pi*t)), t = step/total_steps in [0, 1]."""
    t = min(max(step / total_steps, 0.0), 1.0)
    if t == 0.0:
        return start  # exact endpoints, no float round-off
    if t == 1.0:
        return end
    return end + (start - end) * 0.5 * (1.0 + math.cos(math.pi * t))


def lr_at(step: int, peak_lr: float, warmup_steps: int, total_steps: int,
          final_lr: float = 1e-6) -> float:
    if warmup_steps > 0 and step < warmup_steps:
        return peak_lr * step / warmup_steps
    span = max(total_steps - warmup_steps, 1)
    return cosine_interp(step - warmup_steps, span, peak_lr, final_lr)


def wd_at(step: int, total_steps: int, wd_init: float = 0.04,
          wd_final: float = 0.4) -> float:
    return cosine_interp(step, total_steps, wd_init, wd_final)


def ema_at(step: int, total_steps: int, ema_init: float,
           ema_final: float = 1.0) -> float:
    return cosine_interp(step, total_steps, ema_init, ema_final)


def layerwise_lr_factors(n_blocks: int, decay: float) -> dict[str, float]:
    """Per-depth multipliers: head 1, block i decay^(n_blocks - i), embeddings
    at the deepest factor."""
    if not 0.0 < decay <= 1.0:
        raise ConfigError(f"layer-wise decay must be in (0, 1], got {decay}")
    factors = {"head": 1.0, "embed": decay ** n_blocks}
    for i in range(n_blocks):
        factors[f"block{i}"] = decay ** (n_blocks - i)
    return factors


def factor_for_name(name: str, factors: dict[str, float]) -> float:
    if name.startswith("encoder.block"):
        block = name.split(".")[1].removeprefix("block")
        return factors[f"block{block}"]
    if name.startswith("encoder."):
        return factors["embed"]
    return factors["head"]


# -- pre-training presets -----------------------------------------------------


@dataclass(frozen=True)
class SchedulePreset:
    batch_size: int
    peak_lr: float
    warmup_epochs: int
    total_epochs: int
    ema_init: float
    wd_init: float = 0.04
    wd_final: float = 0.4
    final_lr: float = 1e-6
    ema_final: float = 1.0

    def __post_init__(self):
        if self.warmup_epochs >= self.total_epochs:
            raise ConfigError("warmup must be shorter than the training horizon")
        if not self.wd_init < self.wd_final:
            raise ConfigError("weight decay must increase over training")
        if not 0.0 < self.ema_init <= 1.0:
            raise ConfigError("EMA decay must lie in (0, 1]")


SCHEDULE_PRESETS = {
    "atst_clip_small": SchedulePreset(1536, 5e-4, 10, 300, 0.99),
    "atst_clip_base": SchedulePreset(1536, 2e-4, 10, 200, 0.9995),
    "atst_frame_small": SchedulePreset(1024, 4e-4, 10, 300, 0.997),
    "atst_frame_base": SchedulePreset(864, 8e-5, 10, 200, 0.9996),
}
