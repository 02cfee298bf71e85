"""Teacher-student objective: projector/predictor heads, losses, EMA.

The student branch owns encoder + projector + predictor; the teacher owns
encoder + projector only and is updated exclusively through `ema_update`.
Teacher tensors never require gradients, so every teacher forward is a
constant with respect to differentiation (the stop-gradient contract).

Head batch norm runs on batch statistics for the student (train mode) and on
running statistics for the teacher (eval mode); running statistics are
maintained by the student and copied, not blended, into the teacher at every
EMA update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .encoder import CLIP, FRAME, EncoderConfig, encode_mel, init_encoder_params
from .errors import CheckpointError, DimensionError, EmptyMaskError, NumericError
from .params import Params, copy_params, is_buffer, trunc_normal
from .rng import stream

L2_EPS = 1e-12


@dataclass(frozen=True)
class HeadConfig:
    hidden: int = 4096
    out: int = 256
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5


def init_head_params(prefix: str, d_in: int, cfg: HeadConfig, seed: int,
                     dtype=np.float32) -> Params:
    def w(name, shape):
        return trunc_normal(stream(seed, "init", name), shape, 0.02)

    arrays = {
        f"{prefix}.1.w": w(f"{prefix}.1.w", (d_in, cfg.hidden)),
        f"{prefix}.1.b": np.zeros(cfg.hidden),
        f"{prefix}.bn.w": np.ones(cfg.hidden),
        f"{prefix}.bn.b": np.zeros(cfg.hidden),
        f"{prefix}.bn.running_mean": np.zeros(cfg.hidden),
        f"{prefix}.bn.running_var": np.ones(cfg.hidden),
        f"{prefix}.2.w": w(f"{prefix}.2.w", (cfg.hidden, cfg.out)),
        f"{prefix}.2.b": np.zeros(cfg.out),
    }
    out = {}
    for k, v in arrays.items():
        t = Tensor(v.astype(dtype))
        t.requires_grad = not is_buffer(k)
        out[k] = t
    return out


def project(h: Tensor, params: Params, prefix: str, cfg: HeadConfig,
            train: bool) -> Tensor:
    """linear -> batch norm -> ReLU -> linear on a [N, d_in] batch."""
    if h.shape[1] != params[f"{prefix}.1.w"].shape[0]:
        raise DimensionError(
            f"head {prefix} expects width {params[f'{prefix}.1.w'].shape[0]}, "
            f"got {h.shape[1]}")
    z = h @ params[f"{prefix}.1.w"] + params[f"{prefix}.1.b"]
    if train:
        n = z.shape[0]
        if n < 2:
            raise DimensionError(
                "batch norm is degenerate on a single-row batch in train mode")
        mu = z.mean(axis=0, keepdims=True)
        zc = z - mu
        var = (zc * zc).mean(axis=0, keepdims=True)
        zhat = zc / (var + cfg.bn_eps).sqrt()
        mom = cfg.bn_momentum
        rm = params[f"{prefix}.bn.running_mean"]
        rv = params[f"{prefix}.bn.running_var"]
        rm.data = (1 - mom) * rm.data + mom * mu.data[0]
        rv.data = (1 - mom) * rv.data + mom * var.data[0] * n / max(n - 1, 1)
    else:
        rm = params[f"{prefix}.bn.running_mean"].detach()
        rv = params[f"{prefix}.bn.running_var"].detach()
        zhat = (z - rm) / (rv + cfg.bn_eps).sqrt()
    z = zhat * params[f"{prefix}.bn.w"] + params[f"{prefix}.bn.b"]
    return z.relu() @ params[f"{prefix}.2.w"] + params[f"{prefix}.2.b"]


def init_student_params(enc_cfg: EncoderConfig, head_cfg: HeadConfig,
                        seed: int, dtype=np.float32) -> Params:
    params = init_encoder_params(enc_cfg, seed, dtype=dtype)
    params.update(init_head_params("projector", enc_cfg.d_model, head_cfg,
                                   seed, dtype=dtype))
    params.update(init_head_params("predictor", head_cfg.out, head_cfg,
                                   seed, dtype=dtype))
    return params


def teacher_from_student(student: Params) -> Params:
    """Frozen copy of the student's encoder and projector (no predictor)."""
    subset = {n: t for n, t in student.items() if not n.startswith("predictor.")}
    return copy_params(subset, requires_grad=False)


def ema_update(teacher: Params, student: Params, m: float) -> None:
    """teacher <- m * teacher + (1 - m) * student; running stats copied."""
    if m == 1.0:
        return
    for name, t in teacher.items():
        s = student.get(name)
        if s is None or s.data.shape != t.data.shape:
            raise CheckpointError(f"teacher/student mismatch on {name}")
        if is_buffer(name):
            t.data = s.data.copy()
        else:
            t.data = m * t.data + (1.0 - m) * s.data


# -- losses ---------------------------------------------------------------


def l2_normalize(x: Tensor, eps: float = L2_EPS) -> Tensor:
    norm = (x * x).sum(axis=-1, keepdims=True).sqrt()
    # guard exactly-zero rows only: an additive eps would break the exact
    # invariance of the loss under positive rescaling of its arguments
    guard = np.where(norm.data == 0.0, eps, 0.0)
    return x / (norm + Tensor(guard))


def normalized_mse(z: Tensor, q: Tensor) -> Tensor:
    """Mean over rows of ||z_bar - q_bar||^2; z is treated as a constant."""
    if z.shape != q.shape:
        raise DimensionError(f"row mismatch: {z.shape} vs {q.shape}")
    if z.shape[0] == 0:
        raise EmptyMaskError("loss needs at least one row")
    for side, t in (("teacher", z), ("student", q)):
        norms = np.linalg.norm(t.data, axis=-1)
        if (norms == 0).any():
            raise NumericError(f"zero {side} embedding cannot be normalized")
    diff = l2_normalize(z.detach()) - l2_normalize(q)
    return (diff * diff).sum(axis=-1).mean()


def byol_loss(z: Tensor | np.ndarray, q: Tensor | np.ndarray) -> Tensor:
    """Normalized MSE between two embedding vectors; range [0, 4]."""
    z = z if isinstance(z, Tensor) else Tensor(np.asarray(z))
    q = q if isinstance(q, Tensor) else Tensor(np.asarray(q))
    if z.ndim == 1:
        z = z.reshape(1, -1)
    if q.ndim == 1:
        q = q.reshape(1, -1)
    return normalized_mse(z, q)


def frame_loss(z: Tensor, q: Tensor) -> Tensor:
    """Masked-frame matching loss: mean normalized MSE over M rows."""
    return normalized_mse(z, q)


# -- symmetric assembly ----------------------------------------------------


def _cls_rows(mel: np.ndarray, params: Params, enc_cfg: EncoderConfig) -> Tensor:
    return encode_mel(mel, params, enc_cfg, CLIP)[-1][:, 0, :]


def _masked_rows(mel: np.ndarray, params: Params, enc_cfg: EncoderConfig,
                 mask: np.ndarray | None, select: np.ndarray) -> Tensor:
    out = encode_mel(mel, params, enc_cfg, FRAME, mask=mask)[-1]
    B, T, d = out.shape
    return out.reshape(B * T, d)[select]


def clip_direction_loss(mel_teacher: np.ndarray, mel_student: np.ndarray,
                        teacher: Params, student: Params,
                        enc_cfg: EncoderConfig, head_cfg: HeadConfig) -> Tensor:
    z = project(_cls_rows(mel_teacher, teacher, enc_cfg), teacher,
                "projector", head_cfg, train=False)
    h = project(_cls_rows(mel_student, student, enc_cfg), student,
                "projector", head_cfg, train=True)
    q = project(h, student, "predictor", head_cfg, train=True)
    return normalized_mse(z, q)


def symmetric_clip_loss(mel_a: np.ndarray, mel_b: np.ndarray, teacher: Params,
                        student: Params, enc_cfg: EncoderConfig,
                        head_cfg: HeadConfig) -> Tensor:
    return (clip_direction_loss(mel_a, mel_b, teacher, student, enc_cfg, head_cfg)
            + clip_direction_loss(mel_b, mel_a, teacher, student, enc_cfg, head_cfg))


def frame_direction_loss(mel_teacher: np.ndarray, mel_student: np.ndarray,
                         mask: np.ndarray, teacher: Params, student: Params,
                         enc_cfg: EncoderConfig, head_cfg: HeadConfig) -> Tensor:
    """One direction of the masked-frame objective.

    The teacher encodes its view unmasked; the student's view is masked and
    only the masked rows (identical time indices in both branches) reach the
    heads and the loss.
    """
    if mask.sum() == 0:
        raise EmptyMaskError("frame objective needs at least one masked token")
    select = np.flatnonzero(mask.ravel())
    z = project(_masked_rows(mel_teacher, teacher, enc_cfg, None, select),
                teacher, "projector", head_cfg, train=False)
    h = project(_masked_rows(mel_student, student, enc_cfg, mask, select),
                student, "projector", head_cfg, train=True)
    q = project(h, student, "predictor", head_cfg, train=True)
    return frame_loss(z, q)


def symmetric_frame_loss(mel_clean: np.ndarray, mel_aug: np.ndarray,
                         mask_a: np.ndarray, mask_b: np.ndarray,
                         teacher: Params, student: Params,
                         enc_cfg: EncoderConfig, head_cfg: HeadConfig) -> Tensor:
    """Both directions; the augmented view alternates between branches."""
    return (frame_direction_loss(mel_clean, mel_aug, mask_a, teacher, student,
                                 enc_cfg, head_cfg)
            + frame_direction_loss(mel_aug, mel_clean, mask_b, teacher, student,
                                   enc_cfg, head_cfg))
