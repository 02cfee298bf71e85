"""Frame-wise audio spectrogram transformer.

Four consecutive mel frames are stacked into one token, linearly projected
to width d, optionally masked (frame mode) or prefixed with a learned CLS
token (clip mode), summed with a learned absolute positional table, and run
through a pre-norm transformer stack. `encode` returns every block's output
so downstream recipes can concatenate across depth.

Positional table layout: row 0 is reserved for the CLS token; token i uses
row i + 1 in both modes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Tensor, concat, matmul
from .errors import DimensionError, EmptyInputError, NumericError, UsageError
from .params import Params, trunc_normal
from .rng import stream

CLIP = "clip"
FRAME = "frame"


@dataclass(frozen=True)
class EncoderConfig:
    d_model: int = 96
    n_blocks: int = 4
    n_heads: int = 4
    d_inner: int = 384
    n_mels: int = 64
    stack: int = 4
    max_tokens: int = 256

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise DimensionError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")

    @property
    def token_width(self) -> int:
        return self.stack * self.n_mels


ENCODER_PRESETS = {
    "desk": EncoderConfig(d_model=96, n_blocks=4, n_heads=4, d_inner=384),
    "small": EncoderConfig(d_model=384, n_blocks=12, n_heads=6, d_inner=1536),
    "base": EncoderConfig(d_model=768, n_blocks=12, n_heads=12, d_inner=3072),
}


def encoder_config(preset: str, **overrides) -> EncoderConfig:
    if preset not in ENCODER_PRESETS:
        raise UsageError(f"unknown encoder preset {preset!r}")
    return replace(ENCODER_PRESETS[preset], **overrides)


def init_encoder_params(cfg: EncoderConfig, seed: int,
                        dtype=np.float32) -> Params:
    """Fresh encoder parameters; every tensor keyed by its own RNG stream."""
    d, di = cfg.d_model, cfg.d_inner

    def w(name, shape, std=0.02):
        return trunc_normal(stream(seed, "init", name), shape, std)

    def n(name, shape):
        return stream(seed, "init", name).normal(0.0, 0.02, size=shape)

    arrays: dict[str, np.ndarray] = {
        "encoder.proj.w": w("encoder.proj.w", (cfg.token_width, d)),
        "encoder.proj.b": np.zeros(d),
        "encoder.pos": n("encoder.pos", (1 + cfg.max_tokens, d)),
        "encoder.cls": n("encoder.cls", (d,)),
        "encoder.mask": n("encoder.mask", (d,)),
    }
    for i in range(cfg.n_blocks):
        p = f"encoder.block{i}"
        arrays[f"{p}.attn.qkv.w"] = w(f"{p}.attn.qkv.w", (d, 3 * d))
        arrays[f"{p}.attn.qkv.b"] = np.zeros(3 * d)
        arrays[f"{p}.attn.out.w"] = w(f"{p}.attn.out.w", (d, d))
        arrays[f"{p}.attn.out.b"] = np.zeros(d)
        arrays[f"{p}.ln1.w"] = np.ones(d)
        arrays[f"{p}.ln1.b"] = np.zeros(d)
        arrays[f"{p}.ffn.1.w"] = w(f"{p}.ffn.1.w", (d, di))
        arrays[f"{p}.ffn.1.b"] = np.zeros(di)
        arrays[f"{p}.ffn.2.w"] = w(f"{p}.ffn.2.w", (di, d))
        arrays[f"{p}.ffn.2.b"] = np.zeros(d)
        arrays[f"{p}.ln2.w"] = np.ones(d)
        arrays[f"{p}.ln2.b"] = np.zeros(d)
    return {k: Tensor(v.astype(dtype), requires_grad=True)
            for k, v in arrays.items()}


def stack_frames(mel: np.ndarray, stack: int = 4) -> np.ndarray:
    """[B, L, C] -> [B, L//stack, stack*C]; trailing remainder frames dropped."""
    if mel.ndim == 2:
        mel = mel[None]
    B, L, C = mel.shape
    T = L // stack
    if T == 0:
        raise EmptyInputError(f"{L} frames cannot fill one {stack}-frame token")
    return mel[:, :T * stack].reshape(B, T, stack * C)


def tokenize(mel: np.ndarray, params: Params, cfg: EncoderConfig) -> Tensor:
    """Stack frames and project to model width: [B, L, C] -> [B, T, d]."""
    stacked = stack_frames(mel, cfg.stack)
    x = Tensor(stacked.astype(params["encoder.proj.w"].dtype))
    return matmul(x, params["encoder.proj.w"]) + params["encoder.proj.b"]


def prepare_input(tokens: Tensor, params: Params, cfg: EncoderConfig,
                  mode: str, mask: np.ndarray | None = None) -> Tensor:
    """Apply mask substitution (frame) or CLS insertion (clip), add positions."""
    B, T, d = tokens.shape
    if T > cfg.max_tokens:
        raise DimensionError(
            f"{T} tokens exceed positional table length {cfg.max_tokens}")
    if mode == CLIP:
        if mask is not None:
            raise UsageError("clip mode does not mask tokens")
        cls = params["encoder.cls"].reshape(1, 1, d).expand((B, 1, d))
        x = concat([cls, tokens], axis=1)
        rows = np.concatenate([[0], np.arange(1, T + 1)])
    elif mode == FRAME:
        x = tokens
        if mask is not None:
            if mask.shape != (B, T):
                raise DimensionError(
                    f"mask shape {mask.shape} does not match tokens {(B, T)}")
            m = mask.astype(tokens.dtype)[:, :, None]
            x = x * (1.0 - m) + params["encoder.mask"] * m
        rows = np.arange(1, T + 1)
    else:
        raise UsageError(f"unknown mode {mode!r}")
    return x + params["encoder.pos"][rows]


def _layer_norm(x: Tensor, w: Tensor, b: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    return xc / (var + eps).sqrt() * w + b


def _block(x: Tensor, params: Params, prefix: str, cfg: EncoderConfig) -> Tensor:
    B, T, d = x.shape
    H = cfg.n_heads
    hd = d // H

    h = _layer_norm(x, params[f"{prefix}.ln1.w"], params[f"{prefix}.ln1.b"])
    qkv = matmul(h, params[f"{prefix}.attn.qkv.w"]) + params[f"{prefix}.attn.qkv.b"]
    q = qkv[:, :, 0 * d:1 * d].reshape(B, T, H, hd).transpose(0, 2, 1, 3)
    k = qkv[:, :, 1 * d:2 * d].reshape(B, T, H, hd).transpose(0, 2, 1, 3)
    v = qkv[:, :, 2 * d:3 * d].reshape(B, T, H, hd).transpose(0, 2, 1, 3)
    att = matmul(q, k.transpose(0, 1, 3, 2)) * float(hd ** -0.5)
    att = att.softmax(axis=-1)
    ctx = matmul(att, v).transpose(0, 2, 1, 3).reshape(B, T, d)
    x = x + matmul(ctx, params[f"{prefix}.attn.out.w"]) + params[f"{prefix}.attn.out.b"]

    h = _layer_norm(x, params[f"{prefix}.ln2.w"], params[f"{prefix}.ln2.b"])
    h = (matmul(h, params[f"{prefix}.ffn.1.w"]) + params[f"{prefix}.ffn.1.b"]).gelu()
    return x + matmul(h, params[f"{prefix}.ffn.2.w"]) + params[f"{prefix}.ffn.2.b"]


def encode(x: Tensor, params: Params, cfg: EncoderConfig) -> list[Tensor]:
    """Run the transformer stack on prepared input; one output per block."""
    outputs = []
    for i in range(cfg.n_blocks):
        x = _block(x, params, f"encoder.block{i}", cfg)
        if not np.isfinite(x.data).all():
            raise NumericError(f"non-finite activations after encoder block {i}")
        outputs.append(x)
    return outputs


def encode_mel(mel: np.ndarray, params: Params, cfg: EncoderConfig,
               mode: str, mask: np.ndarray | None = None) -> list[Tensor]:
    """Full forward: mel [B, L, C] -> per-block outputs [B, T(+1), d]."""
    tokens = tokenize(mel, params, cfg)
    prepared = prepare_input(tokens, params, cfg, mode, mask)
    outputs = encode(prepared, params, cfg)
    return outputs if outputs else [prepared]
