"""View-creation transforms for pre-training.

All ops are pure functions of (input, explicit numpy Generator), so a keyed
RNG stream reproduces any draw. Spectrogram arguments are plain [L, C]
arrays (log-mel or normalized mel values).

Resizing ops (random crop, frequency warp) map output coordinate j to
`start + j * scale` and sample the zero-padded input bilinearly; integer
coordinates reproduce input values exactly, so full-size crops are
bit-exact identities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError


@dataclass(frozen=True)
class RrcConfig:
    virtual: float = 1.5         # canvas size as a multiple of the input
    f_lo: float = 0.6
    f_hi: float = 1.5
    t_lo: float = 0.6
    t_hi: float = 1.5


@dataclass(frozen=True)
class MaskConfig:
    prob: float = 0.65
    block_len: int = 5


@dataclass
class SegmentPair:
    seg_a: np.ndarray
    seg_b: np.ndarray
    start_a: int
    start_b: int
    overlap_frames: int


@dataclass
class MaskSpec:
    masked: np.ndarray           # bool [n_tokens]
    block_len: int
    mask_prob: float

    @property
    def n_masked(self) -> int:
        return int(self.masked.sum())

    @property
    def fraction(self) -> float:
        return float(self.masked.mean())


def sample_segment_pair(x: np.ndarray, seg_len: int,
                        rng: np.random.Generator) -> SegmentPair:
    """Two equal-length crops with structurally guaranteed overlap."""
    L = x.shape[0]
    if seg_len > L:
        raise ConfigError(f"segment length {seg_len} exceeds clip length {L}")
    if 2 * seg_len <= L:
        raise ConfigError(
            f"2*seg_len must exceed clip length for overlap (got {seg_len} vs {L})")
    start_a = int(rng.integers(0, L - seg_len + 1))
    start_b = int(rng.integers(0, L - seg_len + 1))
    overlap = seg_len - abs(start_a - start_b)
    return SegmentPair(seg_a=x[start_a:start_a + seg_len],
                       seg_b=x[start_b:start_b + seg_len],
                       start_a=start_a, start_b=start_b, overlap_frames=overlap)


def log_domain_mix(x: np.ndarray, donor: np.ndarray, lam: float) -> np.ndarray:
    """log((1-lam) * exp(x) + lam * exp(donor)), elementwise and stable."""
    if x.shape != donor.shape:
        raise DimensionError(f"mixup shape mismatch: {x.shape} vs {donor.shape}")
    if lam == 0.0:
        return x.copy()
    if lam == 1.0:
        return donor.copy()
    return np.logaddexp(x + np.log1p(-lam), donor + np.log(lam))


def mixup_pretrain(x: np.ndarray, donor: np.ndarray, alpha: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Label-free mixup in the (pre-normalization) log-mel domain."""
    if not 0.0 < alpha <= 1.0:
        raise ConfigError(f"mixup alpha must be in (0, 1], got {alpha}")
    lam = float(rng.uniform(0.0, alpha))
    return log_domain_mix(x, donor, lam)


def crop_and_resize(x: np.ndarray, start_t: float, start_f: float,
                    scale_t: float, scale_f: float) -> np.ndarray:
    """Sample x on the grid (start + j*scale), bilinear, zeros outside x."""
    L, C = x.shape
    r = start_t + np.arange(L) * scale_t
    c = start_f + np.arange(C) * scale_f
    r0 = np.floor(r).astype(np.int64)
    c0 = np.floor(c).astype(np.int64)
    rw = (r - r0)[:, None]
    cw = (c - c0)[None, :]

    def gather(ri, ci):
        valid = ((ri >= 0) & (ri < L))[:, None] & ((ci >= 0) & (ci < C))[None, :]
        v = x[np.clip(ri, 0, L - 1)][:, np.clip(ci, 0, C - 1)]
        return np.where(valid, v, 0.0)

    top = gather(r0, c0) * (1.0 - cw) + gather(r0, c0 + 1) * cw
    bot = gather(r0 + 1, c0) * (1.0 - cw) + gather(r0 + 1, c0 + 1) * cw
    return top * (1.0 - rw) + bot * rw


def random_resized_crop(x: np.ndarray, cfg: RrcConfig,
                        rng: np.random.Generator) -> np.ndarray:
    """Random crop inside a zero-padded virtual canvas, resized back to x's shape."""
    if x.size == 0:
        raise ConfigError("random_resized_crop needs a non-empty input")
    for lo, hi in ((cfg.f_lo, cfg.f_hi), (cfg.t_lo, cfg.t_hi)):
        if not (0.0 < lo <= hi <= cfg.virtual):
            raise ConfigError(
                f"scale bounds ({lo}, {hi}) outside (0, {cfg.virtual}]")
    L, C = x.shape
    st = float(rng.uniform(cfg.t_lo, cfg.t_hi))
    sf = float(rng.uniform(cfg.f_lo, cfg.f_hi))
    margin = (cfg.virtual - 1.0) / 2.0
    t0 = float(rng.uniform(-margin * L, (1.0 + margin) * L - st * L))
    f0 = float(rng.uniform(-margin * C, (1.0 + margin) * C - sf * C))
    return crop_and_resize(x, t0, f0, st, sf)


def sample_warp_width(n_bins: int, rng: np.random.Generator) -> int:
    """Uniform integer crop width in [ceil(0.6*C), C]."""
    lo = int(np.ceil(0.6 * n_bins))
    return int(rng.integers(lo, n_bins + 1))


def frequency_warp(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Crop the low `a` mel bins and stretch back to full width; rows untouched."""
    L, C = x.shape
    if C < 2:
        raise ConfigError("frequency warp needs at least 2 mel bins")
    a = sample_warp_width(C, rng)
    if a == C:
        return x.copy()
    return crop_and_resize(x, 0.0, 0.0, 1.0, a / C)


def sample_group_mask(n_tokens: int, p: float, block_len: int,
                      rng: np.random.Generator) -> MaskSpec:
    """Union of length-N blocks whose starts are i.i.d. Bernoulli(p / N).

    Overlapping blocks are allowed; with p=0.65 and N=5 about half of all
    tokens end up masked.
    """
    if n_tokens < block_len:
        raise DimensionError(
            f"need at least {block_len} tokens to place a block, got {n_tokens}")
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"mask probability must be in [0, 1], got {p}")
    n_starts = n_tokens - block_len + 1
    starts = rng.random(n_starts) < (p / block_len)
    masked = np.zeros(n_tokens, dtype=bool)
    if starts.any():
        hits = np.convolve(starts.astype(np.int64), np.ones(block_len, np.int64))
        masked = hits[:n_tokens] > 0
    return MaskSpec(masked=masked, block_len=block_len, mask_prob=p)
