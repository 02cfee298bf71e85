"""Waveform loading and log-mel feature extraction.

Pipeline: RIFF/WAVE -> mono float in [-1, 1] -> 16 kHz -> Hamming STFT
(64 ms window, 10 ms hop) -> 64 triangular mel filters on 60-7800 Hz ->
log(power + eps) -> global min-max normalization.

Framing is full-coverage: frames start at every hop while the start lies
inside the signal and tail windows are zero-padded, so a clip of n samples
yields exactly ceil(n / hop) frames (10 s at 16 kHz -> 1000 frames). All
functions here are pure; identical inputs give bit-identical outputs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import AudioFormatError, ConfigError, EmptyInputError


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate: int = 16000
    win_len: int = 1024          # 64 ms at 16 kHz
    hop: int = 160               # 10 ms
    n_mels: int = 64
    fmin: float = 60.0
    fmax: float = 7800.0
    log_floor: float = 1e-8


@dataclass
class Waveform:
    samples: np.ndarray          # float, mono, [-1, 1]
    sample_rate: int


@dataclass
class MelSpectrogram:
    values: np.ndarray           # [L, C]
    frame_hop: float             # seconds
    n_mels: int
    fmin: float
    fmax: float

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class NormalizationStats:
    global_min: float
    global_max: float

    def __post_init__(self):
        if not self.global_min < self.global_max:
            raise ConfigError("normalization stats are degenerate (min >= max)")

    def save(self, path: str, config_hash: str = "") -> None:
        payload = {"global_min": self.global_min, "global_max": self.global_max,
                   "config_hash": config_hash}
        with open(path, "w") as f:
            json.dump(payload, f, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path: str) -> "NormalizationStats":
        with open(path) as f:
            payload = json.load(f)
        return cls(payload["global_min"], payload["global_max"])


def load_wav(path: str) -> Waveform:
    """Read a RIFF/WAVE file into a mono float waveform scaled to [-1, 1]."""
    if not os.path.exists(path):
        raise AudioFormatError(f"no such file: {path}")
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:  # scipy raises bare ValueError on bad headers
        raise AudioFormatError(f"unreadable WAV file {path}: {exc}") from exc
    if data.size == 0:
        raise EmptyInputError(f"zero-length audio: {path}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(f"unsupported sample format {data.dtype} in {path}")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return Waveform(samples=samples, sample_rate=int(rate))


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Band-limited polyphase resampling to target_rate."""
    if target_rate <= 0:
        raise ConfigError("target_rate must be positive")
    if w.sample_rate == target_rate:
        return Waveform(samples=w.samples, sample_rate=target_rate)
    g = np.gcd(w.sample_rate, target_rate)
    out = resample_poly(w.samples, target_rate // g, w.sample_rate // g)
    return Waveform(samples=out, sample_rate=target_rate)


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filter_centers(cfg: FrontendConfig) -> np.ndarray:
    """Center frequency (Hz) of each triangular filter."""
    pts = np.linspace(_hz_to_mel(cfg.fmin), _hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    return _mel_to_hz(pts)[1:-1]


def _mel_filterbank(cfg: FrontendConfig) -> np.ndarray:
    """[n_mels, win_len//2 + 1] unit-height triangular filters."""
    n_freqs = cfg.win_len // 2 + 1
    freqs = np.linspace(0.0, cfg.sample_rate / 2.0, n_freqs)
    pts = _mel_to_hz(np.linspace(_hz_to_mel(cfg.fmin), _hz_to_mel(cfg.fmax),
                                 cfg.n_mels + 2))
    fb = np.zeros((cfg.n_mels, n_freqs))
    for m in range(cfg.n_mels):
        lo, ctr, hi = pts[m], pts[m + 1], pts[m + 2]
        up = (freqs - lo) / (ctr - lo)
        down = (hi - freqs) / (hi - ctr)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def frame_count(n_samples: int, cfg: FrontendConfig) -> int:
    if n_samples < cfg.win_len:
        raise EmptyInputError(
            f"audio of {n_samples} samples is shorter than one {cfg.win_len}-sample window")
    return -(-n_samples // cfg.hop)  # ceil(n / hop)


def mel_spectrogram(w: Waveform, cfg: FrontendConfig = FrontendConfig()) -> MelSpectrogram:
    """Log-mel features [L, C] of a 16 kHz waveform."""
    if w.sample_rate != cfg.sample_rate:
        raise ConfigError(
            f"expected {cfg.sample_rate} Hz input, got {w.sample_rate}; resample first")
    n = len(w.samples)
    L = frame_count(n, cfg)
    padded = np.zeros((L - 1) * cfg.hop + cfg.win_len, dtype=np.float64)
    padded[:n] = w.samples
    idx = np.arange(cfg.win_len)[None, :] + cfg.hop * np.arange(L)[:, None]
    frames = padded[idx] * np.hamming(cfg.win_len)
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    mel = power @ _mel_filterbank(cfg).T
    values = np.log(mel + cfg.log_floor)
    return MelSpectrogram(values=values, frame_hop=cfg.hop / cfg.sample_rate,
                          n_mels=cfg.n_mels, fmin=cfg.fmin, fmax=cfg.fmax)


def fit_normalization(mels: list[np.ndarray] | list[MelSpectrogram]) -> NormalizationStats:
    """Global min/max over a corpus of log-mel matrices."""
    lo, hi = np.inf, -np.inf
    for m in mels:
        v = m.values if isinstance(m, MelSpectrogram) else m
        lo = min(lo, float(v.min()))
        hi = max(hi, float(v.max()))
    return NormalizationStats(lo, hi)


def normalize(m: MelSpectrogram, stats: NormalizationStats) -> MelSpectrogram:
    """Min-max normalize to [0, 1], clamping out-of-range values."""
    span = stats.global_max - stats.global_min
    values = np.clip((m.values - stats.global_min) / span, 0.0, 1.0)
    return MelSpectrogram(values=values, frame_hop=m.frame_hop, n_mels=m.n_mels,
                          fmin=m.fmin, fmax=m.fmax)
