"""Seed-deterministic synthetic audio corpus with event annotations.

Each clip is background noise plus a few labeled events (tones, chirps,
band-limited noise bursts) at a random SNR. Events carry class id, onset and
offset, so clip-level multi-hot or single (dominant-class) labels and
frame-level targets can all be derived downstream. WAVs are written as PCM16,
so identical (spec, seed) pairs produce byte-identical files and manifests.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

from .errors import ConfigError
from .rng import stream


@dataclass(frozen=True)
class EventClass:
    name: str
    kind: str                    # tone | chirp | noise
    f0: float
    f1: float = 0.0              # chirp end frequency / noise band upper edge


DEFAULT_VOCAB = (
    EventClass("tone_500", "tone", 500.0),
    EventClass("tone_2k", "tone", 2000.0),
    EventClass("chirp_up", "chirp", 400.0, 3000.0),
    EventClass("noise_band", "noise", 1000.0, 4000.0),
    EventClass("tone_4k", "tone", 4000.0),
    EventClass("chirp_down", "chirp", 3500.0, 600.0),
)


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    n_clips: int = 8
    clip_len_s: float = 10.0
    sample_rate: int = 16000
    vocab: tuple[EventClass, ...] = DEFAULT_VOCAB[:4]
    events_per_clip: tuple[int, int] = (1, 3)
    event_len_s: tuple[float, float] = (0.8, 2.5)
    snr_db: tuple[float, float] = (5.0, 20.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_clips < 1 or not self.vocab:
            raise ConfigError("corpus needs at least one clip and one class")
        if self.events_per_clip[0] < 1:
            raise ConfigError("every clip must contain at least one event")


@dataclass
class ClipRecord:
    wav: str
    duration: float
    events: list[dict]           # {"class": int, "name": str, "onset_s", "offset_s"}


def _synth_event(cls: EventClass, n: int, rate: int,
                 rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / rate
    if cls.kind == "tone":
        sig = np.sin(2 * np.pi * cls.f0 * t)
    elif cls.kind == "chirp":
        # linear sweep f0 -> f1 over the event
        k = (cls.f1 - cls.f0) / (n / rate)
        sig = np.sin(2 * np.pi * (cls.f0 * t + 0.5 * k * t * t))
    elif cls.kind == "noise":
        white = rng.standard_normal(n)
        spec = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(n, d=1 / rate)
        spec[(freqs < cls.f0) | (freqs > cls.f1)] = 0.0
        sig = np.fft.irfft(spec, n)
        sig = sig / (np.abs(sig).max() + 1e-12)
    else:
        raise ConfigError(f"unknown event kind {cls.kind!r}")
    fade = min(int(0.01 * rate), n // 4)
    if fade > 0:
        ramp = np.linspace(0.0, 1.0, fade)
        sig[:fade] *= ramp
        sig[-fade:] *= ramp[::-1]
    return sig


def synth_clip(spec: SyntheticCorpusSpec, clip_idx: int) -> tuple[np.ndarray, list[dict]]:
    """One clip's waveform and its event annotations."""
    rng = stream(spec.seed, "clip", clip_idx)
    rate = spec.sample_rate
    n = int(round(spec.clip_len_s * rate))
    event_rms = 0.1
    snr = rng.uniform(*spec.snr_db)
    noise_rms = event_rms / (10.0 ** (snr / 20.0))
    audio = noise_rms * rng.standard_normal(n)

    n_events = int(rng.integers(spec.events_per_clip[0],
                                spec.events_per_clip[1] + 1))
    events = []
    for _ in range(n_events):
        cls_id = int(rng.integers(len(spec.vocab)))
        cls = spec.vocab[cls_id]
        dur = float(rng.uniform(*spec.event_len_s))
        dur = min(dur, spec.clip_len_s)
        onset = float(rng.uniform(0.0, spec.clip_len_s - dur))
        i0 = int(round(onset * rate))
        i1 = min(i0 + int(round(dur * rate)), n)
        sig = _synth_event(cls, i1 - i0, rate, rng)
        sig = sig * (event_rms / (np.sqrt(np.mean(sig ** 2)) + 1e-12))
        audio[i0:i1] += sig
        events.append({"class": cls_id, "name": cls.name,
                       "onset_s": round(onset, 4), "offset_s": round(onset + dur, 4)})
    events.sort(key=lambda e: e["onset_s"])
    peak = np.abs(audio).max()
    if peak > 0.99:
        audio *= 0.99 / peak
    return audio, events


def generate_corpus(spec: SyntheticCorpusSpec, out_dir: str) -> str:
    """Write WAVs and a JSONL manifest; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, "manifest.jsonl")
    lines = []
    for i in range(spec.n_clips):
        audio, events = synth_clip(spec, i)
        name = f"clip_{i:05d}.wav"
        pcm = np.clip(audio * 32767.0, -32768, 32767).astype(np.int16)
        wavfile.write(os.path.join(out_dir, name), spec.sample_rate, pcm)
        lines.append(json.dumps({"wav": name, "duration": spec.clip_len_s,
                                 "events": events}, sort_keys=True))
    with open(manifest_path, "w") as f:
        f.write("\n".join(lines) + "\n")
    meta = {"n_clips": spec.n_clips, "clip_len_s": spec.clip_len_s,
            "sample_rate": spec.sample_rate, "seed": spec.seed,
            "classes": [c.name for c in spec.vocab]}
    with open(os.path.join(out_dir, "corpus_meta.json"), "w") as f:
        json.dump(meta, f, sort_keys=True, indent=1)
        f.write("\n")
    return manifest_path


def read_manifest(manifest_path: str) -> list[ClipRecord]:
    base = os.path.dirname(os.path.abspath(manifest_path))
    records = []
    with open(manifest_path) as f:
        for line in f:
            if not line.strip():
                continue
            d = json.loads(line)
            records.append(ClipRecord(wav=os.path.join(base, d["wav"]),
                                      duration=d["duration"], events=d["events"]))
    return records


def n_corpus_classes(manifest_path: str) -> int:
    meta_path = os.path.join(os.path.dirname(os.path.abspath(manifest_path)),
                             "corpus_meta.json")
    with open(meta_path) as f:
        return len(json.load(f)["classes"])


def multilabel_target(rec: ClipRecord, n_classes: int) -> np.ndarray:
    """Multi-hot vector: class present iff any event of it occurs."""
    y = np.zeros(n_classes)
    for e in rec.events:
        y[e["class"]] = 1.0
    return y


def dominant_label(rec: ClipRecord) -> int:
    """Single label: class with the largest total event duration (ties: lowest id)."""
    totals: dict[int, float] = {}
    for e in rec.events:
        totals[e["class"]] = totals.get(e["class"], 0.0) + e["offset_s"] - e["onset_s"]
    best = max(totals.values())
    return min(c for c, v in totals.items() if v == best)
