import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.io import wavfile

from tsaudio.errors import AudioFormatError, ConfigError, EmptyInputError
from tsaudio.frontend import (
    FrontendConfig,
    MelSpectrogram,
    NormalizationStats,
    Waveform,
    fit_normalization,
    frame_count,
    load_wav,
    mel_filter_centers,
    mel_spectrogram,
    normalize,
    resample,
)

CFG = FrontendConfig()


def tone(freq, dur_s=1.0, rate=16000, amp=0.5):
    t = np.arange(int(dur_s * rate)) / rate
    return Waveform((amp * np.sin(2 * np.pi * freq * t)), rate)


class TestLoadWav:
    def test_silence_pcm16(self, tmp_path):
        p = tmp_path / "sil.wav"
        wavfile.write(p, 16000, np.zeros(16000, dtype=np.int16))
        w = load_wav(str(p))
        assert w.sample_rate == 16000
        assert len(w.samples) == 16000
        np.testing.assert_array_equal(w.samples, 0.0)

    def test_stereo_channel_average(self, tmp_path):
        p = tmp_path / "st.wav"
        data = np.stack([np.full(100, 0.5, np.float32),
                         np.full(100, -0.5, np.float32)], axis=1)
        wavfile.write(p, 16000, data)
        w = load_wav(str(p))
        np.testing.assert_allclose(w.samples, 0.0, atol=1e-9)

    def test_pcm16_scaling(self, tmp_path):
        # oracle: direct integer-to-float scaling, 16384 / 32768 = 0.5
        p = tmp_path / "s.wav"
        wavfile.write(p, 16000, np.full(10, 16384, dtype=np.int16))
        w = load_wav(str(p))
        assert abs(w.samples[0] - 0.5) <= 1.0 / 32768

    def test_malformed_header(self, tmp_path):
        p = tmp_path / "bad.wav"
        p.write_bytes(b"RIFFgarbage-not-a-wav-file")
        with pytest.raises(AudioFormatError):
            load_wav(str(p))

    def test_missing_file(self, tmp_path):
        with pytest.raises(AudioFormatError):
            load_wav(str(tmp_path / "nope.wav"))


class TestResample:
    def test_identity_rate(self):
        w = tone(440)
        out = resample(w, 16000)
        np.testing.assert_array_equal(out.samples, w.samples)

    def test_downsample_preserves_tone(self):
        # oracle: FFT peak location on the output
        w = tone(1000, dur_s=1.0, rate=32000)
        out = resample(w, 16000)
        spec = np.abs(np.fft.rfft(out.samples))
        freqs = np.fft.rfftfreq(len(out.samples), d=1 / 16000)
        peak = freqs[np.argmax(spec)]
        bin_width = freqs[1] - freqs[0]
        assert abs(peak - 1000.0) <= bin_width

    def test_upsample_length(self):
        w = Waveform(np.random.default_rng(0).standard_normal(8000), 8000)
        out = resample(w, 16000)
        assert abs(len(out.samples) - 16000) <= 1

    @given(st.integers(2000, 48000), st.integers(500, 4000))
    @settings(max_examples=20, deadline=None)
    def test_length_ratio(self, target, n):
        w = Waveform(np.zeros(n), 16000)
        out = resample(w, target)
        expected = n * target / 16000
        assert abs(len(out.samples) - expected) <= 1

    def test_bad_rate(self):
        with pytest.raises(ConfigError):
            resample(tone(440), 0)


class TestMelSpectrogram:
    def test_ten_second_shape(self):
        m = mel_spectrogram(tone(440, dur_s=10.0))
        assert 996 <= m.n_frames <= 1000
        assert m.values.shape[1] == 64

    def test_tone_bin_localization(self):
        # oracle: evaluate the mel filter center frequencies directly
        m = mel_spectrogram(tone(1000, dur_s=2.0))
        centers = mel_filter_centers(CFG)
        expected_bin = int(np.argmin(np.abs(centers - 1000.0)))
        observed = int(np.argmax(m.values.mean(axis=0)))
        assert observed == expected_bin

    def test_silence_is_constant_floor(self):
        m = mel_spectrogram(Waveform(np.zeros(16000), 16000))
        np.testing.assert_allclose(m.values, np.log(CFG.log_floor), rtol=1e-12)

    def test_too_short_errors(self):
        with pytest.raises(EmptyInputError):
            mel_spectrogram(Waveform(np.zeros(CFG.win_len - 1), 16000))

    def test_wrong_rate_errors(self):
        with pytest.raises(ConfigError):
            mel_spectrogram(tone(440, rate=8000))

    def test_deterministic(self):
        w = Waveform(np.random.default_rng(3).standard_normal(32000), 16000)
        a = mel_spectrogram(w).values
        b = mel_spectrogram(w).values
        assert np.array_equal(a, b)

    @given(st.integers(CFG.win_len, 200000))
    @settings(max_examples=30, deadline=None)
    def test_frame_count_formula(self, n):
        m = mel_spectrogram(Waveform(np.zeros(n), 16000))
        assert m.n_frames == -(-n // CFG.hop)
        assert m.n_frames == frame_count(n, CFG)


class TestNormalize:
    def mel(self, values):
        return MelSpectrogram(np.asarray(values, dtype=np.float64), 0.01, 64, 60.0, 7800.0)

    def test_endpoints_and_midpoint(self):
        stats = NormalizationStats(-4.0, 2.0)
        out = normalize(self.mel([[-4.0, 2.0, -1.0]]), stats)
        np.testing.assert_allclose(out.values, [[0.0, 1.0, 0.5]])

    def test_clamping(self):
        stats = NormalizationStats(0.0, 1.0)
        out = normalize(self.mel([[-5.0, 7.0]]), stats)
        np.testing.assert_array_equal(out.values, [[0.0, 1.0]])

    def test_corpus_fit_hits_extremes(self):
        # oracle: scan the corpus for extrema after normalization
        rng = np.random.default_rng(11)
        corpus = [mel_spectrogram(Waveform(0.3 * rng.standard_normal(20000), 16000))
                  for _ in range(3)]
        stats = fit_normalization(corpus)
        normed = [normalize(m, stats).values for m in corpus]
        assert min(v.min() for v in normed) == 0.0
        assert max(v.max() for v in normed) == 1.0

    def test_degenerate_stats(self):
        with pytest.raises(ConfigError):
            NormalizationStats(1.0, 1.0)

    @given(st.floats(-50, 50), st.floats(-50, 50))
    @settings(max_examples=50)
    def test_order_preserving(self, v1, v2):
        stats = NormalizationStats(-60.0, 60.0)
        a = normalize(self.mel([[v1]]), stats).values[0, 0]
        b = normalize(self.mel([[v2]]), stats).values[0, 0]
        if v1 < v2:
            assert a < b

    def test_stats_roundtrip(self, tmp_path):
        stats = NormalizationStats(-18.42, 3.14)
        p = tmp_path / "stats.json"
        stats.save(str(p), config_hash="abc123")
        loaded = NormalizationStats.load(str(p))
        assert loaded == stats
