import numpy as np
import pytest

from tsaudio.autodiff import Tensor
from tsaudio.encoder import (
    CLIP,
    FRAME,
    EncoderConfig,
    encode,
    encode_mel,
    encoder_config,
    init_encoder_params,
    prepare_input,
    stack_frames,
    tokenize,
)
from tsaudio.errors import DimensionError, EmptyInputError, UsageError
from tsaudio.params import collect_grads, zero_grads

TINY = EncoderConfig(d_model=8, n_blocks=2, n_heads=2, d_inner=16, n_mels=4,
                     max_tokens=16)


def tiny_params(seed=0, dtype=np.float64):
    return init_encoder_params(TINY, seed, dtype=dtype)


def mel_batch(B=1, L=24, C=4, seed=0):
    return np.random.default_rng(seed).uniform(0, 1, (B, L, C))


class TestTokenize:
    def test_counts(self):
        cfg = encoder_config("desk")
        p = init_encoder_params(cfg, 0)
        t = tokenize(np.zeros((1, 1000, 64)), p, cfg)
        assert t.shape == (1, 250, 96)

    def test_remainder_truncated(self):
        cfg = encoder_config("desk")
        p = init_encoder_params(cfg, 0)
        assert tokenize(np.zeros((1, 1003, 64)), p, cfg).shape[1] == 250

    def test_zero_input_zero_bias(self):
        p = tiny_params()
        p["encoder.proj.b"].data[:] = 0.0
        t = tokenize(np.zeros((1, 24, 4)), p, TINY)
        np.testing.assert_array_equal(t.data, 0.0)

    def test_too_short(self):
        with pytest.raises(EmptyInputError):
            stack_frames(np.zeros((1, 3, 4)))


class TestPrepareInput:
    def test_clip_inserts_cls(self):
        p = tiny_params()
        tok = tokenize(mel_batch(), p, TINY)
        x = prepare_input(tok, p, TINY, CLIP)
        assert x.shape == (1, 7, 8)
        expected0 = p["encoder.cls"].data + p["encoder.pos"].data[0]
        np.testing.assert_allclose(x.data[0, 0], expected0, atol=1e-12)

    def test_clip_rejects_mask(self):
        p = tiny_params()
        tok = tokenize(mel_batch(), p, TINY)
        with pytest.raises(UsageError):
            prepare_input(tok, p, TINY, CLIP, mask=np.zeros((1, 6), bool))

    def test_frame_no_mask_is_tokens_plus_positions(self):
        p = tiny_params()
        tok = tokenize(mel_batch(), p, TINY)
        x = prepare_input(tok, p, TINY, FRAME)
        np.testing.assert_allclose(
            x.data, tok.data + p["encoder.pos"].data[1:7], atol=1e-12)

    def test_frame_all_masked_substitutes_vector(self):
        p = tiny_params()
        tok = tokenize(mel_batch(), p, TINY)
        mask = np.ones((1, 6), bool)
        x = prepare_input(tok, p, TINY, FRAME, mask=mask)
        expected = p["encoder.mask"].data + p["encoder.pos"].data[1:7]
        np.testing.assert_allclose(x.data[0], expected, atol=1e-12)

    def test_mask_shape_mismatch(self):
        p = tiny_params()
        tok = tokenize(mel_batch(), p, TINY)
        with pytest.raises(DimensionError):
            prepare_input(tok, p, TINY, FRAME, mask=np.zeros((1, 5), bool))

    def test_too_many_tokens(self):
        p = tiny_params()
        with pytest.raises(DimensionError):
            prepare_input(Tensor(np.zeros((1, 17, 8))), p, TINY, FRAME)


class TestEncode:
    def test_output_shapes_all_blocks(self):
        p = tiny_params()
        for mode, T in ((CLIP, 7), (FRAME, 6)):
            outs = encode_mel(mel_batch(), p, TINY, mode)
            assert len(outs) == 2
            for o in outs:
                assert o.shape == (1, T, 8)

    def test_empty_stack_returns_prepared(self):
        cfg = EncoderConfig(d_model=8, n_blocks=0, n_heads=2, d_inner=16,
                            n_mels=4, max_tokens=16)
        p = init_encoder_params(cfg, 0, dtype=np.float64)
        outs = encode_mel(mel_batch(), p, cfg, FRAME)
        tok = tokenize(mel_batch(), p, cfg)
        prepared = prepare_input(tok, p, cfg, FRAME)
        assert len(outs) == 1
        np.testing.assert_array_equal(outs[0].data, prepared.data)

    def test_permutation_equivariance(self):
        # oracle: run both token orderings and compare permuted outputs
        p = tiny_params(seed=3)
        mel = mel_batch(seed=5)
        tok = tokenize(mel, p, TINY)
        out = encode(prepare_input(tok, p, TINY, FRAME), p, TINY)[-1].data

        perm = np.array([0, 3, 2, 1, 4, 5])  # swap tokens 1 and 3
        tok_p = Tensor(tok.data[:, perm])
        p_perm = {k: Tensor(v.data.copy()) for k, v in p.items()}
        rows = p_perm["encoder.pos"].data
        rows[1:7] = rows[1:7][perm]
        out_p = encode(prepare_input(tok_p, p_perm, TINY, FRAME), p_perm, TINY)[-1].data
        np.testing.assert_allclose(out_p, out[:, perm], atol=1e-12)

    def test_single_block_hand_computed(self):
        # oracle: scalar-by-scalar forward pass in plain numpy
        cfg = EncoderConfig(d_model=2, n_blocks=1, n_heads=1, d_inner=3,
                            n_mels=2, stack=1, max_tokens=4)
        p = init_encoder_params(cfg, 7, dtype=np.float64)
        x_in = np.array([[[0.3, -0.6], [1.1, 0.4]]])

        out = encode(Tensor(x_in), p, cfg)[-1].data

        def ln(v, w, b, eps=1e-5):
            mu = v.mean(-1, keepdims=True)
            var = ((v - mu) ** 2).mean(-1, keepdims=True)
            return (v - mu) / np.sqrt(var + eps) * w + b

        g = lambda n: p[n].data
        h = ln(x_in[0], g("encoder.block0.ln1.w"), g("encoder.block0.ln1.b"))
        qkv = h @ g("encoder.block0.attn.qkv.w") + g("encoder.block0.attn.qkv.b")
        q, k, v = qkv[:, :2], qkv[:, 2:4], qkv[:, 4:]
        att = q @ k.T / np.sqrt(2.0)
        att = np.exp(att - att.max(-1, keepdims=True))
        att = att / att.sum(-1, keepdims=True)
        y = x_in[0] + (att @ v) @ g("encoder.block0.attn.out.w") + g("encoder.block0.attn.out.b")
        h2 = ln(y, g("encoder.block0.ln2.w"), g("encoder.block0.ln2.b"))
        a = h2 @ g("encoder.block0.ffn.1.w") + g("encoder.block0.ffn.1.b")
        from scipy.special import erf
        a = 0.5 * a * (1 + erf(a / np.sqrt(2)))
        expected = y + a @ g("encoder.block0.ffn.2.w") + g("encoder.block0.ffn.2.b")

        np.testing.assert_allclose(out[0], expected, atol=1e-10)

    def test_cls_sees_every_token(self):
        p = tiny_params(seed=1)
        mel = mel_batch(seed=2)
        base = encode_mel(mel, p, TINY, CLIP)[-1].data[0, 0]
        for tok_idx in range(6):
            bumped = mel.copy()
            bumped[0, tok_idx * 4, :] += 0.5
            out = encode_mel(bumped, p, TINY, CLIP)[-1].data[0, 0]
            assert not np.allclose(out, base)

    def test_masked_positions_hide_content(self):
        p = tiny_params(seed=4)
        mel = mel_batch(seed=6)
        mask = np.zeros((1, 6), bool)
        mask[0, [1, 4]] = True
        out = encode_mel(mel, p, TINY, FRAME, mask=mask)[-1].data
        scrambled = mel.copy()
        scrambled[0, 4:8] = 123.0   # frames of token 1
        scrambled[0, 16:20] = -55.0  # frames of token 4
        out2 = encode_mel(scrambled, p, TINY, FRAME, mask=mask)[-1].data
        np.testing.assert_array_equal(out, out2)


def encoder_loss(params, mel, mode, mask):
    outs = encode_mel(mel, params, TINY, mode, mask)
    return (outs[-1] * outs[-1]).sum()


class TestBackward:
    def test_finite_differences_all_params(self):
        # oracle: central differences, h = 1e-4, float64
        p = tiny_params(seed=11, dtype=np.float64)
        mel = mel_batch(seed=12)
        mask = np.zeros((1, 6), bool)
        mask[0, [0, 2, 3]] = True

        loss = encoder_loss(p, mel, FRAME, mask)
        loss.backward()
        grads = collect_grads(p)

        h = 1e-4
        worst = 0.0
        for name, t in p.items():
            flat = t.data.ravel()
            gflat = grads[name].ravel()
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + h
                fp = float(encoder_loss(p, mel, FRAME, mask).data)
                flat[i] = keep - h
                fm = float(encoder_loss(p, mel, FRAME, mask).data)
                flat[i] = keep
                num = (fp - fm) / (2 * h)
                rel = abs(gflat[i] - num) / max(abs(num), 1.0)
                worst = max(worst, rel)
        assert worst < 1e-4

    def test_zero_upstream_gradient(self):
        p = tiny_params(seed=13, dtype=np.float64)
        loss = encoder_loss(p, mel_batch(seed=1), FRAME, None)
        loss.backward(grad=np.zeros_like(loss.data))
        for g in collect_grads(p).values():
            np.testing.assert_array_equal(g, 0.0)

    def test_duplicated_example_doubles_gradient(self):
        p = tiny_params(seed=14, dtype=np.float64)
        mel = mel_batch(seed=3)
        encoder_loss(p, mel, FRAME, None).backward()
        single = collect_grads(p)
        zero_grads(p)
        encoder_loss(p, np.concatenate([mel, mel]), FRAME, None).backward()
        double = collect_grads(p)
        for n in single:
            np.testing.assert_allclose(double[n], 2 * single[n], rtol=1e-9, atol=1e-12)


class TestConfig:
    def test_head_divisibility(self):
        with pytest.raises(DimensionError):
            EncoderConfig(d_model=10, n_heads=3)

    def test_presets(self):
        small = encoder_config("small")
        base = encoder_config("base")
        assert (small.d_model, small.n_blocks, small.n_heads, small.d_inner) == \
            (384, 12, 6, 1536)
        assert (base.d_model, base.n_blocks, base.n_heads, base.d_inner) == \
            (768, 12, 12, 3072)
        with pytest.raises(UsageError):
            encoder_config("huge")
