import numpy as np
import pytest

from airkit.backends import ToyEncoder
from airkit.errors import (
    BadInitError,
    DimMismatchError,
    RangeError,
    ZeroImageOffsetError,
)
from airkit.generators import ToyAffineGenerator
from airkit.prompts import (
    PromptLearnConfig,
    PromptState,
    init_prompt,
    interpolate_label,
    learn_anchor_prompt,
    prompt_load,
    prompt_offset,
    prompt_store,
)


def _tokens(m=4, d=6, seed=0):
    return np.random.default_rng(seed).standard_normal((m, d)).astype(np.float32)


def test_prompt_state_validation_and_freeze():
    toks = _tokens()
    label = np.zeros(6, dtype=np.float32)
    prompt = PromptState(tokens=toks, label=label, anchor_index=1)
    assert prompt.token_count == 4 and prompt.dim == 6
    with pytest.raises(ValueError):
        prompt.tokens[0, 0] = 1.0
    with pytest.raises(BadInitError):
        PromptState(tokens=toks, label=np.zeros(5, dtype=np.float32), anchor_index=0)
    with pytest.raises(BadInitError):
        PromptState(tokens=np.zeros((0, 6), dtype=np.float32), label=label, anchor_index=0)
    bad = toks.copy()
    bad[1, 1] = np.nan
    with pytest.raises(BadInitError):
        PromptState(tokens=bad, label=label, anchor_index=0)


def test_full_sequence_puts_label_last():
    toks = _tokens(m=3)
    label = np.full(6, 2.0, dtype=np.float32)
    seq = PromptState(tokens=toks, label=label, anchor_index=0).full_sequence()
    assert seq.shape == (4, 6)
    np.testing.assert_array_equal(seq[:3], toks)
    np.testing.assert_array_equal(seq[3], label)


def test_init_prompt_pads_and_truncates():
    label = np.zeros(6, dtype=np.float32)
    short = _tokens(m=2)
    padded = init_prompt(5, short, label)
    assert padded.token_count == 5
    np.testing.assert_array_equal(padded.tokens[:2], short)
    for row in padded.tokens[2:]:
        np.testing.assert_array_equal(row, short[-1])
    long = _tokens(m=7, seed=1)
    cut = init_prompt(3, long, label)
    np.testing.assert_array_equal(cut.tokens, long[:3])
    with pytest.raises(RangeError):
        init_prompt(0, short, label)
    with pytest.raises(BadInitError):
        init_prompt(2, short, np.zeros(5, dtype=np.float32))


def test_interpolate_label_endpoints_bit_exact():
    rng = np.random.default_rng(2)
    ys = rng.standard_normal(6).astype(np.float32)
    yt = rng.standard_normal(6).astype(np.float32)
    assert interpolate_label(ys, yt, 0.0).tobytes() == ys.tobytes()
    assert interpolate_label(ys, yt, 1.0).tobytes() == yt.tobytes()
    mid = interpolate_label(ys, yt, 0.25)
    expected = (0.75 * ys.astype(np.float64) + 0.25 * yt.astype(np.float64)).astype(np.float32)
    assert mid.tobytes() == expected.tobytes()
    with pytest.raises(RangeError):
        interpolate_label(ys, yt, 1.5)
    with pytest.raises(DimMismatchError):
        interpolate_label(ys, yt[:5], 0.5)


def test_prompt_learn_config_validation():
    with pytest.raises(RangeError):
        PromptLearnConfig(k_iter=0)
    with pytest.raises(RangeError):
        PromptLearnConfig(n_pairs=0)
    with pytest.raises(RangeError):
        PromptLearnConfig(optimizer="sgd")


def test_prompt_offset_ids_and_value():
    enc = ToyEncoder()
    label = np.zeros(enc.token_dim, dtype=np.float32)
    a = PromptState(tokens=_tokens(d=enc.token_dim), label=label, anchor_index=0)
    b = PromptState(tokens=_tokens(d=enc.token_dim, seed=3), label=label, anchor_index=2)
    off = prompt_offset(a, b, enc)
    assert off.from_id == "prompt_0" and off.to_id == "prompt_2"
    e_a = enc.encode_tokens(a.full_sequence()).values.astype(np.float64)
    e_b = enc.encode_tokens(b.full_sequence()).values.astype(np.float64)
    np.testing.assert_allclose(off.values, (e_b - e_a).astype(np.float32), rtol=1e-6)


def _learning_setup(seed=0):
    enc = ToyEncoder(seed=seed)
    gen_prev = ToyAffineGenerator.from_seed(seed, 3, enc.image_dim, weight_scale=0.2)
    gen_cur = gen_prev.clone()
    gen_cur.set_parameters(
        gen_cur.parameters
        + np.concatenate([np.zeros(gen_cur.image_dim * 3),
                          np.linspace(0.5, 1.5, gen_cur.image_dim)]).astype(np.float32))
    # the new anchor's label differs from the previous prompt's, as in a real
    # run where the label slot advances with training progress
    label = enc.label_token("target style")
    prev = init_prompt(4, enc.tokenize("a photo of a"), enc.label_token("source style"),
                       anchor_index=0)
    latents = gen_prev.sample_latents(np.random.default_rng(seed), 64)
    return enc, gen_prev, gen_cur, prev, label, latents


def test_learn_anchor_prompt_reduces_loss_and_freezes_label():
    enc, gen_prev, gen_cur, prev, label, latents = _learning_setup()
    cfg = PromptLearnConfig(k_iter=60, lr=0.01, n_pairs=64)
    result = learn_anchor_prompt(gen_prev, gen_cur, prev, cfg, latents, enc, label,
                                 anchor_index=1)
    assert result.final_loss < result.initial_loss
    assert result.prompt.anchor_index == 1
    assert result.prompt.label.tobytes() == label.tobytes()
    # the reported offsets are consistent with the learned prompt
    reported = prompt_offset(prev, result.prompt, enc)
    np.testing.assert_allclose(result.prompt_offset,
                               reported.values.astype(np.float64), atol=1e-6)
    assert result.image_bbox_lo.shape == (enc.dim,)
    assert np.all(result.image_bbox_lo <= result.image_bbox_hi)


def test_learn_anchor_prompt_is_deterministic():
    enc, gen_prev, gen_cur, prev, label, latents = _learning_setup(seed=1)
    cfg = PromptLearnConfig(k_iter=20, lr=0.01, n_pairs=64)
    a = learn_anchor_prompt(gen_prev, gen_cur, prev, cfg, latents, enc, label, 1)
    b = learn_anchor_prompt(gen_prev, gen_cur, prev, cfg, latents, enc, label, 1)
    assert a.prompt.tokens.tobytes() == b.prompt.tokens.tobytes()
    assert a.final_loss == b.final_loss


def test_learn_anchor_prompt_warm_start_matches_default_fallback():
    enc, gen_prev, gen_cur, prev, label, latents = _learning_setup(seed=2)
    cfg = PromptLearnConfig(k_iter=5, lr=0.01, n_pairs=64)
    cold = learn_anchor_prompt(gen_prev, gen_cur, prev, cfg, latents, enc, label, 1)
    # passing the previous prompt's tokens explicitly is the default
    explicit = learn_anchor_prompt(gen_prev, gen_cur, prev, cfg, latents, enc, label, 1,
                                   init_tokens=prev.tokens)
    assert explicit.prompt.tokens.tobytes() == cold.prompt.tokens.tobytes()
    warm = learn_anchor_prompt(gen_prev, gen_cur, prev, cfg, latents, enc, label, 1,
                               init_tokens=cold.prompt.tokens)
    assert warm.prompt.tokens.tobytes() != cold.prompt.tokens.tobytes()
    assert warm.initial_loss <= cold.initial_loss


def test_learn_anchor_prompt_rejects_zero_image_offset():
    enc, gen_prev, _, prev, label, latents = _learning_setup(seed=3)
    cfg = PromptLearnConfig(k_iter=5, n_pairs=64)
    with pytest.raises(ZeroImageOffsetError):
        learn_anchor_prompt(gen_prev, gen_prev.snapshot(), prev, cfg, latents, enc,
                            label, anchor_index=1)


def test_prompt_store_load_round_trip(tmp_path):
    label = np.linspace(-1.0, 1.0, 6).astype(np.float32)
    prompt = PromptState(tokens=_tokens(seed=4), label=label, anchor_index=3)
    prompt_store(prompt, tmp_path, t_i=300, p_i=0.3)
    loaded, meta = prompt_load(tmp_path)
    assert meta == {"anchor_index": 3, "t_i": 300, "p_i": 0.3, "M": 4, "d": 6}
    assert loaded.anchor_index == 3
    assert loaded.tokens.tobytes() == prompt.tokens.tobytes()
    assert loaded.label.tobytes() == prompt.label.tobytes()
