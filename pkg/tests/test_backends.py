import numpy as np
import pytest

from airkit.backends import EncoderBackend, ToyEncoder
from airkit.embeddings import EmbeddingVector
from airkit.errors import DimMismatchError, ShapeMismatchError

from oracles import central_difference, max_relative_error


def test_toy_encoder_satisfies_protocol():
    enc = ToyEncoder()
    assert isinstance(enc, EncoderBackend)
    assert enc.trainable is False
    assert enc.reentrant is True


def test_same_seed_same_maps():
    a = ToyEncoder(seed=3)
    b = ToyEncoder(seed=3)
    x = np.arange(12, dtype=np.float32)
    assert np.array_equal(a.encode_images(x), b.encode_images(x))
    assert np.array_equal(a.encode_text("hello world").values,
                          b.encode_text("hello world").values)
    c = ToyEncoder(seed=4)
    assert not np.array_equal(a.encode_images(x), c.encode_images(x))


def test_tokenize_shapes_and_case():
    enc = ToyEncoder()
    toks = enc.tokenize("a photo of a cat")
    assert toks.shape == (5, enc.token_dim)
    assert toks.dtype == np.float32
    # word vectors are case-insensitive
    assert np.array_equal(enc.tokenize("Cat"), enc.tokenize("cat"))
    with pytest.raises(ShapeMismatchError):
        enc.tokenize("   ")


def test_encode_text_is_mean_pooled_tokens():
    enc = ToyEncoder(seed=1)
    text = "sketch of a bird"
    via_tokens = enc.encode_tokens(enc.tokenize(text))
    direct = enc.encode_text(text)
    assert np.array_equal(direct.values, via_tokens.values)
    assert isinstance(direct, EmbeddingVector)
    assert direct.values.shape == (enc.dim,)


def test_label_token_is_token_mean():
    enc = ToyEncoder(seed=2)
    toks = enc.tokenize("two words")
    expected = toks.astype(np.float64).mean(axis=0).astype(np.float32)
    assert np.array_equal(enc.label_token("two words"), expected)


def test_encode_images_linear_and_batched():
    enc = ToyEncoder(seed=0)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, enc.image_dim)).astype(np.float32)
    out = enc.encode_images(x)
    assert out.shape == (4, enc.dim)
    assert out.dtype == np.float32
    doubled = enc.encode_images(2.0 * x)
    np.testing.assert_allclose(doubled, 2.0 * out, rtol=1e-6)
    single = enc.encode_images(x[0])
    assert single.shape == (1, enc.dim)
    np.testing.assert_allclose(single[0], out[0], rtol=1e-6)


def test_encode_images_rejects_bad_shapes():
    enc = ToyEncoder()
    with pytest.raises(ShapeMismatchError):
        enc.encode_images(np.ones((2, enc.image_dim + 1), dtype=np.float32))
    with pytest.raises(ShapeMismatchError):
        enc.encode_images(np.ones((2, 2, enc.image_dim), dtype=np.float32))


def test_encode_tokens_rejects_bad_shapes():
    enc = ToyEncoder()
    with pytest.raises(ShapeMismatchError):
        enc.encode_tokens(np.ones((0, enc.token_dim), dtype=np.float32))
    with pytest.raises(ShapeMismatchError):
        enc.encode_tokens(np.ones(enc.token_dim, dtype=np.float32))


def test_tokens_vjp_matches_finite_differences():
    enc = ToyEncoder(seed=5)
    rng = np.random.default_rng(5)
    tokens = rng.standard_normal((3, enc.token_dim)).astype(np.float32)
    upstream = rng.standard_normal(enc.dim)

    def f(tok):
        return float(upstream @ enc.encode_tokens(tok).values.astype(np.float64))

    analytic = enc.tokens_vjp(tokens, upstream)
    # the map is linear, so central differences are exact for any step;
    # a large step keeps the float32 forward rounding negligible
    fd = central_difference(f, tokens.astype(np.float64), h=0.5)
    assert max_relative_error(analytic, fd) < 1e-4
    with pytest.raises(DimMismatchError):
        enc.tokens_vjp(tokens, np.zeros(enc.dim + 1))


def test_image_vjp_matches_finite_differences():
    enc = ToyEncoder(seed=6)
    rng = np.random.default_rng(6)
    images = rng.standard_normal((2, enc.image_dim)).astype(np.float32)
    upstream = rng.standard_normal((2, enc.dim))

    def f(x):
        return float(np.sum(upstream * enc.encode_images(x).astype(np.float64)))

    analytic = enc.image_vjp(images, upstream)
    fd = central_difference(f, images.astype(np.float64), h=0.5)
    assert max_relative_error(analytic, fd) < 1e-4
    with pytest.raises(DimMismatchError):
        enc.image_vjp(images, upstream[:1])


def test_custom_dims_flow_through():
    enc = ToyEncoder(seed=0, dim=4, image_dim=7, token_dim=3, name="tiny")
    assert enc.name == "tiny"
    out = enc.encode_images(np.ones((2, 7), dtype=np.float32))
    assert out.shape == (2, 4)
    assert enc.tokenize("one two").shape == (2, 3)
