"""Encoder backend contract and the seeded toy encoder used by tests.

A backend bundles the image encoder E_I and the text encoder E_T that share
one output space. "Images" are whatever the paired generator emits; the toy
backend consumes plain vectors so the whole pipeline runs without any ML
framework. Real CLIP-style plugins implement the same protocol and delegate
the two vjp hooks to their autodiff engine.

Backends are frozen: nothing in this package ever updates encoder weights.
A backend must be callable from one worker at a time unless it sets
``reentrant = True`` (the toy one is reentrant: it only does matmuls on
constant matrices).
"""

from __future__ import annotations

import zlib
from typing import Protocol, runtime_checkable

import numpy as np

from .embeddings import DTYPE, EmbeddingVector
from .errors import DimMismatchError, ShapeMismatchError


@runtime_checkable
class EncoderBackend(Protocol):
    """What the engine needs from an embedding backend.

    Attributes
    ----------
    name: short identifier used in reports ("toy", "clip-vit-b32", ...).
    dim: dimension of the shared embedding space.
    image_dim: dimension of the image inputs this backend accepts.
    token_dim: dimension of text token vectors.
    reentrant: True if encode calls are safe from concurrent workers.
    trainable: always False here; encoders are frozen by contract.
    """

    name: str
    dim: int
    image_dim: int
    token_dim: int
    reentrant: bool
    trainable: bool

    def encode_images(self, images: np.ndarray) -> np.ndarray:
        """(batch, image_dim) -> (batch, dim) float32."""
        ...

    def encode_text(self, text: str) -> EmbeddingVector:
        ...

    def tokenize(self, text: str) -> np.ndarray:
        """(n_tokens, token_dim) float32 token vectors for a description."""
        ...

    def encode_tokens(self, tokens: np.ndarray) -> EmbeddingVector:
        """Encode a token sequence directly, bypassing tokenization."""
        ...

    def label_token(self, text: str) -> np.ndarray:
        """Single (token_dim,) label vector standing for a description."""
        ...

    def image_vjp(self, images: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """d(upstream . encode_images)/d images, shape (batch, image_dim)."""
        ...

    def tokens_vjp(self, tokens: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """d(upstream . encode_tokens)/d tokens, shape (n_tokens, token_dim)."""
        ...


def _check_images(images: np.ndarray, image_dim: int) -> np.ndarray:
    images = np.asarray(images, dtype=DTYPE)
    if images.ndim == 1:
        images = images[None, :]
    if images.ndim != 2 or images.shape[1] != image_dim:
        raise ShapeMismatchError(
            f"expected image batch of shape (n, {image_dim}), got {images.shape}"
        )
    return images


def _check_tokens(tokens: np.ndarray, token_dim: int) -> np.ndarray:
    tokens = np.asarray(tokens, dtype=DTYPE)
    if tokens.ndim != 2 or tokens.shape[0] == 0 or tokens.shape[1] != token_dim:
        raise ShapeMismatchError(
            f"expected token matrix of shape (n>=1, {token_dim}), got {tokens.shape}"
        )
    return tokens


class ToyEncoder:
    """Two fixed seeded linear maps into a shared low-dimensional space.

    E_I(x) = A x for image vectors x; text is tokenized into per-word
    vectors from a seeded hash table, mean-pooled, and mapped by E_T(u) = B u.
    Deterministic for a fixed seed, frozen, and linear, so both vjp hooks
    are plain transposed matmuls.
    """

    trainable = False
    reentrant = True

    def __init__(self, seed: int = 0, dim: int = 8, image_dim: int = 12, token_dim: int = 6,
                 name: str = "toy"):
        self.name = name
        self.dim = int(dim)
        self.image_dim = int(image_dim)
        self.token_dim = int(token_dim)
        self.seed = int(seed)
        rng = np.random.default_rng([int(seed), 0xE0C0DE])
        a = rng.standard_normal((self.dim, self.image_dim)) / np.sqrt(self.image_dim)
        b = rng.standard_normal((self.dim, self.token_dim)) / np.sqrt(self.token_dim)
        self._image_map = a.astype(DTYPE)
        self._text_map = b.astype(DTYPE)
        self._image_map.setflags(write=False)
        self._text_map.setflags(write=False)

    # -- text ---------------------------------------------------------------

    def _word_vector(self, word: str) -> np.ndarray:
        key = zlib.crc32(word.lower().encode("utf-8"))
        rng = np.random.default_rng([self.seed, 0x7E87, key])
        return (rng.standard_normal(self.token_dim) / np.sqrt(self.token_dim)).astype(DTYPE)

    def tokenize(self, text: str) -> np.ndarray:
        words = text.split()
        if not words:
            raise ShapeMismatchError("cannot tokenize empty text")
        return np.stack([self._word_vector(w) for w in words])

    def label_token(self, text: str) -> np.ndarray:
        return self.tokenize(text).astype(np.float64).mean(axis=0).astype(DTYPE)

    def encode_tokens(self, tokens: np.ndarray) -> EmbeddingVector:
        tokens = _check_tokens(tokens, self.token_dim)
        pooled = tokens.astype(np.float64).mean(axis=0)
        return EmbeddingVector(self._text_map.astype(np.float64) @ pooled)

    def encode_text(self, text: str) -> EmbeddingVector:
        return self.encode_tokens(self.tokenize(text))

    def tokens_vjp(self, tokens: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        tokens = _check_tokens(tokens, self.token_dim)
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != (self.dim,):
            raise DimMismatchError(f"upstream must have shape ({self.dim},), got {upstream.shape}")
        per_token = (self._text_map.astype(np.float64).T @ upstream) / tokens.shape[0]
        return np.tile(per_token, (tokens.shape[0], 1))

    # -- images -------------------------------------------------------------

    def encode_images(self, images: np.ndarray) -> np.ndarray:
        images = _check_images(images, self.image_dim)
        out = images.astype(np.float64) @ self._image_map.astype(np.float64).T
        return out.astype(DTYPE)

    def image_vjp(self, images: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        images = _check_images(images, self.image_dim)
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != (images.shape[0], self.dim):
            raise DimMismatchError(
                f"upstream must have shape {(images.shape[0], self.dim)}, got {upstream.shape}"
            )
        return upstream @ self._image_map.astype(np.float64)
