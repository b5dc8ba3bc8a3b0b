"""Anchor prompts: learnable context tokens plus a fixed label token.

A prompt is M trainable token vectors followed by one label slot. The label
is pinned to a convex combination of the source and target label tokens
weighted by training progress, and is never touched by the optimizer; only
the M context tokens move. Anchors are learned strictly one after another
(each depends on its predecessor's frozen prompt), so there is no
concurrent-learning path.

learn_anchor_prompt optimizes the context tokens so that the prompt's
encoding offset from the previous anchor's prompt points the same way as
the observed mean image offset between the two anchor generators. The image
offset is computed once, before the optimization loop, over a shared latent
batch; the previous prompt is frozen, so its encoding is hoisted too.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends import EncoderBackend
from .embeddings import DTYPE, ZERO_NORM_THRESHOLD, OffsetVector, mean_rows
from .errors import (
    BadInitError,
    DimMismatchError,
    RangeError,
    ShapeMismatchError,
    ZeroImageOffsetError,
)
from .fileio import atomic_write_bytes, atomic_write_json
from .generators import GeneratorHandle
from .losses import direction_loss, loss_gradient
from .optim import Adam


@dataclass(frozen=True)
class PromptState:
    """M learnable tokens + one label token, attached to anchor anchor_index."""

    tokens: np.ndarray
    label: np.ndarray
    anchor_index: int
    frozen: bool = True

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=DTYPE)
        label = np.asarray(self.label, dtype=DTYPE)
        if tokens.ndim != 2 or tokens.shape[0] < 1:
            raise BadInitError(f"prompt needs a (M>=1, d) token matrix, got {tokens.shape}")
        if label.ndim != 1 or label.shape[0] != tokens.shape[1]:
            raise BadInitError(
                f"label dim {label.shape} does not match token dim {tokens.shape[1]}"
            )
        if not (np.all(np.isfinite(tokens)) and np.all(np.isfinite(label))):
            raise BadInitError("prompt tokens/label contain non-finite values")
        tokens = tokens.copy()
        label = label.copy()
        tokens.setflags(write=False)
        label.setflags(write=False)
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "label", label)

    @property
    def token_count(self) -> int:
        return int(self.tokens.shape[0])

    @property
    def dim(self) -> int:
        return int(self.tokens.shape[1])

    def full_sequence(self) -> np.ndarray:
        """Token matrix fed to the text encoder: M context slots, label last."""
        return np.vstack([self.tokens, self.label[None, :]])


@dataclass(frozen=True)
class PromptLearnConfig:
    k_iter: int = 200
    lr: float = 0.002
    n_pairs: int = 1000
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.k_iter < 1:
            raise RangeError(f"k_iter must be >= 1, got {self.k_iter}")
        if self.n_pairs < 1:
            raise RangeError(f"n_pairs must be >= 1, got {self.n_pairs}")
        if self.optimizer != "adam":
            raise RangeError(f"unsupported prompt optimizer {self.optimizer!r}")


def init_prompt(m: int, init_text_tokens: np.ndarray, label: np.ndarray,
                anchor_index: int = 0) -> PromptState:
    """Seed a prompt's context slots from a tokenized init text.

    Shorter init texts pad by repeating the last token; longer ones are
    truncated to the first m tokens.
    """
    if m < 1:
        raise RangeError(f"prompt needs at least one token, got m={m}")
    tokens = np.asarray(init_text_tokens, dtype=DTYPE)
    if tokens.ndim != 2 or tokens.shape[0] == 0:
        raise BadInitError(f"init text tokens must be a non-empty matrix, got {tokens.shape}")
    label = np.asarray(label, dtype=DTYPE)
    if label.ndim != 1 or label.shape[0] != tokens.shape[1]:
        raise BadInitError(
            f"label dim {label.shape} does not match init token dim {tokens.shape[1]}"
        )
    if tokens.shape[0] >= m:
        tokens = tokens[:m]
    else:
        pad = np.tile(tokens[-1][None, :], (m - tokens.shape[0], 1))
        tokens = np.vstack([tokens, pad])
    return PromptState(tokens=tokens, label=label, anchor_index=anchor_index, frozen=True)


def interpolate_label(y_source: np.ndarray, y_target: np.ndarray, p: float) -> np.ndarray:
    """(1 - p) * Y_source + p * Y_target, float32 result."""
    y_source = np.asarray(y_source, dtype=DTYPE)
    y_target = np.asarray(y_target, dtype=DTYPE)
    if y_source.shape != y_target.shape or y_source.ndim != 1:
        raise DimMismatchError(
            f"label shapes differ: {y_source.shape} vs {y_target.shape}"
        )
    if not (0.0 <= p <= 1.0):
        raise RangeError(f"interpolation progress must be in [0, 1], got {p}")
    blended = (1.0 - p) * y_source.astype(np.float64) + p * y_target.astype(np.float64)
    return blended.astype(DTYPE)


def prompt_offset(p_prev: PromptState, p_cur: PromptState,
                  text_encoder: EncoderBackend) -> OffsetVector:
    """Encoding offset from the previous prompt to the current one."""
    e_prev = text_encoder.encode_tokens(p_prev.full_sequence())
    e_cur = text_encoder.encode_tokens(p_cur.full_sequence())
    return OffsetVector(
        e_cur.values.astype(np.float64) - e_prev.values.astype(np.float64),
        from_id=f"prompt_{p_prev.anchor_index}",
        to_id=f"prompt_{p_cur.anchor_index}",
    )


@dataclass(frozen=True)
class PromptLearnResult:
    prompt: PromptState
    initial_loss: float
    final_loss: float
    image_offset: np.ndarray
    prompt_offset: np.ndarray
    image_bbox_lo: np.ndarray
    image_bbox_hi: np.ndarray


def learn_anchor_prompt(
    gen_prev: GeneratorHandle,
    gen_cur: GeneratorHandle,
    p_prev: PromptState,
    cfg: PromptLearnConfig,
    latents: np.ndarray,
    encoder: EncoderBackend,
    label: np.ndarray,
    anchor_index: int,
    init_tokens: np.ndarray | None = None,
) -> PromptLearnResult:
    """Optimize a new prompt so its encoding offset tracks the image offset.

    The image offset is the difference of mean image embeddings over the
    shared ``latents`` (equal to the mean of per-pair offsets, since the
    mean is linear); it is computed once, before the loop. Context tokens
    are re-initialized from ``init_tokens`` (falling back to the previous
    prompt's context) and updated by Adam for k_iter steps; the label slot
    receives zero gradient and is asserted unchanged every step.
    """
    latents = np.asarray(latents, dtype=DTYPE)
    if latents.ndim != 2:
        raise ShapeMismatchError(f"latents must be (n_pairs, latent_dim), got {latents.shape}")

    emb_prev = encoder.encode_images(gen_prev.generate(latents))
    emb_cur = encoder.encode_images(gen_cur.generate(latents))
    image_offset = mean_rows(emb_cur) - mean_rows(emb_prev)
    if float(np.linalg.norm(image_offset)) < ZERO_NORM_THRESHOLD:
        raise ZeroImageOffsetError(
            f"anchor {anchor_index}: mean image offset is numerically zero"
        )
    bbox_lo = emb_cur.min(axis=0).astype(np.float64)
    bbox_hi = emb_cur.max(axis=0).astype(np.float64)

    if init_tokens is None:
        init_tokens = p_prev.tokens
    working = init_prompt(p_prev.token_count, init_tokens, label, anchor_index=anchor_index)
    tokens = working.tokens.copy()
    tokens.setflags(write=True)
    label_frozen = working.label
    label_bytes = label_frozen.tobytes()

    e_prev = encoder.encode_tokens(p_prev.full_sequence()).values.astype(np.float64)

    opt = Adam(tokens.size, lr=cfg.lr)
    m = tokens.shape[0]
    initial_loss = None
    final_loss = None
    for _ in range(cfg.k_iter):
        seq = np.vstack([tokens, label_frozen[None, :]])
        e_cur = encoder.encode_tokens(seq).values.astype(np.float64)
        delta_p = e_cur - e_prev
        loss = direction_loss(image_offset[None, :], delta_p)
        if initial_loss is None:
            initial_loss = loss.value
        final_loss = loss.value
        grad_delta_p = loss_gradient(image_offset[None, :], delta_p, wrt="text_offset")
        token_grads = encoder.tokens_vjp(seq, grad_delta_p)
        flat = opt.step(tokens.ravel(), token_grads[:m].ravel())
        tokens = flat.reshape(m, -1)
        assert label_frozen.tobytes() == label_bytes, "label slot was mutated"

    seq = np.vstack([tokens, label_frozen[None, :]])
    e_final = encoder.encode_tokens(seq).values.astype(np.float64)
    learned = PromptState(tokens=tokens, label=label_frozen, anchor_index=anchor_index,
                          frozen=True)
    return PromptLearnResult(
        prompt=learned,
        initial_loss=float(initial_loss),
        final_loss=float(final_loss),
        image_offset=image_offset,
        prompt_offset=e_final - e_prev,
        image_bbox_lo=bbox_lo,
        image_bbox_hi=bbox_hi,
    )


def prompt_store(prompt: PromptState, directory: str | Path, t_i: int, p_i: float) -> None:
    """Persist tokens+label as a float32 blob with a JSON sidecar."""
    directory = Path(directory)
    blob = np.ascontiguousarray(prompt.full_sequence(), dtype="<f4").tobytes()
    atomic_write_bytes(directory / "prompt.bin", blob)
    atomic_write_json(directory / "prompt.json", {
        "anchor_index": prompt.anchor_index,
        "t_i": int(t_i),
        "p_i": float(p_i),
        "M": prompt.token_count,
        "d": prompt.dim,
    })


def prompt_load(directory: str | Path) -> tuple[PromptState, dict]:
    directory = Path(directory)
    meta = json.loads((directory / "prompt.json").read_text(encoding="utf-8"))
    m = int(meta["M"])
    d = int(meta["d"])
    flat = np.frombuffer((directory / "prompt.bin").read_bytes(), dtype="<f4")
    if flat.size != (m + 1) * d:
        raise ShapeMismatchError(
            f"prompt blob in {directory} has {flat.size} values, expected {(m + 1) * d}"
        )
    seq = flat.reshape(m + 1, d)
    prompt = PromptState(tokens=seq[:m], label=seq[m], anchor_index=int(meta["anchor_index"]),
                         frozen=True)
    return prompt, meta
