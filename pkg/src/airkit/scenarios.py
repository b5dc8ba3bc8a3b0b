"""Constructed spaces with known ground truth, for tests and demos.

Two families live here:

* SyntheticPairFamily — concept pairs whose text offset is the image offset
  rotated by an angle that grows linearly with concept distance, plus a
  fixed angular noise floor. Rank correlation between distance and
  misalignment is then genuinely controlled by the amplitude knob, which is
  what the misalignment-study properties exercise.

* the rotated-field adaptation space — a shared embedding space whose
  meaningful geometry lives in the leading coordinate plane. The target
  text sits exactly on the target image mean but the text field twists
  increasingly with in-plane distance from the target: the source text
  offset deviates from the true image offset by a configurable angle (40
  degrees by default) while offsets measured from points nearer the target
  deviate proportionally less. Fixed-direction training inherits the full
  bias; anchor-refined training can shed most of it. A deviation of 0
  gives the benign variant used for convergence and prompt-validity
  checks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .analysis import ConceptRecord, StudyConfig
from .embeddings import DTYPE, EmbeddingVector
from .errors import ConfigError, DimMismatchError, RangeError, ShapeMismatchError
from .generators import ToyAffineGenerator, ToyMeanShiftGenerator

# ---------------------------------------------------------------------------
# synthetic misalignment family


def _random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _unit_orthogonal(rng: np.random.Generator, u: np.ndarray) -> np.ndarray:
    while True:
        w = rng.standard_normal(u.shape[0])
        w -= np.dot(w, u) * u
        n = np.linalg.norm(w)
        if n > 1e-6:
            return w / n


@dataclass(frozen=True)
class SyntheticPairFamily:
    """Concept-pair generator with distance-proportional text-offset rotation.

    For each pair: two concept means separated by a random angle (their
    cosine distance is delta), images jittered around each mean, and a text
    offset equal to the true mean offset rotated in-plane by
    ``amplitude * delta + base_noise * eta`` radians (eta standard normal).
    """

    amplitude: float
    base_noise: float = 0.02
    dim: int = 16
    images_per_concept: int = 12
    image_jitter: float = 0.01
    angle_range: tuple[float, float] = (0.15, 1.2)
    seed: int = 0

    def __post_init__(self):
        if self.amplitude < 0:
            raise RangeError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.dim < 2:
            raise RangeError(f"need dim >= 2 to rotate offsets, got {self.dim}")

    def _make_pair(self, rng: np.random.Generator, k: int
                   ) -> tuple[ConceptRecord, ConceptRecord]:
        c_a = _random_unit(rng, self.dim)
        e2 = _unit_orthogonal(rng, c_a)
        phi = rng.uniform(*self.angle_range)
        c_b = np.cos(phi) * c_a + np.sin(phi) * e2
        delta = 1.0 - np.cos(phi)

        n = self.images_per_concept
        images_a = c_a[None, :] + self.image_jitter * rng.standard_normal((n, self.dim))
        images_b = c_b[None, :] + self.image_jitter * rng.standard_normal((n, self.dim))

        base = c_b - c_a
        u_hat = base / np.linalg.norm(base)
        w_hat = _unit_orthogonal(rng, u_hat)
        psi = self.amplitude * delta + self.base_noise * rng.standard_normal()
        text_offset = np.linalg.norm(base) * (np.cos(psi) * u_hat + np.sin(psi) * w_hat)

        rec_a = ConceptRecord(label=f"pair{k}_a", image_embeddings=images_a,
                              text_embedding=c_a)
        rec_b = ConceptRecord(label=f"pair{k}_b", image_embeddings=images_b,
                              text_embedding=c_a + text_offset)
        return rec_a, rec_b

    def sample_pairs(self, cfg: StudyConfig) -> list[tuple[ConceptRecord, ConceptRecord]]:
        pairs = []
        for k in range(cfg.n_pairs):
            rng = np.random.default_rng([self.seed, cfg.seed, k])
            pairs.append(self._make_pair(rng, k))
        return pairs


# ---------------------------------------------------------------------------
# rotated-field adaptation space


def _rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta, dtype=np.float64), np.sin(theta, dtype=np.float64)
    return np.array([[c, -s], [s, c]], dtype=np.float64)


class RotatedFieldEncoder:
    """Near-identity image encoder plus a lookup text encoder on a twisted field.

    The shared space is R^dim. All named points (source mean, target) and
    the text-side twist live in the leading coordinate plane; the remaining
    coordinates carry only generator spread and texture, giving per-sample
    offset norms a concentration floor the way high-dimensional embedding
    spaces do, so cosine-loss gradients stay bounded.

    Images embed through psi(x) = x + tex(x) where tex is a fixed
    micro-wavelength random Fourier field (a few incommensurate plane waves
    per output coordinate): a bounded, deterministic noise floor standing
    in for sub-resolution encoder detail. Its wavelength sits far below
    one optimizer step, so any two distinct generator states already see
    mutually decorrelated texture. The texture matters for training
    dynamics and for nothing else:

    * per-sample offsets pick up a bounded pseudo-random component, so a
      common displacement can only approach the text direction by growing
      large enough to dilute the floor; that keeps a live,
      forward-pointing cosine-loss gradient at every scale. Under an
      exactly linear E_I the loss is scale-invariant in the displacement
      (purely angular gradient) and training stalls in a random walk
      instead of marching.
    * gradients treat the texture as fixed additive noise: image_vjp is
      straight-through (identity), the standard estimator for
      quantization-like measurement components; differentiating through
      micro-scale detail would only inject amplified chatter.
    * set means are texture-free: the output spread covers many texture
      wavelengths, so the waves average to ~0 and every mean-based
      measurement (distances, offsets, ground-truth directions) sees plain
      positions.

    Tokens are raw points of the shared space. A sequence pools with
    geometric position weights (later rows weigh more, mirroring how
    sentence-final pooling makes contrastive text encoders follow the
    trailing content word) and the pooled point is read out through the
    twisted field phi(x) = target + R(theta(x)) (x - target), which rotates
    in the leading plane by theta(x) proportional to the in-plane distance
    |x - target|. The readout is where the misalignment lives: every
    encoded text or prompt carries the twist of wherever its pooled content
    sits, so offsets measured between faraway prompts are rotated hard
    while offsets measured near the target are nearly honest. The target
    text pools to the target point, where the field is the identity.

    Two asymmetries between the final slot and the leading slots mirror
    real contrastive text encoders:

    * the final row (the content/label slot) is read faithfully, while
      leading rows are norm-clipped to a ball of radius context_radius
      before pooling. Token embeddings in trained encoders live on a
      bounded shell, so learnable context can modulate the sentence
      encoding but cannot impersonate the content word, no matter how far
      an optimizer drags it.
    * the final row also dominates the pooling weights. A prompt's label
      slot therefore drags the pooled point materially between anchors
      while the learned context tokens steer the encoding offset's
      direction within their bounded influence.
    """

    trainable = False
    reentrant = True

    def __init__(self, target: np.ndarray, source_mean: np.ndarray, deviation_deg: float,
                 source_text: str, target_text: str, init_text: str,
                 name: str = "toy_field", texture_amp: float = 0.15,
                 texture_freq: float = 9000.0, pool_decay: float = 0.2,
                 context_radius: float = 0.75, n_waves: int = 10, texture_seed: int = 7):
        self.name = name
        self.target = np.asarray(target, dtype=np.float64)
        self.source_mean = np.asarray(source_mean, dtype=np.float64)
        if self.target.ndim != 1 or self.target.shape[0] < 2 or \
                self.target.shape != self.source_mean.shape:
            raise ShapeMismatchError(
                f"target {self.target.shape} and source mean {self.source_mean.shape} "
                f"must be equal-length vectors of dim >= 2")
        self.dim = int(self.target.shape[0])
        self.image_dim = self.dim
        self.token_dim = self.dim
        self.deviation_rad = float(np.deg2rad(deviation_deg))
        self.source_text = source_text
        self.target_text = target_text
        self.init_text = init_text
        self.texture_amp = float(texture_amp)
        self.texture_freq = float(texture_freq)
        self.pool_decay = float(pool_decay)
        self.context_radius = float(context_radius)
        self.n_waves = int(n_waves)
        self.texture_seed = int(texture_seed)
        if not 0 < self.pool_decay <= 1:
            raise RangeError(f"pool_decay must be in (0, 1], got {pool_decay}")
        if self.context_radius <= 0:
            raise RangeError(f"context_radius must be positive, got {context_radius}")
        if self.texture_amp < 0 or self.texture_freq < 0:
            raise RangeError(
                f"texture_amp and texture_freq must be >= 0, got "
                f"{texture_amp}, {texture_freq}")
        if self.n_waves < 1:
            raise RangeError(f"n_waves must be >= 1, got {n_waves}")
        self._source_scale = float(np.linalg.norm((self.source_mean - self.target)[:2]))
        if self._source_scale < 1e-9:
            raise ConfigError("source mean and target coincide in the leading plane")
        rng = np.random.default_rng([self.texture_seed, 0x7E8])
        directions = rng.standard_normal((self.n_waves, self.dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        radii = self.texture_freq * rng.uniform(0.7, 1.3, self.n_waves)
        self._wave_k = radii[:, None] * directions
        self._wave_phase = rng.uniform(0.0, 2.0 * np.pi, self.n_waves)
        # per-wave output amplitudes, rms of tex per coordinate = texture_amp
        raw = rng.uniform(0.5, 1.5, (self.n_waves, self.dim))
        raw *= rng.choice([-1.0, 1.0], (self.n_waves, self.dim))
        scale = np.sqrt(2.0) * self.texture_amp / np.sqrt((raw**2).sum(axis=0))
        self._wave_c = raw * scale[None, :]

    def field(self, x: np.ndarray) -> np.ndarray:
        """Text-side readout of a pooled point."""
        x = np.asarray(x, dtype=np.float64)
        r = x - self.target
        theta = self.deviation_rad * float(np.linalg.norm(r[:2])) / self._source_scale
        out = x.copy()
        out[:2] = self.target[:2] + _rotation(theta) @ r[:2]
        return out

    def _field_plane_jacobian(self, x: np.ndarray) -> np.ndarray:
        """2x2 Jacobian of the in-plane readout at pooled point x."""
        r = np.asarray(x, dtype=np.float64)[:2] - self.target[:2]
        rho = float(np.linalg.norm(r))
        k = self.deviation_rad / self._source_scale
        if rho < 1e-12:
            return np.eye(2)
        theta = k * rho
        c, s = np.cos(theta), np.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        drot = np.array([[-s, -c], [c, -s]])
        return rot + k * np.outer(drot @ r, r / rho)

    # -- text ---------------------------------------------------------------

    def tokenize(self, text: str) -> np.ndarray:
        if text == self.source_text:
            rows = [self.source_mean]
        elif text == self.target_text:
            rows = [self.target]
        elif text == self.init_text:
            rows = [self.source_mean] * 4
        else:
            raise ConfigError(f"scenario tokenizer does not know the text {text!r}")
        return np.stack(rows).astype(DTYPE)

    def label_token(self, text: str) -> np.ndarray:
        return self.tokenize(text).astype(np.float64).mean(axis=0).astype(DTYPE)

    def _pool_weights(self, n_rows: int) -> np.ndarray:
        w = self.pool_decay ** np.arange(n_rows - 1, -1, -1, dtype=np.float64)
        return w / w.sum()

    def _clip_context(self, tokens: np.ndarray) -> np.ndarray:
        """Norm-clip every row but the last into the context ball."""
        out = tokens.copy()
        norms = np.linalg.norm(out[:-1], axis=1)
        over = norms > self.context_radius
        if np.any(over):
            out[:-1][over] *= (self.context_radius / norms[over])[:, None]
        return out

    def _pooled_point(self, tokens: np.ndarray) -> np.ndarray:
        w = self._pool_weights(tokens.shape[0])
        return w @ self._clip_context(tokens.astype(np.float64))

    def encode_tokens(self, tokens: np.ndarray) -> EmbeddingVector:
        tokens = np.asarray(tokens, dtype=DTYPE)
        if tokens.ndim != 2 or tokens.shape[0] == 0 or tokens.shape[1] != self.dim:
            raise ShapeMismatchError(
                f"expected (n>=1, {self.dim}) token matrix, got {tokens.shape}")
        return EmbeddingVector(self.field(self._pooled_point(tokens)))

    def encode_text(self, text: str) -> EmbeddingVector:
        return self.encode_tokens(self.tokenize(text))

    def tokens_vjp(self, tokens: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        tokens = np.asarray(tokens, dtype=DTYPE)
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != (self.dim,):
            raise DimMismatchError(
                f"upstream must have shape ({self.dim},), got {upstream.shape}")
        w = self._pool_weights(tokens.shape[0])
        pooled = self._pooled_point(tokens)
        pulled = upstream.copy()
        pulled[:2] = self._field_plane_jacobian(pooled).T @ upstream[:2]
        rows = w[:, None] * pulled[None, :]
        # clipped rows only pass the component tangent to the context ball
        raw = tokens.astype(np.float64)
        for j in range(tokens.shape[0] - 1):
            norm = float(np.linalg.norm(raw[j]))
            if norm > self.context_radius:
                unit = raw[j] / norm
                radial = np.dot(rows[j], unit)
                rows[j] = (self.context_radius / norm) * (rows[j] - radial * unit)
        return rows

    # -- images -------------------------------------------------------------

    def encode_images(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=DTYPE)
        if images.ndim != 2 or images.shape[1] != self.dim:
            raise ShapeMismatchError(
                f"expected (n, {self.dim}) image batch, got {images.shape}")
        x = images.astype(np.float64)
        # tex_j(x) = sum_k c_kj sin(k_k . x + p_k)
        waves = np.sin(x @ self._wave_k.T + self._wave_phase[None, :])
        return (x + waves @ self._wave_c).astype(DTYPE)

    def image_vjp(self, images: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=np.float64)
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != images.shape:
            raise DimMismatchError(
                f"upstream shape {upstream.shape} does not match images {images.shape}")
        # straight-through: the texture is treated as fixed additive noise
        return upstream.copy()


@dataclass(frozen=True)
class AdaptationScenario:
    """Everything needed to run and judge one constructed adaptation problem."""

    name: str
    encoder: RotatedFieldEncoder
    source_generator: ToyAffineGenerator
    real_target_images: np.ndarray
    target_point: np.ndarray
    source_mean: np.ndarray
    source_text: str
    target_text: str
    init_text: str
    params: dict

    def reference_embeddings(self) -> np.ndarray:
        return self.encoder.encode_images(self.real_target_images)


SOURCE_TEXT = "source domain"
TARGET_TEXT = "target domain"
INIT_TEXT = "A photo of a"


def build_rotated_scenario(
    seed: int = 0,
    deviation_deg: float = 40.0,
    distance: float = 2.0,
    direction_deg: float = 115.0,
    weight_scale: float = 0.25,
    dim: int = 12,
    latent_dim: int = 4,
    n_reference: int = 256,
    reference_jitter: float = 0.05,
    texture_amp: float = 0.15,
    texture_freq: float = 9000.0,
    pool_decay: float = 0.2,
    context_radius: float = 0.75,
    n_waves: int = 10,
    texture_seed: int = 7,
) -> AdaptationScenario:
    """The constructed misalignment space (deviation_deg=0 gives the benign twin)."""
    if dim < 2:
        raise RangeError(f"dim must be >= 2, got {dim}")
    source_mean = np.zeros(dim, dtype=np.float64)
    source_mean[0] = 0.25
    ray = np.deg2rad(direction_deg)
    target = source_mean.copy()
    target[0] += distance * np.cos(ray)
    target[1] += distance * np.sin(ray)

    encoder = RotatedFieldEncoder(
        target=target, source_mean=source_mean, deviation_deg=deviation_deg,
        source_text=SOURCE_TEXT, target_text=TARGET_TEXT, init_text=INIT_TEXT,
        texture_amp=texture_amp, texture_freq=texture_freq, pool_decay=pool_decay,
        context_radius=context_radius, n_waves=n_waves, texture_seed=texture_seed,
    )
    rng = np.random.default_rng([seed, 0x5CE])
    weight = weight_scale * rng.standard_normal((dim, latent_dim))
    # mean-shift: spread stays fixed while training moves the output mean
    generator = ToyMeanShiftGenerator(weight, source_mean.astype(DTYPE),
                                      gen_id="scenario-source")
    references = target[None, :] + reference_jitter * rng.standard_normal((n_reference, dim))

    return AdaptationScenario(
        name="rotated_text",
        encoder=encoder,
        source_generator=generator,
        real_target_images=references.astype(DTYPE),
        target_point=target,
        source_mean=source_mean,
        source_text=SOURCE_TEXT,
        target_text=TARGET_TEXT,
        init_text=INIT_TEXT,
        params={
            "seed": int(seed),
            "deviation_deg": float(deviation_deg),
            "distance": float(distance),
            "direction_deg": float(direction_deg),
            "weight_scale": float(weight_scale),
            "dim": int(dim),
            "latent_dim": int(latent_dim),
            "n_reference": int(n_reference),
            "reference_jitter": float(reference_jitter),
            "texture_amp": float(texture_amp),
            "texture_freq": float(texture_freq),
            "pool_decay": float(pool_decay),
            "context_radius": float(context_radius),
            "n_waves": int(n_waves),
            "texture_seed": int(texture_seed),
        },
    )


def build_scenario(name: str, **params) -> AdaptationScenario:
    if name == "rotated_text":
        return build_rotated_scenario(**params)
    if name == "benign":
        params.setdefault("deviation_deg", 0.0)
        scenario = build_rotated_scenario(**params)
        return replace(scenario, name="benign")
    raise ConfigError(f"unknown scenario {name!r}")
