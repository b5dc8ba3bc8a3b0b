"""Generator plugin contract and the toy affine generator.

The training loop only ever sees this protocol: it samples latents, renders
image batches, reads/writes a flat parameter vector, and pulls loss
gradients back through ``parameter_vjp``. Real plugins (StyleGAN-family
networks, diffusion models with low-rank adapters) implement the same
surface and expose only their trainable weights as ``parameters``; the core
never inspects architecture.

The toy generators are affine: image = b + W w. The bias b lets the output
mean travel freely (a purely linear map cannot move its mean under a
symmetric latent prior), and W keeps per-coordinate batch variance nonzero
so the engine's degeneracy perturbation always has a usable scale. The
fully-trainable variant exposes W and b; the mean-shift variant trains b
alone over a frozen W, the way adapter-style fine-tuning trains a narrow
parameter subset of a large frozen network, which also keeps the output
spread constant while the mean travels.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .embeddings import DTYPE
from .errors import ConfigError, FrozenStateError, ShapeMismatchError
from .fileio import atomic_write_bytes, atomic_write_json


@runtime_checkable
class GeneratorHandle(Protocol):
    id: str
    latent_dim: int
    image_dim: int
    frozen: bool

    def sample_latents(self, rng: np.random.Generator, batch: int) -> np.ndarray: ...

    def generate(self, latents: np.ndarray) -> np.ndarray: ...

    @property
    def parameters(self) -> np.ndarray: ...

    def set_parameters(self, values: np.ndarray) -> None: ...

    def parameter_vjp(self, latents: np.ndarray, image_grads: np.ndarray) -> np.ndarray: ...

    def snapshot(self) -> "GeneratorHandle": ...

    def clone(self) -> "GeneratorHandle": ...


class ToyAffineGenerator:
    """image = b + W w with a standard-normal latent prior."""

    kind = "toy_affine"

    def __init__(self, weight: np.ndarray, bias: np.ndarray, gen_id: str = "",
                 frozen: bool = False):
        weight = np.asarray(weight, dtype=DTYPE)
        bias = np.asarray(bias, dtype=DTYPE)
        if weight.ndim != 2 or bias.ndim != 1 or weight.shape[0] != bias.shape[0]:
            raise ShapeMismatchError(
                f"weight {weight.shape} and bias {bias.shape} do not form an affine map"
            )
        self._weight = weight.copy()
        self._bias = bias.copy()
        self.image_dim = int(weight.shape[0])
        self.latent_dim = int(weight.shape[1])
        self.id = gen_id or f"toy-affine-{self.latent_dim}to{self.image_dim}"
        self.frozen = bool(frozen)

    @classmethod
    def from_seed(cls, seed: int, latent_dim: int, image_dim: int,
                  weight_scale: float = 0.05, bias=None) -> "ToyAffineGenerator":
        rng = np.random.default_rng([int(seed), 0x6E4])
        weight = weight_scale * rng.standard_normal((image_dim, latent_dim))
        if bias is None:
            bias = np.zeros(image_dim)
        return cls(weight, np.asarray(bias, dtype=DTYPE))

    def sample_latents(self, rng: np.random.Generator, batch: int) -> np.ndarray:
        return rng.standard_normal((batch, self.latent_dim)).astype(DTYPE)

    def generate(self, latents: np.ndarray) -> np.ndarray:
        latents = np.asarray(latents, dtype=DTYPE)
        if latents.ndim != 2 or latents.shape[1] != self.latent_dim:
            raise ShapeMismatchError(
                f"expected latents of shape (n, {self.latent_dim}), got {latents.shape}"
            )
        out = latents.astype(np.float64) @ self._weight.astype(np.float64).T
        out += self._bias.astype(np.float64)
        return out.astype(DTYPE)

    @property
    def parameters(self) -> np.ndarray:
        return np.concatenate([self._weight.ravel(), self._bias]).astype(DTYPE)

    @property
    def n_params(self) -> int:
        return self._weight.size + self._bias.size

    def set_parameters(self, values: np.ndarray) -> None:
        if self.frozen:
            raise FrozenStateError(f"generator {self.id} is a frozen snapshot")
        values = np.asarray(values, dtype=DTYPE)
        if values.shape != (self.n_params,):
            raise ShapeMismatchError(
                f"expected flat parameter vector of shape ({self.n_params},), got {values.shape}"
            )
        w_size = self._weight.size
        self._weight = values[:w_size].reshape(self._weight.shape).copy()
        self._bias = values[w_size:].copy()

    def parameter_vjp(self, latents: np.ndarray, image_grads: np.ndarray) -> np.ndarray:
        """Pull (batch, image_dim) gradients back to the flat parameter vector."""
        latents = np.asarray(latents, dtype=np.float64)
        image_grads = np.asarray(image_grads, dtype=np.float64)
        if image_grads.shape != (latents.shape[0], self.image_dim):
            raise ShapeMismatchError(
                f"image grads {image_grads.shape} do not match batch "
                f"{(latents.shape[0], self.image_dim)}"
            )
        grad_w = image_grads.T @ latents
        grad_b = image_grads.sum(axis=0)
        return np.concatenate([grad_w.ravel(), grad_b])

    def snapshot(self) -> "ToyAffineGenerator":
        return type(self)(self._weight, self._bias, gen_id=self.id, frozen=True)

    def clone(self) -> "ToyAffineGenerator":
        return type(self)(self._weight, self._bias, gen_id=self.id, frozen=False)


class ToyMeanShiftGenerator(ToyAffineGenerator):
    """image = b + W w with W fixed; only the output offset b trains.

    Latent-to-image mixing is inherited unchanged from construction, so the
    output spread stays put while the mean travels. Serialization still
    records the full affine state; ``parameters`` is just the trainable
    view, as with any partial-fine-tuning plugin.
    """

    kind = "toy_mean_shift"

    @property
    def parameters(self) -> np.ndarray:
        return self._bias.copy()

    @property
    def n_params(self) -> int:
        return self._bias.size

    def set_parameters(self, values: np.ndarray) -> None:
        if self.frozen:
            raise FrozenStateError(f"generator {self.id} is a frozen snapshot")
        values = np.asarray(values, dtype=DTYPE)
        if values.shape != (self.n_params,):
            raise ShapeMismatchError(
                f"expected flat parameter vector of shape ({self.n_params},), got {values.shape}"
            )
        self._bias = values.copy()

    def parameter_vjp(self, latents: np.ndarray, image_grads: np.ndarray) -> np.ndarray:
        latents = np.asarray(latents, dtype=np.float64)
        image_grads = np.asarray(image_grads, dtype=np.float64)
        if image_grads.shape != (latents.shape[0], self.image_dim):
            raise ShapeMismatchError(
                f"image grads {image_grads.shape} do not match batch "
                f"{(latents.shape[0], self.image_dim)}"
            )
        return image_grads.sum(axis=0)


_GENERATOR_KINDS = {
    ToyAffineGenerator.kind: ToyAffineGenerator,
    ToyMeanShiftGenerator.kind: ToyMeanShiftGenerator,
}


def generator_store(gen: ToyAffineGenerator, directory: str | Path) -> None:
    directory = Path(directory)
    meta = {
        "kind": gen.kind,
        "id": gen.id,
        "latent_dim": gen.latent_dim,
        "image_dim": gen.image_dim,
    }
    atomic_write_json(directory / "generator.json", meta)
    state = np.concatenate([gen._weight.ravel(), gen._bias])
    blob = np.ascontiguousarray(state, dtype="<f4").tobytes()
    atomic_write_bytes(directory / "generator.bin", blob)


def generator_load(directory: str | Path, frozen: bool = True) -> ToyAffineGenerator:
    directory = Path(directory)
    meta = json.loads((directory / "generator.json").read_text(encoding="utf-8"))
    cls = _GENERATOR_KINDS.get(meta.get("kind"))
    if cls is None:
        raise ConfigError(f"unknown generator kind {meta.get('kind')!r} in {directory}")
    flat = np.frombuffer((directory / "generator.bin").read_bytes(), dtype="<f4")
    image_dim = int(meta["image_dim"])
    latent_dim = int(meta["latent_dim"])
    if flat.size != image_dim * latent_dim + image_dim:
        raise ShapeMismatchError(
            f"generator blob in {directory} has {flat.size} values, expected "
            f"{image_dim * latent_dim + image_dim}"
        )
    weight = flat[: image_dim * latent_dim].reshape(image_dim, latent_dim)
    bias = flat[image_dim * latent_dim:]
    return cls(weight, bias, gen_id=str(meta["id"]), frozen=frozen)
