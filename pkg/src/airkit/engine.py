"""The anchor-refined adaptation loop.

One step, in order: draw a latent batch keyed by (seed, t); compute the
per-sample image offsets from the frozen source generator and the
directional loss against the fixed source-to-target text offset; at
scheduled iterations, snapshot the trainable generator as a new anchor and
learn its prompt; past the threshold iteration, add the adaptive loss
measured from the latest anchor to the target text via the anchor's learned
prompt; sum, backpropagate through the encoder/generator plugin hooks, and
apply one Adam update to the generator parameters only. Encoders stay
frozen throughout.

Degenerate image offsets (all-zero, e.g. at t=0 where the trainable
generator still equals the source, or right after a snapshot in the
adaptive branch) are broken by adding seeded Gaussian noise to the
generated images before re-encoding; the noise scale defaults to 1e-3 of
the per-coordinate batch spread, so semantics are unchanged.

Determinism: every random draw is keyed by (seed, stream, t) or
(seed, stream, anchor_index), never by call order, so identical configs
give bit-identical histories and a resumed run replays the remaining steps
exactly. The loop itself is strictly sequential; snapshots are immutable
and safe to read concurrently. Checkpoint writes go through
write-temp-then-rename.
"""

from __future__ import annotations

import io
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .backends import EncoderBackend
from .embeddings import DTYPE, ZERO_NORM_THRESHOLD
from .errors import (
    ConfigError,
    ConfigWarning,
    NonFiniteLossError,
    RangeError,
    ShapeMismatchError,
    ZeroImageOffsetError,
)
from .fileio import atomic_write_bytes, atomic_write_json, atomic_write_text
from .generators import GeneratorHandle, generator_load, generator_store
from .losses import DirectionLossValue, combined_loss, direction_loss, loss_gradient
from .optim import Adam
from .prompts import (
    PromptLearnConfig,
    PromptState,
    init_prompt,
    interpolate_label,
    learn_anchor_prompt,
    prompt_load,
    prompt_store,
)

# sub-stream tags for seeded RNG; keyed so no draw depends on call order
_STREAM_STEP = 1
_STREAM_PERTURB_DIRECTION = 2
_STREAM_PERTURB_ADAPTIVE = 3
_STREAM_PROMPT = 4
_STREAM_EVAL = 5

DEFAULT_INIT_TEXT = "A photo of a"


@dataclass(frozen=True)
class AdaptationConfig:
    """Schedule and optimizer settings for one adaptation run."""

    t_adapt: int
    t_thresh: int
    t_int: int
    eta: float = 0.002
    batch_size: int = 2
    seed: int = 0
    source_text: str = ""
    target_text: str = ""
    baseline_mode: bool = False
    m_tokens: int = 4
    k_iter: int = 200
    mu: float = 0.002
    n_pairs: int = 1000
    init_text: str = DEFAULT_INIT_TEXT
    label_mode: str = "interpolate"
    prompt_learning: str = "align"

    def validate(self) -> None:
        if self.t_adapt < 0:
            raise ConfigError(f"t_adapt must be >= 0, got {self.t_adapt}")
        if self.t_adapt > 0:
            if not (0 <= self.t_thresh < self.t_adapt):
                raise ConfigError(
                    f"t_thresh must satisfy 0 <= t_thresh < t_adapt, got "
                    f"t_thresh={self.t_thresh}, t_adapt={self.t_adapt}"
                )
            if not (1 <= self.t_int <= self.t_adapt):
                raise ConfigError(
                    f"t_int must satisfy 1 <= t_int <= t_adapt, got t_int={self.t_int}"
                )
        if self.eta <= 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if self.mu <= 0:
            raise ConfigError(f"mu must be positive, got {self.mu}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.m_tokens < 1:
            raise ConfigError(f"m_tokens must be >= 1, got {self.m_tokens}")
        if self.k_iter < 1:
            raise ConfigError(f"k_iter must be >= 1, got {self.k_iter}")
        if self.n_pairs < 1:
            raise ConfigError(f"n_pairs must be >= 1, got {self.n_pairs}")
        if self.label_mode not in ("interpolate", "source", "target"):
            raise ConfigError(f"label_mode must be interpolate|source|target, "
                              f"got {self.label_mode!r}")
        if self.prompt_learning not in ("align", "init-only"):
            raise ConfigError(f"prompt_learning must be align|init-only, "
                              f"got {self.prompt_learning!r}")
        if self.t_adapt > 0 and not self.baseline_mode:
            anchors, _ = anchor_schedule(self, _validated=True)
            if not anchors:
                warnings.warn(ConfigWarning(
                    f"t_int={self.t_int} schedules no anchors in (0, {self.t_adapt}); "
                    f"the adaptive loss will only ever see the source anchor"
                ))
            elif anchors[0] > self.t_thresh:
                warnings.warn(ConfigWarning(
                    f"first anchor at t={anchors[0]} comes after t_thresh="
                    f"{self.t_thresh}; early adaptive steps use the source anchor"
                ))

    def label_progress(self, t_i: int) -> float:
        if self.label_mode == "source":
            return 0.0
        if self.label_mode == "target":
            return 1.0
        return t_i / self.t_adapt if self.t_adapt > 0 else 0.0


def anchor_schedule(cfg: AdaptationConfig, _validated: bool = False
                    ) -> tuple[list[int], Callable[[int], bool]]:
    """Anchor iterations (multiples of t_int in (0, t_adapt)) and the
    adaptive-activity predicate (strictly t > t_thresh).

    t=0 is excluded: the trainable generator still equals the source there,
    so a snapshot would have an identically zero image offset and no
    learnable prompt direction.
    """
    if not _validated:
        cfg.validate()
    if cfg.t_adapt == 0:
        return [], lambda t: False
    anchors = [t for t in range(1, cfg.t_adapt) if t % cfg.t_int == 0]
    threshold = cfg.t_thresh

    def adaptive_active(t: int) -> bool:
        return t > threshold

    return anchors, adaptive_active


@dataclass(frozen=True)
class AnchorState:
    """A frozen generator snapshot with its learned prompt."""

    index: int
    generator: GeneratorHandle
    t_i: int
    p_i: float
    prompt: PromptState

    def __post_init__(self):
        if self.prompt.anchor_index != self.index:
            raise ConfigError(
                f"anchor {self.index} paired with prompt for anchor "
                f"{self.prompt.anchor_index}"
            )


@dataclass(frozen=True)
class Backends:
    encoder: EncoderBackend
    source_generator: GeneratorHandle


@dataclass(frozen=True)
class HistoryRow:
    t: int
    loss_direction: float
    loss_adaptive: float | None
    loss_total: float


@dataclass(frozen=True)
class StepReport:
    t: int
    loss_direction: float
    loss_adaptive: float | None
    loss_total: float
    anchor_created: int | None
    perturbed_direction: bool
    perturbed_adaptive: bool


@dataclass
class RunState:
    cfg: AdaptationConfig
    backends: Backends
    generator: GeneratorHandle
    source_snapshot: GeneratorHandle
    optimizer: Adam
    text_offset_source: np.ndarray
    label_source: np.ndarray
    label_target: np.ndarray
    init_tokens: np.ndarray
    t_next: int = 0
    anchors: list[AnchorState] = field(default_factory=list)
    history: list[HistoryRow] = field(default_factory=list)
    run_dir: Path | None = None
    _anchor_text_offsets: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def latest_anchor(self) -> AnchorState | None:
        return self.anchors[-1] if self.anchors else None

    def anchor_text_offset(self, anchor: AnchorState) -> np.ndarray:
        """Offset from the anchor's prompt encoding to the target text."""
        cached = self._anchor_text_offsets.get(anchor.index)
        if cached is None:
            enc = self.backends.encoder
            e_target = enc.encode_text(self.cfg.target_text).values.astype(np.float64)
            e_prompt = enc.encode_tokens(anchor.prompt.full_sequence()).values.astype(np.float64)
            cached = e_target - e_prompt
            self._anchor_text_offsets[anchor.index] = cached
        return cached


# ---------------------------------------------------------------------------
# perturbation


def default_perturbation_sigma(images: np.ndarray) -> np.ndarray:
    """1e-3 of the per-coordinate batch spread, with floors for flat batches."""
    images = np.asarray(images, dtype=np.float64)
    std = images.std(axis=0)
    positive = std[std > ZERO_NORM_THRESHOLD]
    fallback = positive.max() if positive.size else 1.0
    std = np.where(std > ZERO_NORM_THRESHOLD, std, fallback)
    return 1e-3 * std


def perturb_output(images: np.ndarray, sigma, seed) -> np.ndarray:
    """Add seeded zero-mean Gaussian noise elementwise."""
    images = np.asarray(images, dtype=DTYPE)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0):
        raise RangeError("perturbation sigma must be >= 0")
    rng = np.random.default_rng(seed)
    noise = sigma * rng.standard_normal(images.shape)
    return (images.astype(np.float64) + noise).astype(DTYPE)


def _offsets_with_guard(emb_current: np.ndarray, emb_reference: np.ndarray,
                        images_current: np.ndarray, encoder: EncoderBackend,
                        perturb_key) -> tuple[np.ndarray, np.ndarray, bool]:
    """Per-sample offsets, re-measured from perturbed images when degenerate.

    Returns (offsets, images_used, perturbed). images_used is what the
    gradient path should run through.
    """
    offsets = emb_current.astype(np.float64) - emb_reference.astype(np.float64)
    norms = np.linalg.norm(offsets, axis=1)
    if np.all(norms >= ZERO_NORM_THRESHOLD):
        return offsets, images_current, False
    sigma = default_perturbation_sigma(images_current)
    perturbed = perturb_output(images_current, sigma, perturb_key)
    emb_perturbed = encoder.encode_images(perturbed).astype(np.float64)
    offsets = emb_perturbed - emb_reference.astype(np.float64)
    return offsets, perturbed, True


# ---------------------------------------------------------------------------
# run directory layout


def _anchor_dir(run_dir: Path, index: int) -> Path:
    return run_dir / "anchors" / f"anchor_{index}"


def _checkpoint_dir(run_dir: Path, t_next: int) -> Path:
    return run_dir / "checkpoints" / f"step_{t_next}"


def _fmt(x: float) -> str:
    return repr(float(x))


def history_csv_text(rows) -> str:
    out = io.StringIO()
    out.write("t,loss_direction,loss_adaptive,loss_total\n")
    for r in rows:
        adaptive = "" if r.loss_adaptive is None else _fmt(r.loss_adaptive)
        out.write(f"{r.t},{_fmt(r.loss_direction)},{adaptive},{_fmt(r.loss_total)}\n")
    return out.getvalue()


def _write_history(state: RunState) -> None:
    if state.run_dir is not None:
        atomic_write_text(state.run_dir / "history.csv", history_csv_text(state.history))


def _persist_anchor(state: RunState, anchor: AnchorState,
                    bbox_lo: np.ndarray | None, bbox_hi: np.ndarray | None) -> None:
    if state.run_dir is None:
        return
    adir = _anchor_dir(state.run_dir, anchor.index)
    generator_store(anchor.generator, adir)
    prompt_store(anchor.prompt, adir, t_i=anchor.t_i, p_i=anchor.p_i)
    meta = {
        "index": anchor.index,
        "t_i": anchor.t_i,
        "p_i": anchor.p_i,
        "image_bbox_lo": None if bbox_lo is None else [float(x) for x in bbox_lo],
        "image_bbox_hi": None if bbox_hi is None else [float(x) for x in bbox_hi],
    }
    atomic_write_json(adir / "meta.json", meta)


def write_checkpoint(state: RunState) -> None:
    if state.run_dir is None:
        return
    cdir = _checkpoint_dir(state.run_dir, state.t_next)
    opt = state.optimizer.state_dict()
    buf = io.BytesIO()
    np.savez(buf,
             params=state.generator.parameters,
             adam_m=opt["m"],
             adam_v=opt["v"])
    atomic_write_bytes(cdir / "state.npz", buf.getvalue())
    atomic_write_json(cdir / "meta.json", {
        "t_next": state.t_next,
        "adam_t": opt["t"],
        "anchor_indices": [a.index for a in state.anchors],
        "history_rows": len(state.history),
    })
    _write_history(state)


def list_checkpoints(run_dir: str | Path) -> list[int]:
    root = Path(run_dir) / "checkpoints"
    if not root.is_dir():
        return []
    steps = []
    for child in root.iterdir():
        if child.is_dir() and child.name.startswith("step_"):
            steps.append(int(child.name.split("_", 1)[1]))
    return sorted(steps)


# ---------------------------------------------------------------------------
# initialization


def _init_anchor_zero(cfg: AdaptationConfig, backends: Backends,
                      source_snapshot: GeneratorHandle) -> AnchorState:
    enc = backends.encoder
    label = interpolate_label(enc.label_token(cfg.source_text),
                              enc.label_token(cfg.target_text),
                              cfg.label_progress(0))
    prompt = init_prompt(cfg.m_tokens, enc.tokenize(cfg.init_text), label, anchor_index=0)
    return AnchorState(index=0, generator=source_snapshot, t_i=0, p_i=0.0, prompt=prompt)


def init_run(cfg: AdaptationConfig, backends: Backends,
             run_dir: str | Path | None = None,
             selectors: dict | None = None) -> RunState:
    cfg.validate()
    enc = backends.encoder
    source_snapshot = backends.source_generator.snapshot()
    generator = backends.source_generator.clone()

    e_source = enc.encode_text(cfg.source_text).values.astype(np.float64)
    e_target = enc.encode_text(cfg.target_text).values.astype(np.float64)

    state = RunState(
        cfg=cfg,
        backends=backends,
        generator=generator,
        source_snapshot=source_snapshot,
        optimizer=Adam(generator.parameters.shape[0], lr=cfg.eta),
        text_offset_source=e_target - e_source,
        label_source=enc.label_token(cfg.source_text),
        label_target=enc.label_token(cfg.target_text),
        init_tokens=enc.tokenize(cfg.init_text),
        run_dir=None if run_dir is None else Path(run_dir),
    )
    if state.run_dir is not None:
        state.run_dir.mkdir(parents=True, exist_ok=True)
        config_doc = asdict(cfg)
        config_doc.update(selectors or {})
        atomic_write_json(state.run_dir / "config.json", config_doc)
    if not cfg.baseline_mode:
        anchor0 = _init_anchor_zero(cfg, backends, source_snapshot)
        state.anchors.append(anchor0)
        _persist_anchor(state, anchor0, None, None)
    return state


# ---------------------------------------------------------------------------
# the step


def _try_snapshot_anchor(state: RunState, t: int) -> tuple[int | None, np.ndarray | None,
                                                            np.ndarray | None]:
    """Snapshot the trainable generator and learn the new anchor's prompt.

    On a zero image offset (stalled generator) the anchor is skipped and the
    previous anchor stays active.
    """
    cfg = state.cfg
    prev = state.latest_anchor
    index = prev.index + 1
    snapshot = state.generator.snapshot()
    label = interpolate_label(state.label_source, state.label_target,
                              cfg.label_progress(t))
    rng = np.random.default_rng([cfg.seed, _STREAM_PROMPT, index])
    latents = state.generator.sample_latents(rng, cfg.n_pairs)

    if cfg.prompt_learning == "align":
        try:
            # warm-start from the previous prompt's tokens so the encodings
            # keep tracking the image cloud across anchors
            result = learn_anchor_prompt(
                gen_prev=prev.generator,
                gen_cur=snapshot,
                p_prev=prev.prompt,
                cfg=PromptLearnConfig(k_iter=cfg.k_iter, lr=cfg.mu, n_pairs=cfg.n_pairs,
                                      seed=cfg.seed),
                latents=latents,
                encoder=state.backends.encoder,
                label=label,
                anchor_index=index,
            )
        except ZeroImageOffsetError:
            warnings.warn(ConfigWarning(
                f"anchor at t={t} skipped: generator output unchanged since the "
                f"previous anchor"
            ))
            return None, None, None
        prompt = result.prompt
        bbox_lo, bbox_hi = result.image_bbox_lo, result.image_bbox_hi
    else:
        prompt = init_prompt(cfg.m_tokens, state.init_tokens, label, anchor_index=index)
        emb = state.backends.encoder.encode_images(snapshot.generate(latents))
        bbox_lo = emb.min(axis=0).astype(np.float64)
        bbox_hi = emb.max(axis=0).astype(np.float64)

    anchor = AnchorState(index=index, generator=snapshot, t_i=t,
                         p_i=(t / cfg.t_adapt), prompt=prompt)
    state.anchors.append(anchor)
    _persist_anchor(state, anchor, bbox_lo, bbox_hi)
    return index, bbox_lo, bbox_hi


def adaptation_step(state: RunState, anchors_at: set[int] | None = None,
                    adaptive_active: Callable[[int], bool] | None = None) -> StepReport:
    """Execute iteration t = state.t_next and apply one parameter update."""
    cfg = state.cfg
    if anchors_at is None or adaptive_active is None:
        schedule, predicate = anchor_schedule(cfg, _validated=True)
        anchors_at = set(schedule)
        adaptive_active = predicate
    t = state.t_next
    enc = state.backends.encoder

    rng = np.random.default_rng([cfg.seed, _STREAM_STEP, t])
    latents = state.generator.sample_latents(rng, cfg.batch_size)
    images_t = state.generator.generate(latents)
    emb_t = enc.encode_images(images_t)
    emb_source = enc.encode_images(state.source_snapshot.generate(latents))

    offsets_dir, images_dir, perturbed_dir = _offsets_with_guard(
        emb_t, emb_source, images_t, enc,
        perturb_key=[cfg.seed, _STREAM_PERTURB_DIRECTION, t],
    )
    loss_dir = direction_loss(offsets_dir, state.text_offset_source)
    grad_offsets = loss_gradient(offsets_dir, state.text_offset_source, wrt="image_offsets")
    param_grad = state.generator.parameter_vjp(
        latents, enc.image_vjp(images_dir, grad_offsets))

    anchor_created: int | None = None
    if not cfg.baseline_mode and t in anchors_at:
        anchor_created, _, _ = _try_snapshot_anchor(state, t)

    loss_adaptive: DirectionLossValue | None = None
    perturbed_adapt = False
    if not cfg.baseline_mode and adaptive_active(t) and state.latest_anchor is not None:
        anchor = state.latest_anchor
        emb_anchor = enc.encode_images(anchor.generator.generate(latents))
        offsets_adapt, images_adapt, perturbed_adapt = _offsets_with_guard(
            emb_t, emb_anchor, images_t, enc,
            perturb_key=[cfg.seed, _STREAM_PERTURB_ADAPTIVE, t],
        )
        text_offset_anchor = state.anchor_text_offset(anchor)
        loss_adaptive = direction_loss(offsets_adapt, text_offset_anchor)
        grad_adapt = loss_gradient(offsets_adapt, text_offset_anchor, wrt="image_offsets")
        param_grad = param_grad + state.generator.parameter_vjp(
            latents, enc.image_vjp(images_adapt, grad_adapt))

    loss_total = combined_loss(loss_dir, loss_adaptive)
    if not np.isfinite(loss_total):
        write_checkpoint(state)
        raise NonFiniteLossError(f"loss became non-finite at t={t}: {loss_total!r}")

    state.generator.set_parameters(
        state.optimizer.step(state.generator.parameters, param_grad))

    row = HistoryRow(
        t=t,
        loss_direction=loss_dir.value,
        loss_adaptive=None if loss_adaptive is None else loss_adaptive.value,
        loss_total=loss_total,
    )
    state.history.append(row)
    state.t_next = t + 1
    if anchor_created is not None:
        write_checkpoint(state)
    return StepReport(
        t=t,
        loss_direction=row.loss_direction,
        loss_adaptive=row.loss_adaptive,
        loss_total=row.loss_total,
        anchor_created=anchor_created,
        perturbed_direction=perturbed_dir,
        perturbed_adaptive=perturbed_adapt,
    )


def run_adaptation(cfg: AdaptationConfig, backends: Backends,
                   run_dir: str | Path | None = None,
                   selectors: dict | None = None) -> RunState:
    """Run the full loop; anchors, checkpoints and history land in run_dir."""
    state = init_run(cfg, backends, run_dir=run_dir, selectors=selectors)
    schedule, predicate = anchor_schedule(cfg, _validated=True)
    anchors_at = set(schedule)
    while state.t_next < cfg.t_adapt:
        adaptation_step(state, anchors_at=anchors_at, adaptive_active=predicate)
    write_checkpoint(state)
    return state


# ---------------------------------------------------------------------------
# resume


def read_config_doc(run_dir: str | Path) -> dict:
    return json.loads((Path(run_dir) / "config.json").read_text(encoding="utf-8"))


def config_from_doc(doc: dict) -> AdaptationConfig:
    fields = {f: doc[f] for f in AdaptationConfig.__dataclass_fields__ if f in doc}
    return AdaptationConfig(**fields)


def load_anchor(run_dir: str | Path, index: int) -> AnchorState:
    adir = _anchor_dir(Path(run_dir), index)
    meta = json.loads((adir / "meta.json").read_text(encoding="utf-8"))
    generator = generator_load(adir, frozen=True)
    prompt, _ = prompt_load(adir)
    return AnchorState(index=int(meta["index"]), generator=generator,
                       t_i=int(meta["t_i"]), p_i=float(meta["p_i"]), prompt=prompt)


def list_anchor_indices(run_dir: str | Path) -> list[int]:
    root = Path(run_dir) / "anchors"
    if not root.is_dir():
        return []
    out = []
    for child in root.iterdir():
        if child.is_dir() and child.name.startswith("anchor_"):
            out.append(int(child.name.split("_", 1)[1]))
    return sorted(out)


def resume_adaptation(run_dir: str | Path, t_next: int, backends: Backends,
                      out_dir: str | Path) -> RunState:
    """Continue a checkpointed run in a fresh output directory.

    The resumed history contains exactly the remaining rows (t >= t_next);
    they are bit-identical to the same rows of the uninterrupted run.
    """
    run_dir = Path(run_dir)
    doc = read_config_doc(run_dir)
    cfg = config_from_doc(doc)
    selectors = {k: v for k, v in doc.items()
                 if k not in AdaptationConfig.__dataclass_fields__}
    cdir = _checkpoint_dir(run_dir, t_next)
    if not cdir.is_dir():
        raise ConfigError(f"no checkpoint for t_next={t_next} in {run_dir}")
    meta = json.loads((cdir / "meta.json").read_text(encoding="utf-8"))
    with np.load(cdir / "state.npz") as blob:
        params = blob["params"].astype(DTYPE)
        adam_m = blob["adam_m"].astype(np.float64)
        adam_v = blob["adam_v"].astype(np.float64)

    state = init_run(cfg, backends, run_dir=out_dir, selectors=selectors)
    # drop the freshly initialized anchor 0; reload the checkpointed set
    state.anchors.clear()
    state._anchor_text_offsets.clear()
    for index in meta["anchor_indices"]:
        anchor = load_anchor(run_dir, index)
        state.anchors.append(anchor)
        _persist_anchor(state, anchor, None, None)
    state.generator.set_parameters(params)
    state.optimizer.load_state_dict({
        "t": int(meta["adam_t"]), "m": adam_m, "v": adam_v,
        "lr": cfg.eta, "beta1": state.optimizer.beta1,
        "beta2": state.optimizer.beta2, "eps": state.optimizer.eps,
    })
    state.t_next = int(meta["t_next"])

    schedule, predicate = anchor_schedule(cfg, _validated=True)
    anchors_at = set(schedule)
    while state.t_next < cfg.t_adapt:
        adaptation_step(state, anchors_at=anchors_at, adaptive_active=predicate)
    write_checkpoint(state)
    return state


# ---------------------------------------------------------------------------
# interpolation utilities and evaluation sampling


def interpolate_latents(generator: GeneratorHandle, w1, w2, gamma: float) -> np.ndarray:
    """Generate at the convex combination (1-gamma) w1 + gamma w2."""
    if not (0.0 <= gamma <= 1.0):
        raise RangeError(f"gamma must be in [0, 1], got {gamma}")
    w1 = np.asarray(w1, dtype=DTYPE)
    w2 = np.asarray(w2, dtype=DTYPE)
    if w1.shape != w2.shape or w1.ndim != 1:
        raise ShapeMismatchError(f"latent shapes differ: {w1.shape} vs {w2.shape}")
    blended = ((1.0 - gamma) * w1.astype(np.float64)
               + gamma * w2.astype(np.float64)).astype(DTYPE)
    return generator.generate(blended[None, :])[0]


def interpolate_weights(theta1, theta2, gamma: float) -> np.ndarray:
    """Elementwise (1-gamma) theta1 + gamma theta2 over flat parameter vectors."""
    if not (0.0 <= gamma <= 1.0):
        raise RangeError(f"gamma must be in [0, 1], got {gamma}")
    theta1 = np.asarray(theta1, dtype=DTYPE)
    theta2 = np.asarray(theta2, dtype=DTYPE)
    if theta1.shape != theta2.shape:
        raise ShapeMismatchError(
            f"parameter shapes differ: {theta1.shape} vs {theta2.shape}"
        )
    return ((1.0 - gamma) * theta1.astype(np.float64)
            + gamma * theta2.astype(np.float64)).astype(DTYPE)


def sample_generator_images(generator: GeneratorHandle, seed: int, n: int) -> np.ndarray:
    """n seeded generations on the evaluation stream (disjoint from training)."""
    rng = np.random.default_rng([int(seed), _STREAM_EVAL])
    latents = generator.sample_latents(rng, n)
    return generator.generate(latents)


def sample_generator_embeddings(generator: GeneratorHandle, encoder: EncoderBackend,
                                seed: int, n: int) -> np.ndarray:
    """Embeddings of sample_generator_images over the same latents."""
    return encoder.encode_images(sample_generator_images(generator, seed, n))


def load_checkpoint_params(run_dir: str | Path, t_next: int) -> np.ndarray:
    """The flat generator parameter vector stored at one checkpoint."""
    cdir = _checkpoint_dir(Path(run_dir), t_next)
    if not cdir.is_dir():
        raise ConfigError(f"no checkpoint for t_next={t_next} in {run_dir}")
    with np.load(cdir / "state.npz") as blob:
        return blob["params"].astype(DTYPE)
