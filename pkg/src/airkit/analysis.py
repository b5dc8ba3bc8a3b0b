"""Concept-pair misalignment analysis.

Given two concepts, each a labeled set of image embeddings plus one text
embedding, this module measures:

* concept distance  D = 1 - cos(mean image embedding A, mean image embedding B)
* offset misalignment  M = 1 - cos(image-mean offset, text offset)

and runs the sampled study correlating the two over many random concept
pairs (Spearman rank correlation). Embeddings are averaged raw, not
normalized first; means accumulate in float64.

Pair evaluation is a pure map keyed by pair index, and results are emitted
in index order, so output is deterministic however the map is executed.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .backends import EncoderBackend
from .embeddings import (
    DTYPE,
    ZERO_NORM_THRESHOLD,
    EmbeddingCache,
    EmbeddingVector,
    mean_rows,
)
from .errors import (
    ConstantInputError,
    DimMismatchError,
    EmptySetError,
    InsufficientClassesError,
    LengthMismatchError,
    ManifestMismatchError,
    RangeError,
    ShapeMismatchError,
    ZeroNormError,
)
from .fileio import atomic_write_text

DEFAULT_TEMPLATE = "a photo of a {label}"


def _as_embedding_matrix(images) -> np.ndarray:
    if isinstance(images, np.ndarray) and images.ndim == 2:
        return images.astype(DTYPE)
    rows = [v.values if isinstance(v, EmbeddingVector) else np.asarray(v, dtype=DTYPE)
            for v in images]
    if not rows:
        raise EmptySetError("concept needs at least one image embedding")
    return np.stack(rows).astype(DTYPE)


@dataclass(frozen=True)
class ConceptRecord:
    """One concept: label, its image embeddings, and its text embedding."""

    label: str
    image_embeddings: np.ndarray
    text_embedding: np.ndarray
    template: str = DEFAULT_TEMPLATE

    def __post_init__(self):
        images = _as_embedding_matrix(self.image_embeddings)
        if images.shape[0] == 0:
            raise EmptySetError(f"concept {self.label!r} has no image embeddings")
        text = np.asarray(self.text_embedding, dtype=DTYPE)
        if isinstance(self.text_embedding, EmbeddingVector):
            text = self.text_embedding.values
        if text.ndim != 1 or text.shape[0] != images.shape[1]:
            raise DimMismatchError(
                f"concept {self.label!r}: text dim {text.shape} vs image dim {images.shape[1]}"
            )
        if not (np.all(np.isfinite(images)) and np.all(np.isfinite(text))):
            raise ShapeMismatchError(f"concept {self.label!r} has non-finite embeddings")
        images = images.copy()
        text = text.copy()
        images.setflags(write=False)
        text.setflags(write=False)
        object.__setattr__(self, "image_embeddings", images)
        object.__setattr__(self, "text_embedding", text)

    @property
    def n_images(self) -> int:
        return int(self.image_embeddings.shape[0])

    def mean_image(self) -> np.ndarray:
        return mean_rows(self.image_embeddings)


@dataclass(frozen=True)
class MisalignmentRecord:
    concept_a: str
    concept_b: str
    distance: float
    misalignment: float
    n_a: int
    n_b: int


@dataclass(frozen=True)
class StudyConfig:
    """Sampling parameters for one misalignment study."""

    dataset: str = "synthetic"
    n_pairs: int = 5000
    seed: int = 0
    min_images: int = 10
    templates: tuple[str, ...] = (DEFAULT_TEMPLATE,)
    encoder: str = "toy"

    def __post_init__(self):
        if self.n_pairs < 1:
            raise RangeError(f"n_pairs must be >= 1, got {self.n_pairs}")
        if self.min_images < 1:
            raise RangeError(f"min_images must be >= 1, got {self.min_images}")


def _cos64(a: np.ndarray, b: np.ndarray, what: str) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < ZERO_NORM_THRESHOLD or nb < ZERO_NORM_THRESHOLD:
        raise ZeroNormError(f"{what}: degenerate norms {na!r}, {nb!r}")
    return float(np.dot(a, b) / (na * nb))


def concept_distance(a: ConceptRecord, b: ConceptRecord) -> float:
    """1 - cosine between the two concepts' mean image embeddings."""
    return 1.0 - _cos64(b.mean_image(), a.mean_image(), "concept distance")


def offset_misalignment(a: ConceptRecord, b: ConceptRecord) -> float:
    """1 - cosine between the image-modality and text-modality offsets.

    Both offsets run from concept a to concept b; flipping the argument
    order flips both signs, so the value is symmetric.
    """
    image_offset = b.mean_image() - a.mean_image()
    text_offset = b.text_embedding.astype(np.float64) - a.text_embedding.astype(np.float64)
    return 1.0 - _cos64(image_offset, text_offset, "offset misalignment")


class PairSource(Protocol):
    """Anything that can produce concept pairs for a study."""

    def sample_pairs(self, cfg: StudyConfig) -> list[tuple[ConceptRecord, ConceptRecord]]: ...


class ClassConceptDataset:
    """A fixed set of labeled concepts; pairs are sampled uniformly."""

    def __init__(self, records: Mapping[str, ConceptRecord] | Iterable[ConceptRecord]):
        if isinstance(records, Mapping):
            items = list(records.values())
        else:
            items = list(records)
        self._records = {r.label: r for r in items}
        if len(self._records) != len(items):
            raise ManifestMismatchError("duplicate concept labels in dataset")

    def __len__(self) -> int:
        return len(self._records)

    def record(self, label: str) -> ConceptRecord:
        return self._records[label]

    def eligible_labels(self, min_images: int) -> list[str]:
        return sorted(lab for lab, rec in self._records.items() if rec.n_images >= min_images)

    def sample_pairs(self, cfg: StudyConfig) -> list[tuple[ConceptRecord, ConceptRecord]]:
        pairs = sample_concept_pairs(cfg, self)
        return pairs

    @classmethod
    def from_caches(cls, image_cache: EmbeddingCache, text_cache: EmbeddingCache,
                    template: str = DEFAULT_TEMPLATE) -> "ClassConceptDataset":
        """Assemble concepts from an image cache and a per-label text cache."""
        text_rows: dict[str, np.ndarray] = {}
        for i, lab in enumerate(text_cache.labels):
            text_rows.setdefault(lab, text_cache.embeddings[i])
        records = []
        for lab in image_cache.class_labels():
            if lab not in text_rows:
                raise ManifestMismatchError(f"text cache has no row for class {lab!r}")
            records.append(ConceptRecord(
                label=lab,
                image_embeddings=image_cache.rows_for_label(lab),
                text_embedding=text_rows[lab],
                template=template,
            ))
        return cls(records)


def sample_concept_pairs(cfg: StudyConfig, dataset: ClassConceptDataset
                         ) -> list[tuple[ConceptRecord, ConceptRecord]]:
    """Uniform pairs of distinct classes, with replacement across pairs.

    Self-pairs are rejected and the whole pair redrawn, so the draw is
    uniform over ordered distinct pairs. Deterministic under cfg.seed.
    """
    labels = dataset.eligible_labels(cfg.min_images)
    if len(labels) < 2:
        raise InsufficientClassesError(
            f"need >= 2 classes with >= {cfg.min_images} images, found {len(labels)}"
        )
    rng = np.random.default_rng(cfg.seed)
    pairs = []
    for _ in range(cfg.n_pairs):
        while True:
            i, j = rng.integers(0, len(labels), size=2)
            if i != j:
                break
        pairs.append((dataset.record(labels[i]), dataset.record(labels[j])))
    return pairs


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing the average of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j < len(values) and values[order[j]] == values[order[i]]:
            j += 1
        ranks[order[i:j]] = (i + j + 1) / 2.0
        i = j
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of average-ranked data."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or len(x) != len(y) or len(x) == 0:
        raise LengthMismatchError(f"need equal-length non-empty lists, got {len(x)} and {len(y)}")
    rx = _average_ranks(x) - (len(x) + 1) / 2.0
    ry = _average_ranks(y) - (len(y) + 1) / 2.0
    var_x = float(np.dot(rx, rx))
    var_y = float(np.dot(ry, ry))
    if var_x <= 0.0 or var_y <= 0.0:
        raise ConstantInputError("zero rank variance; correlation undefined")
    return float(np.dot(rx, ry) / np.sqrt(var_x * var_y))


@dataclass(frozen=True)
class StudyResult:
    records: tuple[MisalignmentRecord, ...]
    rho: float
    config: StudyConfig


def _fmt(x) -> str:
    return repr(float(x))


def write_records_csv(records: Iterable[MisalignmentRecord], path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["concept_a", "concept_b", "distance", "misalignment", "n_a", "n_b"])
    for r in records:
        writer.writerow([r.concept_a, r.concept_b, _fmt(r.distance), _fmt(r.misalignment),
                         r.n_a, r.n_b])
    atomic_write_text(path, buf.getvalue())


def write_scatter_csv(records: Iterable[MisalignmentRecord], path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["distance", "misalignment"])
    for r in records:
        writer.writerow([_fmt(r.distance), _fmt(r.misalignment)])
    atomic_write_text(path, buf.getvalue())


def write_summary_csv(rho: float, cfg: StudyConfig, path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["spearman_rho", "n_pairs", "encoder", "dataset", "seed"])
    writer.writerow([_fmt(rho), cfg.n_pairs, cfg.encoder, cfg.dataset, cfg.seed])
    atomic_write_text(path, buf.getvalue())


def run_misalignment_study(cfg: StudyConfig, dataset: PairSource,
                           out_dir: str | Path | None = None) -> StudyResult:
    """Sample pairs, measure (distance, misalignment) per pair, correlate.

    When out_dir is given, records.csv and scatter.csv are written before
    the correlation is computed, so a study too small to correlate (one
    pair: zero rank variance) still leaves its records on disk; the
    ConstantInput error then propagates and no summary.csv is written.
    """
    pairs = dataset.sample_pairs(cfg)
    records = []
    for a, b in pairs:
        records.append(MisalignmentRecord(
            concept_a=a.label,
            concept_b=b.label,
            distance=concept_distance(a, b),
            misalignment=offset_misalignment(a, b),
            n_a=a.n_images,
            n_b=b.n_images,
        ))
    records = tuple(records)
    if out_dir is not None:
        out_dir = Path(out_dir)
        write_records_csv(records, out_dir / "records.csv")
        write_scatter_csv(records, out_dir / "scatter.csv")
    rho = spearman([r.distance for r in records], [r.misalignment for r in records])
    if out_dir is not None:
        write_summary_csv(rho, cfg, out_dir / "summary.csv")
    return StudyResult(records=records, rho=rho, config=cfg)


# ---------------------------------------------------------------------------
# prompt augmentation study


@dataclass(frozen=True)
class TemplateRow:
    template: str
    rendered: str
    misalignment: float | None
    flagged: bool


def render_template(template: str, label: str) -> str:
    """Substitute the label into a template's slot ("{ }" or "{}")."""
    if "{ }" in template:
        return template.replace("{ }", label)
    if "{}" in template:
        return template.replace("{}", label)
    if "{label}" in template:
        return template.replace("{label}", label)
    return f"{template} {label}"


def prompt_augmentation_study(
    backend: EncoderBackend,
    source_text: str,
    target_label: str,
    templates: Sequence[str],
    alpha_images,
    beta_images,
) -> list[TemplateRow]:
    """Misalignment of each templated target text against a fixed image offset.

    The image offset (mean beta embedding minus mean alpha embedding) is
    shared by all rows; each row's text offset runs from the fixed source
    text to that template's rendering of the target label. Degenerate rows
    (zero offset on either side) are flagged rather than fatal. Output rows
    keep the input template order.
    """
    if not templates:
        raise EmptySetError("template set must be non-empty")
    alpha = _as_embedding_matrix(alpha_images)
    beta = _as_embedding_matrix(beta_images)
    image_offset = mean_rows(beta) - mean_rows(alpha)
    source_emb = backend.encode_text(source_text).values.astype(np.float64)

    rows: list[TemplateRow] = []
    for template in templates:
        rendered = render_template(template, target_label)
        text_emb = backend.encode_text(rendered).values.astype(np.float64)
        try:
            value = 1.0 - _cos64(image_offset, text_emb - source_emb, "template misalignment")
            rows.append(TemplateRow(template, rendered, value, False))
        except ZeroNormError:
            rows.append(TemplateRow(template, rendered, None, True))
    return rows


def write_template_rows_csv(rows: Iterable[TemplateRow], path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["template", "rendered", "misalignment", "flagged"])
    for r in rows:
        writer.writerow([r.template, r.rendered,
                         "" if r.misalignment is None else _fmt(r.misalignment),
                         "true" if r.flagged else "false"])
    atomic_write_text(path, buf.getvalue())
