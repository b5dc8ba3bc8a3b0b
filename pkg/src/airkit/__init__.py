"""Zero-shot generative model adaptation with anchor-refined text directions.

The package trains a generator toward a target concept described only by
text, measuring progress as directional agreement between image-embedding
offsets and text-embedding offsets. Scheduled snapshots of the generator
(anchors) each learn a prompt whose encoding tracks the images actually
produced, and later training steps follow those refreshed directions
instead of only the original source-to-target text offset. Analysis
utilities quantify why that helps: the further apart two concepts sit in
embedding space, the worse the raw text offset matches the true image
offset.

Everything runs on pluggable encoder and generator backends; the bundled
toy backends keep the full pipeline deterministic and fast enough for
property tests.
"""

from .analysis import (
    ClassConceptDataset,
    ConceptRecord,
    MisalignmentRecord,
    StudyConfig,
    StudyResult,
    concept_distance,
    offset_misalignment,
    prompt_augmentation_study,
    render_template,
    run_misalignment_study,
    sample_concept_pairs,
    spearman,
)
from .backends import EncoderBackend, ToyEncoder
from .embeddings import (
    EmbeddingCache,
    EmbeddingVector,
    OffsetBatch,
    OffsetVector,
    batch_offsets,
    cache_load,
    cache_store,
    cosine_similarity,
    mean_embedding,
    normalize,
    offset,
)
from .engine import (
    AdaptationConfig,
    AnchorState,
    Backends,
    RunState,
    StepReport,
    adaptation_step,
    anchor_schedule,
    interpolate_latents,
    interpolate_weights,
    perturb_output,
    resume_adaptation,
    run_adaptation,
)
from .errors import AirError
from .generators import GeneratorHandle, ToyAffineGenerator
from .losses import combined_loss, direction_loss, loss_gradient
from .metrics import (
    ClusterAssignment,
    DistanceReport,
    GaussianStats,
    clip_distance,
    concept_shift_curve,
    encoder_distance,
    frechet_distance,
    intra_cluster_diversity,
    intra_lpips,
    kmedoids,
    misalignment_vs_ground_truth,
)
from .optim import Adam
from .prompts import (
    PromptLearnConfig,
    PromptState,
    init_prompt,
    interpolate_label,
    learn_anchor_prompt,
    prompt_offset,
)
from .scenarios import AdaptationScenario, SyntheticPairFamily, build_scenario

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AdaptationConfig",
    "AdaptationScenario",
    "AirError",
    "AnchorState",
    "Backends",
    "ClassConceptDataset",
    "ClusterAssignment",
    "ConceptRecord",
    "DistanceReport",
    "EmbeddingCache",
    "EmbeddingVector",
    "EncoderBackend",
    "GaussianStats",
    "GeneratorHandle",
    "MisalignmentRecord",
    "OffsetBatch",
    "OffsetVector",
    "PromptLearnConfig",
    "PromptState",
    "RunState",
    "StepReport",
    "StudyConfig",
    "StudyResult",
    "SyntheticPairFamily",
    "ToyAffineGenerator",
    "ToyEncoder",
    "adaptation_step",
    "anchor_schedule",
    "batch_offsets",
    "build_scenario",
    "cache_load",
    "cache_store",
    "clip_distance",
    "combined_loss",
    "concept_distance",
    "concept_shift_curve",
    "cosine_similarity",
    "direction_loss",
    "encoder_distance",
    "frechet_distance",
    "init_prompt",
    "interpolate_label",
    "interpolate_latents",
    "interpolate_weights",
    "intra_cluster_diversity",
    "intra_lpips",
    "kmedoids",
    "learn_anchor_prompt",
    "loss_gradient",
    "mean_embedding",
    "misalignment_vs_ground_truth",
    "normalize",
    "offset",
    "offset_misalignment",
    "perturb_output",
    "prompt_augmentation_study",
    "prompt_offset",
    "render_template",
    "resume_adaptation",
    "run_adaptation",
    "run_misalignment_study",
    "sample_concept_pairs",
    "spearman",
    "__version__",
]
