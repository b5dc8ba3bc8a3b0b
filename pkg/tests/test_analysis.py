import numpy as np
import pytest

from airkit.analysis import (
    ClassConceptDataset,
    ConceptRecord,
    StudyConfig,
    concept_distance,
    offset_misalignment,
    prompt_augmentation_study,
    render_template,
    run_misalignment_study,
    sample_concept_pairs,
    spearman,
)
from airkit.backends import ToyEncoder
from airkit.errors import (
    ConstantInputError,
    DimMismatchError,
    EmptySetError,
    InsufficientClassesError,
    LengthMismatchError,
    ManifestMismatchError,
    RangeError,
)

from oracles import spearman_reference


def _record(label, mean, text, n=3, jitter=0.0, seed=0):
    rng = np.random.default_rng(seed)
    mean = np.asarray(mean, dtype=np.float64)
    images = mean[None, :] + jitter * rng.standard_normal((n, mean.shape[0]))
    return ConceptRecord(label=label, image_embeddings=images,
                         text_embedding=np.asarray(text, dtype=np.float64))


def test_concept_record_validation():
    with pytest.raises(EmptySetError):
        ConceptRecord(label="x", image_embeddings=[], text_embedding=np.ones(2))
    with pytest.raises(DimMismatchError):
        ConceptRecord(label="x", image_embeddings=np.ones((2, 3)),
                      text_embedding=np.ones(2))


def test_concept_distance_hand_values():
    a = _record("a", [1.0, 0.0], [1.0, 0.0])
    b = _record("b", [0.0, 1.0], [0.0, 1.0])
    assert concept_distance(a, b) == pytest.approx(1.0)
    assert concept_distance(a, a) == pytest.approx(0.0, abs=1e-7)


def test_offset_misalignment_hand_values():
    a = _record("a", [0.0, 0.0, 1.0], [0.0, 0.0, 1.0])
    aligned = _record("b", [1.0, 0.0, 1.0], [1.0, 0.0, 1.0])
    assert offset_misalignment(a, aligned) == pytest.approx(0.0, abs=1e-7)
    crossed = _record("c", [1.0, 0.0, 1.0], [0.0, 1.0, 1.0])
    assert offset_misalignment(a, crossed) == pytest.approx(1.0, abs=1e-7)


def test_offset_misalignment_is_symmetric():
    rng = np.random.default_rng(7)
    a = _record("a", rng.standard_normal(4), rng.standard_normal(4))
    b = _record("b", rng.standard_normal(4), rng.standard_normal(4))
    assert offset_misalignment(a, b) == pytest.approx(offset_misalignment(b, a))


def test_spearman_monotone_lists():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)


def test_spearman_handles_ties():
    xs = [1.0, 1.0, 2.0, 3.0, 3.0, 3.0]
    ys = [2.0, 1.0, 1.0, 5.0, 5.0, 4.0]
    assert spearman(xs, ys) == pytest.approx(spearman_reference(xs, ys), abs=1e-12)


def test_spearman_matches_reference_on_random_lists():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(2, 50))
        xs = rng.integers(0, 8, n).astype(float)
        ys = rng.integers(0, 8, n).astype(float)
        if len(set(xs)) < 2 or len(set(ys)) < 2:
            continue
        assert spearman(xs, ys) == pytest.approx(spearman_reference(xs, ys), abs=1e-10)


def test_spearman_errors():
    with pytest.raises(LengthMismatchError):
        spearman([1.0, 2.0], [1.0])
    with pytest.raises(LengthMismatchError):
        spearman([], [])
    with pytest.raises(ConstantInputError):
        spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(ConstantInputError):
        spearman([1.0], [2.0])


def _toy_dataset(n_classes=4, n_images=12):
    rng = np.random.default_rng(3)
    records = []
    for k in range(n_classes):
        mean = rng.standard_normal(5)
        records.append(_record(f"class{k}", mean, mean, n=n_images, jitter=0.05,
                               seed=100 + k))
    return ClassConceptDataset(records)


def test_dataset_rejects_duplicate_labels():
    rec = _record("same", [1.0, 0.0], [1.0, 0.0])
    with pytest.raises(ManifestMismatchError):
        ClassConceptDataset([rec, rec])


def test_eligible_labels_respects_min_images():
    small = _record("small", [1.0, 0.0], [1.0, 0.0], n=2)
    big = _record("big", [0.0, 1.0], [0.0, 1.0], n=10)
    ds = ClassConceptDataset([small, big])
    assert ds.eligible_labels(5) == ["big"]
    assert ds.eligible_labels(1) == ["big", "small"]


def test_sample_concept_pairs_deterministic_and_distinct():
    ds = _toy_dataset()
    cfg = StudyConfig(n_pairs=40, seed=5, min_images=1)
    pairs_a = sample_concept_pairs(cfg, ds)
    pairs_b = sample_concept_pairs(cfg, ds)
    assert [(a.label, b.label) for a, b in pairs_a] == \
        [(a.label, b.label) for a, b in pairs_b]
    assert all(a.label != b.label for a, b in pairs_a)


def test_sample_concept_pairs_needs_two_classes():
    ds = ClassConceptDataset([_record("only", [1.0, 0.0], [1.0, 0.0])])
    with pytest.raises(InsufficientClassesError):
        sample_concept_pairs(StudyConfig(n_pairs=1, min_images=1), ds)


def test_study_config_validation():
    with pytest.raises(RangeError):
        StudyConfig(n_pairs=0)
    with pytest.raises(RangeError):
        StudyConfig(min_images=0)


def test_run_misalignment_study_writes_csvs(tmp_path):
    ds = _toy_dataset()
    cfg = StudyConfig(n_pairs=30, seed=2, min_images=1)
    result = run_misalignment_study(cfg, ds, out_dir=tmp_path)
    assert len(result.records) == 30
    records = (tmp_path / "records.csv").read_text().splitlines()
    assert records[0] == "concept_a,concept_b,distance,misalignment,n_a,n_b"
    assert len(records) == 31
    scatter = (tmp_path / "scatter.csv").read_text().splitlines()
    assert scatter[0] == "distance,misalignment"
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert summary[0] == "spearman_rho,n_pairs,encoder,dataset,seed"
    assert repr(result.rho) in summary[1]


def test_single_pair_study_keeps_records_but_no_summary(tmp_path):
    ds = _toy_dataset(n_classes=2)
    cfg = StudyConfig(n_pairs=1, seed=0, min_images=1)
    with pytest.raises(ConstantInputError):
        run_misalignment_study(cfg, ds, out_dir=tmp_path)
    assert (tmp_path / "records.csv").is_file()
    assert (tmp_path / "scatter.csv").is_file()
    assert not (tmp_path / "summary.csv").exists()


def test_render_template_slot_styles():
    assert render_template("a photo of a { }", "cat") == "a photo of a cat"
    assert render_template("a {} sketch", "dog") == "a dog sketch"
    assert render_template("art of {label}", "bird") == "art of bird"
    assert render_template("just a prefix", "fish") == "just a prefix fish"


def test_prompt_augmentation_study_orders_and_flags():
    enc = ToyEncoder(seed=0)
    rng = np.random.default_rng(9)
    alpha = enc.encode_images(rng.standard_normal((8, enc.image_dim)).astype(np.float32))
    beta = enc.encode_images(
        (rng.standard_normal((8, enc.image_dim)) + 2.0).astype(np.float32))
    templates = ["a photo of a {label}", "photo", "{label}"]
    rows = prompt_augmentation_study(enc, "photo", "sketch", templates, alpha, beta)
    assert [r.template for r in rows] == templates
    assert rows[1].rendered == "photo sketch"
    assert all(not r.flagged and r.misalignment is not None for r in rows)
    # rendering equal to the source text gives a zero text offset: flagged
    same = prompt_augmentation_study(enc, "photo", "photo", ["{label}"], alpha, beta)
    assert same[0].flagged and same[0].misalignment is None
    with pytest.raises(EmptySetError):
        prompt_augmentation_study(enc, "photo", "sketch", [], alpha, beta)
