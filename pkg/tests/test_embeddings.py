import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from airkit.embeddings import (
    EmbeddingCache,
    EmbeddingVector,
    OffsetBatch,
    OffsetVector,
    batch_offsets,
    cache_load,
    cache_store,
    cosine_similarity,
    manifest_path_for,
    mean_embedding,
    mean_rows,
    normalize,
    offset,
)
from airkit.errors import (
    BadMagicError,
    DimMismatchError,
    EmptySetError,
    LengthMismatchError,
    ManifestMismatchError,
    ShapeMismatchError,
    TruncatedFileError,
    ZeroNormError,
)


def test_embedding_vector_is_float32_and_frozen():
    v = EmbeddingVector(np.array([1.0, 2.0, 3.0], dtype=np.float64))
    assert v.values.dtype == np.float32
    assert v.dim == 3
    with pytest.raises(ValueError):
        v.values[0] = 9.0


def test_embedding_vector_rejects_bad_shapes():
    with pytest.raises(ShapeMismatchError):
        EmbeddingVector(np.zeros((2, 2)))
    with pytest.raises(ShapeMismatchError):
        EmbeddingVector(np.array([]))
    with pytest.raises(ShapeMismatchError):
        EmbeddingVector(np.array([1.0, np.nan]))


def test_offset_vector_keeps_endpoint_ids():
    o = OffsetVector(np.array([1.0, 0.0]), from_id="source", to_id="anchor_3")
    assert o.from_id == "source"
    assert o.to_id == "anchor_3"


def test_offset_batch_validation():
    with pytest.raises(EmptySetError):
        OffsetBatch(())
    with pytest.raises(DimMismatchError):
        OffsetBatch((OffsetVector(np.ones(2)), OffsetVector(np.ones(3))))


def test_offset_batch_matrix_round_trip():
    m = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
    batch = OffsetBatch.from_matrix(m)
    assert len(batch) == 2
    assert batch.dim == 2
    np.testing.assert_array_equal(batch.matrix, m)


def test_cosine_similarity_known_values():
    assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)
    assert cosine_similarity([1.0, 0.0], [-2.0, 0.0]) == pytest.approx(-1.0)
    assert cosine_similarity([1.0, 1.0], [2.0, 2.0]) == pytest.approx(1.0)


def test_cosine_similarity_errors():
    with pytest.raises(DimMismatchError):
        cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])
    with pytest.raises(ZeroNormError):
        cosine_similarity([0.0, 0.0], [1.0, 0.0])


def test_normalize_preserves_wrapper_type():
    raw = normalize(np.array([3.0, 4.0]))
    assert isinstance(raw, np.ndarray)
    assert np.linalg.norm(raw) == pytest.approx(1.0)
    emb = normalize(EmbeddingVector([3.0, 4.0]))
    assert isinstance(emb, EmbeddingVector)
    off = normalize(OffsetVector([3.0, 4.0]))
    assert isinstance(off, OffsetVector)
    with pytest.raises(ZeroNormError):
        normalize(np.zeros(4))


def test_offset_is_target_minus_source():
    o = offset([1.0, 1.0], [4.0, -1.0], from_id="a", to_id="b")
    np.testing.assert_allclose(o.values, [3.0, -2.0])
    assert (o.from_id, o.to_id) == ("a", "b")
    with pytest.raises(DimMismatchError):
        offset([1.0], [1.0, 2.0])


def test_mean_embedding():
    m = mean_embedding([EmbeddingVector([1.0, 0.0]), np.array([3.0, 2.0])])
    np.testing.assert_allclose(m.values, [2.0, 1.0])
    with pytest.raises(EmptySetError):
        mean_embedding([])
    with pytest.raises(DimMismatchError):
        mean_embedding([np.ones(2), np.ones(3)])


def test_mean_rows_accumulates_in_float64():
    m = mean_rows(np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32))
    assert m.dtype == np.float64
    np.testing.assert_allclose(m, [2.0, 3.0])
    with pytest.raises(EmptySetError):
        mean_rows(np.zeros((0, 3)))


def test_batch_offsets_length_mismatch():
    with pytest.raises(LengthMismatchError):
        batch_offsets([np.ones(2)], [np.ones(2), np.ones(2)])


def test_batch_offsets_pairs_in_order():
    batch = batch_offsets([np.zeros(2), np.ones(2)], [np.ones(2), np.ones(2)])
    np.testing.assert_allclose(batch.matrix, [[1.0, 1.0], [0.0, 0.0]])


@given(st.lists(st.floats(min_value=-1e3, max_value=1e3), min_size=2, max_size=8))
def test_normalize_gives_unit_norm(values):
    v = np.asarray(values, dtype=np.float64)
    if np.linalg.norm(v) < 1e-6:
        return
    assert np.linalg.norm(normalize(v).astype(np.float64)) == pytest.approx(1.0, abs=1e-5)


def _sample_cache():
    rng = np.random.default_rng(0)
    return EmbeddingCache(
        embeddings=rng.standard_normal((5, 3)).astype(np.float32),
        labels=("cat", "dog", "cat", "bird", "dog"),
        source_paths=tuple(f"img_{i}.png" for i in range(5)),
    )


def test_cache_round_trip_is_bit_exact(tmp_path):
    cache = _sample_cache()
    path = tmp_path / "emb.bin"
    cache_store(cache, path)
    loaded = cache_load(path)
    assert loaded.embeddings.tobytes() == cache.embeddings.tobytes()
    assert loaded.labels == cache.labels
    assert loaded.source_paths == cache.source_paths


def test_cache_label_queries():
    cache = _sample_cache()
    assert cache.class_labels() == ("bird", "cat", "dog")
    assert cache.rows_for_label("cat").shape == (2, 3)
    assert cache.rows_for_label("missing").shape == (0, 3)


def test_cache_count_mismatch_rejected():
    with pytest.raises(LengthMismatchError):
        EmbeddingCache(embeddings=np.zeros((2, 3), dtype=np.float32),
                       labels=("a",), source_paths=("p", "q"))


def test_cache_load_bad_magic(tmp_path):
    path = tmp_path / "emb.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(BadMagicError):
        cache_load(path)


def test_cache_load_truncated(tmp_path):
    cache = _sample_cache()
    path = tmp_path / "emb.bin"
    cache_store(cache, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(TruncatedFileError):
        cache_load(path)


def test_cache_load_manifest_mismatch(tmp_path):
    cache = _sample_cache()
    path = tmp_path / "emb.bin"
    cache_store(cache, path)
    manifest = manifest_path_for(path)
    lines = manifest.read_text().splitlines()
    manifest.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ManifestMismatchError):
        cache_load(path)


def test_cache_load_missing_header(tmp_path):
    cache = _sample_cache()
    path = tmp_path / "emb.bin"
    cache_store(cache, path)
    manifest_path_for(path).write_text("idx,lab,src\n")
    with pytest.raises(ManifestMismatchError):
        cache_load(path)
