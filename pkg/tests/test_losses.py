import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from airkit.embeddings import OffsetBatch, OffsetVector
from airkit.errors import DimMismatchError, RangeError, ZeroNormError
from airkit.losses import combined_loss, direction_loss, loss_gradient

from oracles import central_difference, max_relative_error


def test_loss_identities_small():
    rng = np.random.default_rng(0)
    for dim in (2, 8, 64):
        for _ in range(10):
            x = rng.standard_normal(dim)
            assert direction_loss(x[None, :], x).value == pytest.approx(0.0, abs=1e-6)
            assert direction_loss(x[None, :], -x).value == pytest.approx(2.0, abs=1e-6)


def test_orthogonal_offsets_give_one():
    u = np.array([[1.0, 0.0]])
    v = np.array([0.0, 5.0])
    assert direction_loss(u, v).value == pytest.approx(1.0)


def test_batch_value_is_mean_of_per_sample():
    rng = np.random.default_rng(1)
    u = rng.standard_normal((6, 4))
    v = rng.standard_normal(4)
    result = direction_loss(u, v)
    assert result.batch_size == 6
    assert result.value == pytest.approx(float(np.mean(result.per_sample)))
    singles = [direction_loss(row[None, :], v).value for row in u]
    np.testing.assert_allclose(result.per_sample, singles, atol=1e-12)


def test_input_wrappers_are_equivalent():
    rng = np.random.default_rng(2)
    u = rng.standard_normal((3, 5)).astype(np.float32)
    v = rng.standard_normal(5).astype(np.float32)
    raw = direction_loss(u, v).value
    wrapped = direction_loss(OffsetBatch.from_matrix(u), OffsetVector(v)).value
    assert raw == pytest.approx(wrapped, abs=1e-12)


def test_scale_invariance():
    rng = np.random.default_rng(3)
    u = rng.standard_normal((4, 6))
    v = rng.standard_normal(6)
    base = direction_loss(u, v).value
    assert direction_loss(10.0 * u, v).value == pytest.approx(base, abs=1e-9)
    assert direction_loss(u, 0.01 * v).value == pytest.approx(base, abs=1e-9)


def test_zero_norm_rejections():
    with pytest.raises(ZeroNormError):
        direction_loss(np.ones((1, 3)), np.zeros(3))
    with pytest.raises(ZeroNormError) as err:
        direction_loss(np.array([[1.0, 0.0], [0.0, 0.0]]), np.ones(2))
    assert "[1]" in str(err.value)


def test_dim_mismatch_rejected():
    with pytest.raises(DimMismatchError):
        direction_loss(np.ones((2, 3)), np.ones(4))


def test_combined_loss():
    d = direction_loss(np.ones((1, 2)), np.ones(2))
    a = direction_loss(np.array([[1.0, 0.0]]), np.array([0.0, 1.0]))
    assert combined_loss(d, None) == pytest.approx(d.value)
    assert combined_loss(d, a) == pytest.approx(d.value + a.value)


def test_gradient_wrt_unknown_argument():
    with pytest.raises(RangeError):
        loss_gradient(np.ones((1, 2)), np.ones(2), wrt="labels")


def test_gradient_matches_finite_differences_image_side():
    rng = np.random.default_rng(4)
    u = rng.standard_normal((3, 5))
    v = rng.standard_normal(5)
    analytic = loss_gradient(u, v, wrt="image_offsets")
    fd = central_difference(lambda m: direction_loss(m, v).value, u)
    assert max_relative_error(analytic, fd) < 1e-4


def test_gradient_matches_finite_differences_text_side():
    rng = np.random.default_rng(5)
    u = rng.standard_normal((3, 5))
    v = rng.standard_normal(5)
    analytic = loss_gradient(u, v, wrt="text_offset")
    fd = central_difference(lambda w: direction_loss(u, w).value, v)
    assert max_relative_error(analytic, fd) < 1e-4


def test_gradient_zero_at_alignment():
    v = np.array([2.0, 1.0, -1.0])
    u = np.stack([3.0 * v])
    np.testing.assert_allclose(loss_gradient(u, v, wrt="image_offsets"),
                               np.zeros_like(u), atol=1e-12)


@given(st.integers(min_value=0, max_value=10_000))
def test_loss_stays_in_range(seed):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((2, 4))
    v = rng.standard_normal(4)
    if min(np.linalg.norm(u, axis=1).min(), np.linalg.norm(v)) < 1e-6:
        return
    value = direction_loss(u, v).value
    assert -1e-9 <= value <= 2.0 + 1e-9
