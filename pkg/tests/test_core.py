"""Tensor container, flat indexing, and distance metric."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from transcheck.core import (
    DimensionError,
    DomainError,
    Image,
    Tensor3,
    linf_distance,
    reshape_to_vector,
    vector_to_tensor,
)


def test_tensor_shape_properties():
    t = Tensor3(np.zeros((4, 5, 2)))
    assert t.shape == (4, 5, 2)
    assert t.height == 4
    assert t.width == 5
    assert t.channels == 2


def test_tensor_rejects_bad_rank():
    with pytest.raises(DimensionError):
        Tensor3(np.zeros((3, 3)))
    with pytest.raises(DimensionError):
        Tensor3(np.zeros((2, 2, 2, 2)))


def test_tensor_rejects_empty_axis():
    with pytest.raises(DimensionError):
        Tensor3(np.zeros((0, 3, 1)))


def test_tensor_is_immutable():
    t = Tensor3(np.ones((2, 2, 1)))
    with pytest.raises(ValueError):
        t.data[0, 0, 0] = 5.0


def test_tensor_copies_input():
    arr = np.ones((2, 2, 1))
    t = Tensor3(arr)
    arr[0, 0, 0] = 9.0
    assert t.at(0, 0, 0) == 1.0


def test_at_and_flat_index_agree():
    t = Tensor3(np.arange(24.0).reshape(3, 4, 2))
    flat = reshape_to_vector(t)
    for r in range(3):
        for c in range(4):
            for ch in range(2):
                idx = t.flat_index(r, c, ch)
                assert idx == (r * 4 + c) * 2 + ch
                assert flat[idx] == t.at(r, c, ch)


def test_indexing_out_of_range():
    t = Tensor3(np.zeros((2, 3, 1)))
    for bad in [(2, 0, 0), (0, 3, 0), (0, 0, 1), (-1, 0, 0)]:
        with pytest.raises(DimensionError):
            t.at(*bad)
        with pytest.raises(DimensionError):
            t.flat_index(*bad)


def test_reshape_single_channel_order():
    t = Tensor3(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1))
    assert reshape_to_vector(t).tolist() == [1.0, 2.0, 3.0, 4.0]


def test_reshape_interleaves_channels():
    # channel index varies fastest
    data = np.zeros((1, 2, 2))
    data[0, 0] = [1.0, 10.0]
    data[0, 1] = [2.0, 20.0]
    assert reshape_to_vector(Tensor3(data)).tolist() == [1.0, 10.0, 2.0, 20.0]


def test_vector_to_tensor_validates_length():
    with pytest.raises(DimensionError):
        vector_to_tensor(np.zeros(5), 2, 2, 1)


@given(
    h=st.integers(1, 4),
    w=st.integers(1, 4),
    c=st.integers(1, 3),
    seed=st.integers(0, 2**32 - 1),
)
def test_reshape_round_trip(h, w, c, seed):
    rng = np.random.default_rng(seed)
    t = Tensor3(rng.uniform(-5, 5, size=(h, w, c)))
    back = vector_to_tensor(reshape_to_vector(t), h, w, c)
    assert back.allclose(t)


def test_from_array_2d_gets_single_channel():
    t = Tensor3.from_array(np.eye(3))
    assert t.shape == (3, 3, 1)
    assert t.at(1, 1, 0) == 1.0


def test_from_array_flat_needs_shape():
    with pytest.raises(DimensionError):
        Tensor3.from_array(np.zeros(6))
    t = Tensor3.from_array(np.arange(6.0), height=2, width=3, channels=1)
    assert t.at(1, 2, 0) == 5.0


def test_image_accepts_full_range():
    Image(Tensor3(np.array([[[0.0, 255.0]]])), p_max=255.0)


def test_image_rejects_out_of_range():
    with pytest.raises(DomainError):
        Image(Tensor3(np.array([[[-0.1]]])), p_max=255.0)
    with pytest.raises(DomainError):
        Image(Tensor3(np.array([[[255.5]]])), p_max=255.0)


def test_image_rejects_bad_pmax():
    with pytest.raises(DomainError):
        Image(Tensor3(np.zeros((1, 1, 1))), p_max=0.0)
    with pytest.raises(DomainError):
        Image(Tensor3(np.zeros((1, 1, 1))), p_max=float("nan"))


def test_image_with_pixels():
    im = Image(Tensor3(np.zeros((2, 2, 1))), p_max=1.0)
    im2 = im.with_pixels(np.full((2, 2, 1), 0.5))
    assert im2.p_max == 1.0
    assert im2.data.at(0, 0, 0) == 0.5
    with pytest.raises(DomainError):
        im.with_pixels(np.full((2, 2, 1), 2.0))


def test_linf_identical_is_zero():
    t = Tensor3(np.arange(8.0).reshape(2, 2, 2))
    assert linf_distance(t, t) == 0.0


def test_linf_uniform_shift():
    a = Tensor3(np.zeros((2, 2, 1)))
    b = Tensor3(np.full((2, 2, 1), 5.0))
    assert linf_distance(a, b) == 5.0


def test_linf_max_abs_difference():
    a = Tensor3(np.array([[0.0, 3.0], [1.0, 2.0]]).reshape(2, 2, 1))
    b = Tensor3(np.ones((2, 2, 1)))
    assert linf_distance(a, b) == 2.0


def test_linf_shape_mismatch():
    with pytest.raises(DimensionError):
        linf_distance(Tensor3(np.zeros((2, 2, 1))), Tensor3(np.zeros((2, 3, 1))))


@given(
    h=st.integers(1, 3),
    w=st.integers(1, 3),
    seed=st.integers(0, 2**32 - 1),
)
def test_linf_metric_axioms(h, w, seed):
    rng = np.random.default_rng(seed)
    a = Tensor3(rng.uniform(-3, 3, size=(h, w, 1)))
    b = Tensor3(rng.uniform(-3, 3, size=(h, w, 1)))
    c = Tensor3(rng.uniform(-3, 3, size=(h, w, 1)))
    assert linf_distance(a, b) >= 0.0
    assert linf_distance(a, b) == linf_distance(b, a)
    assert linf_distance(a, c) <= linf_distance(a, b) + linf_distance(b, c) + 1e-12
