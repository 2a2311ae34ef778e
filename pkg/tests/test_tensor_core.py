import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdelm.linalg import numeric_rank
from tdelm.tensor_core import (
    Tensor,
    TensorError,
    fold,
    from_parts,
    inner,
    matricize,
    mode_product,
    stack_last,
    unfold,
    unstack_last,
    vectorize,
)

shapes = st.lists(st.integers(1, 4), min_size=1, max_size=4).map(tuple)


def rand(shape, seed=0):
    return np.random.default_rng(seed).standard_normal(shape)


# ---- Tensor construction

def test_tensor_is_read_only_copy():
    a = np.ones((2, 2))
    T = Tensor(a)
    a[0, 0] = 5
    assert T.data[0, 0] == 1
    with pytest.raises(ValueError):
        T.data[0, 0] = 3


@pytest.mark.parametrize("bad", [np.array([1.0, np.nan]), np.array([np.inf]), np.zeros((0, 2))])
def test_tensor_rejects_invalid(bad):
    with pytest.raises(TensorError):
        Tensor(bad)


def test_from_parts_layout():
    assert np.array_equal(from_parts((2, 2), [1, 3, 2, 4]).data, [[1, 2], [3, 4]])


def test_from_parts_zero_vector():
    assert np.array_equal(from_parts((3,), [0, 0, 0]).data, np.zeros(3))


def test_from_parts_length_mismatch():
    with pytest.raises(TensorError):
        from_parts((2, 3), np.arange(5))


def test_from_parts_non_finite():
    with pytest.raises(TensorError):
        from_parts((2,), [1.0, np.inf])


# ---- vectorize

def test_vectorize_layout():
    assert list(vectorize(from_parts((2, 2), [1, 3, 2, 4]))) == [1, 3, 2, 4]


def test_vectorize_order_one_identity():
    v = np.array([4.0, -1.0, 2.0])
    assert np.array_equal(vectorize(Tensor(v)), v)


def test_vectorize_brute_force_index():
    a = rand((2, 3, 4))
    v = vectorize(a)
    for i, j, k in itertools.product(range(2), range(3), range(4)):
        assert v[i + 2 * j + 6 * k] == a[i, j, k]


@settings(max_examples=50, deadline=None)
@given(shapes, st.integers(0, 2**31))
def test_round_trip(shape, seed):
    X = Tensor(rand(shape, seed))
    assert from_parts(X.shape, vectorize(X)) == X


@settings(max_examples=50, deadline=None)
@given(shapes, st.integers(0, 2**31))
def test_inner_matches_vectorized_dot(shape, seed):
    X = rand(shape, seed)
    brute = sum(x * x for x in X.ravel())
    assert np.isclose(inner(X, X), np.dot(vectorize(X), vectorize(X)))
    assert np.isclose(inner(X, X), brute)


# ---- matricize

def test_matricize_matrix_mode0_is_identity():
    A = rand((3, 5))
    assert np.array_equal(matricize(A, 0), A)


def test_matricize_examples():
    X = from_parts((2, 2, 2), np.arange(1, 9))
    assert np.array_equal(matricize(X, 0), [[1, 3, 5, 7], [2, 4, 6, 8]])
    assert np.array_equal(matricize(X, 2), [[1, 2, 3, 4], [5, 6, 7, 8]])


def test_matricize_column_formula_brute_force():
    shape = (2, 3, 4, 2)
    a = rand(shape, 3)
    for k in range(len(shape)):
        M = matricize(a, k)
        assert M.shape == (shape[k], a.size // shape[k])
        for idx in itertools.product(*map(range, shape)):
            col, stride = 0, 1
            for m in range(len(shape)):
                if m == k:
                    continue
                col += idx[m] * stride
                stride *= shape[m]
            assert M[idx[k], col] == a[idx]


def test_matricize_mode_out_of_range():
    with pytest.raises(TensorError):
        matricize(rand((2, 2)), 2)


@settings(max_examples=30, deadline=None)
@given(shapes, st.integers(0, 2**31))
def test_fold_inverts_unfold(shape, seed):
    a = rand(shape, seed)
    for k in range(len(shape)):
        assert np.array_equal(fold(unfold(a, k), k, shape), a)


@settings(max_examples=30, deadline=None)
@given(shapes, st.integers(0, 2**31))
def test_mode_rank_bounded_by_dimension(shape, seed):
    a = rand(shape, seed)
    for k in range(len(shape)):
        assert numeric_rank(matricize(a, k)) <= shape[k]


# ---- inner

def test_inner_examples():
    X = np.array([[1.0, 2], [3, 4]])
    assert inner(X, np.zeros((2, 2))) == 0
    assert inner(X, [[5, 6], [7, 8]]) == 70
    assert inner(np.zeros((2, 2)), np.zeros((2, 2))) == 0


def test_inner_shape_mismatch():
    with pytest.raises(TensorError):
        inner(np.zeros((2, 2)), np.zeros(4))


@settings(max_examples=50, deadline=None)
@given(shapes, st.integers(0, 2**31), st.floats(-3, 3), st.floats(-3, 3))
def test_inner_symmetric_bilinear(shape, seed, a, b):
    rng = np.random.default_rng(seed)
    X, Y, Z = (rng.standard_normal(shape) for _ in range(3))
    assert inner(X, Y) == pytest.approx(inner(Y, X), rel=1e-12, abs=1e-12)
    lhs = inner(a * X + b * Z, Y)
    rhs = a * inner(X, Y) + b * inner(Z, Y)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs), abs(a * inner(X, Y)) + abs(b * inner(Z, Y)))
    assert inner(X, X) > 0


# ---- mode_product

def test_mode_product_identity():
    a = rand((3, 4, 5))
    assert np.allclose(mode_product(a, np.eye(4), 1).data, a)


def test_mode_product_order_two_is_matmul():
    X, M = rand((3, 4), 1), rand((2, 3), 2)
    assert np.allclose(mode_product(X, M, 0).data, M @ X)


def test_mode_product_brute_force():
    X, M = rand((3, 4, 5), 4), rand((2, 4), 5)
    Y = mode_product(X, M, 1).data
    assert Y.shape == (3, 2, 5)
    for i, r, k in itertools.product(range(3), range(2), range(5)):
        assert np.isclose(Y[i, r, k], sum(M[r, j] * X[i, j, k] for j in range(4)))
    assert np.allclose(matricize(Y, 1), M @ matricize(X, 1), atol=1e-13)


def test_mode_product_mismatch():
    with pytest.raises(TensorError):
        mode_product(rand((3, 4)), rand((2, 3)), 1)


@settings(max_examples=40, deadline=None)
@given(shapes, st.integers(0, 2**31), st.integers(1, 4))
def test_mode_product_matricization_identity(shape, seed, rows):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal(shape)
    for k in range(len(shape)):
        M = rng.standard_normal((rows, shape[k]))
        assert np.allclose(matricize(mode_product(X, M, k), k), M @ matricize(X, k),
                           atol=1e-12)


# ---- stacking

def test_stack_single():
    X = rand((2, 3))
    S = stack_last([X])
    assert S.shape == (2, 3, 1) and np.array_equal(S.data[..., 0], X)


def test_stack_two_and_unstack():
    A, B = rand((2, 2), 1), rand((2, 2), 2)
    S = stack_last([A, B])
    assert S.shape == (2, 2, 2)
    parts = unstack_last(S)
    assert np.array_equal(parts[0].data, A) and np.array_equal(parts[1].data, B)


def test_stack_full_scale_shape():
    batch = np.zeros((4104, 64, 3, 4))
    batch[:, 0, 0, 0] = 1.0
    assert stack_last(list(batch)).shape == (64, 3, 4, 4104)


def test_stack_errors():
    with pytest.raises(TensorError):
        stack_last([])
    with pytest.raises(TensorError):
        stack_last([np.zeros((2, 2)), np.zeros((2, 3))])
