import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdelm.tensor_core import Tensor, TensorError, inner, matricize, multi_mode_dot
from tdelm.tucker import (
    TuckerFactors,
    decompose_samples,
    duality_check,
    fix_signs,
    hooi,
    hosvd,
    mode_ranks,
    project_samples,
    reconstruct,
    tucker_fit,
)


def orthonormal(rng, n, d):
    Q, _ = np.linalg.qr(rng.standard_normal((n, d)))
    return Q


def low_rank(rng, shape, ranks):
    core = rng.standard_normal(ranks)
    return multi_mode_dot(core, [orthonormal(rng, n, r) for n, r in zip(shape, ranks)])


def rel_err(a, b):
    return np.linalg.norm((a - b).ravel()) / np.linalg.norm(b.ravel())


# ---- mode_ranks

def test_mode_ranks_examples():
    rng = np.random.default_rng(0)
    u, v, w = rng.standard_normal(3), rng.standard_normal(4), rng.standard_normal(5)
    assert mode_ranks(np.einsum("i,j,k->ijk", u, v, w)) == (1, 1, 1)
    assert mode_ranks(rng.standard_normal((3, 4, 5))) == (3, 4, 5)
    assert mode_ranks(np.zeros((2, 3, 2))) == (0, 0, 0)


def test_mode_ranks_of_construction():
    rng = np.random.default_rng(1)
    assert mode_ranks(low_rank(rng, (5, 6, 7), (2, 3, 4))) == (2, 3, 4)


# ---- hosvd

def test_hosvd_rank_one():
    rng = np.random.default_rng(2)
    X = np.einsum("i,j,k->ijk", *(rng.standard_normal(n) for n in (3, 4, 5)))
    assert rel_err(reconstruct(hosvd(X, (1, 1, 1))).data, X) <= 1e-10


def test_hosvd_exact_on_low_rank():
    rng = np.random.default_rng(3)
    X = low_rank(rng, (4, 4, 4), (2, 2, 2))
    T = hosvd(X, (2, 2, 2))
    assert rel_err(reconstruct(T).data, X) <= 1e-10
    for B in T.factors:
        assert np.allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-10)


def test_hosvd_compresses_batch_to_64_2_2():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((64, 3, 4))
    T = hosvd(X, (64, 2, 2))
    assert T.ranks == (64, 2, 2) and T.shape == (64, 3, 4)
    assert 0 < T.fit < 1


def test_hosvd_rank_out_of_range():
    with pytest.raises(TensorError):
        hosvd(np.ones((2, 3)), (3, 1))
    with pytest.raises(TensorError):
        hosvd(np.ones((2, 3)), (0, 1))
    with pytest.raises(TensorError):
        hosvd(np.ones((2, 3)), (1,))


def test_hosvd_requesting_more_than_rank_is_still_orthonormal():
    X = np.zeros((4, 3))
    X[0, 0] = 1.0
    T = hosvd(X, (3, 2))
    for B in T.factors:
        assert np.allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-12)
    assert np.allclose(reconstruct(T).data, X)


def test_hosvd_energy_bound_random():
    rng = np.random.default_rng(5)
    for _ in range(20):
        shape = tuple(rng.integers(2, 6, size=3))
        ranks = tuple(int(rng.integers(1, n + 1)) for n in shape)
        X = rng.standard_normal(shape)
        err2 = np.linalg.norm((X - reconstruct(hosvd(X, ranks)).data).ravel()) ** 2
        bound = sum(np.sum(np.linalg.svd(matricize(X, k), compute_uv=False)[r:] ** 2)
                    for k, r in enumerate(ranks))
        assert err2 <= bound * (1 + 1e-10) + 1e-12


def test_fix_signs():
    B = np.array([[0.1, -0.9], [-0.8, 0.2]])
    F = fix_signs(B)
    assert np.array_equal(F, [[-0.1, 0.9], [0.8, -0.2]])


# ---- hooi

def test_hooi_exact_low_rank_one_iteration():
    rng = np.random.default_rng(6)
    X = low_rank(rng, (5, 4, 3), (2, 2, 2))
    T = hooi(X, (2, 2, 2))
    assert T.n_iters <= 1
    assert T.fit >= 1 - 1e-10


def test_hooi_beats_hosvd_and_is_monotone():
    rng = np.random.default_rng(7)
    for _ in range(10):
        X = low_rank(rng, (6, 5, 4), (2, 2, 2)) + 0.3 * rng.standard_normal((6, 5, 4))
        H, O = hosvd(X, (2, 2, 2)), hooi(X, (2, 2, 2))
        assert O.fit >= H.fit
        assert all(b >= a for a, b in zip(O.fit_history, O.fit_history[1:]))
        assert O.fit == pytest.approx(tucker_fit(X, O), abs=1e-12)


def test_hooi_preconditions():
    with pytest.raises(ValueError):
        hooi(np.ones((2, 2)), (1, 1), max_iters=0)
    with pytest.raises(ValueError):
        hooi(np.ones((2, 2)), (1, 1), fit_tol=0)


# ---- reconstruct

def test_reconstruct_identity_factors_returns_core():
    core = Tensor(np.random.default_rng(8).standard_normal((2, 3)))
    assert reconstruct(TuckerFactors(core, [None, np.eye(3)])) == core


def test_reconstruct_full_rank_round_trip():
    X = np.random.default_rng(9).standard_normal((3, 4, 2))
    assert rel_err(reconstruct(hosvd(X, X.shape)).data, X) <= 1e-10


def test_reconstruct_matches_quadruple_sum():
    rng = np.random.default_rng(10)
    core = rng.standard_normal((2, 2, 2))
    Bs = [rng.standard_normal((2, 2)) for _ in range(3)]
    Y = reconstruct(TuckerFactors(Tensor(core), Bs)).data
    for i in itertools.product(range(2), repeat=3):
        s = sum(core[d] * Bs[0][i[0], d[0]] * Bs[1][i[1], d[1]] * Bs[2][i[2], d[2]]
                for d in itertools.product(range(2), repeat=3))
        assert np.isclose(Y[i], s)


# ---- decompose_samples

def test_decompose_single_sample_uses_its_hosvd():
    X = np.random.default_rng(11).standard_normal((4, 3, 5))
    dec = decompose_samples([X], (2, 2, 3), method="hosvd")
    ref = hosvd(X, (2, 2, 3))
    assert dec.cores.shape == (1, 2, 2, 3)
    for B, R in zip(dec.factors, ref.factors):
        assert np.allclose(B, R, atol=1e-10)
    assert np.allclose(dec.cores[0], ref.core.data, atol=1e-10)


def test_decompose_equal_samples_equal_cores():
    X = np.random.default_rng(12).standard_normal((3, 3, 2))
    dec = decompose_samples([X] * 4, (2, 2, 1))
    assert all(np.allclose(c, dec.cores[0]) for c in dec.cores)


def test_decompose_lossless_on_low_rank_batch():
    rng = np.random.default_rng(13)
    B = [orthonormal(rng, n, r) for n, r in ((6, 2), (3, 2), (4, 3))]
    batch = np.stack([multi_mode_dot(rng.standard_normal((2, 2, 3)), B) for _ in range(10)])
    dec = decompose_samples(batch)          # ranks detected
    assert dec.cores.shape == (10, 2, 2, 3)
    for X, core in zip(batch, dec.cores):
        assert rel_err(multi_mode_dot(core, dec.factors), X) <= 1e-10
    assert np.allclose(project_samples(batch, dec.factors), dec.cores, atol=1e-12)


def test_decompose_full_rank_modes_get_identity():
    batch = np.random.default_rng(14).standard_normal((5, 3, 2, 4))
    dec = decompose_samples(batch, (2, 2, 4))
    assert np.array_equal(dec.factors[1], np.eye(2)) and np.array_equal(dec.factors[2], np.eye(4))
    assert dec.factors[0].shape == (3, 2)


def test_decompose_errors():
    with pytest.raises(TensorError):
        decompose_samples([], (1,))
    with pytest.raises(ValueError):
        decompose_samples(np.ones((2, 2, 2)), (1, 1), method="cp")


# ---- duality

def test_duality_identity_factors_exact():
    rng = np.random.default_rng(15)
    W, X = rng.standard_normal((3, 2)), rng.standard_normal((3, 2))
    lhs, rhs = duality_check(W, X, [np.eye(3), np.eye(2)])
    assert lhs == rhs


def test_duality_random_orthonormal():
    rng = np.random.default_rng(16)
    for _ in range(20):
        B = [orthonormal(rng, 4, 2), orthonormal(rng, 4, 2)]
        lhs, rhs = duality_check(rng.standard_normal((2, 2)), rng.standard_normal((2, 2)), B)
        assert abs(lhs - rhs) <= 1e-10 * abs(lhs) + 1e-15


def test_duality_zero_core():
    rng = np.random.default_rng(17)
    B = [orthonormal(rng, 4, 2)] * 2
    assert duality_check(np.zeros((2, 2)), rng.standard_normal((2, 2)), B) == (0.0, 0.0)


def test_duality_shape_mismatch():
    with pytest.raises(TensorError):
        duality_check(np.zeros((2, 2)), np.zeros((2, 3)), [np.eye(2)] * 2)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 4), st.integers(0, 3)), min_size=1, max_size=3),
       st.integers(0, 2**31))
def test_duality_property(dims, seed):
    rng = np.random.default_rng(seed)
    ranks = [d for d, _ in dims]
    B = [orthonormal(rng, d + extra, d) for d, extra in dims]
    W, X = rng.standard_normal(ranks), rng.standard_normal(ranks)
    lhs, rhs = duality_check(W, X, B)
    assert abs(lhs - rhs) <= 1e-10 * (abs(lhs) + 1)
    assert rhs == pytest.approx(inner(W, X))
