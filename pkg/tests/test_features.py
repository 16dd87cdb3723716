import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqcrf.errors import InvalidConfigError
from seqcrf.features import (
    extract_features,
    split_code,
    temporal_pool,
    temporal_pool_backward,
    window_bounds,
)
from seqcrf.lasso import LassoConfig, SparseCode


def test_split_code_example():
    a = split_code(SparseCode(np.array([0.5, 0.0, -0.2])))
    np.testing.assert_array_equal(a, [0.5, 0.0, 0.0, 0.0, 0.0, -0.2])


def test_split_code_matrix_rows():
    U = np.array([[1.0, -2.0], [0.0, 3.0]])
    assert split_code(U).shape == (2, 4)
    np.testing.assert_array_equal(split_code(U)[0], [1, 0, 0, -2])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_split_code_recombines(vals):
    u = np.array(vals)
    a = split_code(u)
    m = u.size
    np.testing.assert_array_equal(a[:m] + a[m:], u)
    assert np.all(a[:m] >= 0) and np.all(a[m:] <= 0)


def test_pool_clipped_example():
    Z = temporal_pool(np.array([[1.0], [2.0], [4.0]]), 3)
    np.testing.assert_allclose(Z.ravel(), [1.5, 7 / 3, 3.0], rtol=0, atol=1e-15)


def test_pool_window_one_is_identity():
    A = np.random.default_rng(0).standard_normal((5, 3))
    np.testing.assert_array_equal(temporal_pool(A, 1), A)


def test_pool_interior_is_plain_mean():
    A = np.random.default_rng(1).standard_normal((12, 4))
    Z = temporal_pool(A, 5)
    for t in range(2, 10):
        np.testing.assert_allclose(Z[t], A[t - 2:t + 3].sum(axis=0) / 5, atol=1e-14)


def test_pool_window_longer_than_sequence():
    A = np.array([[1.0], [3.0]])
    np.testing.assert_allclose(temporal_pool(A, 7).ravel(), [2.0, 2.0])


@pytest.mark.parametrize("L", [0, 2, 4, -1, 2.5])
def test_even_or_bad_window_rejected(L):
    with pytest.raises(InvalidConfigError):
        temporal_pool(np.ones((3, 1)), L)


def test_window_bounds():
    lo, hi = window_bounds(5, 3)
    assert list(lo) == [0, 0, 1, 2, 3]
    assert list(hi) == [2, 3, 4, 5, 5]


@pytest.mark.parametrize("T,L", [(1, 1), (4, 3), (9, 5), (6, 11)])
def test_pool_backward_is_adjoint(T, L):
    rng = np.random.default_rng(T * 31 + L)
    A = rng.standard_normal((T, 3))
    G = rng.standard_normal((T, 3))
    lhs = np.sum(temporal_pool(A, L) * G)
    rhs = np.sum(A * temporal_pool_backward(G, L))
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_extract_features_shapes():
    rng = np.random.default_rng(2)
    psi = rng.standard_normal((4, 6))
    psi /= np.linalg.norm(psi, axis=0)
    X = rng.standard_normal((10, 4))
    Z, codes = extract_features(X, psi, LassoConfig(lambda_u=0.2), 3)
    assert Z.shape == (10, 12)
    assert len(codes) == 10
