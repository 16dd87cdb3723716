"""Pooled sparse features: sign splitting followed by temporal average pooling."""

from __future__ import annotations

import numpy as np

from .errors import InvalidConfigError
from .lasso import LassoConfig, SparseCode, codes_matrix, encode_sequence


def split_code(code) -> np.ndarray:
    """Stack the positive and negative parts of a code: ``[max(0,u), min(0,u)]``.

    Accepts a :class:`SparseCode` or a plain coefficient array. A ``T x m``
    array is split row by row into ``T x 2m``.
    """
    u = code.u if isinstance(code, SparseCode) else np.asarray(code, dtype=float)
    return np.concatenate([np.maximum(0.0, u), np.minimum(0.0, u)], axis=-1)


def _check_window(L):
    if int(L) != L or L < 1 or L % 2 == 0:
        raise InvalidConfigError(f"pooling window must be an odd positive integer, got {L}")
    return int(L)


def window_bounds(T: int, L: int):
    """Start (inclusive) and stop (exclusive) frame of every clipped window."""
    half = _check_window(L) // 2
    t = np.arange(T)
    return np.maximum(t - half, 0), np.minimum(t + half + 1, T)


def temporal_pool(splits, L: int) -> np.ndarray:
    """Average each row over the centred window of length ``L``.

    Windows are clipped to ``[0, T)`` and divided by the number of frames they
    actually cover, so edge frames get a true mean rather than a zero-padded one.
    """
    A = np.asarray(splits, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    T = A.shape[0]
    if T < 1:
        raise InvalidConfigError("cannot pool an empty sequence")
    lo, hi = window_bounds(T, L)
    if L == 1:
        return A.copy()
    Z = np.empty_like(A)
    for t in range(T):
        Z[t] = A[lo[t]:hi[t]].mean(axis=0)
    return Z


def temporal_pool_backward(grad_Z, L: int) -> np.ndarray:
    """Adjoint of :func:`temporal_pool`: route ``dJ/dz_t`` back onto every ``a_j``.

    Frame ``j`` receives ``sum_t grad_Z[t] / |window_t|`` over the windows
    that contain it.
    """
    G = np.asarray(grad_Z, dtype=float)
    T = G.shape[0]
    lo, hi = window_bounds(T, L)
    scaled = G / (hi - lo)[:, None]
    # window membership is symmetric: j in window_t iff t in [j-half, j+half]
    csum = np.vstack([np.zeros((1, G.shape[1])), np.cumsum(scaled, axis=0)])
    return csum[hi] - csum[lo]


def extract_features(X, dictionary, cfg: LassoConfig, L: int):
    """Sparse-code every frame of ``X`` and pool the split codes.

    Returns
    -------
    Z : ndarray, shape (T, 2m)
    codes : list of SparseCode
        Raw per-frame codes, needed by the dictionary gradient.
    """
    _check_window(L)
    codes = encode_sequence(X, dictionary, cfg)
    Z = temporal_pool(split_code(codes_matrix(codes)), L)
    return Z, codes
