"""Skip-chain CRF: energy, joint features and exact max-sum decoding.

The energy of a labelling ``y`` of pooled features ``Z`` (``T x D``) is::

    E(Z, y) = sum_t unary[y_t] . z_t + sum_{t < T-d} pairwise[y_t, y_{t+d}]

and is maximised, never negated. Edges only join frames ``d`` apart, so the
graph falls apart into ``d`` interleaved chains that are decoded separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass
class CrfWeights:
    """Unary classifiers (``Nc x D``), transition scores (``Nc x Nc``), skip length."""

    unary: np.ndarray
    pairwise: np.ndarray
    skip: int = 1

    def __post_init__(self):
        self.unary = np.asarray(self.unary, dtype=float)
        self.pairwise = np.asarray(self.pairwise, dtype=float)
        if self.unary.ndim != 2 or self.unary.shape[0] < 1:
            raise InvalidInputError(f"unary weights must be Nc x D, got {self.unary.shape}")
        nc = self.unary.shape[0]
        if self.pairwise.shape != (nc, nc):
            raise InvalidInputError(f"pairwise weights must be {nc} x {nc}, got {self.pairwise.shape}")
        if int(self.skip) != self.skip or self.skip < 1:
            raise InvalidInputError(f"skip length must be a positive integer, got {self.skip}")
        self.skip = int(self.skip)

    @classmethod
    def zeros(cls, n_classes: int, dim: int, skip: int = 1) -> "CrfWeights":
        return cls(np.zeros((n_classes, dim)), np.zeros((n_classes, n_classes)), skip)

    @classmethod
    def from_flat(cls, W, n_classes: int, dim: int, skip: int = 1) -> "CrfWeights":
        W = np.asarray(W, dtype=float)
        nu = n_classes * dim
        if W.shape != (nu + n_classes * n_classes,):
            raise InvalidInputError(f"flat weight vector has shape {W.shape}")
        return cls(W[:nu].reshape(n_classes, dim).copy(), W[nu:].reshape(n_classes, n_classes).copy(), skip)

    @property
    def n_classes(self) -> int:
        return self.unary.shape[0]

    @property
    def dim(self) -> int:
        return self.unary.shape[1]

    def flat(self) -> np.ndarray:
        """Unary rows (class-major) followed by pairwise rows (row-major)."""
        return np.concatenate([self.unary.ravel(), self.pairwise.ravel()])

    def copy(self) -> "CrfWeights":
        return CrfWeights(self.unary.copy(), self.pairwise.copy(), self.skip)


def _check(Z, y=None, w=None):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise InvalidInputError(f"features must be a T x D matrix, got shape {Z.shape}")
    if w is not None and Z.shape[1] != w.dim:
        raise InvalidInputError(f"feature dimension {Z.shape[1]} does not match weights ({w.dim})")
    if y is not None:
        y = np.asarray(y)
        if y.shape != (Z.shape[0],):
            raise InvalidInputError(f"label sequence has shape {y.shape}, expected ({Z.shape[0]},)")
        y = y.astype(int)
        if w is not None and y.size and (y.min() < 0 or y.max() >= w.n_classes):
            raise InvalidInputError(f"labels must lie in [0, {w.n_classes})")
    return Z, y


def hamming(y1, y2) -> int:
    y1, y2 = np.asarray(y1), np.asarray(y2)
    if y1.shape != y2.shape:
        raise InvalidInputError(f"length mismatch: {y1.shape} vs {y2.shape}")
    return int(np.count_nonzero(y1 != y2))


def energy(Z, y, w: CrfWeights) -> float:
    Z, y = _check(Z, y, w)
    T, d = Z.shape[0], w.skip
    unary = np.sum(w.unary[y] * Z)
    pair = np.sum(w.pairwise[y[:-d], y[d:]]) if T > d else 0.0
    return float(unary + pair)


def joint_feature(Z, y, d: int, n_classes: int | None = None) -> np.ndarray:
    """Sufficient statistics making the energy linear in ``CrfWeights.flat()``.

    ``n_classes`` defaults to ``max(y) + 1``.
    """
    Z, y = _check(Z, y)
    if n_classes is None:
        n_classes = int(y.max()) + 1 if y.size else 1
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise InvalidInputError(f"labels must lie in [0, {n_classes})")
    T, D = Z.shape
    phi_u = np.zeros((n_classes, D))
    np.add.at(phi_u, y, Z)
    phi_p = np.zeros((n_classes, n_classes))
    if T > d:
        np.add.at(phi_p, (y[:-d], y[d:]), 1.0)
    return np.concatenate([phi_u.ravel(), phi_p.ravel()])


def unary_scores(Z, w: CrfWeights) -> np.ndarray:
    """Per-frame, per-class unary potentials, ``T x Nc``."""
    Z, _ = _check(Z, None, w)
    return Z @ w.unary.T


def _max_sum_chain(scores, pairwise):
    n, nc = scores.shape
    delta = scores[0].copy()
    back = np.zeros((n, nc), dtype=int)
    for i in range(1, n):
        # cand[a, b]: best score ending in a at i-1, then a -> b
        cand = delta[:, None] + pairwise
        back[i] = np.argmax(cand, axis=0)
        delta = cand[back[i], np.arange(nc)] + scores[i]
    path = np.empty(n, dtype=int)
    path[-1] = int(np.argmax(delta))
    for i in range(n - 1, 0, -1):
        path[i - 1] = back[i, path[i]]
    return path


def decode_scores(scores, pairwise, d: int) -> np.ndarray:
    """Max-sum decode a ``T x Nc`` unary score table with skip-``d`` transitions.

    Ties go to the lowest class id (``np.argmax`` returns the first maximum).
    """
    scores = np.asarray(scores, dtype=float)
    T = scores.shape[0]
    y = np.empty(T, dtype=int)
    for r in range(min(d, T)):
        y[r::d] = _max_sum_chain(scores[r::d], pairwise)
    return y


def viterbi_decode(Z, w: CrfWeights) -> np.ndarray:
    """Highest-energy labelling of ``Z``."""
    return decode_scores(unary_scores(Z, w), w.pairwise, w.skip)


def loss_augmented_decode(Z, w: CrfWeights, y_true) -> np.ndarray:
    """``argmax_y hamming(y_true, y) + energy(Z, y)``.

    The Hamming loss splits over frames, so it is added as ``+1`` to the unary
    score of every wrong class before a plain decode.
    """
    Z, y_true = _check(Z, y_true, w)
    loss = np.ones((Z.shape[0], w.n_classes))
    loss[np.arange(Z.shape[0]), y_true] = 0.0
    return decode_scores(unary_scores(Z, w) + loss, w.pairwise, w.skip)
