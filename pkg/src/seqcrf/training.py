"""Joint max-margin learning of the dictionary and the skip-chain CRF.

Each SGD step takes one training sequence, finds the most violated labelling
by loss-augmented decoding, and moves the CRF weights along

    W + C * (phi(Z, y_hat) - phi(Z, y))

and, when the dictionary is learned, the dictionary along the gradient of the
hinge term back-propagated through pooling, sign splitting and the fixed-support
Lasso solution. Atoms are renormalised after every step.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .crf import CrfWeights, energy, hamming, joint_feature, loss_augmented_decode, viterbi_decode
from .data import PreprocessStats, apply_preprocess
from .errors import DegenerateSupportError, DivergenceError, InvalidInputError, SeqCRFError
from .features import split_code, temporal_pool, temporal_pool_backward
from .lasso import LassoConfig, SparseCode, codes_matrix, encode_matrix, gram_inverse

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    C: float = 1.0
    eta0: float = 1e-3
    momentum: float = 0.9
    epochs: int = 100
    lr_halving_period: int = 20
    seed: int = 0
    learn_dictionary: bool = True

    def __post_init__(self):
        if not self.C > 0:
            raise InvalidInputError(f"C must be positive, got {self.C}")
        if not self.eta0 >= 0:
            raise InvalidInputError(f"eta0 must be non-negative, got {self.eta0}")
        if not 0 <= self.momentum < 1:
            raise InvalidInputError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 0 or self.lr_halving_period < 1:
            raise InvalidInputError("epochs must be >= 0 and lr_halving_period >= 1")

    def learning_rate(self, epoch: int) -> float:
        return self.eta0 * 0.5 ** (epoch // self.lr_halving_period)


@dataclass
class ModelBundle:
    """Everything needed to label a raw sequence.

    ``dictionary=None`` selects raw features: the preprocessed frames are fed
    to the CRF directly and there is no sparse coding or pooling.
    """

    dictionary: np.ndarray | None
    weights: CrfWeights
    lasso: LassoConfig = field(default_factory=LassoConfig)
    pool_window: int = 1
    preprocess: PreprocessStats | None = None

    def __post_init__(self):
        if self.dictionary is not None:
            self.dictionary = np.asarray(self.dictionary, dtype=float)
            if self.weights.dim != 2 * self.dictionary.shape[1]:
                raise InvalidInputError(
                    f"unary weights have {self.weights.dim} columns, dictionary needs {2 * self.dictionary.shape[1]}"
                )

    @property
    def n_classes(self) -> int:
        return self.weights.n_classes

    @property
    def raw(self) -> bool:
        return self.dictionary is None

    def copy(self) -> "ModelBundle":
        return replace(
            self,
            dictionary=None if self.dictionary is None else self.dictionary.copy(),
            weights=self.weights.copy(),
        )

    def features(self, X):
        """Pooled features ``Z`` and the ``T x m`` code matrix of preprocessed ``X``."""
        X = np.asarray(X, dtype=float)
        if self.raw:
            if X.shape[1] != self.weights.dim:
                raise InvalidInputError(f"raw model expects {self.weights.dim} columns, got {X.shape[1]}")
            return X, None
        U = encode_matrix(X, self.dictionary, self.lasso)
        return temporal_pool(split_code(U), self.pool_window), U

    def preprocess_sequence(self, X):
        return X if self.preprocess is None else apply_preprocess(X, self.preprocess)

    def predict(self, X, preprocessed: bool = False) -> np.ndarray:
        if not preprocessed:
            X = self.preprocess_sequence(X)
        Z, _ = self.features(X)
        return viterbi_decode(Z, self.weights)


# ---------------------------------------------------------------------------
# dictionary initialisation


def _reconstruction_objective(X, psi, U, lam):
    R = X - U @ psi.T
    return float(np.mean(np.sum(R * R, axis=1) + lam * np.sum(np.abs(U), axis=1)))


def init_dictionary(frames, m: int, lambda_u: float, iters: int = 30, seed: int = 0,
                    tol: float = 1e-7, return_objectives: bool = False):
    """Unsupervised dictionary by alternating Lasso coding and atom updates.

    Atoms start as ``m`` randomly chosen (normalised) frames. Each round codes
    all frames, then revisits every atom with the exact least-squares update
    restricted to the unit ball, and finally rescales atoms to unit norm.
    Unused atoms are re-seeded from a random frame. The mean reconstruction
    objective after each coding step never increases.

    Returns the ``p x m`` dictionary, plus the per-round objectives when
    ``return_objectives`` is set (``iters + 1`` values, round 0 first).
    """
    X = np.atleast_2d(np.asarray(frames, dtype=float))
    n, p = X.shape
    if iters < 1:
        raise InvalidInputError(f"iters must be >= 1, got {iters}")
    if m < 1 or n < m:
        raise InvalidInputError(f"need at least m={m} frames to initialise, got {n}")
    rng = np.random.default_rng(seed)
    cfg = LassoConfig(lambda_u=lambda_u, tol=tol)
    psi = X[rng.choice(n, size=m, replace=False)].T.copy()
    psi = normalize_atoms(psi, seed=int(rng.integers(2**31)))
    objectives = []
    for r in range(iters + 1):
        U = encode_matrix(X, psi, cfg)
        objectives.append(_reconstruction_objective(X, psi, U, lambda_u))
        if r == iters:
            break
        A = U.T @ U
        B = X.T @ U
        for j in range(m):
            if A[j, j] <= 0:
                psi[:, j] = X[rng.integers(n)]
                continue
            col = psi[:, j] + (B[:, j] - psi @ A[:, j]) / A[j, j]
            psi[:, j] = col / max(1.0, np.linalg.norm(col))
        psi = normalize_atoms(psi, seed=int(rng.integers(2**31)))
    if return_objectives:
        return psi, objectives
    return psi


def normalize_atoms(dictionary, seed: int = 0) -> np.ndarray:
    """Scale every column to unit norm; zero columns become seeded random unit vectors."""
    psi = np.array(dictionary, dtype=float)
    norms = np.linalg.norm(psi, axis=0)
    dead = norms <= 0
    if dead.any():
        rng = np.random.default_rng(seed)
        fresh = rng.standard_normal((psi.shape[0], int(dead.sum())))
        psi[:, dead] = fresh / np.linalg.norm(fresh, axis=0)
        norms[dead] = 1.0
    return psi / norms


# ---------------------------------------------------------------------------
# gradients


def crf_gradient(phi_hat, phi_true, w, C: float) -> np.ndarray:
    phi_hat, phi_true = np.asarray(phi_hat, dtype=float), np.asarray(phi_true, dtype=float)
    W = w.flat() if isinstance(w, CrfWeights) else np.asarray(w, dtype=float)
    if phi_hat.shape != phi_true.shape or phi_hat.shape != W.shape:
        raise InvalidInputError(f"length mismatch: {phi_hat.shape}, {phi_true.shape}, {W.shape}")
    return W + C * (phi_hat - phi_true)


def code_jacobian_terms(x, dictionary, code: SparseCode):
    """Residual ``x - Psi_S u_S`` and ``A^-1`` with ``A = Psi_S^T Psi_S``."""
    psi = np.asarray(dictionary, dtype=float)
    S = code.support
    if S.size == 0:
        raise DegenerateSupportError("empty support")
    A_inv = gram_inverse(psi, S)
    residual = np.asarray(x, dtype=float) - psi[:, S] @ code.u[S]
    return residual, A_inv


def code_jacobian(x, dictionary, code: SparseCode) -> np.ndarray:
    """Derivatives of the active coefficients w.r.t. the active atoms.

    ``J[i]`` is the ``p x |S|`` matrix ``d u_{S[i]} / d Psi_S`` for a fixed support.
    """
    psi = np.asarray(dictionary, dtype=float)
    residual, A_inv = code_jacobian_terms(x, psi, code)
    S = code.support
    uS = code.u[S]
    PA = psi[:, S] @ A_inv.T
    return np.stack([np.outer(residual, A_inv[i]) - np.outer(PA[:, i], uS) for i in range(S.size)])


def dictionary_gradient(X, codes, w: CrfWeights, y_true, y_hat, L: int, dictionary) -> np.ndarray:
    """Gradient of ``sum_t (unary[y_hat_t] - unary[y_t]) . z_t`` w.r.t. the dictionary.

    ``codes`` is a list of :class:`SparseCode` or a ``T x m`` array. Frames whose
    support is empty or ill-conditioned contribute nothing.
    """
    psi = np.asarray(dictionary, dtype=float)
    X = np.asarray(X, dtype=float)
    U = codes_matrix(codes) if isinstance(codes, (list, tuple)) else np.asarray(codes, dtype=float)
    y_true, y_hat = np.asarray(y_true, dtype=int), np.asarray(y_hat, dtype=int)
    T = X.shape[0]
    p, m = psi.shape
    if X.shape[1] != p or U.shape != (T, m) or y_true.shape != (T,) or y_hat.shape != (T,):
        raise InvalidInputError("dimension mismatch in dictionary_gradient inputs")
    if w.dim != 2 * m:
        raise InvalidInputError(f"unary weights have {w.dim} columns, expected {2 * m}")
    grad = np.zeros((p, m))
    diff = y_hat != y_true
    if not diff.any():
        return grad
    gz = np.zeros((T, w.dim))
    gz[diff] = w.unary[y_hat[diff]] - w.unary[y_true[diff]]
    ga = temporal_pool_backward(gz, L)
    # route each split-code gradient back to the signed coefficient it came from
    gu = np.where(U > 0, ga[:, :m], np.where(U < 0, ga[:, m:], 0.0))
    for j in np.flatnonzero(np.any(gu != 0, axis=1)):
        S = np.flatnonzero(U[j])
        try:
            A_inv = gram_inverse(psi, S)
        except DegenerateSupportError:
            continue
        PS = psi[:, S]
        uS = U[j, S]
        beta = A_inv @ gu[j, S]
        grad[:, S] += np.outer(X[j] - PS @ uS, beta) - np.outer(PS @ beta, uS)
    return grad


# ---------------------------------------------------------------------------
# SGD


@dataclass
class Velocity:
    """Heavy-ball momentum buffers, one per parameter block."""

    weights: np.ndarray | None = None
    dictionary: np.ndarray | None = None


def hinge(Z, y, w: CrfWeights, y_hat=None) -> float:
    if y_hat is None:
        y_hat = loss_augmented_decode(Z, w, y)
    return hamming(y, y_hat) + energy(Z, y_hat, w) - energy(Z, y, w)


def full_objective(model: ModelBundle, data, C: float) -> float:
    """``0.5 ||W||^2 + C / Ns * sum_n hinge_n`` over all sequences."""
    total = 0.0
    for X, y in data:
        Z, _ = model.features(X)
        total += hinge(Z, np.asarray(y, dtype=int), model.weights)
    W = model.weights.flat()
    return 0.5 * float(W @ W) + C * total / len(data)


def _check_data(data, n_classes):
    if len(data) == 0:
        raise InvalidInputError("no training sequences")
    for n, (X, y) in enumerate(data):
        y = np.asarray(y)
        if y.shape != (np.asarray(X).shape[0],):
            raise InvalidInputError(f"sequence {n}: {y.shape[0]} labels for {np.asarray(X).shape[0]} frames")
        if y.min() < 0 or y.max() >= n_classes:
            raise InvalidInputError(f"sequence {n}: labels outside [0, {n_classes})")


def sgd_epoch(model: ModelBundle, data, cfg: TrainConfig, epoch_index: int, velocity: Velocity):
    """One pass over ``data`` (preprocessed ``(X, y)`` pairs) in seeded random order.

    Returns the updated copy of ``model`` and a trace record. ``velocity`` is
    updated in place.
    """
    _check_data(data, model.n_classes)
    model = model.copy()
    w = model.weights
    nc, dim, d = w.n_classes, w.dim, w.skip
    learn_dict = cfg.learn_dictionary and not model.raw
    lr = cfg.learning_rate(epoch_index)
    if velocity.weights is None:
        velocity.weights = np.zeros(nc * dim + nc * nc)
    if learn_dict and velocity.dictionary is None:
        velocity.dictionary = np.zeros_like(model.dictionary)
    psi_start = None if model.raw else model.dictionary.copy()

    order = np.random.default_rng([cfg.seed, epoch_index]).permutation(len(data))
    hinges, objectives = [], []
    # overflow is caught by the finiteness check below
    with np.errstate(over="ignore", invalid="ignore"):
        for n in order:
            X, y = data[n]
            y = np.asarray(y, dtype=int)
            try:
                Z, U = model.features(X)
                y_hat = loss_augmented_decode(Z, w, y)
                h = hinge(Z, y, w, y_hat)
                W = w.flat()
                hinges.append(h)
                objectives.append(0.5 * float(W @ W) + cfg.C * h)
                g_w = crf_gradient(joint_feature(Z, y_hat, d, nc), joint_feature(Z, y, d, nc), W, cfg.C)
                g_psi = None
                if learn_dict:
                    g_psi = cfg.C * dictionary_gradient(X, U, w, y, y_hat, model.pool_window, model.dictionary)
            except SeqCRFError as exc:
                exc.args = (f"sequence {n}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
                raise
            velocity.weights = cfg.momentum * velocity.weights - lr * g_w
            w = CrfWeights.from_flat(W + velocity.weights, nc, dim, d)
            if g_psi is not None:
                velocity.dictionary = cfg.momentum * velocity.dictionary - lr * g_psi
                model.dictionary = normalize_atoms(
                    model.dictionary + velocity.dictionary, seed=cfg.seed + 7919 * epoch_index + int(n)
                )
            if not np.all(np.isfinite(w.flat())) or (
                not model.raw and not np.all(np.isfinite(model.dictionary))
            ):
                raise DivergenceError(f"non-finite parameters after sequence {n} in epoch {epoch_index}")
    model.weights = w
    W = w.flat()
    record = {
        "epoch": epoch_index,
        "lr": lr,
        "objective": float(np.mean(objectives)),
        "mean_hinge": float(np.mean(hinges)),
        "weight_norm": float(np.linalg.norm(W)),
        "dictionary_drift": 0.0 if model.raw else float(np.linalg.norm(model.dictionary - psi_start)),
    }
    return model, record


def fit(data, cfg: TrainConfig, model_init: ModelBundle, sink=None):
    """Run ``cfg.epochs`` SGD epochs starting from ``model_init``.

    ``data`` holds preprocessed ``(X, y)`` pairs. Each epoch's trace record is
    also written to ``sink`` (anything with ``write``) as one JSON line. The
    full objective over all sequences is added at the first, middle and last
    epoch.

    Returns ``(model, trace)``.
    """
    if cfg.epochs == 0:
        return model_init, []
    _check_data(data, model_init.n_classes)
    model = model_init
    velocity = Velocity()
    trace = []
    checkpoints = {0, cfg.epochs // 2, cfg.epochs - 1}
    for e in range(cfg.epochs):
        model, record = sgd_epoch(model, data, cfg, e, velocity)
        if e in checkpoints:
            record["full_objective"] = full_objective(model, data, cfg.C)
        trace.append(record)
        log.info("epoch %d objective %.4f hinge %.2f", e, record["objective"], record["mean_hinge"])
        if sink is not None:
            sink.write(json.dumps(record) + "\n")
    return model, trace
