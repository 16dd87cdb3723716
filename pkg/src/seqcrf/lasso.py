"""Per-frame Lasso sparse coding.

Every frame ``x`` is encoded against a dictionary ``Psi`` (``p x m``, one atom
per column) by minimising::

    ||x - Psi u||_2^2 + lambda_u * ||u||_1

with cyclic coordinate descent on the Gram matrix ``G = Psi^T Psi``. The
per-coordinate soft threshold is therefore ``lambda_u / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConvergenceError, DegenerateSupportError, InvalidInputError

GRAM_COND_CAP = 1e10


@dataclass(frozen=True)
class LassoConfig:
    lambda_u: float = 0.1
    max_iter: int = 10000
    tol: float = 1e-7

    def __post_init__(self):
        if not self.lambda_u > 0:
            raise InvalidInputError(f"lambda_u must be positive, got {self.lambda_u}")
        if not self.tol > 0:
            raise InvalidInputError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) < 1:
            raise InvalidInputError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass(frozen=True)
class SparseCode:
    """Coefficients ``u`` of one frame and their support ``{k : u_k != 0}``."""

    u: np.ndarray
    support: np.ndarray = field(default=None)

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        object.__setattr__(self, "u", u)
        if self.support is None:
            object.__setattr__(self, "support", np.flatnonzero(u))

    @property
    def m(self) -> int:
        return self.u.shape[0]


@njit(cache=True, nogil=True)
def _kkt_from_corr(rho, u, lam):
    # rho = Psi^T (x - Psi u)
    worst = 0.0
    for k in range(u.shape[0]):
        g = 2.0 * rho[k]
        if u[k] > 0.0:
            v = abs(g - lam)
        elif u[k] < 0.0:
            v = abs(g + lam)
        else:
            v = abs(g) - lam
            if v < 0.0:
                v = 0.0
        if v > worst:
            worst = v
    return worst


@njit(cache=True, nogil=True)
def _corr(psi, x):
    p, m = psi.shape
    c = np.zeros(m)
    for k in range(m):
        s = 0.0
        for i in range(p):
            s += psi[i, k] * x[i]
        c[k] = s
    return c


@njit(cache=True, nogil=True)
def _refresh(psi, x, u, rho):
    # rho = Psi^T (x - Psi u), via the explicit residual to avoid Gram cancellation
    p, m = psi.shape
    r = x.copy()
    for k in range(m):
        if u[k] != 0.0:
            for i in range(p):
                r[i] -= psi[i, k] * u[k]
    for k in range(m):
        s = 0.0
        for i in range(p):
            s += psi[i, k] * r[i]
        rho[k] = s


@njit(cache=True, nogil=True)
def _cholesky(A, rel_eps):
    # Returns (L, k): L lower-triangular over the first k columns; k < n flags
    # that column k is (numerically) in the span of columns 0..k-1.
    n = A.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s <= rel_eps * A[j, j] or s <= 0.0:
            return L, j
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, n):
            t = A[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / L[j, j]
    return L, n


@njit(cache=True, nogil=True)
def _chol_solve(L, b, k):
    # solve (L L^T) v = b on the leading k x k block
    y = np.empty(k)
    for i in range(k):
        s = b[i]
        for j in range(i):
            s -= L[i, j] * y[j]
        y[i] = s / L[i, i]
    v = np.empty(k)
    for i in range(k - 1, -1, -1):
        s = y[i]
        for j in range(i + 1, k):
            s -= L[j, i] * v[j]
        v[i] = s / L[i, i]
    return v


@njit(cache=True, nogil=True)
def _refine(psi, gram, corr, u, thresh, max_steps):
    # Sign-constrained active-set descent on the current support. Each step
    # either removes a null-space direction (dependent active atoms) or moves
    # towards the exact restricted minimiser, stopping at the first coefficient
    # sign change. Both strictly lower the Lasso objective.
    u = u.copy()
    for _ in range(max_steps):
        idx = np.flatnonzero(u)
        n = idx.shape[0]
        if n == 0:
            return u
        A = np.empty((n, n))
        s = np.empty(n)
        uS = np.empty(n)
        for i in range(n):
            for j in range(n):
                A[i, j] = gram[idx[i], idx[j]]
            s[i] = np.sign(u[idx[i]])
            uS[i] = u[idx[i]]
        L, k = _cholesky(A, 1e-12)
        if k < n:
            # dependent column k: d = [-A_kk^-1 a_k, 1, 0...] spans the null space
            d = np.zeros(n)
            if k > 0:
                d[:k] = -_chol_solve(L, A[:k, k].copy(), k)
            d[k] = 1.0
            if np.dot(s, d) < 0.0:
                d = -d
            best_t = np.inf
            best_i = -1
            for i in range(n):
                if d[i] * uS[i] > 0.0:
                    t = uS[i] / d[i]
                    if t < best_t:
                        best_t = t
                        best_i = i
            if best_i < 0:
                return u
            for i in range(n):
                u[idx[i]] = uS[i] - best_t * d[i]
            u[idx[best_i]] = 0.0
            continue
        b = np.empty(n)
        for i in range(n):
            b[i] = corr[idx[i]] - thresh * s[i]
        v = _chol_solve(L, b, n)
        first_t = 1.0
        first_i = -1
        for i in range(n):
            if np.sign(v[i]) != s[i]:
                t = uS[i] / (uS[i] - v[i])
                if t < first_t:
                    first_t = t
                    first_i = i
        for i in range(n):
            u[idx[i]] = uS[i] + first_t * (v[i] - uS[i])
        if first_i < 0:
            return u
        u[idx[first_i]] = 0.0
    return u


@njit(cache=True, nogil=True)
def _cd_solve(psi, gram, x, lam, max_iter, tol):
    corr = _corr(psi, x)
    m = corr.shape[0]
    u = np.zeros(m)
    rho = corr.copy()
    thresh = 0.5 * lam
    resid = _kkt_from_corr(rho, u, lam)
    prev = np.zeros(m, dtype=np.bool_)
    cand_rho = np.empty(m)
    it = 0
    while resid > tol and it < max_iter:
        for k in range(m):
            gkk = gram[k, k]
            if gkk <= 0.0:
                continue
            old = u[k]
            c = rho[k] + gkk * old
            if c > thresh:
                new = (c - thresh) / gkk
            elif c < -thresh:
                new = (c + thresh) / gkk
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                u[k] = new
                for j in range(m):
                    rho[j] -= gram[j, k] * delta
        it += 1
        # refresh rho from scratch to keep the certificate honest
        _refresh(psi, x, u, rho)
        resid = _kkt_from_corr(rho, u, lam)
        active = u != 0.0
        if resid > tol and it >= 4 and active.any() and (np.all(active == prev) or it % 8 == 0):
            cand = _refine(psi, gram, corr, u, thresh, 4 * m)
            _refresh(psi, x, cand, cand_rho)
            r2 = _kkt_from_corr(cand_rho, cand, lam)
            if r2 < resid or _objective(psi, x, cand, lam) < _objective(psi, x, u, lam):
                u = cand
                rho[:] = cand_rho
                resid = r2
        prev = active
    return u, resid, it


@njit(cache=True, nogil=True)
def _objective(psi, x, u, lam):
    p, m = psi.shape
    r = x.copy()
    l1 = 0.0
    for k in range(m):
        if u[k] != 0.0:
            l1 += abs(u[k])
            for i in range(p):
                r[i] -= psi[i, k] * u[k]
    return np.dot(r, r) + lam * l1


def _check_dictionary(dictionary):
    psi = np.asarray(dictionary, dtype=float)
    if psi.ndim != 2 or psi.shape[0] < 1 or psi.shape[1] < 1:
        raise InvalidInputError(f"dictionary must be a non-empty p x m matrix, got shape {psi.shape}")
    if not np.all(np.isfinite(psi)):
        raise InvalidInputError("dictionary has non-finite entries")
    return psi


@njit(cache=True, nogil=True)
def _cd_solve_rows(psi, gram, X, lam, max_iter, tol):
    T = X.shape[0]
    m = psi.shape[1]
    U = np.zeros((T, m))
    resid = np.zeros(T)
    for t in range(T):
        u, r, _ = _cd_solve(psi, gram, X[t], lam, max_iter, tol)
        U[t] = u
        resid[t] = r
    return U, resid


def encode_matrix(X, dictionary, cfg: LassoConfig) -> np.ndarray:
    """Lasso codes of every row of ``X`` as a ``T x m`` array.

    Same numbers as calling :func:`sparse_encode` row by row, without the
    per-frame Python overhead.
    """
    psi = _check_dictionary(dictionary)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != psi.shape[0]:
        raise InvalidInputError(f"X has shape {X.shape}, dictionary expects {psi.shape[0]} columns")
    bad = np.flatnonzero(~np.all(np.isfinite(X), axis=1))
    if bad.size:
        raise InvalidInputError(f"non-finite entries in frame {bad[0]}")
    psi = np.ascontiguousarray(psi)
    gram = psi.T @ psi
    # stop a little inside tol so the externally recomputed residual also passes
    inner_tol = 0.5 * cfg.tol
    U, resid = _cd_solve_rows(psi, gram, np.ascontiguousarray(X), float(cfg.lambda_u), int(cfg.max_iter), inner_tol)
    failed = np.flatnonzero(resid > inner_tol)
    if failed.size:
        t = int(failed[0])
        raise ConvergenceError(
            f"Lasso did not converge at frame {t}: KKT residual {resid[t]:.3e} after {cfg.max_iter} sweeps",
            residual=float(resid[t]),
            frame=t,
        )
    return U


def sparse_encode(x, dictionary, cfg: LassoConfig) -> SparseCode:
    """Encode one frame ``x`` (length ``p``) against ``dictionary``.

    Raises
    ------
    InvalidInputError
        Non-finite input or mismatched dimensions.
    ConvergenceError
        The KKT residual did not drop below ``cfg.tol`` within ``cfg.max_iter`` sweeps.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidInputError(f"x must be a vector, got shape {x.shape}")
    try:
        U = encode_matrix(x[None, :], dictionary, cfg)
    except ConvergenceError as exc:
        raise ConvergenceError(
            f"Lasso did not converge: KKT residual {exc.residual:.3e} after {cfg.max_iter} sweeps",
            residual=exc.residual,
        ) from None
    return SparseCode(U[0])


def encode_sequence(X, dictionary, cfg: LassoConfig) -> list[SparseCode]:
    """Encode each row of the ``T x p`` matrix ``X`` independently."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidInputError(f"X must be a T x p matrix, got shape {X.shape}")
    return [SparseCode(u) for u in encode_matrix(X, dictionary, cfg)]


def codes_matrix(codes) -> np.ndarray:
    """Stack a list of codes into a ``T x m`` array."""
    return np.vstack([c.u for c in codes])


def kkt_residual(x, dictionary, code: SparseCode, lambda_u: float) -> float:
    """Largest violation of the Lasso optimality conditions by ``code``.

    For active atoms this is ``|2 psi_k^T r - lambda_u sign(u_k)|``; for
    inactive ones ``max(|2 psi_k^T r| - lambda_u, 0)``, with ``r = x - Psi u``.
    """
    psi = _check_dictionary(dictionary)
    x = np.asarray(x, dtype=float)
    u = np.asarray(code.u, dtype=float)
    if x.shape != (psi.shape[0],) or u.shape != (psi.shape[1],):
        raise InvalidInputError(
            f"dimension mismatch: x {x.shape}, u {u.shape}, dictionary {psi.shape}"
        )
    rho = psi.T @ (x - psi @ u)
    return float(_kkt_from_corr(rho, u, float(lambda_u)))


def gram_inverse(dictionary, support, cond_cap: float = GRAM_COND_CAP) -> np.ndarray:
    """Inverse of the active-set Gram matrix ``A = Psi_S^T Psi_S``.

    Raises DegenerateSupportError when the support is empty or ``A`` has a
    condition number above ``cond_cap``.
    """
    psi = np.asarray(dictionary, dtype=float)
    support = np.asarray(support, dtype=int)
    if support.size == 0:
        raise DegenerateSupportError("empty support")
    sub = psi[:, support]
    A = sub.T @ sub
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > cond_cap:
        raise DegenerateSupportError(f"active Gram matrix condition number {cond:.3e} exceeds {cond_cap:.1e}")
    A_inv = np.linalg.inv(A)
    if np.max(np.abs(A @ A_inv - np.eye(support.size))) > 1e-8:
        raise DegenerateSupportError("active Gram matrix inverse is inaccurate")
    return A_inv
