"""Slow, independent reference implementations used by the tests.

None of these import the solver code paths they are checked against.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


# --- CRF -------------------------------------------------------------------


def energy_direct(Z, y, unary, pairwise, d):
    """Energy written as explicit loops over frames and skip edges."""
    total = 0.0
    for t in range(len(y)):
        total += float(np.dot(unary[y[t]], Z[t]))
    for t in range(len(y) - d):
        total += float(pairwise[y[t], y[t + d]])
    return total


def brute_force_max(Z, unary, pairwise, d, y_true=None):
    """Max over all labellings of energy (+ Hamming loss to ``y_true`` if given)."""
    T, nc = Z.shape[0], unary.shape[0]
    best, arg = -np.inf, None
    for y in itertools.product(range(nc), repeat=T):
        y = np.array(y)
        val = energy_direct(Z, y, unary, pairwise, d)
        if y_true is not None:
            val += float(np.sum(y != y_true))
        if val > best:
            best, arg = val, y
    return best, arg


# --- Lasso -----------------------------------------------------------------


def lasso_oracle(x, psi, lam, tol=1e-11, max_iter=200_000):
    """Accelerated projected gradient on the non-negative split ``u = v+ - v-``.

    Minimises ``||x - [psi, -psi] v||^2 + lam * sum(v)`` over ``v >= 0``. Stops
    when the projected-gradient residual ``|v - max(0, v - grad)|`` falls below ``tol``.
    """
    p, m = psi.shape
    B = np.hstack([psi, -psi])
    step = 1.0 / (2.0 * np.linalg.norm(B, 2) ** 2)
    v = np.zeros(2 * m)
    z, tk = v.copy(), 1.0
    restarted = False
    for _ in range(max_iter):
        g = -2.0 * B.T @ (x - B @ z) + lam
        v_new = np.maximum(0.0, z - step * g)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
        # restart momentum when the objective goes up; a plain step right
        # after a restart is always taken (rounding can make it look uphill)
        if not restarted and _split_obj(x, B, v_new, lam) > _split_obj(x, B, v, lam):
            z, tk, restarted = v.copy(), 1.0, True
            continue
        restarted = False
        z = v_new + ((tk - 1) / t_new) * (v_new - v)
        v, tk = v_new, t_new
        gv = -2.0 * B.T @ (x - B @ v) + lam
        if np.max(np.abs(v - np.maximum(0.0, v - gv))) < tol:
            break
    return v[:m] - v[m:]


def _split_obj(x, B, v, lam):
    r = x - B @ v
    return float(r @ r + lam * v.sum())


def kkt_direct(x, psi, u, lam):
    r = x - psi @ u
    worst = 0.0
    for k in range(psi.shape[1]):
        g = 2.0 * float(psi[:, k] @ r)
        if u[k] != 0:
            worst = max(worst, abs(g - lam * np.sign(u[k])))
        else:
            worst = max(worst, abs(g) - lam)
    return worst


# --- metrics ---------------------------------------------------------------


def runs(y):
    """(start, end, label) runs via a plain scan."""
    out = []
    start = 0
    for t in range(1, len(y) + 1):
        if t == len(y) or y[t] != y[start]:
            out.append((start, t, int(y[start])))
            start = t
    return out


def levenshtein_recursive(a, b):
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def dist(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(dist(i - 1, j) + 1, dist(i, j - 1) + 1, dist(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return dist(len(a), len(b))


def edit_oracle(pred, truth, background=None):
    sp = [lab for _, _, lab in runs(pred) if lab != background]
    st = [lab for _, _, lab in runs(truth) if lab != background]
    n = max(len(sp), len(st))
    if n == 0:
        return 100.0
    return max(0.0, 100.0 * (1.0 - levenshtein_recursive(sp, st) / n))


def f1_oracle(pred, truth, k=10, background=None):
    """Same matching rule, with IoU computed from explicit frame sets."""
    ps = [(set(range(s, e)), lab) for s, e, lab in runs(pred) if lab != background]
    ts = [(set(range(s, e)), lab) for s, e, lab in runs(truth) if lab != background]
    if not ps or not ts:
        return 0.0
    matched = set()
    tp = 0
    for frames, lab in ps:
        scored = [
            (len(frames & g) / len(frames | g), i)
            for i, (g, glab) in enumerate(ts)
            if glab == lab and i not in matched
        ]
        if not scored:
            continue
        # highest IoU, earliest segment on ties
        iou, i = max(scored, key=lambda s: (s[0], -s[1]))
        if iou >= k / 100:
            matched.add(i)
            tp += 1
    prec, rec = tp / len(ps), tp / len(ts)
    return 0.0 if prec + rec == 0 else 100.0 * 2 * prec * rec / (prec + rec)


# --- instance generators ---------------------------------------------------


def random_crf_instance(rng):
    T = int(rng.integers(1, 7))
    nc = int(rng.integers(1, 5))
    d = int(rng.choice([1, 2, 3]))
    D = int(rng.integers(1, 4))
    Z = rng.standard_normal((T, D))
    unary = rng.standard_normal((nc, D))
    pairwise = rng.standard_normal((nc, nc))
    y_true = rng.integers(nc, size=T)
    return Z, unary, pairwise, d, y_true


def random_labels(rng, T, nc, stay=0.8):
    y = np.empty(T, dtype=int)
    y[0] = rng.integers(nc)
    for t in range(1, T):
        y[t] = y[t - 1] if rng.random() < stay else rng.integers(nc)
    return y


# --- finite differences ----------------------------------------------------


def fd_code_jacobian(encode, x, psi, support, eps=1e-6):
    """Central differences of ``u_S`` w.r.t. ``psi[:, S]``; ``None`` if a support moves.

    ``encode(x, psi)`` must return the full coefficient vector.
    """
    S = np.asarray(support)
    J = np.zeros((S.size, psi.shape[0], S.size))
    for a in range(psi.shape[0]):
        for j, k in enumerate(S):
            hi, lo = psi.copy(), psi.copy()
            hi[a, k] += eps
            lo[a, k] -= eps
            u_hi, u_lo = encode(x, hi), encode(x, lo)
            if not (np.array_equal(np.flatnonzero(u_hi), S) and np.array_equal(np.flatnonzero(u_lo), S)):
                return None
            J[:, a, j] = (u_hi[S] - u_lo[S]) / (2 * eps)
    return J


def fd_dictionary_gradient(objective, supports, psi, eps=1e-6):
    """Central differences of ``objective(psi) -> (value, supports)`` over every entry.

    Returns ``None`` when any perturbation changes a frame's support.
    """
    G = np.zeros_like(psi)
    for a in range(psi.shape[0]):
        for k in range(psi.shape[1]):
            hi, lo = psi.copy(), psi.copy()
            hi[a, k] += eps
            lo[a, k] -= eps
            f_hi, s_hi = objective(hi)
            f_lo, s_lo = objective(lo)
            if s_hi != supports or s_lo != supports:
                return None
            G[a, k] = (f_hi - f_lo) / (2 * eps)
    return G


def relative_error(approx, exact):
    return float(np.linalg.norm(approx - exact) / max(np.linalg.norm(exact), 1e-300))
