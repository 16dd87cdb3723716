"""
Sparse codes of a single frame
==============================

Encode one frame against a random unit-norm dictionary, check the optimality
certificate, and see how the pooled feature is built from the split code.
"""

import numpy as np

from seqcrf import LassoConfig, kkt_residual, sparse_encode, split_code, temporal_pool

rng = np.random.default_rng(0)
psi = rng.standard_normal((6, 12))
psi /= np.linalg.norm(psi, axis=0)

# a frame built from two atoms plus a little noise
x = 1.2 * psi[:, 3] - 0.7 * psi[:, 8] + 0.01 * rng.standard_normal(6)

code = sparse_encode(x, psi, LassoConfig(lambda_u=0.1))
print("support:", code.support)
print("coefficients:", np.round(code.u[code.support], 3))
print("KKT residual:", kkt_residual(x, psi, code, 0.1))

# raising the penalty shrinks and eventually empties the support
for lam in (0.05, 0.5, 2.0, 5.0):
    u = sparse_encode(x, psi, LassoConfig(lambda_u=lam)).u
    print(f"lambda_u={lam:<4}  nonzeros={np.count_nonzero(u):2d}  |u|_1={np.abs(u).sum():.3f}")

# positive and negative parts go to separate halves of the feature
a = split_code(code)
print("split code halves:", np.flatnonzero(a[:12]), np.flatnonzero(a[12:]))

# pooling a short run of frames: edge frames average over fewer neighbours
frames = np.vstack([split_code(sparse_encode(x + 0.05 * rng.standard_normal(6), psi, LassoConfig()))
                    for _ in range(5)])
Z = temporal_pool(frames, 3)
print("pooled shape:", Z.shape)
