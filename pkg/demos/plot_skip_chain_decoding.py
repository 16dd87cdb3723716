"""
Decoding with skip-chain transitions
====================================

A skip-chain CRF links frames ``d`` apart. Inference splits into ``d``
independent chains, each decoded exactly by max-sum dynamic programming.
Here we check that against brute force on a tiny problem and look at how
loss-augmented decoding differs from the plain decode.
"""

import itertools

import numpy as np

from seqcrf import CrfWeights, energy, hamming, loss_augmented_decode, viterbi_decode

rng = np.random.default_rng(1)
T, D, nc, d = 6, 4, 3, 2
Z = rng.standard_normal((T, D))
w = CrfWeights(rng.standard_normal((nc, D)), rng.standard_normal((nc, nc)), skip=d)

y = viterbi_decode(Z, w)
best = max(energy(Z, np.array(c), w) for c in itertools.product(range(nc), repeat=T))
print("viterbi labels:", y, " energy:", round(energy(Z, y, w), 6), " brute force:", round(best, 6))

# the two chains of a d=2 model are the even and the odd frames
print("even frames:", y[0::2], " odd frames:", y[1::2])

# loss-augmented decoding rewards disagreeing with the truth
y_true = rng.integers(nc, size=T)
y_hat = loss_augmented_decode(Z, w, y_true)
margin = hamming(y_true, y_hat) + energy(Z, y_hat, w) - energy(Z, y_true, w)
print("truth:", y_true, " most violating:", y_hat, " hinge:", round(margin, 4))
