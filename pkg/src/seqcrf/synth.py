"""Synthetic labelled multivariate sequences with a planted sparse structure.

Every class owns a few atoms of a random unit-norm dictionary. A frame of
class ``c`` activates the atoms of ``c`` with random signs and positive
magnitudes, picks up one weak distractor atom, and is observed through
Gaussian noise. Because the signs are random, the class means of the raw
frames coincide; only the sparse-code magnitudes carry the label.
Labels follow a sticky Markov chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import ManifestEntry, SplitManifest, save_sequence, write_manifest


@dataclass
class SyntheticSequence:
    id: str
    X: np.ndarray
    y: np.ndarray
    user: str
    trial: str
    fold: str


@dataclass
class SyntheticDataset:
    dictionary: np.ndarray
    sequences: list[SyntheticSequence]

    def by_user(self, user):
        return [s for s in self.sequences if s.user == user]

    def pairs(self, seqs=None):
        return [(s.X, s.y) for s in (self.sequences if seqs is None else seqs)]


def markov_labels(T, n_classes, stay, rng):
    y = np.empty(T, dtype=int)
    y[0] = rng.integers(n_classes)
    for t in range(1, T):
        if rng.random() < stay or n_classes == 1:
            y[t] = y[t - 1]
        else:
            y[t] = (y[t - 1] + 1 + rng.integers(n_classes - 1)) % n_classes
    return y


def make_synthetic(
    n_sequences: int = 20,
    T: int = 300,
    p: int = 10,
    m: int = 20,
    n_classes: int = 3,
    n_users: int = 4,
    atoms_per_class: int = 3,
    stay: float = 0.97,
    noise: float = 0.1,
    n_folds: int = 5,
    seed: int = 0,
) -> SyntheticDataset:
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal((p, m))
    psi /= np.linalg.norm(psi, axis=0)
    perm = rng.permutation(m)
    class_atoms = [perm[c * atoms_per_class:(c + 1) * atoms_per_class] for c in range(n_classes)]
    class_mag = rng.uniform(0.8, 1.5, size=(n_classes, atoms_per_class))
    user_scale = rng.uniform(0.85, 1.15, size=n_users)

    seqs = []
    for n in range(n_sequences):
        user = n % n_users
        y = markov_labels(T, n_classes, stay, rng)
        U = np.zeros((T, m))
        for t in range(T):
            atoms = class_atoms[y[t]]
            mag = class_mag[y[t]] * user_scale[user] * rng.uniform(0.8, 1.2, size=atoms.size)
            U[t, atoms] = mag * rng.choice([-1.0, 1.0], size=atoms.size)
            U[t, rng.integers(m)] += 0.3 * rng.standard_normal()
        X = U @ psi.T + noise * rng.standard_normal((T, p))
        seqs.append(
            SyntheticSequence(
                id=f"seq{n:03d}",
                X=X,
                y=y,
                user=f"u{user}",
                trial=f"t{n // n_users}",
                fold=f"f{n % n_folds}",
            )
        )
    return SyntheticDataset(psi, seqs)


def write_synthetic(out_dir, dataset: SyntheticDataset) -> Path:
    """Write sequences, per-frame label files and ``manifest.csv``; return the manifest path."""
    out = Path(out_dir)
    (out / "data").mkdir(parents=True, exist_ok=True)
    entries = []
    for s in dataset.sequences:
        xp = out / "data" / f"{s.id}.csv"
        yp = out / "data" / f"{s.id}.labels"
        save_sequence(xp, s.X)
        np.savetxt(yp, s.y, fmt="%d")
        entries.append(ManifestEntry(s.id, xp, yp, s.user, s.trial, s.fold))
    np.savetxt(out / "planted_dictionary.csv", dataset.dictionary, delimiter=",", fmt="%.17g")
    manifest = out / "manifest.csv"
    write_manifest(manifest, SplitManifest(entries))
    return manifest
