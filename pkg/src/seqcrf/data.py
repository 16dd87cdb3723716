"""Sequence/label file IO, z-score + PCA preprocessing, split manifests, cropping."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, ManifestError, ParseError


def load_sequence(path, header: bool = False) -> np.ndarray:
    """Read a comma-separated ``T x p`` matrix, one frame per line."""
    path = Path(path)
    if not path.is_file():
        raise ParseError("no such file", path)
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if header and lineno == 1:
                continue
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            try:
                row = [float(c) for c in cells]
            except ValueError:
                raise ParseError(f"non-numeric cell in {line!r}", path, lineno) from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"expected {width} columns, found {len(row)}", path, lineno)
            rows.append(row)
    if not rows:
        raise ParseError("file contains no frames", path)
    return np.array(rows, dtype=float)


def save_sequence(path, X) -> None:
    np.savetxt(path, np.atleast_2d(X), delimiter=",", fmt="%.17g")


def load_labels(path, T: int | None = None, background: int = 0, n_classes: int | None = None) -> np.ndarray:
    """Read per-frame labels or ``start end label`` segment triples.

    The format is detected from the column count of the first data line.
    Segment ends are exclusive; frames not covered by a segment get ``background``.
    """
    path = Path(path)
    if not path.is_file():
        raise ParseError("no such file", path)
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            cells = line.replace(",", " ").split()
            if not cells:
                continue
            try:
                records.append((lineno, [int(c) for c in cells]))
            except ValueError:
                raise ParseError(f"non-integer label in {line.strip()!r}", path, lineno) from None
    if not records:
        raise ParseError("file contains no labels", path)
    ncol = len(records[0][1])
    if any(len(r) != ncol for _, r in records):
        bad = next(n for n, r in records if len(r) != ncol)
        raise ParseError("mixed label formats", path, bad)
    if ncol == 1:
        y = np.array([r[0] for _, r in records], dtype=int)
        if T is not None and y.size != T:
            raise InvalidInputError(f"{path}: {y.size} labels for {T} frames")
    elif ncol == 3:
        if T is None:
            T = max(r[1] for _, r in records)
        y = np.full(T, background, dtype=int)
        covered = np.zeros(T, dtype=bool)
        for lineno, (s, e, lab) in records:
            if not 0 <= s < e <= T:
                raise InvalidInputError(f"{path}:{lineno}: segment [{s}, {e}) outside [0, {T})")
            if covered[s:e].any():
                raise InvalidInputError(f"{path}:{lineno}: overlapping segment [{s}, {e})")
            covered[s:e] = True
            y[s:e] = lab
    else:
        raise ParseError(f"expected 1 or 3 columns, found {ncol}", path, records[0][0])
    if y.min() < 0 or (n_classes is not None and y.max() >= n_classes):
        raise InvalidInputError(f"{path}: label out of range")
    return y


@dataclass
class PreprocessStats:
    """Pooled z-score statistics and an optional PCA basis (``p0 x p``)."""

    mean: np.ndarray
    std: np.ndarray
    pca_basis: np.ndarray | None = None

    @property
    def p0(self) -> int:
        return self.mean.shape[0]

    @property
    def p(self) -> int:
        return self.p0 if self.pca_basis is None else self.pca_basis.shape[1]


def fit_preprocess(train, pca_dim: int | None = None) -> PreprocessStats:
    """Fit z-score statistics over all training frames, then PCA on the z-scores.

    Constant features get ``std = 1``. Each PCA column is signed so that its
    largest-magnitude entry is positive.
    """
    if len(train) == 0:
        raise InvalidInputError("need at least one training sequence")
    frames = np.vstack([np.atleast_2d(np.asarray(X, dtype=float)) for X in train])
    p0 = frames.shape[1]
    mean = frames.mean(axis=0)
    std = frames.std(axis=0)
    std[std <= 1e-12 * np.maximum(1.0, np.abs(mean))] = 1.0
    basis = None
    if pca_dim is not None:
        if not 1 <= pca_dim <= p0:
            raise InvalidConfigError(f"pca_dim must be in [1, {p0}], got {pca_dim}")
        Xz = (frames - mean) / std
        cov = Xz.T @ Xz / Xz.shape[0]
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1][:pca_dim]
        basis = evecs[:, order]
        idx = np.argmax(np.abs(basis), axis=0)
        basis = basis * np.sign(basis[idx, np.arange(pca_dim)])
    return PreprocessStats(mean, std, basis)


def apply_preprocess(X, stats: PreprocessStats) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != stats.p0:
        raise InvalidInputError(f"sequence has {X.shape[1]} columns, preprocessing expects {stats.p0}")
    Xz = (X - stats.mean) / stats.std
    return Xz if stats.pca_basis is None else Xz @ stats.pca_basis


def crop_length(T: int, fraction: float) -> int:
    return min(T, max(1, math.ceil(fraction * T - 1e-9)))


def random_crop(X, y, fraction: float, seed):
    """Contiguous crop of ``ceil(fraction * T)`` frames at a seeded uniform offset."""
    if not 0 < fraction <= 1:
        raise InvalidConfigError(f"crop fraction must be in (0, 1], got {fraction}")
    X, y = np.asarray(X), np.asarray(y)
    T = X.shape[0]
    n = crop_length(T, fraction)
    start = int(np.random.default_rng(seed).integers(0, T - n + 1))
    return X[start:start + n], y[start:start + n]


@dataclass
class ManifestEntry:
    id: str
    sequence_path: Path
    label_path: Path
    user: str = ""
    trial: str = ""
    fold: str = ""


@dataclass
class SplitManifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def __getitem__(self, seq_id) -> ManifestEntry:
        for e in self.entries:
            if e.id == seq_id:
                return e
        raise KeyError(seq_id)

    @property
    def folds(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = OrderedDict()
        for e in self.entries:
            if e.fold:
                out.setdefault(e.fold, []).append(e.id)
        return dict(out)


def load_manifest(path) -> SplitManifest:
    """Parse ``id,sequence_path,label_path,user_tag,trial_tag[,fold_name]`` lines.

    Relative paths are resolved against the manifest's directory. Blank lines
    and ``#`` comments are skipped.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"{path}: no such manifest")
    base = path.parent
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = [c.strip() for c in line.split(",")]
            if len(cells) not in (5, 6):
                raise ManifestError(f"{path}:{lineno}: expected 5 or 6 fields, found {len(cells)}")
            seq_id = cells[0]
            if not seq_id or seq_id in seen:
                raise ManifestError(f"{path}:{lineno}: missing or duplicate id {seq_id!r}")
            seen.add(seq_id)
            entries.append(
                ManifestEntry(
                    seq_id,
                    base / cells[1],
                    base / cells[2],
                    cells[3],
                    cells[4],
                    cells[5] if len(cells) == 6 else "",
                )
            )
    if not entries:
        raise ManifestError(f"{path}: manifest is empty")
    return SplitManifest(entries)


def write_manifest(path, manifest: SplitManifest) -> None:
    base = Path(path).parent
    with open(path, "w", encoding="utf-8") as fh:
        for e in manifest.entries:
            cells = [
                e.id,
                _relpath(e.sequence_path, base),
                _relpath(e.label_path, base),
                e.user,
                e.trial,
            ]
            if e.fold:
                cells.append(e.fold)
            fh.write(",".join(cells) + "\n")


def _relpath(p, base):
    p = Path(p)
    try:
        return str(p.relative_to(base))
    except ValueError:
        return str(p)


SCHEMES = ("LOUO", "LOSO", "kfold")


def resolve_folds(manifest: SplitManifest, scheme: str) -> list[tuple[list[str], list[str]]]:
    """Train/test id lists, one pair per held-out user, trial or declared fold."""
    key = scheme.lower().replace("-", "")
    attr = {"louo": "user", "loso": "trial", "kfold": "fold"}.get(key)
    if attr is None:
        raise ManifestError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    groups: dict[str, list[str]] = OrderedDict()
    for e in manifest.entries:
        tag = getattr(e, attr)
        if not tag:
            raise ManifestError(f"sequence {e.id!r} has no {attr} tag required by {scheme}")
        groups.setdefault(tag, []).append(e.id)
    folds = []
    for tag, test in groups.items():
        train = [i for i in manifest.ids if i not in set(test)]
        if not train:
            raise ManifestError(f"{scheme} fold {tag!r} leaves no training sequences")
        folds.append((train, test))
    return folds


def fold_names(manifest: SplitManifest, scheme: str) -> list[str]:
    attr = {"louo": "user", "loso": "trial", "kfold": "fold"}[scheme.lower().replace("-", "")]
    return list(OrderedDict.fromkeys(getattr(e, attr) for e in manifest.entries))
