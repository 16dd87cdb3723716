"""On-disk model bundles.

A bundle is a directory holding a ``manifest`` of ``key: value`` lines and one
CSV file per matrix. Numbers are written with 17 significant digits, which
round-trips binary64 exactly, so ``save -> load -> save`` is byte-identical.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .crf import CrfWeights
from .data import PreprocessStats
from .errors import ParseError
from .lasso import LassoConfig
from .training import ModelBundle

FORMAT_VERSION = 1


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_matrix(path, M) -> None:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in M:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_matrix(path, shape=None) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise ParseError("missing bundle file", path)
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(c) for c in line.split(",")])
            except ValueError:
                raise ParseError("non-numeric cell", path, lineno) from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise ParseError("empty or ragged matrix", path)
    M = np.array(rows, dtype=float)
    if shape is not None:
        if len(shape) == 1:
            M = M.ravel() if M.shape[1] == 1 else M
        if M.shape != tuple(shape):
            raise ParseError(f"expected shape {tuple(shape)}, found {M.shape}", path)
    return M


def save_bundle(model: ModelBundle, directory) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    w = model.weights
    stats = model.preprocess
    p = model.dictionary.shape[0] if not model.raw else w.dim
    p0 = stats.p0 if stats is not None else p
    meta = {
        "format_version": FORMAT_VERSION,
        "features": "raw" if model.raw else "sparse",
        "p0": p0,
        "p": p,
        "m": 0 if model.raw else model.dictionary.shape[1],
        "Nc": w.n_classes,
        "D": w.dim,
        "L": model.pool_window,
        "d": w.skip,
        "lambda_u": repr(float(model.lasso.lambda_u)),
        "lasso_max_iter": model.lasso.max_iter,
        "lasso_tol": repr(float(model.lasso.tol)),
        "preprocess": "none" if stats is None else ("zscore" if stats.pca_basis is None else "pca"),
    }
    with open(out / "manifest", "w", encoding="utf-8", newline="\n") as fh:
        for k, v in meta.items():
            fh.write(f"{k}: {v}\n")
    if not model.raw:
        write_matrix(out / "dictionary.csv", model.dictionary)
    write_matrix(out / "unary.csv", w.unary)
    write_matrix(out / "pairwise.csv", w.pairwise)
    if stats is not None:
        write_matrix(out / "mean.csv", stats.mean)
        write_matrix(out / "std.csv", stats.std)
        if stats.pca_basis is not None:
            write_matrix(out / "pca.csv", stats.pca_basis)
    return out


def read_manifest(directory) -> dict[str, str]:
    path = Path(directory) / "manifest"
    if not path.is_file():
        raise ParseError("missing bundle manifest", path)
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            key, sep, value = line.partition(":")
            if not sep:
                raise ParseError("expected 'key: value'", path, lineno)
            meta[key.strip()] = value.strip()
    return meta


def load_bundle(directory) -> ModelBundle:
    d = Path(directory)
    meta = read_manifest(d)
    try:
        version = int(meta["format_version"])
        raw = meta["features"] == "raw"
        p0, p, m = int(meta["p0"]), int(meta["p"]), int(meta["m"])
        nc, D, L, skip = int(meta["Nc"]), int(meta["D"]), int(meta["L"]), int(meta["d"])
        lasso = LassoConfig(float(meta["lambda_u"]), int(meta["lasso_max_iter"]), float(meta["lasso_tol"]))
        prep = meta["preprocess"]
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad bundle manifest entry: {exc}", d / "manifest") from None
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported bundle format version {version}", d / "manifest")
    dictionary = None if raw else read_matrix(d / "dictionary.csv", (p, m))
    weights = CrfWeights(read_matrix(d / "unary.csv", (nc, D)), read_matrix(d / "pairwise.csv", (nc, nc)), skip)
    stats = None
    if prep != "none":
        basis = read_matrix(d / "pca.csv", (p0, p)) if prep == "pca" else None
        stats = PreprocessStats(read_matrix(d / "mean.csv", (p0,)), read_matrix(d / "std.csv", (p0,)), basis)
    return ModelBundle(dictionary, weights, lasso, L, stats)
