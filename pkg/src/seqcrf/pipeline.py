"""End-to-end glue: run configuration, ablation presets, training and evaluation.

The CLI is a thin layer over these functions, so the numbers it prints are
the ones returned here.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .crf import CrfWeights
from .data import SplitManifest, apply_preprocess, fit_preprocess, load_labels, load_sequence, random_crop
from .errors import InvalidConfigError, InvalidInputError
from .lasso import LassoConfig
from .metrics import edit_score, frame_accuracy, median_filter, segmental_f1
from .training import ModelBundle, TrainConfig, fit, init_dictionary

# Rows of the ablation tables. Values here override every other source.
PRESETS = {
    "raw-crf": {"features": "raw", "d": 1, "learn_dictionary": False},
    "sf-crf": {"features": "sparse", "d": 1, "learn_dictionary": False},
    "sf-sccrf": {"features": "sparse", "learn_dictionary": False},
    "sdl-sccrf": {"features": "sparse", "learn_dictionary": True},
}


@dataclass
class RunConfig:
    lambda_u: float = 0.1
    m: int = 100
    L: int = 71
    d: int = 21
    C: float = 1.0
    eta0: float = 1e-3
    momentum: float = 0.9
    epochs: int = 100
    lr_halving_period: int = 20
    seed: int = 0
    learn_dictionary: bool = True
    features: str = "sparse"
    pca_dim: int | None = None
    init_iters: int = 30
    n_classes: int | None = None
    median_window: int = 31
    scheme: str = "LOUO"
    background: int | None = None
    header: bool = False

    def __post_init__(self):
        for name in ("L", "median_window"):
            v = getattr(self, name)
            if v < 1 or v % 2 == 0:
                raise InvalidConfigError(f"{name} must be an odd positive integer, got {v}")
        for name in ("lambda_u", "C", "m", "d", "lr_halving_period", "init_iters"):
            if not getattr(self, name) > 0:
                raise InvalidConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.eta0 < 0 or self.epochs < 0:
            raise InvalidConfigError("eta0 and epochs must be non-negative")
        if not 0 <= self.momentum < 1:
            raise InvalidConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.features not in ("sparse", "raw"):
            raise InvalidConfigError(f"features must be 'sparse' or 'raw', got {self.features!r}")
        if self.pca_dim is not None and self.pca_dim < 1:
            raise InvalidConfigError(f"pca_dim must be positive, got {self.pca_dim}")

    @classmethod
    def merged(cls, file_values=None, overrides=None, preset=None) -> "RunConfig":
        """Defaults < config file < explicit overrides < preset."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for source in (file_values or {}, overrides or {}):
            for key, raw in source.items():
                if raw is None:
                    continue
                if key not in types:
                    raise InvalidConfigError(f"unknown configuration key {key!r}")
                values[key] = _coerce(key, raw, types[key])
        if preset is not None:
            if preset not in PRESETS:
                raise InvalidConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
            values.update(PRESETS[preset])
        return cls(**values)

    def train_config(self, seed=None) -> TrainConfig:
        return TrainConfig(
            C=self.C,
            eta0=self.eta0,
            momentum=self.momentum,
            epochs=self.epochs,
            lr_halving_period=self.lr_halving_period,
            seed=self.seed if seed is None else seed,
            learn_dictionary=self.learn_dictionary,
        )


def _coerce(key, raw, typ):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if "None" in typ and text.lower() in ("", "none"):
        return None
    try:
        if typ.startswith("bool"):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if typ.startswith("int"):
            return int(text)
        if typ.startswith("float"):
            return float(text)
    except ValueError:
        raise InvalidConfigError(f"bad value for {key}: {raw!r}") from None
    return text


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise InvalidConfigError(f"{path}: no such config file")
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise InvalidConfigError(f"{path}:{lineno}: expected 'key = value'")
            values[key.strip()] = value.strip()
    return values


def load_pairs(manifest: SplitManifest, ids, header=False, background=0, n_classes=None):
    out = []
    for seq_id in ids:
        e = manifest[seq_id]
        X = load_sequence(e.sequence_path, header=header)
        y = load_labels(e.label_path, X.shape[0], background=0 if background is None else background,
                        n_classes=n_classes)
        out.append((X, y))
    return out


def crop_pairs(pairs, fraction, seed):
    if fraction >= 1:
        return list(pairs)
    return [random_crop(X, y, fraction, [seed, i]) for i, (X, y) in enumerate(pairs)]


def initial_model(cfg: RunConfig, train_pairs, seed=None, dictionary=None):
    """Fit preprocessing on ``train_pairs`` and build the untrained model.

    Returns ``(model, preprocessed_pairs)``.
    """
    if not train_pairs:
        raise InvalidInputError("no training sequences")
    seed = cfg.seed if seed is None else seed
    stats = fit_preprocess([X for X, _ in train_pairs], cfg.pca_dim)
    data = [(apply_preprocess(X, stats), np.asarray(y, dtype=int)) for X, y in train_pairs]
    n_classes = cfg.n_classes or int(max(y.max() for _, y in data)) + 1
    p = stats.p
    lasso = LassoConfig(cfg.lambda_u)
    if cfg.features == "raw":
        model = ModelBundle(None, CrfWeights.zeros(n_classes, p, cfg.d), lasso, 1, stats)
        return model, data
    if dictionary is None:
        dictionary = init_dictionary(np.vstack([X for X, _ in data]), cfg.m, cfg.lambda_u,
                                     iters=cfg.init_iters, seed=seed)
    dictionary = np.asarray(dictionary, dtype=float)
    if dictionary.shape[0] != p:
        raise InvalidInputError(f"dictionary has {dictionary.shape[0]} rows, preprocessed data has {p}")
    weights = CrfWeights.zeros(n_classes, 2 * dictionary.shape[1], cfg.d)
    return ModelBundle(dictionary, weights, lasso, cfg.L, stats), data


def train_model(cfg: RunConfig, train_pairs, seed=None, dictionary=None, sink=None):
    """Preprocess, initialise and fit. Returns ``(model, trace)``."""
    model, data = initial_model(cfg, train_pairs, seed, dictionary)
    return fit(data, cfg.train_config(seed), model, sink=sink)


def sequence_metrics(pred, truth, background=None) -> dict[str, float]:
    return {
        "accuracy": frame_accuracy(pred, truth),
        "edit": edit_score(pred, truth, background=background),
        "f1_10": segmental_f1(pred, truth, 10, background=background),
    }


def evaluate_model(model: ModelBundle | None, pairs, median: int = 1, mode_filter: bool = False,
                   background=None, oracle: bool = False) -> list[dict[str, float]]:
    """Metrics per sequence. ``oracle`` scores the ground truth against itself."""
    rows = []
    for X, y in pairs:
        pred = np.asarray(y) if oracle else model.predict(X)
        if median > 1:
            pred = median_filter(pred, median, mode=mode_filter)
        rows.append(sequence_metrics(pred, y, background))
    return rows


def mean_metrics(rows) -> dict[str, float]:
    return {k: float(np.mean([r[k] for r in rows])) for k in ("accuracy", "edit", "f1_10")}
