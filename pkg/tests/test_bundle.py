import numpy as np
import pytest

from seqcrf.bundle import load_bundle, read_matrix, save_bundle, write_matrix
from seqcrf.crf import CrfWeights
from seqcrf.data import PreprocessStats
from seqcrf.errors import ParseError
from seqcrf.lasso import LassoConfig
from seqcrf.training import ModelBundle


def random_bundle(rng, raw=False, pca=False):
    p0 = int(rng.integers(2, 6))
    p = int(rng.integers(1, p0 + 1)) if pca else p0
    nc, d, L = int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.choice([1, 3, 5]))
    basis = rng.standard_normal((p0, p)) if pca else None
    stats = PreprocessStats(rng.standard_normal(p0), rng.random(p0) + 0.1, basis)
    if raw:
        return ModelBundle(None, CrfWeights(rng.standard_normal((nc, p)), rng.standard_normal((nc, nc)), d),
                           LassoConfig(), 1, stats)
    m = int(rng.integers(1, 7))
    psi = rng.standard_normal((p, m)) * 10.0 ** rng.integers(-8, 8)
    w = CrfWeights(rng.standard_normal((nc, 2 * m)), rng.standard_normal((nc, nc)), d)
    return ModelBundle(psi, w, LassoConfig(float(rng.random()) + 1e-3), L, stats)


def files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


@pytest.mark.parametrize("kind", ["sparse", "raw", "pca"])
def test_round_trip_is_exact(tmp_path, kind):
    rng = np.random.default_rng(len(kind))
    model = random_bundle(rng, raw=kind == "raw", pca=kind == "pca")
    save_bundle(model, tmp_path / "a")
    back = load_bundle(tmp_path / "a")
    save_bundle(back, tmp_path / "b")
    assert files(tmp_path / "a") == files(tmp_path / "b")
    np.testing.assert_array_equal(back.weights.flat(), model.weights.flat())
    assert back.weights.skip == model.weights.skip
    assert back.pool_window == model.pool_window
    assert back.lasso == model.lasso
    if kind != "raw":
        np.testing.assert_array_equal(back.dictionary, model.dictionary)
    if kind == "pca":
        np.testing.assert_array_equal(back.preprocess.pca_basis, model.preprocess.pca_basis)


def test_manifest_contents(tmp_path):
    model = random_bundle(np.random.default_rng(9))
    save_bundle(model, tmp_path)
    text = (tmp_path / "manifest").read_text()
    for key in ("format_version: 1", f"m: {model.dictionary.shape[1]}", f"Nc: {model.n_classes}"):
        assert key in text


def test_missing_file_reported(tmp_path):
    save_bundle(random_bundle(np.random.default_rng(1)), tmp_path)
    (tmp_path / "unary.csv").unlink()
    with pytest.raises(ParseError, match="unary.csv"):
        load_bundle(tmp_path)


def test_shape_mismatch_reported(tmp_path):
    save_bundle(random_bundle(np.random.default_rng(2)), tmp_path)
    write_matrix(tmp_path / "pairwise.csv", np.zeros((7, 7)))
    with pytest.raises(ParseError, match="shape"):
        load_bundle(tmp_path)


def test_missing_directory(tmp_path):
    with pytest.raises(ParseError, match="manifest"):
        load_bundle(tmp_path / "nope")


def test_matrix_text_precision(tmp_path):
    M = np.array([[0.1, 1 / 3], [-2.5e-300, 1e300]])
    write_matrix(tmp_path / "m.csv", M)
    assert np.array_equal(read_matrix(tmp_path / "m.csv"), M)
