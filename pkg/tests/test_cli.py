import csv

import numpy as np
import pytest

from seqcrf import cli
from seqcrf.bundle import load_bundle
from seqcrf.data import load_manifest, load_sequence
from seqcrf.errors import DivergenceError, InvalidConfigError
from seqcrf.pipeline import PRESETS, RunConfig, evaluate_model, initial_model, load_pairs, read_config_file

SMALL = ["--m", "6", "--L", "3", "--d", "2", "--init-iters", "3", "--eta0", "0.01"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("syn")
    args = ["synth", "--out", str(root), "--n-sequences", "8", "--T", "60", "--p", "4", "--m", "6", "--classes", "2"]
    assert cli.main(args) == 0
    return root / "manifest.csv"


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("bundle")
    assert cli.main(["train", "--manifest", str(dataset), "--fold", "u3", "--epochs", "3", "--out", str(out)] + SMALL) == 0
    return out


def test_train_writes_bundle_and_trace(trained):
    assert (trained / "manifest").is_file()
    assert len((trained / "trace.jsonl").read_text().splitlines()) == 3
    model = load_bundle(trained)
    assert model.dictionary.shape == (4, 6)
    assert model.weights.skip == 2 and model.pool_window == 3


def test_epochs_zero_bundle_is_initialisation(dataset, tmp_path):
    assert cli.main(["train", "--manifest", str(dataset), "--fold", "u3", "--epochs", "0", "--out", str(tmp_path)] + SMALL) == 0
    saved = load_bundle(tmp_path)
    cfg = RunConfig.merged(overrides={"m": 6, "L": 3, "d": 2, "init_iters": 3, "epochs": 0, "eta0": 0.01})
    man = load_manifest(dataset)
    train_ids = [i for i in man.ids if man[i].user != "u3"]
    init, _ = initial_model(cfg, load_pairs(man, train_ids))
    np.testing.assert_array_equal(saved.dictionary, init.dictionary)
    assert np.all(saved.weights.flat() == 0)


def test_presets():
    cfg = RunConfig.merged(overrides={"learn_dictionary": True}, preset="sf-sccrf")
    assert cfg.learn_dictionary is False
    raw = RunConfig.merged(overrides={"d": 7}, preset="raw-crf")
    assert raw.features == "raw" and raw.d == 1
    assert set(PRESETS) == {"raw-crf", "sf-crf", "sf-sccrf", "sdl-sccrf"}


def test_raw_preset_bundle(dataset, tmp_path):
    assert cli.main(["train", "--manifest", str(dataset), "--preset", "raw-crf", "--epochs", "1", "--out", str(tmp_path)]) == 0
    model = load_bundle(tmp_path)
    assert model.raw and model.weights.dim == 4 and model.weights.skip == 1


def test_sf_sccrf_keeps_initial_dictionary(dataset, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    base = ["train", "--manifest", str(dataset), "--fold", "u0"] + SMALL
    assert cli.main(base + ["--epochs", "0", "--out", str(a)]) == 0
    assert cli.main(base + ["--epochs", "2", "--preset", "sf-sccrf", "--out", str(b)]) == 0
    np.testing.assert_array_equal(load_bundle(a).dictionary, load_bundle(b).dictionary)


def test_config_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nepochs = 5\nlambda_u = 0.2  # trailing\nlearn_dictionary = false\n")
    values = read_config_file(path)
    cfg = RunConfig.merged(values, {"epochs": 2})
    assert (cfg.epochs, cfg.lambda_u, cfg.learn_dictionary) == (2, 0.2, False)
    path.write_text("bogus = 1\n")
    with pytest.raises(InvalidConfigError):
        RunConfig.merged(read_config_file(path))
    with pytest.raises(InvalidConfigError):
        RunConfig(L=70)
    with pytest.raises(InvalidConfigError):
        RunConfig(median_window=4)


def test_bad_config_exit_code(dataset, tmp_path, capsys):
    path = tmp_path / "run.cfg"
    path.write_text("bogus = 1\n")
    assert cli.main(["train", "--manifest", str(dataset), "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "bogus" in capsys.readouterr().err
    assert cli.main(["train", "--manifest", str(tmp_path / "none.csv"), "--out", str(tmp_path / "o")]) == 2


def test_predict(trained, dataset, tmp_path, capsys):
    seq = load_manifest(dataset)["seq003"].sequence_path
    assert cli.main(["predict", "--model", str(trained), "--sequence", str(seq)]) == 0
    plain = capsys.readouterr().out.split()
    assert len(plain) == 60
    model = load_bundle(trained)
    assert [int(v) for v in plain] == list(model.predict(load_sequence(seq)))
    assert cli.main(["predict", "--model", str(trained), "--sequence", str(seq), "--median", "1"]) == 0
    assert capsys.readouterr().out.split() == plain
    out = tmp_path / "segs.txt"
    assert cli.main(["predict", "--model", str(trained), "--sequence", str(seq), "--segments", "--out", str(out)]) == 0
    triples = [tuple(map(int, line.split())) for line in out.read_text().splitlines()]
    assert triples[0][0] == 0 and triples[-1][1] == 60


def test_predict_median_window(trained, dataset, capsys):
    seq = load_manifest(dataset)["seq003"].sequence_path
    base = ["predict", "--model", str(trained), "--sequence", str(seq)]
    assert cli.main(base + ["--median"]) == 0
    bare = capsys.readouterr().out.split()
    assert cli.main(base + ["--median", "31"]) == 0
    assert capsys.readouterr().out.split() == bare
    assert cli.main(base + ["--median", "4"]) == 2


def test_evaluate_bare_median_uses_config(trained, dataset, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["evaluate", "--model", str(trained), "--manifest", str(dataset), "--fold", "u3"]
    assert cli.main(base + ["--median", "--median-window", "5", "--csv", str(a)]) == 0
    assert cli.main(base + ["--median", "5", "--csv", str(b)]) == 0
    assert a.read_text() == b.read_text()


def test_predict_errors(trained, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,3\n4,5,6\n")
    assert cli.main(["predict", "--model", str(trained), "--sequence", str(bad)]) == 2
    assert cli.main(["predict", "--model", str(tmp_path), "--sequence", str(bad)]) == 2
    assert "missing" in capsys.readouterr().err


def test_evaluate_oracle_is_perfect(dataset, capsys):
    assert cli.main(["evaluate", "--oracle", "--manifest", str(dataset)]) == 0
    rows = capsys.readouterr().out.splitlines()[1:]
    assert len(rows) == 9
    for row in rows:
        assert row.split()[1:] == ["100.000"] * 3


def test_evaluate_matches_library(trained, dataset, tmp_path):
    out = tmp_path / "m.csv"
    assert cli.main(["evaluate", "--model", str(trained), "--manifest", str(dataset), "--fold", "u3", "--csv", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    man = load_manifest(dataset)
    ids = [i for i in man.ids if man[i].user == "u3"]
    assert [r["sequence_id"] for r in rows] == ids
    lib = evaluate_model(load_bundle(trained), load_pairs(man, ids))
    for r, ref in zip(rows, lib):
        assert float(r["accuracy"]) == ref["accuracy"]
        assert float(r["edit"]) == ref["edit"]
        assert float(r["f1_10"]) == ref["f1_10"]


def test_evaluate_unknown_fold(trained, dataset):
    assert cli.main(["evaluate", "--model", str(trained), "--manifest", str(dataset), "--fold", "nobody"]) == 2


def test_divergence_exit_code(dataset, tmp_path):
    args = ["train", "--manifest", str(dataset), "--epochs", "1", "--eta0", "1e300", "--out", str(tmp_path)]
    assert cli.main(args + SMALL[:6]) == 3


def test_crossval_folds_and_runs(dataset, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SEQCRF_THREADS", "2")
    out, serial = tmp_path / "cv.csv", tmp_path / "cv1.csv"
    args = ["crossval", "--manifest", str(dataset), "--epochs", "1", "--runs", "2"] + SMALL
    assert cli.main(args + ["--csv", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert [r["fold"] for r in rows] == ["u0", "u1", "u2", "u3", "mean"]
    assert all(r["runs"] == "2" for r in rows)
    monkeypatch.setenv("SEQCRF_THREADS", "1")
    assert cli.main(args + ["--csv", str(serial)]) == 0
    assert serial.read_text() == out.read_text()


def test_crop_one_is_identity(dataset, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["crossval", "--manifest", str(dataset), "--epochs", "1"] + SMALL
    assert cli.main(base + ["--csv", str(a)]) == 0
    assert cli.main(base + ["--crop", "1.0", "--csv", str(b)]) == 0
    assert a.read_text() == b.read_text()


def test_crossval_partial_failure(dataset, monkeypatch, capsys):
    real = cli.train_model

    def flaky(cfg, pairs, seed=None, **kw):
        flaky.calls += 1
        if flaky.calls == 2:
            raise DivergenceError("boom")
        return real(cfg, pairs, seed=seed, **kw)

    flaky.calls = 0
    monkeypatch.setattr(cli, "train_model", flaky)
    monkeypatch.setenv("SEQCRF_THREADS", "1")
    assert cli.main(["crossval", "--manifest", str(dataset), "--epochs", "1"] + SMALL) == 1
    out = capsys.readouterr().out
    assert "failed" in out and "mean" in out
