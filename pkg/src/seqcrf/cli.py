"""Command-line interface.

Exit codes: 0 success, 1 partial failure, 2 usage/config/input error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .bundle import load_bundle, save_bundle, write_matrix
from .data import fit_preprocess, apply_preprocess, fold_names, load_manifest, load_sequence, resolve_folds
from .errors import ConvergenceError, DivergenceError, InvalidConfigError, SeqCRFError
from .metrics import median_filter, segments_from_labels
from .pipeline import (
    PRESETS,
    RunConfig,
    crop_pairs,
    evaluate_model,
    load_pairs,
    mean_metrics,
    read_config_file,
    train_model,
)
from .synth import make_synthetic, write_synthetic
from .training import init_dictionary

log = logging.getLogger("seqcrf")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(SeqCRFError):
    pass


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SEQCRF_THREADS", "1")))
    except ValueError:
        return 1


def _add_config_flags(p):
    g = p.add_argument_group("model configuration (override --config)")
    g.add_argument("--config", type=Path, help="flat 'key = value' configuration file")
    g.add_argument("--preset", choices=sorted(PRESETS), help="ablation preset; forces its settings")
    g.add_argument("--lambda-u", dest="lambda_u", type=float)
    g.add_argument("--m", type=int, help="dictionary size")
    g.add_argument("--L", dest="L", type=int, help="pooling window (odd)")
    g.add_argument("--d", type=int, help="skip length")
    g.add_argument("--C", dest="C", type=float)
    g.add_argument("--eta0", type=float)
    g.add_argument("--momentum", type=float)
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr-halving-period", dest="lr_halving_period", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--learn-dictionary", dest="learn_dictionary", action="store_const", const=True)
    g.add_argument("--no-learn-dictionary", dest="learn_dictionary", action="store_const", const=False)
    g.add_argument("--pca-dim", dest="pca_dim", type=int)
    g.add_argument("--init-iters", dest="init_iters", type=int)
    g.add_argument("--n-classes", dest="n_classes", type=int)
    g.add_argument("--median-window", dest="median_window", type=int)
    g.add_argument("--background", type=int)
    g.add_argument("--header", action="store_const", const=True, help="sequence files have a header line")


CONFIG_KEYS = [
    "lambda_u", "m", "L", "d", "C", "eta0", "momentum", "epochs", "lr_halving_period", "seed",
    "learn_dictionary", "pca_dim", "init_iters", "n_classes", "median_window", "background", "header",
]


def _run_config(args, extra=None) -> RunConfig:
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = {k: getattr(args, k, None) for k in CONFIG_KEYS}
    overrides.update(extra or {})
    return RunConfig.merged(file_values, overrides, getattr(args, "preset", None))


def _median(args, configured) -> int:
    """Window from ``--median``: absent means 1, bare means the configured window."""
    w = args.median
    if w is None:
        return 1
    if w == 0:  # bare flag
        w = configured
    if w < 1 or w % 2 == 0:
        raise InvalidConfigError(f"median window must be an odd positive integer, got {w}")
    return w


def _split(args, cfg):
    """Training and test ids for the requested fold (all ids when no fold is given)."""
    manifest = load_manifest(args.manifest)
    if args.fold is None:
        return manifest, manifest.ids, []
    names = fold_names(manifest, cfg.scheme)
    folds = resolve_folds(manifest, cfg.scheme)
    if args.fold in names:
        idx = names.index(args.fold)
    else:
        try:
            idx = int(args.fold)
        except ValueError:
            raise UsageError(f"unknown {cfg.scheme} fold {args.fold!r}; available: {names}") from None
        if not 0 <= idx < len(folds):
            raise UsageError(f"fold index {idx} out of range (0..{len(folds) - 1})")
    train, test = folds[idx]
    return manifest, train, test


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args):
    ds = make_synthetic(n_sequences=args.n_sequences, T=args.T, p=args.p, m=args.m,
                        n_classes=args.classes, n_users=args.users, seed=args.seed)
    path = write_synthetic(args.out, ds)
    print(f"wrote {len(ds.sequences)} sequences; manifest {path}")
    return EXIT_OK


def cmd_init_dict(args):
    cfg = _run_config(args, {"scheme": args.scheme})
    manifest, train, _ = _split(args, cfg)
    seqs = [load_sequence(manifest[i].sequence_path, header=cfg.header) for i in train]
    stats = fit_preprocess(seqs, cfg.pca_dim)
    frames = np.vstack([apply_preprocess(X, stats) for X in seqs])
    psi = init_dictionary(frames, cfg.m, cfg.lambda_u, iters=cfg.init_iters, seed=cfg.seed)
    write_matrix(args.out, psi)
    print(f"wrote {psi.shape[0]}x{psi.shape[1]} dictionary to {args.out}")
    return EXIT_OK


def cmd_train(args):
    cfg = _run_config(args, {"scheme": args.scheme})
    manifest, train, _ = _split(args, cfg)
    if not train:
        raise UsageError("no training sequences in the selected fold")
    pairs = load_pairs(manifest, train, cfg.header, cfg.background, cfg.n_classes)
    dictionary = None
    if args.init_dict is not None:
        from .bundle import read_matrix

        dictionary = read_matrix(args.init_dict)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = args.trace or out / "trace.jsonl"
    with open(trace_path, "w", encoding="utf-8") as sink:
        model, trace = train_model(cfg, pairs, dictionary=dictionary, sink=sink)
    save_bundle(model, out)
    last = trace[-1] if trace else {}
    print(f"trained on {len(train)} sequences for {cfg.epochs} epochs; "
          f"final objective {last.get('objective', float('nan')):.4f}; bundle {out}")
    return EXIT_OK


def cmd_predict(args):
    model = load_bundle(args.model)
    X = load_sequence(args.sequence, header=args.header)
    if X.shape[1] != (model.preprocess.p0 if model.preprocess else X.shape[1]):
        raise UsageError(f"sequence has {X.shape[1]} columns, model expects {model.preprocess.p0}")
    y = model.predict(X)
    window = _median(args, RunConfig().median_window)
    if window > 1:
        y = median_filter(y, window, mode=args.mode_filter)
    lines = [f"{s.start} {s.end} {s.label}" for s in segments_from_labels(y)] if args.segments else [str(v) for v in y]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _write_report(rows, ids, csv_path, stream=None):
    stream = stream or sys.stdout
    width = max([len("sequence_id")] + [len(i) for i in ids])
    stream.write(f"{'sequence_id':<{width}}  {'accuracy':>9}  {'edit':>9}  {'f1_10':>9}\n")
    for i, r in zip(ids, rows):
        stream.write(f"{i:<{width}}  {r['accuracy']:9.3f}  {r['edit']:9.3f}  {r['f1_10']:9.3f}\n")
    mean = mean_metrics(rows)
    stream.write(f"{'mean':<{width}}  {mean['accuracy']:9.3f}  {mean['edit']:9.3f}  {mean['f1_10']:9.3f}\n")
    if csv_path:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["sequence_id", "accuracy", "edit", "f1_10"])
            for i, r in zip(ids, rows):
                wr.writerow([i, repr(r["accuracy"]), repr(r["edit"]), repr(r["f1_10"])])
    return mean


def cmd_evaluate(args):
    cfg = _run_config(args, {"scheme": args.scheme})
    manifest, train, test = _split(args, cfg)
    ids = test if args.fold is not None else train
    if not ids:
        raise UsageError("no sequences to evaluate in the selected fold")
    model = None if args.oracle else load_bundle(args.model)
    pairs = load_pairs(manifest, ids, cfg.header, cfg.background, None if model is None else model.n_classes)
    rows = evaluate_model(model, pairs, median=_median(args, cfg.median_window), mode_filter=args.mode_filter,
                          background=args.background, oracle=args.oracle)
    _write_report(rows, ids, args.csv)
    return EXIT_OK


def cmd_crossval(args):
    cfg = _run_config(args, {"scheme": args.scheme})
    manifest = load_manifest(args.manifest)
    folds = resolve_folds(manifest, cfg.scheme)
    names = fold_names(manifest, cfg.scheme)
    if not 0 < args.crop <= 1:
        raise UsageError(f"--crop must be in (0, 1], got {args.crop}")
    window = _median(args, cfg.median_window)
    jobs = [(f, r) for f in range(len(folds)) for r in range(args.runs)]

    def run(job):
        f, r = job
        seed = cfg.seed + r
        train, test = folds[f]
        tr = crop_pairs(load_pairs(manifest, train, cfg.header, cfg.background, cfg.n_classes), args.crop, [seed, 0])
        te = crop_pairs(load_pairs(manifest, test, cfg.header, cfg.background, cfg.n_classes), args.crop, [seed, 1])
        model, _ = train_model(cfg, tr, seed=seed)
        return mean_metrics(evaluate_model(model, te, median=window,
                                           mode_filter=args.mode_filter, background=args.background))

    results, failures = {}, []
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        futures = {job: pool.submit(run, job) for job in jobs}
        for job, fut in futures.items():
            try:
                results[job] = fut.result()
            except SeqCRFError as exc:
                failures.append((job, exc))
                log.error("fold %s run %d failed: %s", names[job[0]], job[1], exc)

    keys = ("accuracy", "edit", "f1_10")
    rows = []
    print(f"{'fold':<12} {'runs':>4}  " + "  ".join(f"{k:>17}" for k in keys))
    for f, name in enumerate(names):
        got = [results[(f, r)] for r in range(args.runs) if (f, r) in results]
        if not got:
            print(f"{name:<12} {0:>4}  failed")
            continue
        stats = {k: (float(np.mean([g[k] for g in got])), float(np.std([g[k] for g in got]))) for k in keys}
        rows.append((name, len(got), stats))
        print(f"{name:<12} {len(got):>4}  " + "  ".join(f"{stats[k][0]:8.3f} ({stats[k][1]:6.3f})" for k in keys))
    if rows:
        # mean over folds of each run's fold metric, std across runs of the per-run fold average
        per_run = []
        for r in range(args.runs):
            got = [results[(f, r)] for f in range(len(folds)) if (f, r) in results]
            if got:
                per_run.append({k: float(np.mean([g[k] for g in got])) for k in keys})
        summary = {k: (float(np.mean([p[k] for p in per_run])), float(np.std([p[k] for p in per_run]))) for k in keys}
        print(f"{'mean':<12} {len(per_run):>4}  " + "  ".join(f"{summary[k][0]:8.3f} ({summary[k][1]:6.3f})" for k in keys))
        if args.csv:
            with open(args.csv, "w", encoding="utf-8", newline="") as fh:
                wr = csv.writer(fh, lineterminator="\n")
                wr.writerow(["fold", "runs"] + [f"{k}_{s}" for k in keys for s in ("mean", "std")])
                for name, n, stats in rows:
                    wr.writerow([name, n] + [repr(v) for k in keys for v in stats[k]])
                wr.writerow(["mean", len(per_run)] + [repr(v) for k in keys for v in summary[k]])
    if failures:
        return EXIT_PARTIAL
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqcrf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic labelled dataset and manifest")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-sequences", dest="n_sequences", type=int, default=20)
    p.add_argument("--T", dest="T", type=int, default=300)
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--users", type=int, default=4)
    p.set_defaults(func=cmd_synth)

    def split_flags(q, required_fold=False):
        q.add_argument("--manifest", type=Path, required=True)
        q.add_argument("--scheme", choices=["LOUO", "LOSO", "kfold"], default="LOUO")
        q.add_argument("--fold", help="held-out fold: tag name or index (default: use every sequence)")

    p = sub.add_parser("init-dict", help="learn an unsupervised dictionary on a training split")
    split_flags(p)
    _add_config_flags(p)
    p.add_argument("--out", type=Path, required=True, help="dictionary CSV to write")
    p.set_defaults(func=cmd_init_dict)

    p = sub.add_parser("train", help="fit a model bundle on a training split")
    split_flags(p)
    _add_config_flags(p)
    p.add_argument("--out", type=Path, required=True, help="bundle directory")
    p.add_argument("--init-dict", dest="init_dict", type=Path, help="start from this dictionary CSV")
    p.add_argument("--trace", type=Path, help="per-epoch JSON-lines trace (default: OUT/trace.jsonl)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="label one sequence file")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--sequence", type=Path, required=True)
    p.add_argument("--header", action="store_true")
    p.add_argument("--segments", action="store_true", help="write 'start end label' triples")
    p.add_argument("--median", type=int, nargs="?", const=0,
                   help="median-filter window (odd); bare flag uses the default of 31")
    p.add_argument("--mode-filter", dest="mode_filter", action="store_true", help="majority vote instead of median")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="accuracy / edit / F1@10 on a manifest split")
    split_flags(p)
    _add_config_flags(p)
    p.add_argument("--model", type=Path)
    p.add_argument("--oracle", action="store_true", help="score ground truth against itself")
    p.add_argument("--median", type=int, nargs="?", const=0,
                   help="median-filter window (odd); bare flag uses --median-window")
    p.add_argument("--mode-filter", dest="mode_filter", action="store_true")
    p.add_argument("--csv", type=Path)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("crossval", help="train and evaluate every fold of a scheme")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--scheme", choices=["LOUO", "LOSO", "kfold"], default="LOUO")
    _add_config_flags(p)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--crop", type=float, default=1.0, help="crop every sequence to this fraction")
    p.add_argument("--median", type=int, nargs="?", const=0,
                   help="median-filter window (odd); bare flag uses --median-window")
    p.add_argument("--mode-filter", dest="mode_filter", action="store_true")
    p.add_argument("--csv", type=Path)
    p.set_defaults(func=cmd_crossval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "evaluate" and not args.oracle and args.model is None:
        parser.error("evaluate needs --model unless --oracle is given")
    try:
        return args.func(args)
    except (DivergenceError, ConvergenceError, FloatingPointError) as exc:
        print(f"seqcrf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SeqCRFError, OSError) as exc:
        print(f"seqcrf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
