"""Command-line interface: train | predict | evaluate | search | benchmark | stats.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 model-archive error, 5 unexpected internal error. All randomness is
traceable to the seeds printed in reports; reruns with identical flags
reproduce outputs byte-for-byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from .cascade import DaForestClassifier, resolve_threads
from .config import ConfigError, TrainSettings, apply_overrides, read_config_file
from .data import Dataset, load_csv, load_libsvm, stratified_split
from .forest import ForestKind
from .persistence import ArchiveError, load_model, save_model
from .search import SearchRange, default_search_range, search_n_estimators
from .stats import AccuracyMatrix, friedman_test, iman_davenport, wilcoxon_signed_rank
from .validation import DataError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_ARCHIVE = 4
EXIT_INTERNAL = 5


def _add_data_flags(p: argparse.ArgumentParser):
    p.add_argument("--data", required=True, help="path to the dataset file")
    p.add_argument("--format", choices=("csv", "libsvm"), default="csv")
    p.add_argument("--label", default=None,
                   help="label column name or 0-based index (csv)")
    p.add_argument("--no-header", action="store_true",
                   help="csv file has no header row")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--drop-column", action="append", default=[],
                   help="drop this column before training (repeatable)")
    p.add_argument("--impute-mean", action="store_true",
                   help="replace missing feature cells with column means")
    p.add_argument("--libsvm-dim", type=int, default=None,
                   help="feature dimension override for libsvm files")


def _parse_column(value: str):
    if value is None:
        return None
    try:
        return int(value)
    except ValueError:
        return value


def _load_dataset(args) -> Dataset:
    if args.format == "libsvm":
        return load_libsvm(args.data, d=args.libsvm_dim)
    if args.label is None:
        raise DataError("--label is required for csv datasets")
    drop = tuple(_parse_column(c) for c in args.drop_column)
    return load_csv(args.data, _parse_column(args.label),
                    has_header=not args.no_header, delimiter=args.delimiter,
                    drop_columns=drop, impute_mean=args.impute_mean)


def _load_feature_rows(args) -> np.ndarray:
    """Feature-only csv loading for predict when no label column exists."""
    with open(args.data, "r", newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=args.delimiter) if any(r)]
    if not args.no_header:
        rows = rows[1:]
    if not rows:
        raise DataError(f"{args.data}: file is empty")
    try:
        return np.asarray([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError:
        raise DataError(f"{args.data}: non-numeric feature cell") from None


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", default=None, help="flat key=value settings file")
    p.add_argument("--connectivity", choices=("plain", "sparse", "dense"), default=None)
    boost = p.add_mutually_exclusive_group()
    boost.add_argument("--boosting", dest="boosting", action="store_const", const=True)
    boost.add_argument("--no-boosting", dest="boosting", action="store_const", const=False)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--max-layers", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--k-folds", type=int, default=None)
    p.add_argument("--slots-per-kind", type=int, default=None)
    search = p.add_mutually_exclusive_group()
    search.add_argument("--search", dest="search", action="store_const", const=True)
    search.add_argument("--no-search", dest="search", action="store_const", const=False)
    p.add_argument("--search-lo", type=int, default=None)
    p.add_argument("--search-hi", type=int, default=None)
    p.add_argument("--search-step", type=int, default=None)
    p.add_argument("--n-estimators", type=int, default=None,
                   help="fixed trees per forest (disables the search)")
    p.add_argument("--holdout-fraction", type=float, default=None)
    p.add_argument("--score-features", action="store_const", const=True, default=None,
                   help="forward score vectors instead of probabilities")
    p.add_argument("--score-mode", choices=("additive", "last_layer"), default=None)
    p.add_argument("--weighted-bootstrap", action="store_const", const=True, default=None)
    p.add_argument("--refit-full", action="store_const", const=True, default=None)
    p.add_argument("--force-layers", type=int, default=None,
                   help="grow exactly this many layers (no early stop)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None,
                   help="tree-fitting worker threads (env DAF_THREADS)")
    p.set_defaults(boosting=None, search=None)


def _settings_from_args(args) -> TrainSettings:
    settings = read_config_file(args.config) if args.config else TrainSettings()
    overrides = dict(
        connectivity=args.connectivity, boosting=args.boosting,
        learning_rate=args.learning_rate, max_layers=args.max_layers,
        patience=args.patience, k_folds=args.k_folds,
        slots_per_kind=args.slots_per_kind, search=args.search,
        search_lo=args.search_lo, search_hi=args.search_hi,
        search_step=args.search_step, n_estimators=args.n_estimators,
        holdout_fraction=args.holdout_fraction,
        score_features=args.score_features, score_mode=args.score_mode,
        weighted_bootstrap=args.weighted_bootstrap, refit_full=args.refit_full,
        force_layers=args.force_layers, seed=args.seed, threads=args.threads,
    )
    return apply_overrides(settings, overrides)


def _classifier_from_settings(s: TrainSettings, seed: int | None = None) -> DaForestClassifier:
    srange = None
    if s.search_lo is not None or s.search_hi is not None or s.search_step is not None:
        if None in (s.search_lo, s.search_hi, s.search_step):
            raise ConfigError("search range needs all of --search-lo/hi/step")
        srange = SearchRange(s.search_lo, s.search_hi, s.search_step)
    return DaForestClassifier(
        slots_per_kind=s.slots_per_kind, connectivity=s.connectivity,
        boosting=s.boosting, learning_rate=s.learning_rate, k_folds=s.k_folds,
        max_layers=s.max_layers, patience=s.patience,
        n_estimators=s.n_estimators, search=s.search and s.n_estimators is None,
        search_range=srange, holdout_fraction=s.holdout_fraction,
        score_features=s.score_features, score_mode=s.score_mode,
        weighted_bootstrap=s.weighted_bootstrap, refit_full=s.refit_full,
        force_layers=s.force_layers, n_threads=s.threads,
        random_state=s.seed if seed is None else seed)


def _run_report(model: DaForestClassifier, settings: TrainSettings, seeds,
                train_acc, test_acc) -> dict:
    return {
        "config": settings.as_dict(),
        "seeds": list(seeds),
        "n_estimators_per_kind": model.n_per_kind_,
        "layer_oof_accuracy": model.layer_accuracies_,
        "kept_layers": model.n_layers_,
        "train_accuracy": train_acc,
        "test_accuracy": test_acc,
        "seconds_per_layer": model.fit_seconds_per_layer_,
        "total_seconds": model.total_fit_seconds_,
    }


def cmd_train(args) -> int:
    settings = _settings_from_args(args)
    ds = _load_dataset(args)
    test_acc = None
    if args.test_fraction:
        train_ds, test_ds = stratified_split(ds, args.test_fraction, settings.seed)
    else:
        train_ds, test_ds = ds, None
    model = _classifier_from_settings(settings)
    # fit on class-name labels so saved models predict names that compare
    # against independently loaded files regardless of encoding order
    names = np.asarray(train_ds.class_names, dtype=object)
    model.fit(train_ds.features, names[train_ds.labels])
    train_acc = float(np.mean(model.predict(train_ds.features)
                              == names[train_ds.labels]))
    if test_ds is not None:
        test_acc = float(np.mean(model.predict(test_ds.features)
                                 == names[test_ds.labels]))
    n_bytes = save_model(model, args.model_out)
    report = _run_report(model, settings, [settings.seed], train_acc, test_acc)
    report["model_file"] = {"path": args.model_out, "bytes": n_bytes}
    report["class_names"] = train_ds.class_names
    if args.report_out:
        with open(args.report_out, "w") as fh:
            json.dump(report, fh, indent=2)
    print(f"layers kept: {model.n_layers_}  "
          f"trees per forest: {model.n_per_kind_}  "
          f"train acc: {train_acc:.4f}"
          + (f"  test acc: {test_acc:.4f}" if test_acc is not None else ""))
    print(f"model written to {args.model_out} ({n_bytes} bytes)")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    if args.label is not None:
        X = _load_dataset(args).features
    elif args.format == "libsvm":
        X = load_libsvm(args.data, d=args.libsvm_dim).features
    else:
        X = _load_feature_rows(args)
    pred = model.predict(X)
    rows = [str(p) for p in pred]
    out = open(args.output, "w") if args.output else sys.stdout
    try:
        out.write("prediction\n")
        out.write("\n".join(rows) + "\n")
    finally:
        if args.output:
            out.close()
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    ds = _load_dataset(args)
    pred = model.predict(ds.features)
    truth = np.asarray([str(c) for c in ds.class_names])[ds.labels]
    acc = float(np.mean(np.asarray([str(p) for p in pred]) == truth))
    print(f"accuracy: {acc:.6f}  ({ds.m} rows)")
    return EXIT_OK


def cmd_search(args) -> int:
    ds = _load_dataset(args)
    kind = (ForestKind.RANDOM if args.kind == "random"
            else ForestKind.COMPLETELY_RANDOM)
    train_ds, val_ds = stratified_split(ds, args.holdout_fraction, args.seed)
    if args.lo is not None or args.hi is not None or args.step is not None:
        if None in (args.lo, args.hi, args.step):
            raise ConfigError("provide all of --lo/--hi/--step or none")
        srange = SearchRange(args.lo, args.hi, args.step)
    else:
        srange = default_search_range(ds.m)
    result = search_n_estimators(train_ds.features, train_ds.labels,
                                 val_ds.features, val_ds.labels, kind, srange,
                                 args.seed, n_threads=resolve_threads(args.threads))
    if args.curve_out:
        with open(args.curve_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n_estimators", "validation_accuracy"])
            writer.writerows(result.curve)
    print(f"kind: {args.kind}  range: ({srange.lo}, {srange.hi}, {srange.step})  "
          f"best n_estimators: {result.best_n}  "
          f"validation accuracy: {result.best_accuracy:.4f}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    settings = _settings_from_args(args)
    specs = []
    for item in args.data:
        if "=" not in item:
            raise ConfigError(f"--data expects NAME=PATH, got {item!r}")
        specs.append(tuple(item.split("=", 1)))

    variants = [("daforest", settings)]
    if args.baseline:
        base = TrainSettings(**{**settings.as_dict(),
                                "connectivity": "sparse", "boosting": False,
                                "search": False, "n_estimators": 500,
                                "score_mode": "last_layer"})
        variants.append(("gcforest_style", base))

    table: dict[str, dict[str, tuple[float, float, list[float]]]] = {}
    failures = []
    for name, path in specs:
        loader_args = argparse.Namespace(**{**vars(args), "data": path})
        try:
            ds = _load_dataset(loader_args)
        except (DataError, OSError) as exc:
            failures.append((name, str(exc)))
            print(f"[{name}] SKIPPED: {exc}", file=sys.stderr)
            continue
        table[name] = {}
        for vname, vsettings in variants:
            accs = []
            for run in range(args.runs):
                seed = settings.seed + run
                train_ds, test_ds = stratified_split(ds, args.test_fraction, seed)
                model = _classifier_from_settings(vsettings, seed=seed)
                t0 = time.perf_counter()
                model.fit(train_ds.features, train_ds.labels)
                acc = float(np.mean(model.predict(test_ds.features) == test_ds.labels))
                accs.append(acc)
                print(f"[{name}] {vname} run {run + 1}/{args.runs} seed {seed}: "
                      f"acc {acc:.4f} layers {model.n_layers_} "
                      f"({time.perf_counter() - t0:.1f}s)")
            mean = float(np.mean(accs))
            std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
            table[name][vname] = (mean, std, accs)
            print(f"[{name}] {vname}: {100 * mean:.2f} +- {100 * std:.2f}")

    if args.output and table:
        variant_names = [v for v, _ in variants]
        with open(args.output, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dataset"] + variant_names)
            for name in table:
                writer.writerow([name] + [f"{table[name][v][0]:.6f}"
                                          for v in variant_names])
    if args.report_out and table:
        with open(args.report_out, "w") as fh:
            json.dump({name: {v: {"mean": r[0], "std": r[1], "runs": r[2]}
                              for v, r in row.items()}
                       for name, row in table.items()}, fh, indent=2)
    if failures and not table:
        return EXIT_DATA
    return EXIT_OK


def cmd_stats(args) -> int:
    M = AccuracyMatrix.from_csv(args.input)
    fr = friedman_test(M)
    f_stat, f_p = iman_davenport(fr.chi2, *M.values.shape)
    alpha = args.alpha
    lines = [
        ("Friedman", fr.chi2, fr.p_value, fr.p_value < alpha),
        ("Iman-Davenport", f_stat, f_p, f_p < alpha),
    ]
    control = args.control or M.classifiers[int(np.argmin(fr.mean_ranks))]
    base = M.column(control)
    posthoc, skipped = [], []
    for name in M.classifiers:
        if name == control:
            continue
        try:
            res = wilcoxon_signed_rank(base, M.column(name),
                                       zero_policy=args.zero_policy,
                                       continuity=args.continuity)
        except DataError as exc:  # e.g. fewer than 5 non-zero differences
            skipped.append((name, str(exc)))
            continue
        posthoc.append((name, res.statistic, res.z, res.p_value,
                        res.p_value < alpha))
    print(f"control: {control}   alpha: {alpha}   zero policy: {args.zero_policy}"
          f"{' +continuity' if args.continuity else ''}")
    for name, stat, p, rejected in lines:
        print(f"{name:>16s}  statistic {stat:12.6f}  p {p:.6f}  "
              f"{'Rejected' if rejected else 'Accepted'}")
    print("post-hoc Wilcoxon vs control:")
    for name, w, z, p, rejected in posthoc:
        print(f"{name:>16s}  W {w:8.1f}  z {z:8.4f}  "
              f"p {p:.6f}  {'Rejected' if rejected else 'Accepted'}")
    for name, why in skipped:
        print(f"{name:>16s}  skipped: {why}")
    if args.output:
        with open(args.output, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["test", "statistic", "p_value", "hypothesis"])
            for name, stat, p, rejected in lines:
                writer.writerow([name, f"{stat:.6f}", f"{p:.6f}",
                                 "Rejected" if rejected else "Accepted"])
            writer.writerow([])
            writer.writerow(["classifier", "W", "z", "p_value", "hypothesis"])
            for name, w, z, p, rejected in posthoc:
                writer.writerow([name, w, f"{z:.6f}", f"{p:.6f}",
                                 "Rejected" if rejected else "Accepted"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="daforest",
        description="Dense adaptive cascade forest: train, evaluate, and compare.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model and write a .daf archive")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--test-fraction", type=float, default=None,
                   help="hold out this stratified fraction for a test score")
    p.add_argument("--model-out", required=True)
    p.add_argument("--report-out", default=None, help="write a JSON run report")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict labels with a saved model")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.add_argument("--output", default=None, help="write predictions CSV here")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="accuracy of a saved model on labeled data")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("search", help="linear search for the estimator count")
    _add_data_flags(p)
    p.add_argument("--kind", choices=("random", "completely-random"),
                   default="random")
    p.add_argument("--lo", type=int, default=None)
    p.add_argument("--hi", type=int, default=None)
    p.add_argument("--step", type=int, default=None)
    p.add_argument("--holdout-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--curve-out", default=None, help="write the accuracy curve CSV")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("benchmark", help="mean +- std accuracy over seeded runs")
    p.add_argument("--data", action="append", required=True,
                   metavar="NAME=PATH", help="dataset to benchmark (repeatable)")
    p.add_argument("--format", choices=("csv", "libsvm"), default="csv")
    p.add_argument("--label", default=None)
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--drop-column", action="append", default=[])
    p.add_argument("--impute-mean", action="store_true")
    p.add_argument("--libsvm-dim", type=int, default=None)
    _add_train_flags(p)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--baseline", action="store_true",
                   help="also run the gcforest-style baseline "
                        "(sparse, no boosting, 500 trees, last-layer argmax)")
    p.add_argument("--output", default=None,
                   help="accuracy-matrix CSV consumable by the stats command")
    p.add_argument("--report-out", default=None, help="JSON with per-run accuracies")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("stats", help="Friedman, Iman-Davenport, Wilcoxon report")
    p.add_argument("--input", required=True,
                   help="accuracy matrix CSV (rows datasets, columns classifiers)")
    p.add_argument("--control", default=None,
                   help="control column (default: best mean rank)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--zero-policy", choices=("drop", "pratt", "zsplit"),
                   default="drop")
    p.add_argument("--continuity", action="store_true")
    p.add_argument("--output", default=None, help="write the report as CSV")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ArchiveError as exc:
        print(f"archive error: {exc}", file=sys.stderr)
        return EXIT_ARCHIVE
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
