"""Command-line entry points for the screening pipeline.

Every subcommand writes machine-readable output: JSON reports on stdout
(each carrying a schema_version), CSV where the artifact is tabular
(probability files, threshold sweeps). Failures print a JSON error
object to stderr and exit with 2 (usage), 3 (bad data), or 4 (training).
Given the same inputs and seed, every command writes byte-identical
outputs across runs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .corpus import (
    concatenate_corpus,
    corpus_stats,
    generate_synthetic_corpus,
    load_corpus,
    save_corpus,
)
from .crossval import cv_train, ensemble_predict, make_folds
from .errors import DataError, DoseScreenError, TrainingError, UsageError
from .experiments import (
    aggregate_importance,
    run_ablation,
    topk_experiment,
    training_dynamics,
)
from .gbdt import TrainConfig, load_model, save_model
from .medpatterns import FEATURE_NAMES, extract_pattern_matrix
from .metrics import (
    REPORT_SCHEMA_VERSION,
    confusion_at,
    optimize_threshold,
    roc_auc,
    sweep_to_csv,
    threshold_sweep,
)
from .sparse import load_matrix, save_matrix
from .tune import SearchSpace, load_history, replay_config, run_search
from .vectorize import (
    assemble_features,
    fit_char_tfidf,
    fit_word_tfidf,
    load_vectorizers,
    save_vectorizers,
    transform_tfidf,
)


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad flags through the usual error channel."""

    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# shared pieces

def _load_features(path, need_registry: bool = False):
    matrix, registry = load_matrix(path)
    if need_registry and registry is None:
        raise DataError(f"{path}: no registry sidecar (.registry.json) found")
    return matrix, registry


def _labels_for(path, n_rows: int) -> np.ndarray:
    records = load_corpus(path)
    if len(records) != n_rows:
        raise DataError(
            f"{path}: corpus has {len(records)} records but the matrix has "
            f"{n_rows} rows"
        )
    return np.array([r.label for r in records], dtype=np.int64)


def _pos_weight(y: np.ndarray) -> float:
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("labels must contain both classes")
    return n_neg / n_pos


def _effective_config(args, y: np.ndarray) -> TrainConfig:
    """config file < --seed < --scale-pos-weight; the positive-class weight
    defaults to the corpus neg/pos ratio rather than the config value."""
    payload = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as f:
            try:
                payload = json.load(f)
            except json.JSONDecodeError as e:
                raise DataError(f"{args.config}: not valid JSON ({e})") from e
    config = TrainConfig.from_json(payload)
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    spw = getattr(args, "scale_pos_weight", None)
    config = replace(
        config, scale_pos_weight=float(spw) if spw is not None else _pos_weight(y)
    )
    config.validate()
    return config


def _load_model_dir(path) -> list:
    paths = sorted(Path(path).glob("model_fold*.json"))
    if not paths:
        raise DataError(f"{path}: no model_fold*.json files found")
    return [load_model(p) for p in paths]


def _read_probs(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "prob" not in reader.fieldnames:
            raise DataError(f"{path}: expected a CSV with a 'prob' column")
        try:
            probs = [float(row["prob"]) for row in reader]
        except (TypeError, ValueError) as e:
            raise DataError(f"{path}: bad probability value ({e})") from e
    if not probs:
        raise DataError(f"{path}: no probability rows")
    return np.array(probs, dtype=np.float64)


def _write_probs_csv(path, probs: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("row,prob\n")
        for i, p in enumerate(probs):
            f.write(f"{i},{float(p)!r}\n")


def _maybe_write(path, text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")


def _parse_ks(text: str) -> list[int]:
    try:
        ks = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise UsageError(f"--ks must be comma-separated integers ({e})") from e
    if not ks:
        raise UsageError("--ks must name at least one size")
    return ks


def _parse_thresholds(text: str) -> list[float]:
    try:
        ts = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise UsageError(f"--sweep must be comma-separated numbers ({e})") from e
    if not ts:
        raise UsageError("--sweep must name at least one threshold")
    return ts


# ---------------------------------------------------------------------------
# subcommand handlers

def _cmd_synth(args) -> dict:
    records = generate_synthetic_corpus(args.n, args.rate, args.strength, args.seed)
    save_corpus(records, args.out)
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "n": len(records),
        "positives": sum(r.label for r in records),
        "out": str(args.out),
    }


def _cmd_corpus_stats(args) -> dict:
    records = load_corpus(args.corpus)
    docs = concatenate_corpus(records)
    return corpus_stats(docs).to_json()


def _cmd_extract(args) -> dict:
    records = load_corpus(args.corpus)
    docs = concatenate_corpus(records)
    med = extract_pattern_matrix(docs, records)
    if args.load_vectorizers:
        word_model, char_model = load_vectorizers(args.load_vectorizers)
    else:
        word_model = fit_word_tfidf(docs)
        char_model = fit_char_tfidf(docs)
    if args.save_vectorizers:
        save_vectorizers(args.save_vectorizers, word_model, char_model)

    blocks = [
        (med, "medical", list(FEATURE_NAMES)),
        (transform_tfidf(word_model, docs), "word", word_model.terms()),
        (transform_tfidf(char_model, docs), "char", char_model.terms()),
    ]
    for flag, category in ((args.embeddings, "embedding"), (args.scores, "transformer_score")):
        if flag:
            extra, extra_reg = load_matrix(flag)
            if extra.n_rows != len(records):
                raise DataError(
                    f"{flag}: {extra.n_rows} rows do not match the corpus "
                    f"({len(records)} records)"
                )
            if extra_reg is not None:
                blocks.append((extra, category, extra_reg.names))
            else:
                blocks.append((extra, category))

    matrix, registry = assemble_features(blocks)
    save_matrix(args.out, matrix, registry)
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "rows": matrix.n_rows,
        "cols": matrix.n_cols,
        "nnz": matrix.nnz,
        "category_widths": registry.category_widths(),
        "out": str(args.out),
    }


def _cmd_train(args) -> dict:
    X, _ = _load_features(args.features)
    y = _labels_for(args.labels_from, X.n_rows)
    config = _effective_config(args, y)
    plan = make_folds(y, args.folds, config.seed)
    models, oofp = cv_train(X, y, config, plan)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for fold, model in enumerate(models):
        save_model(model, out / f"model_fold{fold}.json")
    with open(out / "oof.csv", "w", encoding="utf-8", newline="") as f:
        f.write("row,label,prob\n")
        for i, (label, p) in enumerate(zip(y, oofp.probs)):
            f.write(f"{i},{int(label)},{float(p)!r}\n")
    (out / "config.json").write_text(
        json.dumps(config.to_json(), indent=2) + "\n", encoding="utf-8"
    )

    threshold, at_best = optimize_threshold(y, oofp.probs)
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "folds": plan.k,
        "seed": config.seed,
        "oof_auc": roc_auc(y, oofp.probs),
        "per_fold_auc": [float(a) for a in oofp.per_fold_auc],
        "mean_fold_auc": float(np.mean(oofp.per_fold_auc)),
        "std_fold_auc": float(np.std(oofp.per_fold_auc)),
        "dynamics": training_dynamics(models, oofp.per_fold_auc),
        "best_f1_threshold": threshold,
        "at_best_f1": at_best.to_json(),
        "out": str(out),
    }
    (out / "report.json").write_text(
        json.dumps(report, indent=2) + "\n", encoding="utf-8"
    )
    return report


def _cmd_predict(args) -> dict:
    models = _load_model_dir(args.models)
    X, _ = _load_features(args.features)
    probs = ensemble_predict(models, X)
    _write_probs_csv(args.out, probs)
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "rows": int(probs.shape[0]),
        "models": len(models),
        "out": str(args.out),
    }


def _cmd_evaluate(args) -> dict | None:
    probs = _read_probs(args.probs)
    y = _labels_for(args.labels_from, probs.shape[0])
    if args.sweep:
        reports = threshold_sweep(y, probs, _parse_thresholds(args.sweep))
        text = sweep_to_csv(reports)
        if args.out:
            _maybe_write(args.out, text)
        else:
            sys.stdout.write(text)
        return None
    if args.threshold is not None:
        report = confusion_at(y, probs, args.threshold)
    else:  # --optimize-f1
        _, report = optimize_threshold(y, probs)
    payload = report.to_json()
    if args.out:
        _maybe_write(args.out, json.dumps(payload, indent=2) + "\n")
    return payload


def _cmd_tune(args) -> dict:
    X, _ = _load_features(args.features)
    y = _labels_for(args.labels_from, X.n_rows)
    if args.replay:
        with open(args.replay, "r", encoding="utf-8") as f:
            try:
                payload = json.load(f)
            except json.JSONDecodeError as e:
                raise DataError(f"{args.replay}: not valid JSON ({e})") from e
        record = replay_config(TrainConfig.from_json(payload), X, y, k=args.folds)
        return record.to_json()
    if args.trials is None:
        raise UsageError("--trials is required unless --replay is given")
    best, history = run_search(
        X,
        y,
        SearchSpace.default(),
        n_trials=args.trials,
        sampler=args.sampler,
        seed=args.seed if args.seed is not None else 0,
        k=args.folds,
        history_path=args.out,
    )
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "n_trials": len(history),
        "n_failed": sum(1 for r in history if r.status == "failed"),
        "best": best.to_json(),
        "history": str(args.out) if args.out else None,
    }


def _cmd_importance(args) -> dict:
    _, registry = _load_features(args.features, need_registry=True)
    models = _load_model_dir(args.models)
    report = aggregate_importance(models, registry)
    _maybe_write(args.out_md, report.to_markdown())
    _maybe_write(args.out_csv, report.to_csv())
    return report.to_json()


def _cmd_ablate(args) -> dict:
    X, registry = _load_features(args.features, need_registry=True)
    y = _labels_for(args.labels_from, X.n_rows)
    config = _effective_config(args, y)
    plan = make_folds(y, args.folds, config.seed)
    if args.drop:
        drops = [tuple(part for part in item.split(",") if part) for item in args.drop]
    else:
        drops = [(c,) for c in registry.category_order()]
    report = run_ablation(X, y, registry, drops, config, plan)
    _maybe_write(args.out_md, report.to_markdown())
    _maybe_write(args.out_csv, report.to_csv())
    return report.to_json()


def _cmd_select_topk(args) -> dict:
    X, registry = _load_features(args.features, need_registry=True)
    y = _labels_for(args.labels_from, X.n_rows)
    config = _effective_config(args, y)
    plan = make_folds(y, args.folds, config.seed)
    report = topk_experiment(X, y, registry, _parse_ks(args.ks), config, plan)
    _maybe_write(args.out_md, report.to_markdown())
    _maybe_write(args.out_csv, report.to_csv())
    return report.to_json()


# ---------------------------------------------------------------------------
# parser

def _add_train_like_flags(p, with_spw: bool = False) -> None:
    p.add_argument("--features", required=True, help="FMX feature matrix")
    p.add_argument("--labels-from", required=True, metavar="CORPUS",
                   help="JSONL corpus supplying row-aligned labels")
    p.add_argument("--config", help="JSON file of training settings (partial ok)")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=None,
                   help="overrides the config file seed")
    if with_spw:
        p.add_argument("--scale-pos-weight", type=float, default=None,
                       help="override the neg/pos ratio computed from labels")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dosescreen",
                     description="Screen trial narratives for dosing-error signals.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--rate", type=float, required=True, help="positive fraction")
    p.add_argument("--strength", type=float, required=True,
                   help="probability a positive carries deviation wording")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="JSONL path to write")
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("corpus", help="corpus utilities")
    csub = p.add_subparsers(dest="corpus_command", required=True, metavar="SUBCOMMAND")
    ps = csub.add_parser("stats", help="print size and length quantiles as JSON")
    ps.add_argument("--corpus", required=True)
    ps.set_defaults(handler=_cmd_corpus_stats)

    p = sub.add_parser("extract", help="turn a corpus into an FMX feature matrix")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="FMX path to write")
    p.add_argument("--embeddings", help="FMX of row-aligned embedding columns")
    p.add_argument("--scores", help="FMX of row-aligned auxiliary score columns")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--save-vectorizers", metavar="JSON",
                       help="persist the fitted tf-idf vocabularies")
    group.add_argument("--load-vectorizers", metavar="JSON",
                       help="reuse previously fitted vocabularies")
    p.set_defaults(handler=_cmd_extract)

    p = sub.add_parser("train", help="k-fold train and save per-fold models")
    _add_train_like_flags(p, with_spw=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("predict", help="average fold models over a matrix")
    p.add_argument("--models", required=True, help="directory of model_fold*.json")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="CSV of row,prob")
    p.set_defaults(handler=_cmd_predict)

    p = sub.add_parser("evaluate", help="score probabilities against labels")
    p.add_argument("--probs", required=True, help="CSV with a prob column")
    p.add_argument("--labels-from", required=True, metavar="CORPUS")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--threshold", type=float)
    group.add_argument("--optimize-f1", action="store_true")
    group.add_argument("--sweep", metavar="T1,T2,...",
                       help="emit the threshold-sweep CSV")
    p.add_argument("--out", help="write the report here instead of stdout only")
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("tune", help="hyperparameter search (or replay one config)")
    p.add_argument("--features", required=True)
    p.add_argument("--labels-from", required=True, metavar="CORPUS")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--sampler", choices=("tpe", "random"), default="tpe")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--out", help="JSONL trial history (resumed when present)")
    p.add_argument("--replay", metavar="CONFIG",
                   help="evaluate exactly this config instead of searching")
    p.set_defaults(handler=_cmd_tune)

    p = sub.add_parser("importance", help="aggregate split gain by category")
    p.add_argument("--models", required=True, help="directory of model_fold*.json")
    p.add_argument("--features", required=True,
                   help="FMX whose registry names the columns")
    p.add_argument("--out-md", help="write the markdown table here")
    p.add_argument("--out-csv", help="write the CSV table here")
    p.set_defaults(handler=_cmd_importance)

    p = sub.add_parser("ablate", help="retrain without each feature category")
    _add_train_like_flags(p, with_spw=True)
    p.add_argument("--drop", action="append", metavar="CAT[,CAT...]",
                   help="category group to drop (repeatable); default: each "
                        "category on its own")
    p.add_argument("--out-md", help="write the markdown table here")
    p.add_argument("--out-csv", help="write the CSV table here")
    p.set_defaults(handler=_cmd_ablate)

    p = sub.add_parser("select-topk", help="retrain on the K highest-gain features")
    _add_train_like_flags(p, with_spw=True)
    p.add_argument("--ks", required=True, metavar="K1,K2,...")
    p.add_argument("--out-md", help="write the markdown table here")
    p.add_argument("--out-csv", help="write the CSV table here")
    p.set_defaults(handler=_cmd_select_topk)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        payload = args.handler(args)
        if payload is not None:
            print(json.dumps(payload, indent=2))
        return 0
    except DoseScreenError as e:
        for klass, code in ((UsageError, 2), (DataError, 3), (TrainingError, 4)):
            if isinstance(e, klass):
                break
        else:  # pragma: no cover - DoseScreenError is never raised bare
            code = 2
        print(
            json.dumps(
                {"error": {"type": type(e).__name__, "message": str(e), "exit_code": code}}
            ),
            file=sys.stderr,
        )
        return code
    except FileNotFoundError as e:
        print(
            json.dumps(
                {"error": {"type": "FileNotFound", "message": str(e), "exit_code": 3}}
            ),
            file=sys.stderr,
        )
        return 3


if __name__ == "__main__":
    sys.exit(main())
