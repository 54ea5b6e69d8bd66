"""Stratified k-fold planning, per-fold training with out-of-fold
predictions, and ensemble averaging."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, TrainingError, UsageError
from .gbdt import GbdtModel, TrainConfig, predict_proba, train
from .metrics import roc_auc
from .sparse import SparseMatrix


@dataclass
class FoldPlan:
    k: int
    assignment: np.ndarray  # row -> fold id in [0, k)
    seed: int

    def holdout_rows(self, fold: int) -> np.ndarray:
        return np.nonzero(self.assignment == fold)[0]

    def train_rows(self, fold: int) -> np.ndarray:
        return np.nonzero(self.assignment != fold)[0]


@dataclass
class OofPredictions:
    probs: np.ndarray
    plan: FoldPlan
    per_fold_auc: list[float]


def make_folds(y, k: int, seed: int) -> FoldPlan:
    """Per-class round-robin over a seed-shuffled order.

    The fold counter carries over from one class to the next, so the
    overall deal stays cyclic: fold sizes differ by at most 1 overall and
    within every class.
    """
    if k < 2:
        raise UsageError("k must be >= 2")
    y = np.asarray(y, dtype=np.int64)
    rng = np.random.default_rng(seed)
    assignment = np.full(y.shape[0], -1, dtype=np.int64)
    offset = 0
    for cls in np.unique(y):
        idx = np.nonzero(y == cls)[0]
        if idx.shape[0] < k:
            raise DataError(
                f"class {cls} has {idx.shape[0]} samples, fewer than k={k}"
            )
        rng.shuffle(idx)
        assignment[idx] = (offset + np.arange(idx.shape[0])) % k
        offset = (offset + idx.shape[0]) % k
    return FoldPlan(k=k, assignment=assignment, seed=seed)


def cv_train(
    X: SparseMatrix, y, config: TrainConfig, plan: FoldPlan
) -> tuple[list[GbdtModel], OofPredictions]:
    """Fit one model per fold (held-out fold is the early-stopping set) and
    assemble out-of-fold probabilities."""
    y = np.asarray(y, dtype=np.int64)
    if plan.assignment.shape[0] != X.n_rows:
        raise DataError("fold plan does not cover the matrix rows")
    models: list[GbdtModel] = []
    oof = np.zeros(X.n_rows, dtype=np.float64)
    per_fold_auc: list[float] = []
    for fold in range(plan.k):
        tr = plan.train_rows(fold)
        ho = plan.holdout_rows(fold)
        X_tr = X.select_rows(tr)
        X_ho = X.select_rows(ho)
        try:
            model = train(
                X_tr,
                y[tr],
                w_pos=config.scale_pos_weight,
                config=config,
                valid=(X_ho, y[ho]),
            )
        except (TrainingError, DataError) as e:
            raise type(e)(f"fold {fold}: {e}") from e
        models.append(model)
        probs = predict_proba(model, X_ho)
        oof[ho] = probs
        per_fold_auc.append(roc_auc(y[ho], probs))
    return models, OofPredictions(probs=oof, plan=plan, per_fold_auc=per_fold_auc)


def ensemble_predict(models: list[GbdtModel], X: SparseMatrix) -> np.ndarray:
    """Arithmetic mean of the per-model probabilities."""
    if not models:
        raise UsageError("ensemble_predict needs at least one model")
    for m in models:
        if m.n_features != X.n_cols:
            raise DataError(
                f"matrix has {X.n_cols} columns, a model expects {m.n_features}"
            )
    acc = np.zeros(X.n_rows, dtype=np.float64)
    for m in models:
        acc += predict_proba(m, X)
    return acc / len(models)
