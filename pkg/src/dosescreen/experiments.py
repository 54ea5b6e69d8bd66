"""Feature-importance analysis, category ablations, and top-K selection.

Every experiment reuses one FoldPlan and one TrainConfig across all of
its configurations, so rows differ only in the columns they keep. The
headline number per configuration is the AUC of the pooled out-of-fold
predictions; the spread column is the population std of per-fold AUCs.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .crossval import FoldPlan, cv_train
from .errors import DataError, UsageError
from .gbdt import GbdtModel, TrainConfig
from .metrics import roc_auc
from .sparse import FeatureRegistry, SparseMatrix

REPORT_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# importance

@dataclass
class CategoryImportance:
    category: str
    width: int
    total_gain: float
    pct: float
    avg_gain: float


@dataclass
class ImportanceReport:
    per_feature: np.ndarray  # mean split gain per column, across models
    categories: list[CategoryImportance]

    def to_json(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "categories": [
                {
                    "category": c.category,
                    "width": c.width,
                    "total_gain": c.total_gain,
                    "pct": c.pct,
                    "avg_gain": c.avg_gain,
                }
                for c in self.categories
            ],
        }

    def to_markdown(self) -> str:
        lines = [
            "| Feature category | Features | Importance (%) | Avg. gain |",
            "| --- | ---: | ---: | ---: |",
        ]
        for c in self.categories:
            lines.append(
                f"| {c.category} | {c.width} | {c.pct:.2f} | {c.avg_gain:.4f} |"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["category", "width", "total_gain", "pct", "avg_gain"])
        for c in self.categories:
            writer.writerow(
                [c.category, c.width, repr(c.total_gain), repr(c.pct), repr(c.avg_gain)]
            )
        return buf.getvalue()


def aggregate_importance(
    models: list[GbdtModel], registry: FeatureRegistry
) -> ImportanceReport:
    """Average per-feature split gain across models and roll up by category."""
    if not models:
        raise UsageError("aggregate_importance needs at least one model")
    width = len(registry.names)
    for m in models:
        if m.n_features != width:
            raise DataError(
                f"model expects {m.n_features} features, registry holds {width}"
            )
    per_feature = np.zeros(width, dtype=np.float64)
    for m in models:
        per_feature += m.feature_gain
    per_feature /= len(models)
    grand = float(per_feature.sum())
    categories = []
    for cat in registry.category_order():
        cols = registry.columns_of(cat)
        total = float(per_feature[cols].sum())
        pct = 100.0 * total / grand if grand > 0 else 0.0
        categories.append(
            CategoryImportance(
                category=cat,
                width=len(cols),
                total_gain=total,
                pct=pct,
                avg_gain=total / len(cols),
            )
        )
    return ImportanceReport(per_feature=per_feature, categories=categories)


# ---------------------------------------------------------------------------
# ablation

@dataclass
class AblationRow:
    configuration: str
    n_features: int
    auc: float
    std_auc: float
    delta_pct: float


@dataclass
class AblationReport:
    rows: list[AblationRow]

    def to_json(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "rows": [
                {
                    "configuration": r.configuration,
                    "n_features": r.n_features,
                    "auc": r.auc,
                    "std_auc": r.std_auc,
                    "delta_pct": r.delta_pct,
                }
                for r in self.rows
            ],
        }

    def to_markdown(self) -> str:
        lines = [
            "| Configuration | Features | AUC | Δ (%) |",
            "| --- | ---: | ---: | ---: |",
        ]
        for r in self.rows:
            delta = "—" if r.configuration == "all features" else f"{r.delta_pct:+.2f}"
            lines.append(
                f"| {r.configuration} | {r.n_features} | {r.auc:.4f} | {delta} |"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["configuration", "n_features", "auc", "std_auc", "delta_pct"])
        for r in self.rows:
            writer.writerow(
                [r.configuration, r.n_features, repr(r.auc), repr(r.std_auc), repr(r.delta_pct)]
            )
        return buf.getvalue()


def _oof_auc(X: SparseMatrix, y: np.ndarray, config: TrainConfig, plan: FoldPlan):
    models, oofp = cv_train(X, y, config, plan)
    return models, float(roc_auc(y, oofp.probs)), float(np.std(oofp.per_fold_auc))


def run_ablation(
    X: SparseMatrix,
    y,
    registry: FeatureRegistry,
    drops: list[str | tuple[str, ...] | list[str]],
    config: TrainConfig,
    plan: FoldPlan,
) -> AblationReport:
    """Retrain without each category group and report the AUC delta.

    Each entry of ``drops`` is a category name or a group of names removed
    together. Delta is (baseline - ablated) / baseline * 100, so a positive
    value means the dropped group was carrying signal.
    """
    y = np.asarray(y, dtype=np.int64)
    if X.n_cols != len(registry.names):
        raise DataError(
            f"matrix has {X.n_cols} columns, registry describes {len(registry.names)}"
        )
    known = set(registry.category_order())
    groups: list[tuple[str, ...]] = []
    for entry in drops:
        group = (entry,) if isinstance(entry, str) else tuple(entry)
        for cat in group:
            if cat not in known:
                raise UsageError(f"unknown feature category: {cat!r}")
        groups.append(group)

    _, base_auc, base_std = _oof_auc(X, y, config, plan)
    rows = [AblationRow("all features", X.n_cols, base_auc, base_std, 0.0)]
    for group in groups:
        dropped = set()
        for cat in group:
            dropped.update(registry.columns_of(cat))
        keep = np.array(
            [j for j in range(X.n_cols) if j not in dropped], dtype=np.int64
        )
        if keep.size == 0:
            raise DataError(f"dropping {'+'.join(group)} leaves no columns")
        Xd = X.select_cols(keep)
        _, auc, std = _oof_auc(Xd, y, config, plan)
        delta = (base_auc - auc) / base_auc * 100.0
        rows.append(
            AblationRow(f"w/o {'+'.join(group)}", int(keep.size), auc, std, delta)
        )
    return AblationReport(rows=rows)


# ---------------------------------------------------------------------------
# top-K selection

@dataclass
class TopkRow:
    k: int
    auc: float
    std_auc: float
    pct_of_baseline: float


@dataclass
class TopkReport:
    baseline_auc: float
    ranking: np.ndarray  # all columns, best first
    selected: dict[int, np.ndarray]  # k -> ascending column ids
    rows: list[TopkRow]

    def to_json(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "baseline_auc": self.baseline_auc,
            "rows": [
                {
                    "k": r.k,
                    "auc": r.auc,
                    "std_auc": r.std_auc,
                    "pct_of_baseline": r.pct_of_baseline,
                }
                for r in self.rows
            ],
        }

    def to_markdown(self) -> str:
        lines = [
            "| Top-K features | AUC | % of baseline |",
            "| ---: | ---: | ---: |",
        ]
        for r in self.rows:
            lines.append(f"| {r.k} | {r.auc:.4f} | {r.pct_of_baseline:.2f} |")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "auc", "std_auc", "pct_of_baseline"])
        for r in self.rows:
            writer.writerow([r.k, repr(r.auc), repr(r.std_auc), repr(r.pct_of_baseline)])
        return buf.getvalue()


def topk_experiment(
    X: SparseMatrix,
    y,
    registry: FeatureRegistry,
    ks: list[int],
    config: TrainConfig,
    plan: FoldPlan,
) -> TopkReport:
    """Retrain on the K highest-gain features for each requested K.

    Features are ranked by gain averaged over the baseline fold models,
    ties broken by column index, so the selected sets are nested and
    K = total width reproduces the baseline run exactly.
    """
    y = np.asarray(y, dtype=np.int64)
    if X.n_cols != len(registry.names):
        raise DataError(
            f"matrix has {X.n_cols} columns, registry describes {len(registry.names)}"
        )
    for k in ks:
        if k < 1:
            raise UsageError(f"top-K size must be >= 1, got {k}")
        if k > X.n_cols:
            raise UsageError(f"top-K size {k} exceeds feature count {X.n_cols}")

    models, base_auc, base_std = _oof_auc(X, y, config, plan)
    per_feature = aggregate_importance(models, registry).per_feature
    ranking = np.argsort(-per_feature, kind="stable").astype(np.int64)

    selected: dict[int, np.ndarray] = {}
    rows = []
    for k in ks:
        cols = np.sort(ranking[:k])
        selected[k] = cols
        if k == X.n_cols:
            auc, std = base_auc, base_std
        else:
            _, auc, std = _oof_auc(X.select_cols(cols), y, config, plan)
        rows.append(TopkRow(k, auc, std, 100.0 * auc / base_auc))
    return TopkReport(
        baseline_auc=base_auc, ranking=ranking, selected=selected, rows=rows
    )


# ---------------------------------------------------------------------------
# training dynamics

def training_dynamics(
    models: list[GbdtModel], per_fold_auc: list[float] | None = None
) -> dict:
    """Summarize how far boosting ran before early stopping, per fold."""
    if not models:
        raise UsageError("training_dynamics needs at least one model")
    iters = [m.best_iteration for m in models]  # the kept tree count per fold
    out = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "per_fold_trees": iters,
        "mean_trees": float(np.mean(iters)),
        "std_trees": float(np.std(iters)),
    }
    if per_fold_auc is not None:
        out["per_fold_auc"] = [float(a) for a in per_fold_auc]
        out["auc_min"] = float(min(per_fold_auc))
        out["auc_max"] = float(max(per_fold_auc))
        out["auc_range"] = float(max(per_fold_auc) - min(per_fold_auc))
    return out
