"""Hyperparameter search over the boosted-tree space.

The search space covers eight tunable knobs (learning rate on a log
scale); n_estimators, bagging_freq and the positive-class weight stay
fixed, the last recomputed from the data. The default sampler is
TPE-style: after a random startup phase, trials are split at the top
quantile into good/bad sets, candidates are drawn from a per-dimension
Gaussian KDE over the good set, and the candidate with the best
good/bad density ratio wins. A plain random sampler is always available.

Each trial draws its randomness from (seed, trial_id), so a resumed
search continues exactly where the history file left off.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .crossval import cv_train, make_folds
from .errors import DataError, TrainingError, UsageError
from .gbdt import TrainConfig
from .sparse import SparseMatrix

log = logging.getLogger(__name__)

HISTORY_SCHEMA_VERSION = 1

_N_STARTUP = 10
_GAMMA = 0.25
_N_CANDIDATES = 24


@dataclass(frozen=True)
class ParamSpec:
    name: str
    lo: float
    hi: float
    integer: bool = False
    log: bool = False

    def transform(self, v: float) -> float:
        return math.log(v) if self.log else float(v)

    def untransform(self, t: float) -> float:
        v = math.exp(t) if self.log else t
        if self.integer:
            v = int(round(v))
            v = min(max(v, int(self.lo)), int(self.hi))
        else:
            v = min(max(v, self.lo), self.hi)
        return v

    def sample(self, rng: np.random.Generator) -> float:
        if self.integer:
            return int(rng.integers(int(self.lo), int(self.hi) + 1))
        if self.log:
            return float(np.exp(rng.uniform(math.log(self.lo), math.log(self.hi))))
        return float(rng.uniform(self.lo, self.hi))

    def contains(self, v: float) -> bool:
        return self.lo <= v <= self.hi


@dataclass
class SearchSpace:
    params: tuple[ParamSpec, ...]

    @classmethod
    def default(cls) -> "SearchSpace":
        return cls(
            params=(
                ParamSpec("learning_rate", 0.005, 0.05, log=True),
                ParamSpec("num_leaves", 31, 256, integer=True),
                ParamSpec("max_depth", 4, 10, integer=True),
                ParamSpec("min_child_samples", 20, 300, integer=True),
                ParamSpec("lambda_l1", 0.0, 5.0),
                ParamSpec("lambda_l2", 0.0, 5.0),
                ParamSpec("feature_fraction", 0.6, 0.9),
                ParamSpec("bagging_fraction", 0.6, 0.9),
            )
        )

    def sample(self, rng: np.random.Generator) -> dict[str, float]:
        return {p.name: p.sample(rng) for p in self.params}


@dataclass
class TrialRecord:
    trial_id: int
    status: str  # "ok" | "failed"
    config: TrainConfig | None
    per_fold_auc: list[float] = field(default_factory=list)
    mean_auc: float = float("nan")
    std_auc: float = float("nan")
    wall_time: float = 0.0
    error: str | None = None

    def to_json(self) -> dict:
        return {
            "schema_version": HISTORY_SCHEMA_VERSION,
            "trial_id": self.trial_id,
            "status": self.status,
            "config": self.config.to_json() if self.config else None,
            "per_fold_auc": self.per_fold_auc,
            "mean_auc": None if math.isnan(self.mean_auc) else self.mean_auc,
            "std_auc": None if math.isnan(self.std_auc) else self.std_auc,
            "wall_time": self.wall_time,
            "error": self.error,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "TrialRecord":
        if payload.get("schema_version") != HISTORY_SCHEMA_VERSION:
            raise DataError("unsupported trial history schema version")
        return cls(
            trial_id=payload["trial_id"],
            status=payload["status"],
            config=TrainConfig.from_json(payload["config"]) if payload["config"] else None,
            per_fold_auc=payload["per_fold_auc"],
            mean_auc=float("nan") if payload["mean_auc"] is None else payload["mean_auc"],
            std_auc=float("nan") if payload["std_auc"] is None else payload["std_auc"],
            wall_time=payload["wall_time"],
            error=payload.get("error"),
        )


def _log_density(x: np.ndarray, points: np.ndarray, bw: float) -> np.ndarray:
    z = (x[:, None] - points[None, :]) / bw
    dens = np.exp(-0.5 * z * z).mean(axis=1) / (bw * math.sqrt(2.0 * math.pi))
    return np.log(dens + 1e-300)


def _bandwidth(values: np.ndarray, lo_t: float, hi_t: float) -> float:
    spread = float(values.std())
    floor = (hi_t - lo_t) / 20.0 or 1e-3
    return max(1.06 * spread * len(values) ** -0.2, floor)


def _tpe_propose(
    space: SearchSpace,
    ok_trials: list[tuple[dict[str, float], float]],
    rng: np.random.Generator,
) -> dict[str, float]:
    if len(ok_trials) < _N_STARTUP:
        return space.sample(rng)
    ranked = sorted(ok_trials, key=lambda item: -item[1])  # stable on ties
    n_good = max(1, math.ceil(_GAMMA * len(ranked)))
    good = ranked[:n_good]
    bad = ranked[n_good:]
    out: dict[str, float] = {}
    for spec in space.params:
        lo_t, hi_t = spec.transform(spec.lo), spec.transform(spec.hi)
        gv = np.array([spec.transform(p[0][spec.name]) for p in good])
        bv = np.array([spec.transform(p[0][spec.name]) for p in bad])
        bw_g = _bandwidth(gv, lo_t, hi_t)
        bw_b = _bandwidth(bv, lo_t, hi_t)
        centers = gv[rng.integers(0, gv.shape[0], _N_CANDIDATES)]
        cands = np.clip(centers + rng.normal(0.0, bw_g, _N_CANDIDATES), lo_t, hi_t)
        score = _log_density(cands, gv, bw_g) - _log_density(cands, bv, bw_b)
        out[spec.name] = spec.untransform(float(cands[int(np.argmax(score))]))
    return out


def _params_of(config: TrainConfig, space: SearchSpace) -> dict[str, float]:
    return {p.name: getattr(config, p.name) for p in space.params}


def load_history(path: str | Path) -> list[TrialRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                records.append(TrialRecord.from_json(json.loads(line)))
    return records


def _append_history(path: str | Path, record: TrialRecord) -> None:
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(record.to_json()) + "\n")


def run_search(
    X: SparseMatrix | None,
    y,
    space: SearchSpace,
    n_trials: int,
    sampler: str = "tpe",
    seed: int = 0,
    k: int = 5,
    history_path: str | Path | None = None,
    base_config: TrainConfig | None = None,
    objective=None,
) -> tuple[TrialRecord, list[TrialRecord]]:
    """Sample, evaluate, and rank n_trials configurations.

    The objective of one trial is the per-fold validation AUC of cv_train
    under a single FoldPlan shared by every trial; ``objective`` may
    override it (config -> list of floats) for testing. History is
    appended to ``history_path`` per trial; an existing file resumes the
    search after its last record (same seed/sampler assumed).
    """
    if sampler not in ("tpe", "random"):
        raise UsageError(f"unknown sampler: {sampler!r} (expected tpe or random)")
    if n_trials < 1:
        raise UsageError("n_trials must be >= 1")
    base = base_config or TrainConfig()
    if objective is None:
        if X is None:
            raise UsageError("run_search needs a feature matrix or an objective")
        y = np.asarray(y, dtype=np.int64)
        n_pos = int((y == 1).sum())
        n_neg = int((y == 0).sum())
        if n_pos == 0 or n_neg == 0:
            raise DataError("labels must contain both classes")
        spw = n_neg / n_pos
        plan = make_folds(y, k, seed)

        def objective(config: TrainConfig) -> list[float]:
            _, oofp = cv_train(X, y, config, plan)
            return oofp.per_fold_auc

    else:
        spw = base.scale_pos_weight

    history: list[TrialRecord] = []
    if history_path is not None and Path(history_path).exists():
        history = load_history(history_path)
        if len(history) > n_trials:
            raise UsageError(
                f"history already holds {len(history)} trials (> n_trials={n_trials})"
            )

    for trial_id in range(len(history), n_trials):
        rng = np.random.default_rng([seed, trial_id])
        ok_trials = [
            (_params_of(r.config, space), r.mean_auc)
            for r in history
            if r.status == "ok"
        ]
        if sampler == "random":
            params = space.sample(rng)
        else:
            params = _tpe_propose(space, ok_trials, rng)
        config = replace(base, scale_pos_weight=spw, seed=seed, **params)
        started = time.perf_counter()
        try:
            per_fold = [float(a) for a in objective(config)]
            record = TrialRecord(
                trial_id=trial_id,
                status="ok",
                config=config,
                per_fold_auc=per_fold,
                mean_auc=float(np.mean(per_fold)),
                std_auc=float(np.std(per_fold)),
                wall_time=time.perf_counter() - started,
            )
        except (TrainingError, DataError) as e:
            record = TrialRecord(
                trial_id=trial_id,
                status="failed",
                config=config,
                wall_time=time.perf_counter() - started,
                error=str(e),
            )
        history.append(record)
        if history_path is not None:
            _append_history(history_path, record)

    best = None
    for r in history:
        if r.status == "ok" and (best is None or r.mean_auc > best.mean_auc):
            best = r
    if best is None:
        raise TrainingError("all search trials failed")
    return best, history


def replay_config(
    config: TrainConfig, X: SparseMatrix, y, k: int = 5
) -> TrialRecord:
    """Evaluate exactly one configuration with cv_train.

    Out-of-bounds values only warn: replay is unconstrained by the space.
    """
    space = SearchSpace.default()
    for spec in space.params:
        v = getattr(config, spec.name)
        if not spec.contains(v):
            log.warning(
                "replay: %s=%s lies outside the search range [%s, %s]",
                spec.name, v, spec.lo, spec.hi,
            )
    y = np.asarray(y, dtype=np.int64)
    plan = make_folds(y, k, config.seed)
    started = time.perf_counter()
    _, oofp = cv_train(X, y, config, plan)
    per_fold = [float(a) for a in oofp.per_fold_auc]
    return TrialRecord(
        trial_id=-1,
        status="ok",
        config=config,
        per_fold_auc=per_fold,
        mean_auc=float(np.mean(per_fold)),
        std_auc=float(np.std(per_fold)),
        wall_time=time.perf_counter() - started,
    )
