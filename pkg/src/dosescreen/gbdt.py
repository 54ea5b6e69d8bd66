"""Histogram-based gradient-boosted trees for weighted binary classification.

Training uses second-order (Newton) boosting on the weighted logloss:
per round, gradients g_i = w_i (p_i - y_i) and hessians h_i = w_i p_i (1 - p_i)
feed a leaf-wise tree grower over per-feature quantile histograms. Split
gain and leaf values use the L1/L2-regularized forms

    gain = 1/2 [ S(G_L)^2 / (H_L + l2) + S(G_R)^2 / (H_R + l2)
                 - S(G)^2 / (H + l2) ]
    leaf = -S(G) / (H + l2)

where S soft-thresholds by l1. Prediction is sigmoid(base_score +
learning_rate * sum of tree outputs); leaf values are stored unscaled.

Bit-reproducibility: all subsampling comes from one seeded generator
consumed in a fixed order, histogram accumulation and cumulative scans
run in fixed serial order, and ties in split gain resolve to the lowest
feature id, then the lowest bin.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import DataError, TrainingError, UsageError
from .metrics import roc_auc
from .sparse import SparseMatrix

MODEL_SCHEMA_VERSION = 1


@dataclass
class TrainConfig:
    n_estimators: int = 4000
    learning_rate: float = 0.0054
    num_leaves: int = 118
    max_depth: int = 9
    min_child_samples: int = 211
    lambda_l1: float = 4.29
    lambda_l2: float = 4.33
    feature_fraction: float = 0.795
    bagging_fraction: float = 0.813
    bagging_freq: int = 1
    scale_pos_weight: float = 20.87
    early_stopping_patience: int = 200
    max_bins: int = 255
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.learning_rate <= 1.0:
            raise UsageError("learning_rate must be in (0, 1]")
        if self.num_leaves < 2:
            raise UsageError("num_leaves must be >= 2")
        if self.max_depth < 1:
            raise UsageError("max_depth must be >= 1")
        if self.min_child_samples < 1:
            raise UsageError("min_child_samples must be >= 1")
        if self.lambda_l1 < 0 or self.lambda_l2 < 0:
            raise UsageError("lambda_l1 and lambda_l2 must be >= 0")
        for name in ("feature_fraction", "bagging_fraction"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise UsageError(f"{name} must be in (0, 1]")
        if self.bagging_freq < 1:
            raise UsageError("bagging_freq must be >= 1")
        if self.scale_pos_weight <= 0:
            raise UsageError("scale_pos_weight must be > 0")
        if self.early_stopping_patience < 0:
            raise UsageError("early_stopping_patience must be >= 0")
        if not 4 <= self.max_bins <= 65535:
            raise UsageError("max_bins must be in [4, 65535]")
        if self.n_estimators < 1:
            raise UsageError("n_estimators must be >= 1")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, payload: dict) -> "TrainConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(payload) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**payload)
        cfg.validate()
        return cfg


def sigmoid(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    e = np.exp(s[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def gradients(
    y: np.ndarray, w: np.ndarray, scores: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives of the weighted logloss at the scores."""
    p = sigmoid(scores)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    return w * (p - y), w * p * (1.0 - p)


def _soft(G, l1):
    return np.sign(G) * np.maximum(np.abs(G) - l1, 0.0)


# ---------------------------------------------------------------------------
# Histogram binning


@dataclass
class Binner:
    """Per-feature bin edges; bin(x) = searchsorted(edges, x, side='left').

    A value lands in bin t iff edges[t-1] < x <= edges[t], so the split
    "bin <= t" is exactly "x <= edges[t]". Zero always has a bin of its
    own: an edge at 0.0 separates it from positive values and an edge at
    max(negatives)/2 separates it from negative values.
    """

    edges: list[np.ndarray]
    n_bins: np.ndarray
    zero_bin: np.ndarray


def _csc_view(X: SparseMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    order = np.argsort(X.col_idx, kind="stable")
    rows = np.repeat(np.arange(X.n_rows, dtype=np.int64), np.diff(X.row_ptr))[order]
    vals = X.values.astype(np.float64)[order]
    col_ptr = np.searchsorted(X.col_idx[order], np.arange(X.n_cols + 1))
    return col_ptr, rows, vals


def fit_bins(X: SparseMatrix, max_bins: int) -> Binner:
    col_ptr, _, vals = _csc_view(X)
    edges: list[np.ndarray] = []
    for j in range(X.n_cols):
        v = vals[col_ptr[j] : col_ptr[j + 1]]
        distinct = np.unique(v)
        if distinct.size == 0:
            ej = np.zeros(0, dtype=np.float64)
        else:
            if distinct.size <= max_bins - 2:
                cuts = (distinct[:-1] + distinct[1:]) / 2.0
            else:
                qs = np.arange(1, max_bins - 2) / (max_bins - 2)
                cuts = np.unique(np.quantile(v, qs))
            extra = []
            if distinct[-1] > 0:
                extra.append(0.0)
            if distinct[0] < 0:
                extra.append(distinct[distinct < 0].max() / 2.0)
            ej = np.unique(np.concatenate([cuts, np.array(extra, dtype=np.float64)]))
        edges.append(ej)
    n_bins = np.array([e.size + 1 for e in edges], dtype=np.int64)
    zero_bin = np.array(
        [np.searchsorted(e, 0.0, side="left") for e in edges], dtype=np.uint16
    )
    return Binner(edges=edges, n_bins=n_bins, zero_bin=zero_bin)


def bin_matrix(X: SparseMatrix, binner: Binner) -> np.ndarray:
    """Dense (n_rows, n_cols) uint16 bin ids; implicit zeros use the zero bin."""
    out = np.empty((X.n_rows, X.n_cols), dtype=np.uint16)
    out[:] = binner.zero_bin
    col_ptr, rows, vals = _csc_view(X)
    for j in range(X.n_cols):
        lo, hi = int(col_ptr[j]), int(col_ptr[j + 1])
        if lo < hi:
            out[rows[lo:hi], j] = np.searchsorted(
                binner.edges[j], vals[lo:hi], side="left"
            ).astype(np.uint16)
    return out


# ---------------------------------------------------------------------------
# Trees


@dataclass
class Tree:
    """Flat node arrays; feature == -1 marks a leaf. Node 0 is the root."""

    feature: np.ndarray  # int32
    split_bin: np.ndarray  # int32, training-time routing; -1 after reload
    threshold: np.ndarray  # float64 bin upper edges
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    value: np.ndarray  # float64, meaningful at leaves
    gain: np.ndarray  # float64, meaningful at internal nodes
    leaf_counts: np.ndarray  # int64 training rows per node

    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes(), dtype=np.int64)
        for i in range(self.n_nodes()):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max()) if self.n_nodes() else 0

    def feature_gain(self, n_features: int) -> np.ndarray:
        internal = self.feature >= 0
        return np.bincount(
            self.feature[internal].astype(np.int64),
            weights=self.gain[internal],
            minlength=n_features,
        )

    def to_json(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
            "count": self.leaf_counts.tolist(),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "Tree":
        try:
            feature = np.array(payload["feature"], dtype=np.int32)
            tree = cls(
                feature=feature,
                split_bin=np.full(feature.shape, -1, dtype=np.int32),
                threshold=np.array(payload["threshold"], dtype=np.float64),
                left=np.array(payload["left"], dtype=np.int32),
                right=np.array(payload["right"], dtype=np.int32),
                value=np.array(payload["value"], dtype=np.float64),
                gain=np.array(payload["gain"], dtype=np.float64),
                leaf_counts=np.array(payload["count"], dtype=np.int64),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"malformed tree record: {e}") from e
        return tree


@dataclass
class _Split:
    gain: float
    feature: int  # global column id
    local: int  # row in the node histogram
    bin: int
    threshold: float
    G_left: float
    H_left: float
    n_left: int


def _find_best_split(
    hist: tuple[np.ndarray, np.ndarray, np.ndarray],
    feat_ids: np.ndarray,
    n_bins: np.ndarray,
    edges: list[np.ndarray],
    G: float,
    H: float,
    config: TrainConfig,
) -> _Split | None:
    """Scan all (feature, bin) candidates; ties keep the first in scan order."""
    hg, hh, hc = hist
    l1, l2 = config.lambda_l1, config.lambda_l2
    GL = np.cumsum(hg, axis=1)
    HL = np.cumsum(hh, axis=1)
    CL = np.cumsum(hc, axis=1)
    GR = G - GL
    HR = H - HL
    CR = CL[:, -1:] - CL
    SP = float(_soft(np.array(G), l1))
    parent_term = SP * SP / (H + l2)
    with np.errstate(divide="ignore", invalid="ignore"):
        SL = _soft(GL, l1)
        SR = _soft(GR, l1)
        gain = 0.5 * (SL * SL / (HL + l2) + SR * SR / (HR + l2) - parent_term)
    n_cand = hg.shape[1]
    bins = np.arange(n_cand)
    valid = (
        (bins[None, :] < (n_bins[feat_ids] - 1)[:, None])
        & (CL >= config.min_child_samples)
        & (CR >= config.min_child_samples)
    )
    gain = np.where(valid, gain, -np.inf)
    flat = int(np.argmax(gain))
    local, b = divmod(flat, n_cand)
    best = float(gain[local, b])
    if not best > 0.0:
        return None
    feat = int(feat_ids[local])
    return _Split(
        gain=best,
        feature=feat,
        local=local,
        bin=b,
        threshold=float(edges[feat][b]),
        G_left=float(GL[local, b]),
        H_left=float(HL[local, b]),
        n_left=int(CL[local, b]),
    )


def _grow_tree(
    Xb: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    rows: np.ndarray,
    feat_ids: np.ndarray,
    binner: Binner,
    config: TrainConfig,
) -> Tree:
    feature = [-1]
    split_bin = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    gain = [0.0]
    counts = [int(rows.shape[0])]

    max_b = int(binner.n_bins[feat_ids].max())
    node_rows: dict[int, np.ndarray] = {0: rows}
    node_depth = {0: 0}
    node_GH = {0: (float(g[rows].sum()), float(h[rows].sum()))}
    hists: dict[int, tuple] = {}
    bests: dict[int, _Split] = {}

    def build_hist(r: np.ndarray) -> tuple:
        hg = np.zeros((feat_ids.shape[0], max_b), dtype=np.float64)
        hh = np.zeros_like(hg)
        hc = np.zeros((feat_ids.shape[0], max_b), dtype=np.int64)
        _kernels.build_histogram(Xb, r, feat_ids, g, h, hg, hh, hc)
        return hg, hh, hc

    def splittable(nid: int) -> bool:
        return (
            node_depth[nid] < config.max_depth
            and node_rows[nid].shape[0] >= 2 * config.min_child_samples
        )

    def consider(nid: int, heap: list) -> None:
        G, H = node_GH[nid]
        sp = _find_best_split(
            hists[nid], feat_ids, binner.n_bins, binner.edges, G, H, config
        )
        if sp is None:
            del hists[nid]
        else:
            bests[nid] = sp
            heapq.heappush(heap, (-sp.gain, nid))

    heap: list[tuple[float, int]] = []
    if splittable(0):
        hists[0] = build_hist(rows)
        consider(0, heap)

    n_leaves = 1
    while heap and n_leaves < config.num_leaves:
        _, nid = heapq.heappop(heap)
        sp = bests.pop(nid)
        lrows, rrows = _kernels.partition_rows(
            Xb, node_rows.pop(nid), sp.feature, sp.bin
        )
        lid = len(feature)
        rid = lid + 1
        for _ in range(2):
            feature.append(-1)
            split_bin.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            gain.append(0.0)
            counts.append(0)
        feature[nid] = sp.feature
        split_bin[nid] = sp.bin
        threshold[nid] = sp.threshold
        left[nid] = lid
        right[nid] = rid
        gain[nid] = sp.gain
        counts[lid] = int(lrows.shape[0])
        counts[rid] = int(rrows.shape[0])
        node_rows[lid] = lrows
        node_rows[rid] = rrows
        node_depth[lid] = node_depth[rid] = node_depth[nid] + 1
        G, H = node_GH.pop(nid)
        node_GH[lid] = (sp.G_left, sp.H_left)
        node_GH[rid] = (G - sp.G_left, H - sp.H_left)
        n_leaves += 1

        parent_hist = hists.pop(nid)
        want_l, want_r = splittable(lid), splittable(rid)
        if want_l or want_r:
            small, big = (lid, rid) if lrows.shape[0] <= rrows.shape[0] else (rid, lid)
            small_hist = build_hist(node_rows[small])
            if want_l if small == lid else want_r:
                hists[small] = small_hist
                consider(small, heap)
            if want_r if small == lid else want_l:
                hists[big] = (
                    parent_hist[0] - small_hist[0],
                    parent_hist[1] - small_hist[1],
                    parent_hist[2] - small_hist[2],
                )
                consider(big, heap)

    n_nodes = len(feature)
    value = np.zeros(n_nodes, dtype=np.float64)
    l2 = config.lambda_l2
    for nid, (G, H) in node_GH.items():
        value[nid] = -float(_soft(np.array(G), config.lambda_l1)) / (H + l2)
    return Tree(
        feature=np.array(feature, dtype=np.int32),
        split_bin=np.array(split_bin, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        value=value,
        gain=np.array(gain, dtype=np.float64),
        leaf_counts=np.array(counts, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# Model


@dataclass
class GbdtModel:
    trees: list[Tree]
    learning_rate: float
    base_score: float
    best_iteration: int
    feature_gain: np.ndarray
    n_features: int
    config: TrainConfig = field(default_factory=TrainConfig)

    def flattened(self) -> tuple[np.ndarray, ...]:
        """Concatenate tree node arrays; returns (roots, feature, threshold,
        left, right, value) with child indices rebased."""
        if not self.trees:
            z32 = np.zeros(0, dtype=np.int32)
            return (
                np.zeros(0, dtype=np.int64),
                z32,
                np.zeros(0, dtype=np.float64),
                z32,
                z32,
                np.zeros(0, dtype=np.float64),
            )
        sizes = [t.n_nodes() for t in self.trees]
        roots = np.zeros(len(sizes), dtype=np.int64)
        np.cumsum(sizes[:-1], out=roots[1:])
        feature = np.concatenate([t.feature for t in self.trees])
        threshold = np.concatenate([t.threshold for t in self.trees])
        value = np.concatenate([t.value for t in self.trees])
        left = np.concatenate(
            [t.left + (t.left >= 0) * r for t, r in zip(self.trees, roots)]
        ).astype(np.int32)
        right = np.concatenate(
            [t.right + (t.right >= 0) * r for t, r in zip(self.trees, roots)]
        ).astype(np.int32)
        return roots, feature, threshold, left, right, value


def _weighted_base_score(y: np.ndarray, w: np.ndarray) -> float:
    p0 = float(w[y == 1].sum() / w.sum())
    return math.log(p0 / (1.0 - p0))


def train(
    X: SparseMatrix,
    y,
    w_pos: float,
    config: TrainConfig,
    valid: tuple[SparseMatrix, np.ndarray] | None = None,
) -> GbdtModel:
    """Boost config.n_estimators rounds (early-stopped on validation AUC).

    The positive-class weight is the explicit ``w_pos`` argument; the value
    carried in ``config.scale_pos_weight`` is only a default for callers.
    When ``valid`` is given, trees past the best validation AUC are dropped
    and ``best_iteration`` equals the kept tree count.
    """
    config.validate()
    y = np.asarray(y, dtype=np.int64)
    if X.n_rows != y.shape[0] or y.shape[0] < 2:
        raise TrainingError("X rows and y length must match and be >= 2")
    if not (np.any(y == 0) and np.any(y == 1)):
        raise TrainingError("training labels must contain both classes")
    if np.isnan(X.values).any():
        raise DataError("feature matrix contains NaN values")
    if w_pos <= 0:
        raise UsageError("w_pos must be > 0")

    n = X.n_rows
    w = np.where(y == 1, float(w_pos), 1.0)
    binner = fit_bins(X, config.max_bins)
    Xb = bin_matrix(X, binner)

    has_valid = valid is not None
    if has_valid:
        Xv, yv = valid
        yv = np.asarray(yv, dtype=np.int64)
        if Xv.n_cols != X.n_cols:
            raise DataError("validation matrix width differs from training matrix")
        if np.isnan(Xv.values).any():
            raise DataError("validation matrix contains NaN values")
        Vb = bin_matrix(Xv, binner)

    base = _weighted_base_score(y, w)
    scores = np.full(n, base, dtype=np.float64)
    if has_valid:
        vscores = np.full(yv.shape[0], base, dtype=np.float64)

    rng = np.random.default_rng(config.seed)
    n_bag = max(1, int(config.bagging_fraction * n))
    n_feat = max(1, int(config.feature_fraction * X.n_cols))
    all_feats = np.arange(X.n_cols, dtype=np.int64)
    bag = np.arange(n, dtype=np.int64)

    trees: list[Tree] = []
    eta = config.learning_rate
    best_auc = -np.inf
    best_t = -1
    for t in range(config.n_estimators):
        if config.bagging_fraction < 1.0 and t % config.bagging_freq == 0:
            bag = np.sort(rng.choice(n, size=n_bag, replace=False))
        if config.feature_fraction < 1.0:
            feat_ids = np.sort(rng.choice(X.n_cols, size=n_feat, replace=False))
        else:
            feat_ids = all_feats
        g, h = gradients(y, w, scores)
        tree = _grow_tree(Xb, g, h, bag, feat_ids, binner, config)
        trees.append(tree)
        margins = np.zeros(n, dtype=np.float64)
        _kernels.add_tree_margin_binned(
            Xb, tree.feature, tree.split_bin, tree.left, tree.right, tree.value, margins
        )
        scores += eta * margins
        if has_valid:
            vmargins = np.zeros(vscores.shape[0], dtype=np.float64)
            _kernels.add_tree_margin_binned(
                Vb, tree.feature, tree.split_bin, tree.left, tree.right, tree.value,
                vmargins,
            )
            vscores += eta * vmargins
            auc = roc_auc(yv, vscores)
            if auc > best_auc:
                best_auc = auc
                best_t = t
            elif t - best_t >= config.early_stopping_patience:
                break

    best_iteration = (best_t + 1) if has_valid else len(trees)
    trees = trees[:best_iteration]
    feature_gain = np.zeros(X.n_cols, dtype=np.float64)
    for tree in trees:
        feature_gain += tree.feature_gain(X.n_cols)
    return GbdtModel(
        trees=trees,
        learning_rate=eta,
        base_score=base,
        best_iteration=best_iteration,
        feature_gain=feature_gain,
        n_features=X.n_cols,
        config=replace(config),
    )


def predict_proba(model: GbdtModel, X: SparseMatrix, block_rows: int = 1024) -> np.ndarray:
    """sigmoid(base_score + learning_rate * sum of kept-tree outputs)."""
    if X.n_cols != model.n_features:
        raise DataError(
            f"matrix has {X.n_cols} columns, model expects {model.n_features}"
        )
    roots, feature, threshold, left, right, value = model.flattened()
    margins = np.zeros(X.n_rows, dtype=np.float64)
    if roots.size:
        for start in range(0, X.n_rows, block_rows):
            stop = min(start + block_rows, X.n_rows)
            block = X.dense_block(start, stop)
            out = np.zeros(stop - start, dtype=np.float64)
            _kernels.sum_tree_margins_dense(
                block, roots, feature, threshold, left, right, value, out
            )
            margins[start:stop] = out
    return sigmoid(model.base_score + model.learning_rate * margins)


def feature_importance(model: GbdtModel) -> np.ndarray:
    """Total split gain per column over the kept trees."""
    return model.feature_gain.copy()


def save_model(model: GbdtModel, path: str | Path) -> None:
    payload = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "config": model.config.to_json(),
        "n_features": model.n_features,
        "learning_rate": model.learning_rate,
        "base_score": model.base_score,
        "best_iteration": model.best_iteration,
        "trees": [t.to_json() for t in model.trees],
    }
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> GbdtModel:
    try:
        payload = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: not a valid model file ({e.msg})") from e
    if not isinstance(payload, dict) or "schema_version" not in payload:
        raise DataError(f"{path}: missing schema_version")
    if payload["schema_version"] != MODEL_SCHEMA_VERSION:
        raise DataError(
            f"{path}: model schema version {payload['schema_version']} "
            f"is incompatible (expected {MODEL_SCHEMA_VERSION})"
        )
    try:
        trees = [Tree.from_json(t) for t in payload["trees"]]
        n_features = int(payload["n_features"])
        model = GbdtModel(
            trees=trees,
            learning_rate=float(payload["learning_rate"]),
            base_score=float(payload["base_score"]),
            best_iteration=int(payload["best_iteration"]),
            feature_gain=np.zeros(n_features, dtype=np.float64),
            n_features=n_features,
            config=TrainConfig.from_json(payload["config"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"{path}: malformed model file ({e})") from e
    gain = np.zeros(n_features, dtype=np.float64)
    for tree in model.trees:
        gain += tree.feature_gain(n_features)
    model.feature_gain = gain
    return model
