"""Binary CART decision trees and a random forest built on them.

Everything here is deterministic: one integer seed fixes the per-tree RNGs
(feature subsampling, bootstrap draws), so the same data and seed always
produce the same trees, byte for byte after serialization.

Split selection maximizes Gini decrease. Candidate thresholds are the
midpoints between consecutive distinct sorted values of a feature; ties are
broken by the lowest feature index, then the lowest threshold. The
comparison is carried out in exact integer arithmetic (the weighted child
impurity of a split is a ratio of integers), so mathematically tied splits
are recognized as tied regardless of floating-point rounding.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .seeds import derive_rng, derive_seed

MODEL_FORMAT = "facetouch-forest"
MODEL_FORMAT_VERSION = 1

MAX_FEATURES_RULES = ("log2", "sqrt", "all")

# Canonical field order for search-space enumeration (alphabetical).
HYPERPARAM_FIELDS = (
    "bootstrap",
    "max_depth",
    "max_features",
    "min_samples_leaf",
    "min_samples_split",
    "n_estimators",
)

DEFAULT_SEARCH_SPACE: Dict[str, list] = {
    "n_estimators": list(range(50, 501, 50)),
    "max_depth": list(range(50, 501, 50)),
    "max_features": ["log2", "sqrt"],
    "min_samples_leaf": [1, 2, 3, 4],
    "min_samples_split": [2, 3, 4, 5],
    "bootstrap": [True, False],
}


@dataclass(frozen=True)
class Hyperparams:
    n_estimators: int
    max_depth: int
    max_features: str = "log2"
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    bootstrap: bool = False

    def __post_init__(self) -> None:
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.max_features not in MAX_FEATURES_RULES:
            raise ValueError(f"max_features must be one of {MAX_FEATURES_RULES}")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")

    def mtry(self, n_features: int) -> int:
        """Candidate features per split under the max_features rule."""
        if self.max_features == "log2":
            return max(1, int(math.floor(math.log2(n_features))))
        if self.max_features == "sqrt":
            return max(1, int(math.floor(math.sqrt(n_features))))
        return n_features

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        unknown = set(d) - set(HYPERPARAM_FIELDS)
        if unknown:
            raise ValueError(f"unknown hyperparameter fields: {sorted(unknown)}")
        return cls(
            n_estimators=int(d["n_estimators"]),
            max_depth=int(d["max_depth"]),
            max_features=str(d["max_features"]),
            min_samples_leaf=int(d["min_samples_leaf"]),
            min_samples_split=int(d["min_samples_split"]),
            bootstrap=_parse_bool(d["bootstrap"]),
        )


def _parse_bool(v) -> bool:
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, str):
        if v.lower() in ("true", "1"):
            return True
        if v.lower() in ("false", "0"):
            return False
    raise ValueError(f"expected a boolean, got {v!r}")


def gini(counts: Sequence[int]) -> float:
    """Gini impurity 1 - sum(p_i^2) of a class-count vector."""
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts):
        raise ValueError("class counts must be non-negative")
    total = sum(counts)
    if total == 0:
        raise ValueError("gini of an empty node is undefined")
    return 1.0 - sum((c / total) ** 2 for c in counts)


def _best_split(
    xc: np.ndarray, ypos: np.ndarray, min_leaf: int
) -> Optional[Tuple[int, float]]:
    """Best (column, threshold) over candidate columns, or None.

    Maximizes Gini decrease, which for fixed parent equals maximizing
    S = (lp^2 + lneg^2)/ln + (rp^2 + rneg^2)/rn, an integer ratio. Float
    scores shortlist the winners; exact integer cross-multiplication settles
    them, tie-breaking by lowest column then lowest threshold.
    """
    n, m = xc.shape
    order = np.argsort(xc, axis=0, kind="stable")
    xs = np.take_along_axis(xc, order, axis=0)
    ps = np.cumsum(ypos[order], axis=0)

    total_pos = int(ps[-1, 0])
    ln = np.arange(1, n, dtype=np.int64)[:, None]
    rn = n - ln
    lp = ps[:-1]
    rp = total_pos - lp
    lneg = ln - lp
    rneg = rn - rp

    valid = (xs[1:] != xs[:-1]) & (ln >= min_leaf) & (rn >= min_leaf)
    if not valid.any():
        return None

    num = (lp * lp + lneg * lneg) * rn + (rp * rp + rneg * rneg) * ln
    den = ln * rn
    score = np.where(valid, num / den, -np.inf)
    best = score.max()
    # Exact ties produce identical doubles (correctly rounded division of
    # equal rationals); the small ulp margin only guards huge node sizes.
    shortlist = np.argwhere(score >= best - 4.0 * np.spacing(best))

    best_num = best_den = None
    best_col = -1
    best_thr = 0.0
    for i, c in shortlist:
        if not valid[i, c]:
            continue
        cand_num, cand_den = int(num[i, c]), int(den[i, 0])
        thr = (xs[i, c] + xs[i + 1, c]) / 2.0
        if best_num is None:
            better = True
        else:
            lhs = cand_num * best_den
            rhs = best_num * cand_den
            if lhs != rhs:
                better = lhs > rhs
            else:
                better = (c, thr) < (best_col, best_thr)
        if better:
            best_num, best_den = cand_num, cand_den
            best_col, best_thr = int(c), thr
    return best_col, best_thr


class DecisionTree:
    """One CART tree stored as flat preorder arrays.

    Internal nodes carry (feature, threshold, left, right); `feature` is -1
    at leaves, whose vote lives in `label`. Every node keeps its training
    class counts (n_neg, n_pos).
    """

    __slots__ = ("feature", "threshold", "left", "right", "n_neg", "n_pos", "label", "_lists")

    def __init__(self, feature, threshold, left, right, n_neg, n_pos, label):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.n_neg = np.asarray(n_neg, dtype=np.int64)
        self.n_pos = np.asarray(n_pos, dtype=np.int64)
        self.label = np.asarray(label, dtype=np.int8)
        self._lists = None

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, x: np.ndarray) -> int:
        if self._lists is None:
            self._lists = (
                self.feature.tolist(),
                self.threshold.tolist(),
                self.left.tolist(),
                self.right.tolist(),
                self.label.tolist(),
            )
        feat, thr, left, right, label = self._lists
        xs = x.tolist()
        i = 0
        while feat[i] >= 0:
            i = left[i] if xs[feat[i]] <= thr[i] else right[i]
        return label[i]

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        k = len(x)
        idx = np.zeros(k, dtype=np.int32)
        rows = np.arange(k)
        while True:
            f = self.feature[idx]
            active = f >= 0
            if not active.any():
                break
            vals = x[rows, np.where(active, f, 0)]
            go_left = vals <= self.threshold[idx]
            nxt = np.where(go_left, self.left[idx], self.right[idx])
            idx = np.where(active, nxt, idx)
        return self.label[idx].astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "n_neg": self.n_neg.tolist(),
            "n_pos": self.n_pos.tolist(),
            "label": self.label.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(
            d["feature"], d["threshold"], d["left"], d["right"],
            d["n_neg"], d["n_pos"], d["label"],
        )


def _grow_tree(
    x: np.ndarray, y: np.ndarray, hp: Hyperparams, rng: np.random.Generator
) -> DecisionTree:
    n, n_features = x.shape
    mtry = hp.mtry(n_features)
    all_feats = np.arange(n_features)

    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    n_neg: List[int] = []
    n_pos: List[int] = []
    label: List[int] = []

    # Iterative preorder growth (left subtree before right) so the RNG is
    # consumed in a fixed order and deep trees cannot hit recursion limits.
    root_rows = np.arange(n, dtype=np.int64)
    stack: List[Tuple[np.ndarray, int, int, bool]] = [(root_rows, 0, -1, False)]
    while stack:
        rows, depth, parent, is_left = stack.pop()
        yn = y[rows]
        pos = int((yn == 1).sum())
        neg = len(rows) - pos

        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        n_neg.append(neg)
        n_pos.append(pos)
        label.append(1 if pos >= neg else -1)
        if parent >= 0:
            if is_left:
                left[parent] = node
            else:
                right[parent] = node

        if depth >= hp.max_depth or len(rows) < hp.min_samples_split or pos == 0 or neg == 0:
            continue
        if mtry < n_features:
            feats = np.sort(rng.choice(n_features, size=mtry, replace=False))
        else:
            feats = all_feats
        found = _best_split(
            x[np.ix_(rows, feats)], (yn == 1).astype(np.int64), hp.min_samples_leaf
        )
        if found is None:
            continue
        col, thr = found
        f = int(feats[col])
        mask = x[rows, f] <= thr
        feature[node] = f
        threshold[node] = thr
        label[node] = 0
        # Push right first so the left child is processed (and numbered) first.
        stack.append((rows[~mask], depth + 1, node, False))
        stack.append((rows[mask], depth + 1, node, True))

    return DecisionTree(feature, threshold, left, right, n_neg, n_pos, label)


class RandomForest:
    """Majority-vote ensemble of CART trees over +1/-1 labels."""

    def __init__(self, trees: List[DecisionTree], hyperparams: Hyperparams,
                 seed: int, n_features: int, feature_order_hash: str):
        self.trees = trees
        self.hyperparams = hyperparams
        self.seed = seed
        self.n_features = n_features
        self.feature_order_hash = feature_order_hash

    def predict(self, x: np.ndarray) -> int:
        x = self._check_input(np.asarray(x, dtype=np.float64), single=True)
        votes = sum(t.predict(x) for t in self.trees)
        return 1 if votes >= 0 else -1

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(np.asarray(x, dtype=np.float64), single=False)
        votes = np.zeros(len(x), dtype=np.int64)
        for t in self.trees:
            votes += t.predict_batch(x)
        return np.where(votes >= 0, 1, -1).astype(np.int64)

    def _check_input(self, x: np.ndarray, single: bool) -> np.ndarray:
        expected_ndim = 1 if single else 2
        if x.ndim != expected_ndim or x.shape[-1] != self.n_features:
            raise ValueError(
                f"expected {'a vector' if single else 'a matrix'} with "
                f"{self.n_features} features, got shape {x.shape}"
            )
        if not np.isfinite(x).all():
            raise ValueError("feature values must be finite")
        return x


def fit(
    x: np.ndarray,
    y: np.ndarray,
    hp: Hyperparams,
    seed: int,
    feature_order_hash: str = "",
) -> RandomForest:
    """Fit a forest. With bootstrap=False every tree sees the full dataset,
    so randomness comes only from per-split feature subsampling."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2:
        raise ValueError(f"x must be 2-D, got shape {x.shape}")
    if len(x) != len(y):
        raise ValueError(f"x has {len(x)} rows but y has {len(y)} labels")
    if not np.isfinite(x).all():
        raise ValueError("training features must be finite")
    if not np.isin(y, (-1, 1)).all():
        raise ValueError("labels must be +1 or -1")
    if len(x) < hp.min_samples_split:
        raise ValueError("fewer samples than min_samples_split")
    if (y == 1).all() or (y == -1).all():
        raise ValueError("training data must contain both classes")

    n = len(x)
    trees = []
    for i in range(hp.n_estimators):
        rng = derive_rng(seed, i)
        if hp.bootstrap:
            rows = rng.integers(0, n, size=n)
            trees.append(_grow_tree(x[rows], y[rows], hp, rng))
        else:
            trees.append(_grow_tree(x, y, hp, rng))
    return RandomForest(trees, hp, seed, x.shape[1], feature_order_hash)


def save_model(model: RandomForest, path) -> None:
    """Write a forest as self-describing JSON; identical fits give identical bytes."""
    doc = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "hyperparams": model.hyperparams.to_dict(),
        "seed": model.seed,
        "n_features": model.n_features,
        "feature_order_hash": model.feature_order_hash,
        "trees": [t.to_dict() for t in model.trees],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path, expect_feature_order_hash: Optional[str] = None) -> RandomForest:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a forest model file")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format version {doc.get('format_version')}")
    if expect_feature_order_hash is not None and doc["feature_order_hash"] != expect_feature_order_hash:
        raise ValueError(f"{path}: model was built against a different feature order")
    return RandomForest(
        trees=[DecisionTree.from_dict(t) for t in doc["trees"]],
        hyperparams=Hyperparams.from_dict(doc["hyperparams"]),
        seed=int(doc["seed"]),
        n_features=int(doc["n_features"]),
        feature_order_hash=doc["feature_order_hash"],
    )


def f1_positive(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """F1 of the +1 class; a zero-denominator precision or recall counts as 0."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(((y_true == 1) & (y_pred == 1)).sum())
    fp = int(((y_true == -1) & (y_pred == 1)).sum())
    fn = int(((y_true == 1) & (y_pred == -1)).sum())
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class CVResult:
    fold_f1: Tuple[float, ...]
    mean_f1: float


def cross_validate(
    x: np.ndarray, y: np.ndarray, hp: Hyperparams, seed: int, k: int = 10
) -> CVResult:
    """Stratified k-fold cross-validation, scored by positive-class F1.

    Fold membership is shuffled by the seed; each class must have at least
    k members.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if k < 2:
        raise ValueError("k must be >= 2")
    pos = np.nonzero(y == 1)[0]
    neg = np.nonzero(y == -1)[0]
    if len(pos) < k or len(neg) < k:
        raise ValueError(f"each class needs at least {k} samples for {k}-fold CV")
    rng = derive_rng(seed, 0)
    rng.shuffle(pos)
    rng.shuffle(neg)
    pos_folds = np.array_split(pos, k)
    neg_folds = np.array_split(neg, k)

    scores = []
    for i in range(k):
        test = np.concatenate([pos_folds[i], neg_folds[i]])
        train = np.concatenate(
            [pos_folds[j] for j in range(k) if j != i]
            + [neg_folds[j] for j in range(k) if j != i]
        )
        model = fit(x[train], y[train], hp, derive_seed(seed, 1, i))
        scores.append(f1_positive(y[test], model.predict_batch(x[test])))
    return CVResult(fold_f1=tuple(scores), mean_f1=float(np.mean(scores)))


def _space_in_order(space: Dict[str, list]) -> List[Tuple[str, list]]:
    unknown = set(space) - set(HYPERPARAM_FIELDS)
    if unknown:
        raise ValueError(f"unknown search-space fields: {sorted(unknown)}")
    missing = set(HYPERPARAM_FIELDS) - set(space)
    if missing:
        raise ValueError(f"search space missing fields: {sorted(missing)}")
    out = []
    for name in HYPERPARAM_FIELDS:
        values = list(space[name])
        if not values:
            raise ValueError(f"search space field {name} is empty")
        out.append((name, values))
    return out


def _decode_config(index: int, fields: List[Tuple[str, list]]) -> Hyperparams:
    chosen = {}
    for name, values in reversed(fields):
        index, r = divmod(index, len(values))
        chosen[name] = values[r]
    return Hyperparams.from_dict(chosen)


def _rank_key(hp: Hyperparams, score: float):
    # Higher F1 first; ties prefer the cheaper model (fewer trees, then
    # shallower), then any stable order.
    return (
        -score,
        hp.n_estimators,
        hp.max_depth,
        hp.min_samples_leaf,
        hp.min_samples_split,
        hp.max_features,
        hp.bootstrap,
    )


def random_search(
    x: np.ndarray,
    y: np.ndarray,
    space: Dict[str, list],
    seed: int,
    n_iter: int = 60,
    k: int = 10,
) -> List[Tuple[Hyperparams, float]]:
    """Uniform sampling of the space without replacement, ranked by CV F1."""
    fields = _space_in_order(space)
    total = math.prod(len(v) for _, v in fields)
    rng = derive_rng(seed, 2)
    if n_iter >= total:
        indices = np.arange(total)
    elif total <= 10_000_000:
        indices = rng.choice(total, size=n_iter, replace=False)
    else:
        seen = set()
        while len(seen) < n_iter:
            seen.add(int(rng.integers(0, total)))
        indices = np.array(sorted(seen))

    cv_seed = derive_seed(seed, 3)
    results = []
    for ix in indices:
        hp = _decode_config(int(ix), fields)
        results.append((hp, cross_validate(x, y, hp, cv_seed, k=k).mean_f1))
    results.sort(key=lambda r: _rank_key(r[0], r[1]))
    return results


def grid_search(
    x: np.ndarray,
    y: np.ndarray,
    space: Dict[str, list],
    seed: int,
    k: int = 10,
) -> Tuple[Hyperparams, float]:
    """Exhaustive search of the space; returns the best configuration."""
    fields = _space_in_order(space)
    total = math.prod(len(v) for _, v in fields)
    cv_seed = derive_seed(seed, 3)
    best: Optional[Tuple[Hyperparams, float]] = None
    for ix in range(total):
        hp = _decode_config(ix, fields)
        score = cross_validate(x, y, hp, cv_seed, k=k).mean_f1
        if best is None or _rank_key(hp, score) < _rank_key(best[0], best[1]):
            best = (hp, score)
    assert best is not None
    return best


def neighborhood(space: Dict[str, list], center: Hyperparams) -> Dict[str, list]:
    """The +/-1-index neighborhood of a configuration inside a space."""
    fields = _space_in_order(space)
    center_d = center.to_dict()
    out = {}
    for name, values in fields:
        try:
            i = values.index(center_d[name])
        except ValueError:
            raise ValueError(f"center value {center_d[name]!r} not in space field {name}")
        out[name] = values[max(0, i - 1) : i + 2]
    return out


def two_stage_search(
    x: np.ndarray,
    y: np.ndarray,
    space: Optional[Dict[str, list]] = None,
    seed: int = 0,
    n_iter: int = 60,
    k: int = 10,
    skip_random: bool = False,
) -> Tuple[Hyperparams, float]:
    """Random search, then a grid over the winner's +/-1 neighborhood.

    With skip_random=True the grid runs over the full space instead (meant
    for small custom spaces).
    """
    if space is None:
        space = DEFAULT_SEARCH_SPACE
    if skip_random:
        return grid_search(x, y, space, seed, k=k)
    ranked = random_search(x, y, space, seed, n_iter=n_iter, k=k)
    best_hp, _ = ranked[0]
    return grid_search(x, y, neighborhood(space, best_hp), seed, k=k)
