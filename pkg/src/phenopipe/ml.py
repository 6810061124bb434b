"""In-repo tabular ML toolkit.

CART decision trees grown with vectorized split search, combined either as
a bootstrap-aggregated forest (majority vote) or a stagewise ensemble fit
to multiclass logistic gradients. Training is seeded and deterministic;
models serialize to versioned JSON and round-trip to identical predictors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError

MODEL_FORMAT = "phenopipe-model-v1"

BAGGED_DEFAULTS = {"n_trees": 100, "max_depth": None, "min_samples_split": 2}
BOOSTED_DEFAULTS = {"n_rounds": 100, "max_depth": 3, "learning_rate": 0.1}

SPLOTCH_LEVELS = ("none", "low", "medium", "high")


class LabelEncoder:
    """Bijection between class strings and indices; classes sorted for determinism."""

    def __init__(self, classes):
        self.classes = tuple(classes)
        self._index = {c: i for i, c in enumerate(self.classes)}
        if len(self._index) != len(self.classes):
            raise ModelError("duplicate classes in encoder")

    @classmethod
    def fit(cls, values) -> "LabelEncoder":
        return cls(sorted(set(values)))

    def encode(self, value: str) -> int:
        try:
            return self._index[value]
        except KeyError:
            raise ModelError(f"unknown class {value!r}") from None

    def decode(self, index: int) -> str:
        if not 0 <= index < len(self.classes):
            raise ModelError(f"class index {index} out of range")
        return self.classes[index]

    def encode_many(self, values) -> np.ndarray:
        return np.array([self.encode(v) for v in values], dtype=np.int64)

    def __eq__(self, other):
        return isinstance(other, LabelEncoder) and self.classes == other.classes


@dataclass
class Dataset:
    """Feature matrix plus one or more integer-coded target columns."""

    features: np.ndarray
    targets: np.ndarray
    feature_names: list[str] = field(default_factory=list)
    target_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.int64)
        if self.features.ndim != 2:
            raise ModelError("features must be a 2-D matrix")
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        if len(self.features) != len(self.targets):
            raise ModelError("features and targets row counts differ")
        if not np.isfinite(self.features).all():
            raise ModelError("features contain NaN or infinite entries")
        if (self.targets < 0).any():
            raise ModelError("negative class index in targets")
        if not self.feature_names:
            self.feature_names = [f"f{i}" for i in range(self.features.shape[1])]
        if not self.target_names:
            self.target_names = [f"t{i}" for i in range(self.targets.shape[1])]

    def __len__(self):
        return len(self.features)

    def take(self, indices) -> "Dataset":
        return Dataset(
            self.features[indices],
            self.targets[indices],
            list(self.feature_names),
            list(self.target_names),
        )


def train_test_split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then partition with |test| = round(test_fraction * N)."""
    n = len(dataset)
    if n < 2:
        raise ModelError("need at least two rows to split")
    if not 0.0 < test_fraction < 1.0:
        raise ModelError("test_fraction must be in (0, 1)")
    n_test = int(round(test_fraction * n))
    if n_test == 0 or n_test == n:
        raise ModelError("split would leave an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.take(perm[n_test:]), dataset.take(perm[:n_test])


class Tree:
    """A binary decision tree stored as flat parallel arrays.

    feature[i] == -1 marks a leaf; value[i] is the leaf score vector
    (class distribution for classification, 1-vector for regression).
    """

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = [None if v is None else np.asarray(v, dtype=np.float64) for v in value]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index for every row of X."""
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            internal = self.feature[node] >= 0
            if not internal.any():
                return node
            idx = np.nonzero(internal)[0]
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        leaves = self.apply(X)
        width = next(len(v) for v in self.value if v is not None)
        out = np.zeros((len(X), width))
        for i, leaf in enumerate(leaves):
            out[i] = self.value[leaf]
        return out

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": [None if v is None else v.tolist() for v in self.value],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"])


class _TreeWriter:
    """Accumulates nodes during recursive growth."""

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list = []

    def add_leaf(self, value) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(np.asarray(value, dtype=np.float64))
        return len(self.feature) - 1

    def add_internal(self, feat: int, thr: float) -> int:
        self.feature.append(feat)
        self.threshold.append(thr)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(None)
        return len(self.feature) - 1

    def build(self) -> Tree:
        return Tree(self.feature, self.threshold, self.left, self.right, self.value)


def _best_split_gini(X, y, n_classes, feat_indices):
    """Lowest weighted-Gini split over the given features; None if no gain."""
    n = len(y)
    best = (math.inf, -1, 0.0)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    for f in feat_indices:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cum = np.cumsum(onehot[order], axis=0)
        boundaries = np.nonzero(xs[1:] != xs[:-1])[0]
        if len(boundaries) == 0:
            continue
        nl = (boundaries + 1).astype(np.float64)
        nr = n - nl
        lc = cum[boundaries]
        rc = cum[-1] - lc
        gini_l = 1.0 - ((lc / nl[:, None]) ** 2).sum(axis=1)
        gini_r = 1.0 - ((rc / nr[:, None]) ** 2).sum(axis=1)
        weighted = (nl * gini_l + nr * gini_r) / n
        i = int(np.argmin(weighted))
        if weighted[i] < best[0] - 1e-12:
            thr = (xs[boundaries[i]] + xs[boundaries[i] + 1]) / 2.0
            best = (float(weighted[i]), int(f), float(thr))
    return None if best[1] < 0 else best


def _grow_classification(X, y, n_classes, rng, max_depth, min_samples_split, max_features):
    writer = _TreeWriter()
    depth_limit = math.inf if max_depth is None else max_depth
    n_features = X.shape[1]

    def leaf_value(yy):
        counts = np.bincount(yy, minlength=n_classes).astype(np.float64)
        return counts / counts.sum()

    def grow(idx, depth):
        yy = y[idx]
        if (
            depth >= depth_limit
            or len(idx) < min_samples_split
            or (yy == yy[0]).all()
        ):
            return writer.add_leaf(leaf_value(yy))
        order = rng.permutation(n_features)
        split = _best_split_gini(X[idx], yy, n_classes, order[:max_features])
        # keep inspecting features until a valid partition exists
        extra = max_features
        while split is None and extra < n_features:
            split = _best_split_gini(X[idx], yy, n_classes, order[extra : extra + 1])
            extra += 1
        if split is None:
            return writer.add_leaf(leaf_value(yy))
        _, f, thr = split
        go_left = X[idx, f] <= thr
        node = writer.add_internal(f, thr)
        writer.left[node] = grow(idx[go_left], depth + 1)
        writer.right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(len(X)), 0)
    return writer.build()


def _best_split_sse(X, r):
    """Lowest summed-squared-error split across all features."""
    n = len(r)
    best = (math.inf, -1, 0.0)
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        rs = r[order]
        csum = np.cumsum(rs)
        csq = np.cumsum(rs * rs)
        boundaries = np.nonzero(xs[1:] != xs[:-1])[0]
        if len(boundaries) == 0:
            continue
        nl = (boundaries + 1).astype(np.float64)
        nr = n - nl
        sl, sr = csum[boundaries], csum[-1] - csum[boundaries]
        ql, qr = csq[boundaries], csq[-1] - csq[boundaries]
        sse = (ql - sl * sl / nl) + (qr - sr * sr / nr)
        i = int(np.argmin(sse))
        if sse[i] < best[0] - 1e-12:
            thr = (xs[boundaries[i]] + xs[boundaries[i] + 1]) / 2.0
            best = (float(sse[i]), int(f), float(thr))
    return None if best[1] < 0 else best


def _grow_regression(X, r, max_depth, leaf_value_fn, min_samples_split=2):
    writer = _TreeWriter()

    def grow(idx, depth):
        rr = r[idx]
        if depth >= max_depth or len(idx) < min_samples_split or np.ptp(rr) < 1e-12:
            return writer.add_leaf([leaf_value_fn(rr)])
        split = _best_split_sse(X[idx], rr)
        if split is None:
            return writer.add_leaf([leaf_value_fn(rr)])
        _, f, thr = split
        go_left = X[idx, f] <= thr
        node = writer.add_internal(f, thr)
        writer.left[node] = grow(idx[go_left], depth + 1)
        writer.right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(len(X)), 0)
    return writer.build()


@dataclass
class EnsembleModel:
    """A trained single-target tree ensemble plus its label encoding."""

    kind: str  # "bagged" | "boosted"
    n_classes: int
    n_features: int
    trees: list[Tree]
    hyperparams: dict
    seed: int
    encoder: LabelEncoder | None = None

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if self.kind == "bagged":
            votes = np.zeros((len(X), self.n_classes))
            for tree in self.trees:
                picked = np.argmax(tree.predict_value(X), axis=1)
                votes[np.arange(len(X)), picked] += 1.0
            return votes / len(self.trees)
        scores = np.zeros((len(X), self.n_classes))
        lr = self.hyperparams["learning_rate"]
        for i, tree in enumerate(self.trees):
            k = i % self.n_classes
            scores[:, k] += lr * tree.predict_value(X)[:, 0]
        return scores

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_scores(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "kind": self.kind,
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "hyperparams": self.hyperparams,
            "seed": self.seed,
            "encoder": None if self.encoder is None else list(self.encoder.classes),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleModel":
        if d.get("format") != MODEL_FORMAT:
            raise ModelError(f"unsupported model format {d.get('format')!r}")
        if d.get("kind") not in ("bagged", "boosted"):
            raise ModelError(f"unsupported ensemble kind {d.get('kind')!r}")
        return cls(
            kind=d["kind"],
            n_classes=int(d["n_classes"]),
            n_features=int(d["n_features"]),
            trees=[Tree.from_dict(t) for t in d["trees"]],
            hyperparams=dict(d["hyperparams"]),
            seed=int(d["seed"]),
            encoder=None if d.get("encoder") is None else LabelEncoder(d["encoder"]),
        )


@dataclass
class MultiOutputModel:
    """One ensemble per target column, trained on a shared feature matrix."""

    targets: list[tuple[str, EnsembleModel]]

    def predict_one(self, x: np.ndarray) -> dict[str, int]:
        return {name: predict(model, x) for name, model in self.targets}

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "kind": "multi_output",
            "targets": [[name, model.to_dict()] for name, model in self.targets],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MultiOutputModel":
        if d.get("format") != MODEL_FORMAT or d.get("kind") != "multi_output":
            raise ModelError("not a multi-output model file")
        return cls([(name, EnsembleModel.from_dict(m)) for name, m in d["targets"]])


def _single_target(dataset: Dataset) -> np.ndarray:
    if dataset.targets.shape[1] != 1:
        raise ModelError("fit expects a single target column; use fit_multi")
    return dataset.targets[:, 0]


def fit(
    dataset: Dataset,
    kind: str,
    hyperparams: dict | None = None,
    seed: int = 0,
    encoder: LabelEncoder | None = None,
) -> EnsembleModel:
    """Train a seeded-deterministic ensemble on a single-target dataset."""
    y = _single_target(dataset)
    X = dataset.features
    if len(X) < 2:
        raise ModelError("need at least two training rows")
    n_classes = len(encoder.classes) if encoder is not None else int(y.max()) + 1
    if len(np.unique(y)) < 2:
        raise ModelError("degenerate target: a single class is present")

    if kind == "bagged":
        hp = dict(BAGGED_DEFAULTS, **(hyperparams or {}))
        seeds = np.random.SeedSequence(seed).spawn(hp["n_trees"])
        trees = []
        for ss in seeds:
            rng = np.random.default_rng(ss)
            sample = rng.integers(0, len(X), len(X))
            max_features = max(1, int(round(math.sqrt(X.shape[1]))))
            trees.append(
                _grow_classification(
                    X[sample],
                    y[sample],
                    n_classes,
                    rng,
                    hp["max_depth"],
                    hp["min_samples_split"],
                    max_features,
                )
            )
        return EnsembleModel("bagged", n_classes, X.shape[1], trees, hp, seed, encoder)

    if kind == "boosted":
        hp = dict(BOOSTED_DEFAULTS, **(hyperparams or {}))
        lr = hp["learning_rate"]
        onehot = np.zeros((len(X), n_classes))
        onehot[np.arange(len(X)), y] = 1.0
        scores = np.zeros((len(X), n_classes))
        trees: list[Tree] = []
        kk = n_classes

        def friedman_leaf(res):
            denom = np.sum(np.abs(res) * (1.0 - np.abs(res)))
            if denom < 1e-12:
                return 0.0
            return float((kk - 1.0) / kk * res.sum() / denom)

        for _ in range(hp["n_rounds"]):
            exp = np.exp(scores - scores.max(axis=1, keepdims=True))
            proba = exp / exp.sum(axis=1, keepdims=True)
            for k in range(n_classes):
                residual = onehot[:, k] - proba[:, k]
                tree = _grow_regression(X, residual, hp["max_depth"], friedman_leaf)
                trees.append(tree)
                scores[:, k] += lr * tree.predict_value(X)[:, 0]
        return EnsembleModel("boosted", n_classes, X.shape[1], trees, hp, seed, encoder)

    raise ModelError(f"unknown ensemble kind {kind!r}")


def fit_multi(
    dataset: Dataset,
    kind: str,
    hyperparams: dict | None = None,
    seed: int = 0,
    encoders: list[LabelEncoder] | None = None,
) -> MultiOutputModel:
    """Train one ensemble per target column on the shared feature matrix."""
    n_targets = dataset.targets.shape[1]
    seeds = np.random.SeedSequence(seed).generate_state(n_targets)
    models = []
    for t in range(n_targets):
        sub = Dataset(
            dataset.features,
            dataset.targets[:, t],
            dataset.feature_names,
            [dataset.target_names[t]],
        )
        enc = encoders[t] if encoders else None
        models.append(
            (dataset.target_names[t], fit(sub, kind, hyperparams, int(seeds[t]), enc))
        )
    return MultiOutputModel(models)


def predict(model: EnsembleModel, features) -> int:
    """Class index for a single feature vector."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1 or len(x) != model.n_features:
        raise ModelError(
            f"feature vector length {x.size} does not match model width {model.n_features}"
        )
    return int(model.predict_batch(x[None, :])[0])


def predict_proba(model: EnsembleModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1 or len(x) != model.n_features:
        raise ModelError("feature vector length does not match model")
    scores = model.predict_scores(x[None, :])[0]
    if model.kind == "boosted":
        exp = np.exp(scores - scores.max())
        return exp / exp.sum()
    return scores


def accuracy_score(truth, predicted, skip_nulls: bool = False) -> float:
    """Fraction of matching pairs; None is null.

    skip_nulls=False counts null predictions as mismatches; skip_nulls=True
    drops pairs whose prediction is null from the denominator.
    """
    if len(truth) != len(predicted):
        raise ModelError("truth and prediction lengths differ")
    pairs = list(zip(truth, predicted))
    if skip_nulls:
        pairs = [(t, p) for t, p in pairs if p is not None]
    if not pairs:
        raise ModelError("empty denominator: no pairs to score")
    matches = sum(1 for t, p in pairs if p is not None and p == t)
    return matches / len(pairs)


def confusion_matrix(truth, predicted, n_classes: int) -> np.ndarray:
    """M[i][j] = count of (truth == i and predicted == j)."""
    if len(truth) != len(predicted):
        raise ModelError("truth and prediction lengths differ")
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(truth, predicted):
        if not (0 <= t < n_classes and 0 <= p < n_classes):
            raise ModelError(f"class index out of range: ({t}, {p})")
        matrix[t, p] += 1
    return matrix


def one_hot(column, categories) -> np.ndarray:
    """Indicator matrix over an explicit, ordered category list."""
    index = {c: i for i, c in enumerate(categories)}
    out = np.zeros((len(column), len(categories)), dtype=np.int64)
    for r, value in enumerate(column):
        if value not in index:
            raise ModelError(f"unknown category {value!r}")
        out[r, index[value]] = 1
    return out


def ordinal_encode(level: str) -> int:
    """Splotch level as its ordered integer rank."""
    try:
        return SPLOTCH_LEVELS.index(level)
    except ValueError:
        raise ModelError(f"unknown splotch level {level!r}") from None


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model))


def dumps_model(model) -> str:
    return json.dumps(model.to_dict(), sort_keys=True, separators=(",", ":"))


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("format") != MODEL_FORMAT:
        raise ModelError(f"unsupported model format {data.get('format')!r}")
    if data.get("kind") == "multi_output":
        return MultiOutputModel.from_dict(data)
    return EnsembleModel.from_dict(data)
