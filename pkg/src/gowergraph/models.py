"""Regressors used to derive permutation-importance weights.

All fits are reproducible given (data, config, seed): bootstrap draws and
per-split feature subsets come from named substreams, and split-gain ties
resolve toward the lower feature index, then the lower threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularSystem
from .rng import substream

MODEL_KINDS = ("ridge", "random_forest", "gbrt")

_DEFAULT_PARAMS = {
    "ridge": {"lambda": 1.0},
    "random_forest": {"n_trees": 50, "max_depth": 10, "min_leaf": 2, "feature_fraction": 0.5},
    "gbrt": {"n_stages": 100, "learning_rate": 0.1, "max_depth": 3},
}


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    hyperparameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        params = dict(_DEFAULT_PARAMS[self.kind])
        unknown = set(self.hyperparameters) - set(params)
        if unknown:
            raise ValueError(f"unknown hyperparameters for {self.kind}: {sorted(unknown)}")
        params.update(self.hyperparameters)
        if self.kind == "ridge":
            if not params["lambda"] >= 0:
                raise ValueError("lambda must be >= 0")
        elif self.kind == "random_forest":
            if params["n_trees"] < 1 or params["min_leaf"] < 1 or params["max_depth"] < 0:
                raise ValueError("forest counts must be positive")
            if not 0 < params["feature_fraction"] <= 1:
                raise ValueError("feature_fraction must be in (0, 1]")
        else:
            if params["n_stages"] < 1 or params["max_depth"] < 0:
                raise ValueError("gbrt counts must be positive")
            if not 0 < params["learning_rate"] <= 1:
                raise ValueError("learning_rate must be in (0, 1]")
        object.__setattr__(self, "hyperparameters", params)

    def __getitem__(self, key: str):
        return self.hyperparameters[key]


@dataclass
class RidgeModel:
    coef: np.ndarray
    intercept: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coef + self.intercept


def fit_ridge(X: np.ndarray, y: np.ndarray, lam: float) -> RidgeModel:
    """L2-penalized least squares with an unpenalized intercept.

    Solved as an augmented least-squares system on centered data, which keeps
    the implementation independent of the closed-form normal equations.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be 2-D with one row per target value")
    if X.shape[1] < 1:
        raise ValueError("X needs at least one column")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    n, p = X.shape
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    yc = y - y_mean
    if lam == 0:
        coef, _, rank, _ = np.linalg.lstsq(Xc, yc, rcond=None)
        if rank < p:
            raise SingularSystem("design matrix is rank-deficient with lambda=0")
    else:
        aug = np.vstack([Xc, math.sqrt(lam) * np.eye(p)])
        rhs = np.concatenate([yc, np.zeros(p)])
        coef = np.linalg.lstsq(aug, rhs, rcond=None)[0]
    intercept = y_mean - float(x_mean @ coef)
    return RidgeModel(coef=coef, intercept=intercept)


class DecisionTree:
    """Regression tree splitting on variance reduction.

    Nodes are stored flat: feature[i] == -1 marks a leaf with value[i].
    """

    def __init__(self, max_depth: int, min_leaf: int = 1, feature_fraction: float = 1.0):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.feature_fraction = feature_fraction
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def _candidate_features(self, p: int, rng) -> np.ndarray:
        if self.feature_fraction >= 1.0 or rng is None:
            return np.arange(p)
        m = max(1, int(round(self.feature_fraction * p)))
        return np.sort(rng.choice(p, size=m, replace=False))

    def _best_split(self, X, y, idx, feats):
        """Best (gain, feature, threshold) over candidate features.

        Gain ties keep the earlier candidate: features are scanned in
        ascending index order and thresholds in ascending value order.
        """
        y_node = y[idx]
        n = idx.size
        total = y_node.sum()
        total2 = (y_node * y_node).sum()
        sse_parent = total2 - total * total / n
        best_gain = 0.0
        best = None
        for f in feats:
            x = X[idx, f]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            ys = y_node[order]
            csum = np.cumsum(ys)
            csum2 = np.cumsum(ys * ys)
            k = np.arange(1, n)
            left_sse = csum2[:-1] - csum[:-1] ** 2 / k
            right_cnt = n - k
            right_sum = total - csum[:-1]
            right_sse = (total2 - csum2[:-1]) - right_sum**2 / right_cnt
            gains = sse_parent - (left_sse + right_sse)
            valid = xs[1:] > xs[:-1]
            if self.min_leaf > 1:
                valid &= (k >= self.min_leaf) & (right_cnt >= self.min_leaf)
            if not valid.any():
                continue
            gains = np.where(valid, gains, -np.inf)
            kk = int(np.argmax(gains))  # first max -> lowest threshold
            if gains[kk] > best_gain:
                best_gain = float(gains[kk])
                # gains[kk] is the split after sorted position kk
                best = (int(f), float((xs[kk] + xs[kk + 1]) / 2.0))
        return best_gain, best

    def _build(self, X, y, idx, depth, rng) -> int:
        node = self._new_node()
        y_node = y[idx]
        self.value[node] = float(y_node.mean())
        if depth >= self.max_depth or idx.size < 2 * self.min_leaf or idx.size < 2:
            return node
        feats = self._candidate_features(X.shape[1], rng)
        gain, split = self._best_split(X, y, idx, feats)
        if split is None or gain <= 0.0:
            return node
        f, thr = split
        mask = X[idx, f] <= thr
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self._build(X, y, idx[mask], depth + 1, rng)
        self.right[node] = self._build(X, y, idx[~mask], depth + 1, rng)
        return node

    def fit(self, X: np.ndarray, y: np.ndarray, rng=None) -> "DecisionTree":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self._build(X, y, np.arange(X.shape[0]), 0, rng)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0])
        for i, row in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                if row[self.feature[node]] <= self.threshold[node]:
                    node = self.left[node]
                else:
                    node = self.right[node]
            out[i] = self.value[node]
        return out


@dataclass
class ForestModel:
    trees: list[DecisionTree]

    def predict(self, X: np.ndarray) -> np.ndarray:
        preds = np.stack([tree.predict(X) for tree in self.trees])
        return preds.mean(axis=0)


def fit_forest(X: np.ndarray, y: np.ndarray, config: ModelConfig, seed: int) -> ForestModel:
    """Bagged trees with per-split feature subsampling, one substream per tree."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    trees = []
    for t in range(config["n_trees"]):
        rng = substream(seed, "tree", t)
        sample = rng.integers(0, n, size=n)
        tree = DecisionTree(
            max_depth=config["max_depth"],
            min_leaf=config["min_leaf"],
            feature_fraction=config["feature_fraction"],
        )
        tree.fit(X[sample], y[sample], rng=rng)
        trees.append(tree)
    return ForestModel(trees=trees)


@dataclass
class GbrtModel:
    init: float
    learning_rate: float
    trees: list[DecisionTree]

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.full(np.asarray(X).shape[0], self.init)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out


def fit_gbrt(X: np.ndarray, y: np.ndarray, config: ModelConfig, seed: int) -> GbrtModel:
    """Stagewise trees on residuals from the running prediction."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    init = float(y.mean())
    lr = config["learning_rate"]
    pred = np.full(y.shape, init)
    trees = []
    for _ in range(config["n_stages"]):
        tree = DecisionTree(max_depth=config["max_depth"], min_leaf=1)
        tree.fit(X, y - pred)
        pred += lr * tree.predict(X)
        trees.append(tree)
    return GbrtModel(init=init, learning_rate=lr, trees=trees)


def fit_model(config: ModelConfig, X: np.ndarray, y: np.ndarray, seed: int):
    if config.kind == "ridge":
        return fit_ridge(X, y, config["lambda"])
    if config.kind == "random_forest":
        return fit_forest(X, y, config, seed)
    return fit_gbrt(X, y, config, seed)


def predict(model, X: np.ndarray) -> np.ndarray:
    return model.predict(X)
