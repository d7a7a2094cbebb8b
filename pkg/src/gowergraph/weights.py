"""Feature-weight derivation via repeated stratified CV and permutation importance.

Trains the configured regressors on quantile-stratified folds, scores each
feature by the validation R-squared drop under column shuffling, averages
the per-model importances, and folds indicator columns back into their
parent categorical to produce nonnegative Gower weights summing to 1.
Also provides VIF and Pearson-correlation diagnostics.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from .dataset import FeatureSchema, ScaledTable, one_hot, quantile_bins
from .errors import FeatureSetMismatch, TooFewRows, ZeroTotalWeight, ZeroVarianceTruth
from .models import ModelConfig, fit_model
from .rng import derive_key, substream

Metrics = namedtuple("Metrics", ["r2", "mae", "rmse"])


@dataclass(frozen=True)
class CVPlan:
    folds: int = 5
    repeats: int = 5
    max_bins: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")

    @property
    def n_splits(self) -> int:
        return self.folds * self.repeats


def make_splits(y: np.ndarray, plan: CVPlan) -> list[tuple[np.ndarray, np.ndarray]]:
    """Repeated stratified K-fold splits over quantile-binned targets.

    Within each repeat the folds partition all rows and each bin's members
    are dealt round-robin, so per-fold bin counts differ by at most one.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < plan.folds:
        raise TooFewRows(f"{n} rows cannot fill {plan.folds} folds")
    bins = quantile_bins(y, plan.max_bins)
    splits = []
    for r in range(plan.repeats):
        rng = substream(plan.seed, "splits", r)
        perm = rng.permutation(n)
        fold_of = np.empty(n, dtype=int)
        dealt = 0
        for b in np.unique(bins):
            members = perm[bins[perm] == b]
            for j, m in enumerate(members):
                fold_of[m] = (dealt + j) % plan.folds
            dealt += members.size
        for f in range(plan.folds):
            val = np.flatnonzero(fold_of == f)
            train = np.flatnonzero(fold_of != f)
            splits.append((train, val))
    return splits


def metrics(y_true: np.ndarray, y_pred: np.ndarray) -> Metrics:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.size == 0 or y_true.shape != y_pred.shape:
        raise ValueError("predictions and truths must be equal-length and nonempty")
    err = y_true - y_pred
    ss_res = float(err @ err)
    centered = y_true - y_true.mean()
    ss_tot = float(centered @ centered)
    if ss_tot == 0.0:
        raise ZeroVarianceTruth("R-squared undefined for constant truths")
    r2 = 1.0 - ss_res / ss_tot
    mae = float(np.abs(err).mean())
    rmse = float(np.sqrt((err * err).mean()))
    return Metrics(r2=r2, mae=mae, rmse=rmse)


@dataclass
class MetricsSummary:
    records: list[Metrics] = field(default_factory=list)

    def mean(self, name: str) -> float:
        return float(np.mean([getattr(m, name) for m in self.records]))

    def std(self, name: str) -> float:
        return float(np.std([getattr(m, name) for m in self.records]))

    def as_dict(self) -> dict:
        return {
            name: {"mean": self.mean(name), "std": self.std(name)}
            for name in ("r2", "mae", "rmse")
        }


def permutation_importance(model, X_val, y_val, repeats: int, seed: int) -> dict[int, tuple[float, float]]:
    """Per-feature validation R-squared drop under column shuffling.

    Returns {column index: (mean drop, std over the shuffles)} for one split.
    """
    X_val = np.asarray(X_val, dtype=float)
    y_val = np.asarray(y_val, dtype=float)
    if X_val.shape[0] == 0:
        raise ValueError("validation set is empty")
    baseline = metrics(y_val, model.predict(X_val)).r2
    rng = substream(seed, "perm")
    out = {}
    for f in range(X_val.shape[1]):
        drops = np.empty(repeats)
        for r in range(repeats):
            perm = rng.permutation(X_val.shape[0])
            shuffled = X_val.copy()
            shuffled[:, f] = X_val[perm, f]
            drops[r] = baseline - metrics(y_val, model.predict(shuffled)).r2
        out[f] = (float(drops.mean()), float(drops.std()))
    return out


@dataclass
class DesignMatrix:
    """Model inputs: scaled numerics plus one-hot indicators per categorical."""

    matrix: np.ndarray
    columns: list[str]
    parent: dict[str, str]  # indicator column -> owning categorical feature


def design_matrix(scaled: ScaledTable, schema: FeatureSchema) -> DesignMatrix:
    blocks = []
    columns: list[str] = []
    parent: dict[str, str] = {}
    for entry in schema.numeric_features:
        blocks.append(scaled.base.column(entry.name)[:, None])
        columns.append(entry.name)
    for entry in schema.categorical_features:
        levels = scaled.onehot_map[entry.name]
        blocks.append(one_hot(scaled.base.column(entry.name), levels))
        for level in levels:
            name = f"{entry.name}_{level}"
            if name in columns:
                raise ValueError(f"design column collision: {name!r}")
            columns.append(name)
            parent[name] = entry.name
    return DesignMatrix(matrix=np.hstack(blocks), columns=columns, parent=parent)


@dataclass
class ImportanceTable:
    """Per-model permutation importances plus their plain cross-model average.

    Both maps are keyed by design-matrix column; indicator columns appear
    individually here and are only folded into their parent categorical when
    the table is turned into Gower weights.
    """

    per_model: dict[str, dict[str, tuple[float, float]]]
    averaged: dict[str, float]


@dataclass
class WeightVector:
    """Nonnegative per-feature Gower weights, normalized to sum 1."""

    weights: dict[str, float]
    provenance: str = "derived"

    def __post_init__(self):
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("weights must be nonnegative")
        if not any(w > 0 for w in self.weights.values()):
            raise ZeroTotalWeight("all weights are zero")


def fold_to_gower_weights(
    averaged: dict[str, float],
    schema: FeatureSchema,
    parent: dict[str, str],
    provenance: str = "derived",
) -> WeightVector:
    """Clamp negatives, sum indicators into their categorical, normalize to 1."""
    weights = {e.name: 0.0 for e in schema.features}
    for column, value in averaged.items():
        target = column if column in weights else parent.get(column)
        if target is None:
            raise FeatureSetMismatch(f"column {column!r} matches no schema feature")
        weights[target] += max(float(value), 0.0)
    total = sum(weights.values())
    if total <= 0:
        raise ZeroTotalWeight("importances sum to zero after clamping")
    return WeightVector(
        weights={name: w / total for name, w in weights.items()},
        provenance=provenance,
    )


def average_importance(table: ImportanceTable, models: list[str], schema: FeatureSchema, parent: dict[str, str]) -> WeightVector:
    """Cross-model mean of per-column importances, folded into Gower weights."""
    if not models:
        raise ValueError("need at least one model to average")
    missing = [m for m in models if m not in table.per_model]
    if missing:
        raise FeatureSetMismatch(f"no importances recorded for models {missing}")
    columns = list(table.per_model[models[0]])
    for m in models[1:]:
        if list(table.per_model[m]) != columns:
            raise FeatureSetMismatch(f"model {m!r} reports a different feature set")
    averaged = {
        c: float(np.mean([table.per_model[m][c][0] for m in models])) for c in columns
    }
    return fold_to_gower_weights(averaged, schema, parent, provenance="derived")


@dataclass
class WeightStageResult:
    importance: ImportanceTable
    metrics: dict[str, MetricsSummary]
    weights: WeightVector
    parent: dict[str, str]
    columns: list[str]


def derive_weights(
    scaled: ScaledTable,
    schema: FeatureSchema,
    plan: CVPlan,
    configs: dict[str, ModelConfig],
    perm_repeats: int = 5,
) -> WeightStageResult:
    """Run the full weight-derivation stage for the configured models."""
    design = design_matrix(scaled, schema)
    X = design.matrix
    y = scaled.base.column(schema.target)
    splits = make_splits(y, plan)

    per_model: dict[str, dict[str, tuple[float, float]]] = {}
    summaries: dict[str, MetricsSummary] = {}
    for name, config in configs.items():
        summary = MetricsSummary()
        split_importances = np.empty((len(splits), len(design.columns)))
        for s, (train, val) in enumerate(splits):
            model = fit_model(config, X[train], y[train], seed=derive_key(plan.seed, "fit", name, s))
            summary.records.append(metrics(y[val], model.predict(X[val])))
            imp = permutation_importance(
                model, X[val], y[val], repeats=perm_repeats, seed=derive_key(plan.seed, "imp", name, s)
            )
            split_importances[s] = [imp[f][0] for f in range(len(design.columns))]
        per_model[name] = {
            c: (float(split_importances[:, j].mean()), float(split_importances[:, j].std()))
            for j, c in enumerate(design.columns)
        }
        summaries[name] = summary

    averaged = {
        c: float(np.mean([per_model[m][c][0] for m in configs])) for c in design.columns
    }
    table = ImportanceTable(per_model=per_model, averaged=averaged)
    weights = average_importance(table, list(configs), schema, design.parent)
    return WeightStageResult(
        importance=table,
        metrics=summaries,
        weights=weights,
        parent=design.parent,
        columns=design.columns,
    )


def vif(X: np.ndarray, names: list[str] | None = None) -> dict[str, float]:
    """Variance inflation factor per column: 1 / (1 - R2) from an OLS fit
    of the column on all others plus an intercept. Perfect collinearity
    (including constant columns) reports +inf.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if p < 2:
        raise ValueError("VIF needs at least two features")
    if n < 2:
        raise ValueError("VIF needs at least two rows")
    if names is None:
        names = [f"x{j}" for j in range(p)]
    out = {}
    for j in range(p):
        target = X[:, j]
        centered = target - target.mean()
        ss_tot = float(centered @ centered)
        if ss_tot <= 0:
            out[names[j]] = float("inf")
            continue
        others = np.delete(X, j, axis=1)
        design = np.hstack([np.ones((n, 1)), others])
        coef, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
        resid = target - design @ coef
        r2 = 1.0 - float(resid @ resid) / ss_tot
        if r2 >= 1.0 - 1e-12:
            out[names[j]] = float("inf")
        else:
            out[names[j]] = 1.0 / (1.0 - r2)
    return out


def correlation_matrix(X: np.ndarray) -> np.ndarray:
    """Pearson correlations between columns, diagonal forced to exactly 1."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("correlation needs at least two rows")
    corr = np.corrcoef(X, rowvar=False)
    corr = np.atleast_2d(corr)
    np.fill_diagonal(corr, 1.0)
    return corr
