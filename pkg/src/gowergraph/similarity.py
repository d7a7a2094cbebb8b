"""Weighted Gower dissimilarity over mixed features and its similarity dual.

The pairwise dissimilarity averages, over features weighted by w_f,
range-normalized absolute differences for numerics and mismatch indicators
for categoricals. The denominator is always the full weight sum: a numeric
feature with zero range contributes nothing to the numerator but its weight
still counts.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .dataset import FeatureSchema, ScaledTable, Table
from .errors import ZeroTotalWeight
from .weights import WeightVector


def feature_ranges(table: Table, schema: FeatureSchema) -> dict[str, float]:
    """Per numeric feature: max - min over the table, frozen once."""
    return {
        e.name: float(table.column(e.name).max() - table.column(e.name).min())
        for e in schema.numeric_features
    }


def _weight_map(weights: WeightVector | Mapping[str, float]) -> Mapping[str, float]:
    return weights.weights if isinstance(weights, WeightVector) else weights


def gower_pair(
    row_i: Mapping[str, object],
    row_j: Mapping[str, object],
    schema: FeatureSchema,
    weights: WeightVector | Mapping[str, float],
    ranges: Mapping[str, float],
) -> float:
    w = _weight_map(weights)
    total = sum(w[e.name] for e in schema.features)
    if total <= 0:
        raise ZeroTotalWeight("feature weights sum to zero")
    acc = 0.0
    for e in schema.numeric_features:
        r = ranges[e.name]
        if r > 0:
            acc += w[e.name] * abs(float(row_i[e.name]) - float(row_j[e.name])) / r
    for e in schema.categorical_features:
        if row_i[e.name] != row_j[e.name]:
            acc += w[e.name]
    return acc / total


def gower_matrix(
    table: ScaledTable | Table,
    schema: FeatureSchema,
    weights: WeightVector | Mapping[str, float],
) -> np.ndarray:
    """Dense symmetric dissimilarity matrix in [0, 1] with zero diagonal."""
    base = table.base if isinstance(table, ScaledTable) else table
    n = base.n_rows
    if n < 2:
        raise ValueError("need at least two rows")
    w = _weight_map(weights)
    total = sum(w[e.name] for e in schema.features)
    if total <= 0:
        raise ZeroTotalWeight("feature weights sum to zero")
    ranges = feature_ranges(base, schema)
    acc = np.zeros((n, n))
    for e in schema.numeric_features:
        r = ranges[e.name]
        if r > 0 and w[e.name] > 0:
            col = base.column(e.name)
            acc += (w[e.name] / r) * np.abs(col[:, None] - col[None, :])
    for e in schema.categorical_features:
        if w[e.name] > 0:
            col = base.column(e.name)
            codes = np.unique(col.astype(str), return_inverse=True)[1]
            acc += w[e.name] * (codes[:, None] != codes[None, :])
    D = acc / total
    np.fill_diagonal(D, 0.0)
    return D


def to_similarity(D: np.ndarray) -> np.ndarray:
    """S = 1 - D off the diagonal; the diagonal is forced to 0 (no self-loops)."""
    S = 1.0 - np.asarray(D, dtype=float)
    np.fill_diagonal(S, 0.0)
    return S
