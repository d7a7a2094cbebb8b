"""Synthetic mixed-type tables with planted cluster structure.

Each blob has shifted numeric means with a per-row noise scale that grades
from a tight core to a sparse shell; shell rows only join the mutual-kNN
graph at larger K, which gives the K-selection score a sharp isolate cliff
and keeps blobs whole at the K it picks. Categorical features carry a
dominant level per blob, and the target rate is centered on a per-blob
level and correlated with the numeric features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import FeatureSchema, SchemaEntry, Table
from .rng import substream


@dataclass(frozen=True)
class BlobSpec:
    sizes: tuple[int, ...] = (20, 20, 20)
    n_numeric: int = 8
    n_categorical: int = 2
    n_levels: int = 3
    shift: float = 15.0  # separation between adjacent blob means
    noise: float = 1.0  # base noise scale
    noise_core: float = 0.15  # per-row scale at the blob core ...
    noise_shell: float = 3.0  # ... grading up to the blob shell
    alignment: float = 0.95  # probability a categorical cell equals the blob level
    target_levels: tuple[float, ...] = (60.0, 20.0, 5.0)
    target_noise: float = 1.0
    region_alignment: float = 0.8

    def __post_init__(self):
        if len(self.sizes) < 1 or any(s < 1 for s in self.sizes):
            raise ValueError("blob sizes must be positive")
        if len(self.target_levels) != len(self.sizes):
            raise ValueError("need one target level per blob")
        if not 0.0 <= self.alignment <= 1.0:
            raise ValueError("alignment must be in [0, 1]")
        if not 0 < self.noise_core <= self.noise_shell:
            raise ValueError("need 0 < noise_core <= noise_shell")


def synthetic_schema(spec: BlobSpec) -> FeatureSchema:
    entries = [
        SchemaEntry(name="unit_id", kind="categorical", role="id"),
        SchemaEntry(name="population", kind="numeric", role="population"),
        SchemaEntry(name="adoption_count", kind="numeric", role="target"),
        SchemaEntry(name="region", kind="categorical", role="metadata"),
    ]
    for f in range(spec.n_numeric):
        entries.append(SchemaEntry(name=f"num_{f}", kind="numeric", role="feature"))
    for f in range(spec.n_categorical):
        entries.append(SchemaEntry(name=f"cat_{f}", kind="categorical", role="feature"))
    return FeatureSchema(entries)


def generate_synthetic(spec: BlobSpec, seed: int) -> tuple[Table, np.ndarray, FeatureSchema]:
    """Return (table, planted blob labels, matching schema)."""
    rng = substream(seed, "synth")
    n = sum(spec.sizes)
    blob_of = np.concatenate([np.full(size, b, dtype=int) for b, size in enumerate(spec.sizes)])
    row_scale = spec.noise * np.concatenate(
        [np.linspace(spec.noise_core, spec.noise_shell, size) for size in spec.sizes]
    )

    numeric = np.empty((n, spec.n_numeric))
    for f in range(spec.n_numeric):
        numeric[:, f] = spec.shift * blob_of + row_scale * rng.normal(0.0, 1.0, size=n)

    levels = [f"lv{j}" for j in range(spec.n_levels)]
    categorical = np.empty((n, spec.n_categorical), dtype=object)
    for f in range(spec.n_categorical):
        for i in range(n):
            home = levels[blob_of[i] % spec.n_levels]
            if rng.random() < spec.alignment:
                categorical[i, f] = home
            else:
                others = [lv for lv in levels if lv != home]
                categorical[i, f] = others[rng.integers(0, len(others))]

    regions = [f"R{j}" for j in range(max(len(spec.sizes), 3))]
    region = np.empty(n, dtype=object)
    for i in range(n):
        if rng.random() < spec.region_alignment:
            region[i] = regions[blob_of[i] % len(regions)]
        else:
            region[i] = regions[rng.integers(0, len(regions))]

    # rate centered on the blob level, nudged by the numeric deviations
    base = np.asarray(spec.target_levels, dtype=float)[blob_of]
    deviation = numeric - spec.shift * blob_of[:, None]
    nudge = 0.5 * deviation.mean(axis=1)
    rate = np.maximum(base + nudge + rng.normal(0.0, spec.target_noise, size=n), 0.0)
    population = rng.integers(20_000, 100_000, size=n).astype(float)
    count = np.round(rate * population / 10_000.0)

    columns: dict[str, np.ndarray] = {
        "population": population,
        "adoption_count": count,
        "region": region,
    }
    for f in range(spec.n_numeric):
        columns[f"num_{f}"] = numeric[:, f]
    for f in range(spec.n_categorical):
        columns[f"cat_{f}"] = categorical[:, f]

    ids = [f"U{i:04d}" for i in range(n)]
    table = Table(ids=ids, columns=columns)
    return table, blob_of, synthetic_schema(spec)
