"""End-to-end pipeline: dataset -> weights -> similarity -> network ->
inference -> reports.

Stages communicate through files in the output directory, so each stage is
individually resumable and two runs with the same config and seed produce
byte-identical artifacts at any thread count.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import exports
from .dataset import FeatureSchema, ScaledTable, Table, load_table, prepare
from .errors import ConfigError, MissingUpstream, StageFailure
from .inference import (
    assign_tiers,
    cluster_composition,
    effect_profile,
    pairwise_permanova,
    permanova,
    trend_table,
)
from .models import ModelConfig
from .network import (
    ClusterSet,
    average_degree,
    derive_detection_seed,
    detect_communities,
    finalize,
    isolate_fraction,
    mutual_knn,
    select_k,
)
from .rng import derive_key
from .similarity import gower_matrix, to_similarity
from .weights import CVPlan, correlation_matrix, derive_weights, fold_to_gower_weights, vif
from .version import __version__

log = logging.getLogger(__name__)

STAGES = ("dataset", "weights", "similarity", "network", "inference")

_UPSTREAM = {
    "dataset": (),
    "weights": ("scaled.csv", "scale_params.json"),
    "similarity": ("scaled.csv", "scale_params.json", "weights.json"),
    "network": ("dissimilarity.bin", "dissimilarity.meta.json"),
    "inference": (
        "scaled.csv",
        "scale_params.json",
        "dissimilarity.bin",
        "dissimilarity.meta.json",
        "clusters.csv",
    ),
}


@dataclass
class PipelineConfig:
    input: Path
    schema: Path
    seed: int
    out: Path
    weights_mode: str = "derive"
    weights_models: list[str] = field(default_factory=lambda: ["ridge", "random_forest", "gbrt"])
    weights_import: Path | None = None
    model_params: dict = field(default_factory=dict)
    cv_folds: int = 5
    cv_repeats: int = 5
    cv_max_bins: int = 10
    perm_repeats: int = 5
    k_min: int = 2
    k_max: int = 30
    min_cluster_size: int = 5
    t1: float = 13.0
    t2: float = 27.0
    n_permutations: int = 999
    log_target: bool = False
    strict_missing: bool = True
    bh_adjust: bool = False
    emit_matrix_csv: bool = False
    threads: int = 1
    composition_column: str | None = None

    def validate(self) -> None:
        if not isinstance(self.seed, int):
            raise ConfigError("seed is required and must be an integer")
        if not Path(self.input).exists():
            raise ConfigError(f"input file not found: {self.input}")
        if not Path(self.schema).exists():
            raise ConfigError(f"schema file not found: {self.schema}")
        if self.weights_mode not in ("derive", "import"):
            raise ConfigError(f"unknown weights mode {self.weights_mode!r}")
        if self.weights_mode == "import":
            if self.weights_import is None or not Path(self.weights_import).exists():
                raise ConfigError("weights import path missing or not found")
        if self.k_min > self.k_max:
            raise ConfigError(f"k_min {self.k_min} exceeds k_max {self.k_max}")
        if not self.t1 < self.t2:
            raise ConfigError(f"tier thresholds need t1 < t2, got {self.t1}, {self.t2}")
        if self.n_permutations < 1:
            raise ConfigError("n_permutations must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    def as_dict(self) -> dict:
        raw = asdict(self)
        for key in ("input", "schema", "out", "weights_import"):
            if raw[key] is not None:
                raw[key] = str(raw[key])
        return raw

    @classmethod
    def from_json(cls, path: str | Path, overrides: dict | None = None) -> "PipelineConfig":
        path = Path(path)
        raw = exports.read_json(path)
        base = path.parent

        def resolve(p):
            p = Path(p)
            return p if p.is_absolute() else base / p

        weights = raw.get("weights", {})
        cv = raw.get("cv", {})
        flags = raw.get("flags", {})
        tiers = raw.get("tiers", {})
        if "seed" not in raw:
            raise ConfigError("config must provide a seed")
        cfg = cls(
            input=resolve(raw["input"]),
            schema=resolve(raw["schema"]),
            seed=int(raw["seed"]),
            out=resolve(raw.get("out", "out")),
            weights_mode=weights.get("mode", "derive"),
            weights_models=list(weights.get("models", ["ridge", "random_forest", "gbrt"])),
            weights_import=resolve(weights["path"]) if weights.get("path") else None,
            model_params=dict(weights.get("model_params", {})),
            cv_folds=int(cv.get("folds", 5)),
            cv_repeats=int(cv.get("repeats", 5)),
            cv_max_bins=int(cv.get("max_bins", 10)),
            perm_repeats=int(raw.get("perm_repeats", 5)),
            k_min=int(raw.get("k_min", 2)),
            k_max=int(raw.get("k_max", 30)),
            min_cluster_size=int(raw.get("min_cluster_size", 5)),
            t1=float(tiers.get("t1", 13.0)),
            t2=float(tiers.get("t2", 27.0)),
            n_permutations=int(raw.get("n_permutations", 999)),
            log_target=bool(flags.get("log_target", False)),
            strict_missing=bool(flags.get("strict_missing", True)),
            bh_adjust=bool(flags.get("bh_adjust", False)),
            emit_matrix_csv=bool(flags.get("emit_matrix_csv", False)),
            threads=int(raw.get("threads", 1)),
            composition_column=raw.get("composition_column"),
        )
        for key, value in (overrides or {}).items():
            if value is not None:
                setattr(cfg, key, value)
        cfg.out = Path(cfg.out)
        return cfg


def _schema(cfg: PipelineConfig) -> FeatureSchema:
    return FeatureSchema.from_json(cfg.schema)


def _require(cfg: PipelineConfig, names) -> None:
    for name in names:
        if not (cfg.out / name).exists():
            raise MissingUpstream(name)


def _indicator_parents(schema: FeatureSchema, onehot_map: dict[str, list[str]]) -> dict[str, str]:
    return {
        f"{entry.name}_{level}": entry.name
        for entry in schema.categorical_features
        for level in onehot_map[entry.name]
    }


# ---------------------------------------------------------------------------
# stage: dataset


def stage_dataset(cfg: PipelineConfig) -> list[str]:
    schema = _schema(cfg)
    table = load_table(cfg.input, schema, strict=cfg.strict_missing)
    scaled = prepare(table, schema, log_target=cfg.log_target)

    columns = [e.name for e in schema.entries if e.role != "id"]
    exports.write_table_csv(cfg.out / "scaled.csv", scaled.base, schema.id_column, columns)
    exports.write_json(
        cfg.out / "scale_params.json",
        {
            "scale_params": {k: {"min": lo, "max": hi} for k, (lo, hi) in scaled.scale_params.items()},
            "onehot_map": scaled.onehot_map,
            "target": schema.target,
            "log_target": scaled.log_target,
            "rows_dropped": table.n_dropped,
        },
    )
    written = ["scaled.csv", "scale_params.json"]

    # feature diagnostics: VIF per numeric feature, correlations incl. target
    numeric_names = [e.name for e in schema.numeric_features]
    if len(numeric_names) >= 2:
        X = np.column_stack([scaled.base.column(n) for n in numeric_names])
        diag = vif(X, numeric_names)
        corr_cols = numeric_names + [schema.target]
        corr = correlation_matrix(
            np.column_stack([scaled.base.column(n) for n in corr_cols])
        )
        exports.write_json(
            cfg.out / "diagnostics.json",
            {"vif": {k: (v if np.isfinite(v) else "inf") for k, v in diag.items()}},
        )
        exports.write_csv(
            cfg.out / "correlation.csv",
            ["feature", *corr_cols],
            ([corr_cols[i], *corr[i]] for i in range(len(corr_cols))),
        )
        written += ["diagnostics.json", "correlation.csv"]
    return written


def read_scaled(cfg: PipelineConfig, schema: FeatureSchema) -> ScaledTable:
    """Rebuild the ScaledTable from the dataset-stage artifacts."""
    params = exports.read_json(cfg.out / "scale_params.json")
    numeric = {e.name for e in schema.entries if e.kind == "numeric" and e.role != "id"}
    ids: list[str] = []
    columns: dict[str, list] = {}
    with (cfg.out / "scaled.csv").open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            ids.append(row[schema.id_column])
            for name, cell in row.items():
                if name == schema.id_column:
                    continue
                columns.setdefault(name, []).append(
                    float(cell) if name in numeric else cell
                )
    arrays = {
        name: np.asarray(vals, dtype=float if name in numeric else object)
        for name, vals in columns.items()
    }
    base = Table(ids=ids, columns=arrays)
    return ScaledTable(
        base=base,
        scale_params={k: (v["min"], v["max"]) for k, v in params["scale_params"].items()},
        onehot_map={k: list(v) for k, v in params["onehot_map"].items()},
        log_target=bool(params["log_target"]),
    )


# ---------------------------------------------------------------------------
# stage: weights


def stage_weights(cfg: PipelineConfig) -> list[str]:
    _require(cfg, _UPSTREAM["weights"])
    schema = _schema(cfg)
    scaled = read_scaled(cfg, schema)
    written = []

    if cfg.weights_mode == "import":
        source = exports.read_json(cfg.weights_import)
        if "averaged" not in source:
            raise ConfigError("imported weights must carry an 'averaged' map")
        payload = {
            "models": list(source.get("models", [])),
            "per_model": source.get("per_model", {}),
            "averaged": {k: float(v) for k, v in source["averaged"].items()},
            "seed": cfg.seed,
            "provenance": "imported",
        }
    else:
        configs = {
            name: ModelConfig(kind=name, hyperparameters=dict(cfg.model_params.get(name, {})))
            for name in cfg.weights_models
        }
        plan = CVPlan(
            folds=cfg.cv_folds,
            repeats=cfg.cv_repeats,
            max_bins=cfg.cv_max_bins,
            seed=derive_key(cfg.seed, "weights"),
        )
        result = derive_weights(scaled, schema, plan, configs, perm_repeats=cfg.perm_repeats)
        payload = {
            "models": list(configs),
            "per_model": {
                m: {c: {"mean": ms[0], "std": ms[1]} for c, ms in cols.items()}
                for m, cols in result.importance.per_model.items()
            },
            "averaged": result.importance.averaged,
            "seed": cfg.seed,
            "provenance": "derived",
            "metrics": {m: s.as_dict() for m, s in result.metrics.items()},
        }

    exports.write_json(cfg.out / "weights.json", payload)
    written.append("weights.json")
    return written


def load_gower_weights(cfg: PipelineConfig, schema: FeatureSchema, scaled: ScaledTable):
    payload = exports.read_json(cfg.out / "weights.json")
    parents = _indicator_parents(schema, scaled.onehot_map)
    return fold_to_gower_weights(
        {k: float(v) for k, v in payload["averaged"].items()},
        schema,
        parents,
        provenance=payload.get("provenance", "derived"),
    )


# ---------------------------------------------------------------------------
# stage: similarity


def stage_similarity(cfg: PipelineConfig) -> list[str]:
    _require(cfg, _UPSTREAM["similarity"])
    schema = _schema(cfg)
    scaled = read_scaled(cfg, schema)
    wv = load_gower_weights(cfg, schema, scaled)
    D = gower_matrix(scaled, schema, wv)
    exports.write_matrix_binary(
        cfg.out / "dissimilarity.bin", cfg.out / "dissimilarity.meta.json", D, scaled.base.ids
    )
    written = ["dissimilarity.bin", "dissimilarity.meta.json"]
    if cfg.emit_matrix_csv:
        exports.write_matrix_csv(cfg.out / "dissimilarity.csv", D, scaled.base.ids)
        exports.write_matrix_csv(cfg.out / "similarity.csv", to_similarity(D), scaled.base.ids)
        written += ["dissimilarity.csv", "similarity.csv"]
    return written


# ---------------------------------------------------------------------------
# stage: network


def stage_network(cfg: PipelineConfig) -> list[str]:
    _require(cfg, _UPSTREAM["network"])
    D, ids = exports.read_matrix_binary(
        cfg.out / "dissimilarity.bin", cfg.out / "dissimilarity.meta.json"
    )
    S = to_similarity(D)
    k_max = min(cfg.k_max, S.shape[0] - 1)
    best_k, traces = select_k(
        S, k_min=cfg.k_min, k_max=k_max, seed=cfg.seed, threads=cfg.threads
    )
    graph = mutual_knn(S, best_k, ids=ids)
    partition = detect_communities(graph, seed=derive_detection_seed(cfg.seed, best_k))
    clusters = finalize(graph, partition, cfg.min_cluster_size)

    exports.write_ktrace_csv(cfg.out / "ktrace.csv", traces)
    exports.write_graphml(cfg.out / "graph.graphml", graph, partition)
    exports.write_edges_csv(cfg.out / "edges.csv", graph)
    rows = []
    for c, members in sorted(clusters.clusters.items()):
        for i in members:
            rows.append((i, ids[i], c))
    rows.sort()
    exports.write_csv(cfg.out / "clusters.csv", ["id", "cluster"], ((r[1], r[2]) for r in rows))

    non_isolates = [i for i in range(graph.n) if graph.degree(i) > 0]
    n_ind = len(non_isolates)
    m = graph.n_edges
    exports.write_json(
        cfg.out / "network.json",
        {
            "selected_k": best_k,
            "n_nodes": graph.n,
            "n_edges": m,
            "isolate_fraction": isolate_fraction(graph),
            "average_degree": average_degree(graph),
            "density": (2.0 * m / (graph.n * (graph.n - 1))) if graph.n > 1 else 0.0,
            "n_communities": partition.n_communities,
            "n_retained_clusters": len(clusters.clusters),
            "n_clustered": clusters.n_clustered,
            "n_excluded": graph.n - clusters.n_clustered,
            "induced_subgraph": {
                "n_nodes": n_ind,
                "n_edges": m,
                "average_degree": (2.0 * m / n_ind) if n_ind else 0.0,
                "density": (2.0 * m / (n_ind * (n_ind - 1))) if n_ind > 1 else 0.0,
            },
        },
    )
    return ["ktrace.csv", "graph.graphml", "edges.csv", "clusters.csv", "network.json"]


# ---------------------------------------------------------------------------
# stage: inference


def _read_clusters(cfg: PipelineConfig, ids: list[str]) -> ClusterSet:
    index_of = {id_: i for i, id_ in enumerate(ids)}
    clusters: dict[int, list[int]] = {}
    with (cfg.out / "clusters.csv").open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            clusters.setdefault(int(row["cluster"]), []).append(index_of[row["id"]])
    clustered = {i for members in clusters.values() for i in members}
    excluded = sorted(set(range(len(ids))) - clustered)
    return ClusterSet(clusters={c: sorted(m) for c, m in sorted(clusters.items())}, excluded=excluded)


def stage_inference(cfg: PipelineConfig) -> list[str]:
    _require(cfg, _UPSTREAM["inference"])
    schema = _schema(cfg)
    scaled = read_scaled(cfg, schema)
    D, ids = exports.read_matrix_binary(
        cfg.out / "dissimilarity.bin", cfg.out / "dissimilarity.meta.json"
    )
    clusters = _read_clusters(cfg, ids)

    idx = np.asarray(
        sorted(i for members in clusters.clusters.values() for i in members), dtype=int
    )
    label_of = {i: c for c, members in clusters.clusters.items() for i in members}
    labels = [label_of[i] for i in idx]
    D_sub = D[np.ix_(idx, idx)]

    global_result = permanova(
        D_sub, labels, n_perm=cfg.n_permutations, seed=derive_key(cfg.seed, "permanova")
    )
    exports.write_json(cfg.out / "permanova.json", global_result.as_dict())

    pairwise = pairwise_permanova(
        D_sub,
        labels,
        n_perm=cfg.n_permutations,
        seed=derive_key(cfg.seed, "pairwise"),
        adjust="bh" if cfg.bh_adjust else "none",
    )
    exports.write_csv(
        cfg.out / "pairwise.csv",
        ["i", "j", "F", "p", "p_adj", "neg_log10_p"],
        (
            [
                pair.a,
                pair.b,
                pair.pseudo_f,
                pair.p_value,
                "" if pair.p_adjusted is None else exports.fmt(pair.p_adjusted),
                pair.neg_log10_p,
            ]
            for pair in pairwise.pairs
        ),
    )

    profile = effect_profile(scaled, schema, clusters, m=4)
    effect_rows = []
    for c in sorted(profile.effects):
        d_map = profile.effects[c]
        ranked = sorted(d_map, key=lambda name: (-abs(d_map[name]), name))
        for rank, feature in enumerate(ranked, start=1):
            effect_rows.append([c, feature, d_map[feature], rank])
    exports.write_csv(cfg.out / "effects.csv", ["cluster", "feature", "d", "rank"], effect_rows)

    target = scaled.base.column(schema.target)
    medians = {
        c: float(np.median(target[np.asarray(members, dtype=int)]))
        for c, members in clusters.clusters.items()
    }
    tiers = assign_tiers(medians, t1=cfg.t1, t2=cfg.t2)
    ordering = tiers.ordered_clusters()
    exports.write_csv(
        cfg.out / "tiers.csv",
        ["cluster", "median", "tier"],
        ([c, tiers.medians[c], tiers.tiers[c]] for c in ordering),
    )

    trends = trend_table(profile, ordering)
    exports.write_csv(
        cfg.out / "trends.csv",
        ["feature", *[str(c) for c in trends.clusters], "spearman"],
        (
            [feature, *trends.matrix[i], trends.trend[feature]]
            for i, feature in enumerate(trends.features)
        ),
    )

    meta_cols = [e.name for e in schema.metadata_columns]
    comp_col = cfg.composition_column or (meta_cols[0] if meta_cols else None)
    comp_rows = []
    if comp_col is not None:
        composition = cluster_composition(clusters, scaled.base.column(comp_col))
        for c, (size, pairs) in composition.items():
            for value, count in pairs:
                comp_rows.append([c, size, value, count])
    exports.write_csv(cfg.out / "composition.csv", ["cluster", "size", "value", "count"], comp_rows)

    target_rows = []
    for c in ordering:
        for i in clusters.clusters[c]:
            target_rows.append([c, ids[i], target[i]])
    exports.write_csv(cfg.out / "clusters_target.csv", ["cluster", "id", "target_rate"], target_rows)

    return [
        "permanova.json",
        "pairwise.csv",
        "effects.csv",
        "tiers.csv",
        "trends.csv",
        "composition.csv",
        "clusters_target.csv",
    ]


_STAGE_FUNCS = {
    "dataset": stage_dataset,
    "weights": stage_weights,
    "similarity": stage_similarity,
    "network": stage_network,
    "inference": stage_inference,
}


def run_stage(name: str, cfg: PipelineConfig) -> list[str]:
    if name not in _STAGE_FUNCS:
        raise ConfigError(f"unknown stage {name!r}")
    cfg.out.mkdir(parents=True, exist_ok=True)
    return _STAGE_FUNCS[name](cfg)


@dataclass
class RunManifest:
    config: dict
    version: str
    counts: dict
    selected_k: int | None
    n_clusters: int | None
    stages: dict
    checksums: dict[str, str]

    def as_dict(self) -> dict:
        return asdict(self)


def run_pipeline(cfg: PipelineConfig) -> RunManifest:
    cfg.validate()
    cfg.out.mkdir(parents=True, exist_ok=True)
    stages: dict[str, dict] = {}
    outputs: list[str] = []
    for name in STAGES:
        start = time.perf_counter()
        try:
            written = run_stage(name, cfg)
        except Exception as exc:
            raise StageFailure(name, exc) from exc
        stages[name] = {"seconds": time.perf_counter() - start, "outputs": written}
        outputs.extend(written)
        log.info("stage %s finished in %.2fs", name, stages[name]["seconds"])

    network_meta = exports.read_json(cfg.out / "network.json")
    checksums = {name: exports.sha256_file(cfg.out / name) for name in sorted(outputs)}
    manifest = RunManifest(
        config=cfg.as_dict(),
        version=__version__,
        counts={
            "total_rows": network_meta["n_nodes"],
            "clustered_rows": network_meta["n_clustered"],
            "excluded_rows": network_meta["n_excluded"],
        },
        selected_k=network_meta["selected_k"],
        n_clusters=network_meta["n_retained_clusters"],
        stages=stages,
        checksums=checksums,
    )
    exports.write_json(cfg.out / "manifest.json", manifest.as_dict())
    return manifest


def verify_manifest(out_dir: str | Path) -> list[str]:
    """Recompute checksums listed in a manifest; return mismatched or missing files."""
    out_dir = Path(out_dir)
    manifest = exports.read_json(out_dir / "manifest.json")
    problems = []
    for name, expected in manifest["checksums"].items():
        path = out_dir / name
        if not path.exists():
            problems.append(f"{name}: missing")
        elif exports.sha256_file(path) != expected:
            problems.append(f"{name}: checksum mismatch")
    return problems
