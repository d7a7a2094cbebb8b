"""Weighted Gower similarity networks over mixed-type tables.

Clusters entities into a mutual k-nearest-neighbor similarity network with
automatic K selection, then characterizes the communities against an
external target (PERMANOVA, Cohen's d, adoption tiers).
"""

from .dataset import (
    FeatureSchema,
    ScaledTable,
    SchemaEntry,
    Table,
    load_table,
    normalize_target,
    one_hot,
    prepare,
    quantile_bins,
    scale_minmax,
)
from .inference import (
    EffectProfile,
    PairwiseResults,
    PermanovaResult,
    TierAssignment,
    TrendTable,
    assign_tiers,
    cluster_composition,
    cohens_d,
    effect_profile,
    pairwise_permanova,
    permanova,
    trend_table,
)
from .models import ModelConfig, fit_forest, fit_gbrt, fit_model, fit_ridge, predict
from .network import (
    ClusterSet,
    KTrace,
    Partition,
    SimilarityGraph,
    average_degree,
    detect_communities,
    finalize,
    isolate_fraction,
    modularity,
    mutual_knn,
    penalty_ad,
    penalty_if,
    score_k,
    select_k,
    top_k_neighbors,
)
from .pipeline import PipelineConfig, RunManifest, run_pipeline, run_stage, verify_manifest
from .similarity import feature_ranges, gower_matrix, gower_pair, to_similarity
from .synth import BlobSpec, generate_synthetic
from .version import __version__
from .weights import (
    CVPlan,
    ImportanceTable,
    MetricsSummary,
    WeightVector,
    average_importance,
    correlation_matrix,
    derive_weights,
    design_matrix,
    make_splits,
    metrics,
    permutation_importance,
    vif,
)

__all__ = [name for name in dir() if not name.startswith("_")]
