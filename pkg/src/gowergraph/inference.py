"""Statistical characterization of clusters against an external target.

PERMANOVA on the pairwise dissimilarities (global and per cluster pair),
pooled-SD Cohen's d profiles per cluster, top-m distinguishing features,
median-based tier labels, and cross-cluster trend summaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .dataset import FeatureSchema, ScaledTable
from .errors import BadThresholds, DegenerateGroups
from .network import ClusterSet
from .rng import derive_key, substream

EXACT_MAX_N = 10
EXACT_MAX_PERMS = 50_000


@dataclass
class PermanovaResult:
    pseudo_f: float
    p_value: float
    n_permutations: int
    n: int
    n_groups: int
    ss_total: float
    ss_within: float
    ss_between: float
    exact: bool = False

    def as_dict(self) -> dict:
        return {
            "pseudo_f": self.pseudo_f,
            "p_value": self.p_value,
            "n_permutations": self.n_permutations,
            "n": self.n,
            "n_groups": self.n_groups,
            "ss_total": self.ss_total,
            "ss_within": self.ss_within,
            "ss_between": self.ss_between,
            "exact": self.exact,
        }


def _group_indices(labels) -> dict:
    groups: dict = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(i)
    return groups


def _ss_within(D2: np.ndarray, groups: list[np.ndarray]) -> float:
    ss = 0.0
    for idx in groups:
        block = D2[np.ix_(idx, idx)]
        ss += block.sum() / (2.0 * idx.size)  # block double-counts each pair
    return ss


def _pseudo_f(ss_between: float, ss_within: float, n: int, g: int) -> float:
    if ss_within == 0.0:
        return float("inf")  # perfectly tight groups
    return (ss_between / (g - 1)) / (ss_within / (n - g))


def _distinct_labelings(counts: list[tuple[object, int]], positions: list[int]):
    """Yield every distinct assignment of the label multiset to positions."""
    if len(counts) == 1:
        lab = counts[0][0]
        yield {p: lab for p in positions}
        return
    lab, k = counts[0]
    rest = counts[1:]
    for chosen in combinations(positions, k):
        chosen_set = set(chosen)
        remaining = [p for p in positions if p not in chosen_set]
        for tail in _distinct_labelings(rest, remaining):
            out = {p: lab for p in chosen}
            out.update(tail)
            yield out


def _n_distinct_labelings(sizes: list[int]) -> int:
    total = math.factorial(sum(sizes))
    for s in sizes:
        total //= math.factorial(s)
    return total


def permanova(
    D: np.ndarray, labels, n_perm: int = 999, seed: int = 0, method: str = "auto"
) -> PermanovaResult:
    """Pseudo-F test of group separation on a dissimilarity matrix.

    SS_total = sum_{i<j} d_ij^2 / N and SS_within sums, per group, the
    intra-group squared distances divided by the group size. The p-value
    comes from label permutations; when N <= 10 and the number of distinct
    relabelings is small, they are enumerated exactly instead of sampled.
    `method` can force "exact" or "sampled" (default "auto").
    """
    if method not in ("auto", "exact", "sampled"):
        raise ValueError(f"unknown method {method!r}")
    D = np.asarray(D, dtype=float)
    labels = list(labels)
    n = len(labels)
    if D.shape != (n, n):
        raise ValueError("labels must cover exactly the rows of D")
    groups = _group_indices(labels)
    g = len(groups)
    if g < 2:
        raise DegenerateGroups("need at least two groups")
    if n - g < 1:
        raise DegenerateGroups("residual degrees of freedom would be zero")

    D2 = D * D
    ss_total = float(np.triu(D2, 1).sum()) / n
    idx_groups = [np.asarray(ix, dtype=int) for ix in groups.values()]
    ss_within = _ss_within(D2, idx_groups)
    ss_between = ss_total - ss_within
    f_obs = _pseudo_f(ss_between, ss_within, n, g)

    sizes = sorted(len(ix) for ix in idx_groups)
    if method == "auto":
        exact = n <= EXACT_MAX_N and _n_distinct_labelings(sizes) <= EXACT_MAX_PERMS
    else:
        exact = method == "exact"
        if exact and _n_distinct_labelings(sizes) > EXACT_MAX_PERMS:
            raise ValueError("too many distinct relabelings for exact enumeration")

    if exact:
        counts = sorted(((lab, len(ix)) for lab, ix in groups.items()), key=lambda t: str(t[0]))
        total = 0
        count_ge = 0
        positions = list(range(n))
        for assignment in _distinct_labelings(counts, positions):
            perm_groups = _group_indices([assignment[p] for p in positions])
            perm_idx = [np.asarray(ix, dtype=int) for ix in perm_groups.values()]
            ss_w = _ss_within(D2, perm_idx)
            f_perm = _pseudo_f(ss_total - ss_w, ss_w, n, g)
            total += 1
            if f_perm >= f_obs:
                count_ge += 1
        # identity labeling is one of the enumerated states, so
        # p = count_ge / total == (count_ge_excl_identity + 1) / ((total - 1) + 1)
        p = count_ge / total
        n_permutations = total - 1
    else:
        labels_arr = np.asarray(labels, dtype=object)
        count_ge = 0
        for i in range(n_perm):
            rng = substream(seed, "permanova", i)
            shuffled = labels_arr[rng.permutation(n)]
            perm_groups = _group_indices(shuffled)
            perm_idx = [np.asarray(ix, dtype=int) for ix in perm_groups.values()]
            ss_w = _ss_within(D2, perm_idx)
            f_perm = _pseudo_f(ss_total - ss_w, ss_w, n, g)
            if f_perm >= f_obs:
                count_ge += 1
        p = (count_ge + 1) / (n_perm + 1)
        n_permutations = n_perm

    return PermanovaResult(
        pseudo_f=f_obs,
        p_value=p,
        n_permutations=n_permutations,
        n=n,
        n_groups=g,
        ss_total=ss_total,
        ss_within=ss_within,
        ss_between=ss_between,
        exact=exact,
    )


@dataclass
class PairResult:
    a: object
    b: object
    pseudo_f: float
    p_value: float
    p_adjusted: float | None = None

    @property
    def neg_log10_p(self) -> float:
        return -math.log10(self.p_value)


@dataclass
class PairwiseResults:
    pairs: list[PairResult]

    def n_significant(self, alpha: float = 0.05, adjusted: bool = False) -> int:
        def pick(pair: PairResult) -> float:
            if adjusted and pair.p_adjusted is not None:
                return pair.p_adjusted
            return pair.p_value

        return sum(1 for pair in self.pairs if pick(pair) <= alpha)


def benjamini_hochberg(p_values: list[float]) -> list[float]:
    """Step-up adjusted p-values; always >= the raw values."""
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    adjusted = [0.0] * m
    running = 1.0
    for rank_from_top in range(m, 0, -1):
        i = order[rank_from_top - 1]
        running = min(running, p_values[i] * m / rank_from_top)
        adjusted[i] = running
    return adjusted


def pairwise_permanova(
    D: np.ndarray,
    labels,
    n_perm: int = 999,
    seed: int = 0,
    adjust: str = "none",
) -> PairwiseResults:
    """PERMANOVA restricted to every unordered pair of groups."""
    if adjust not in ("none", "bh"):
        raise ValueError(f"unknown adjustment {adjust!r}")
    labels = list(labels)
    groups = _group_indices(labels)
    if len(groups) < 2:
        raise DegenerateGroups("need at least two groups")
    names = sorted(groups, key=str)
    pairs = []
    for a, b in combinations(names, 2):
        idx = np.asarray(sorted(groups[a] + groups[b]), dtype=int)
        sub_labels = [labels[i] for i in idx]
        sub = permanova(D[np.ix_(idx, idx)], sub_labels, n_perm=n_perm, seed=substream_key(seed, a, b))
        pairs.append(PairResult(a=a, b=b, pseudo_f=sub.pseudo_f, p_value=sub.p_value))
    if adjust == "bh":
        adj = benjamini_hochberg([pair.p_value for pair in pairs])
        for pair, value in zip(pairs, adj):
            pair.p_adjusted = value
    return PairwiseResults(pairs=pairs)


def substream_key(seed: int, *labels) -> int:
    return derive_key(seed, "pair", *labels)


def cohens_d(in_values: np.ndarray, out_values: np.ndarray) -> float:
    """Pooled-SD standardized mean difference; positive when the first group
    exceeds the second. Zero pooled variance yields a signed-infinity
    sentinel when the means differ, 0 when they match.
    """
    a = np.asarray(in_values, dtype=float)
    b = np.asarray(out_values, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each side needs at least two values")
    diff = float(a.mean() - b.mean())
    var_a = float(a.var(ddof=1))
    var_b = float(b.var(ddof=1))
    pooled = ((a.size - 1) * var_a + (b.size - 1) * var_b) / (a.size + b.size - 2)
    if pooled == 0.0:
        if diff == 0.0:
            return 0.0
        return math.copysign(float("inf"), diff)
    return diff / math.sqrt(pooled)


@dataclass
class EffectProfile:
    """Per cluster: Cohen's d for every feature column, plus the top-m list."""

    effects: dict[int, dict[str, float]]
    top: dict[int, list[str]]
    m: int


def _profile_columns(scaled: ScaledTable, schema: FeatureSchema) -> dict[str, np.ndarray]:
    """Numeric features on their scaled values; categorical levels as 0/1."""
    cols: dict[str, np.ndarray] = {}
    for entry in schema.numeric_features:
        cols[entry.name] = scaled.base.column(entry.name)
    for entry in schema.categorical_features:
        raw = scaled.base.column(entry.name)
        for level in scaled.onehot_map[entry.name]:
            cols[f"{entry.name}_{level}"] = (raw.astype(str) == level).astype(float)
    return cols


def effect_profile(
    scaled: ScaledTable,
    schema: FeatureSchema,
    clusters: ClusterSet | dict[int, list[int]],
    m: int = 4,
) -> EffectProfile:
    """Cohen's d of each cluster against all other clustered rows."""
    cluster_map = clusters.clusters if isinstance(clusters, ClusterSet) else clusters
    if len(cluster_map) < 2:
        raise DegenerateGroups("need at least two clusters to profile")
    columns = _profile_columns(scaled, schema)
    all_members = sorted(i for members in cluster_map.values() for i in members)
    member_arr = np.asarray(all_members, dtype=int)
    effects: dict[int, dict[str, float]] = {}
    top: dict[int, list[str]] = {}
    for c, members in cluster_map.items():
        inside = np.asarray(sorted(members), dtype=int)
        outside = np.setdiff1d(member_arr, inside)
        d_map = {
            name: cohens_d(col[inside], col[outside]) for name, col in columns.items()
        }
        effects[c] = d_map
        ranked = sorted(d_map, key=lambda name: (-abs(d_map[name]), name))
        top[c] = ranked[: min(m, len(ranked))]
    return EffectProfile(effects=effects, top=top, m=m)


@dataclass
class TierAssignment:
    """Cluster tier labels from the median target: LAT below t1, MAT in
    [t1, t2), HAT at or above t2."""

    medians: dict[int, float]
    tiers: dict[int, str]
    thresholds: tuple[float, float]

    def ordered_clusters(self) -> list[int]:
        return sorted(self.medians, key=lambda c: (-self.medians[c], c))


def assign_tiers(medians: dict[int, float], t1: float = 13.0, t2: float = 27.0) -> TierAssignment:
    if not t1 < t2:
        raise BadThresholds(f"need t1 < t2, got {t1} >= {t2}")
    tiers = {}
    for c, median in medians.items():
        if median < t1:
            tiers[c] = "LAT"
        elif median < t2:
            tiers[c] = "MAT"
        else:
            tiers[c] = "HAT"
    return TierAssignment(medians=dict(medians), tiers=tiers, thresholds=(t1, t2))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Rank correlation with average ranks; 0 when either side is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    sx = rx - rx.mean()
    sy = ry - ry.mean()
    denom = math.sqrt(float(sx @ sx) * float(sy @ sy))
    if denom == 0.0:
        return 0.0
    return float(sx @ sy) / denom


@dataclass
class TrendTable:
    """Effect sizes laid out feature x cluster in the supplied cluster order,
    with a per-feature rank correlation against that order."""

    features: list[str]
    clusters: list[int]
    matrix: np.ndarray
    trend: dict[str, float]


def trend_table(profile: EffectProfile, ordering: list[int]) -> TrendTable:
    if set(ordering) != set(profile.effects):
        raise ValueError("ordering must cover exactly the profiled clusters")
    features = sorted(profile.effects[ordering[0]])
    matrix = np.asarray(
        [[profile.effects[c][f] for c in ordering] for f in features], dtype=float
    )
    position = np.arange(1, len(ordering) + 1, dtype=float)
    trend = {}
    for row, feature in enumerate(features):
        values = matrix[row]
        finite = np.isfinite(values)
        trend[feature] = spearman(position[finite], values[finite]) if finite.sum() >= 2 else 0.0
    return TrendTable(features=features, clusters=list(ordering), matrix=matrix, trend=trend)


def cluster_composition(
    clusters: ClusterSet | dict[int, list[int]],
    metadata: np.ndarray,
) -> dict[int, tuple[int, list[tuple[str, int]]]]:
    """Per cluster: size plus sorted (metadata value, count) pairs."""
    cluster_map = clusters.clusters if isinstance(clusters, ClusterSet) else clusters
    out = {}
    for c, members in sorted(cluster_map.items()):
        counts: dict[str, int] = {}
        for i in members:
            value = str(metadata[i])
            counts[value] = counts.get(value, 0) + 1
        out[c] = (len(members), sorted(counts.items()))
    return out
