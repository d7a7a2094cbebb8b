"""Mutual-kNN similarity graphs, penalty-scored K selection, and
modularity community detection.

An edge {i, j} exists only when each node ranks among the other's top-K most
similar neighbors. Candidate K values are scored by
score = Q - 10 * max(0, IF - 0.05) - P_AD, where Q is the unweighted Newman
modularity of the detected partition, IF the isolate fraction, and P_AD a
soft average-degree penalty (2 - AD below 2, AD - K above K, else 0).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyGraph, KOutOfRange
from .rng import derive_key, substream


@dataclass
class SimilarityGraph:
    """Undirected simple graph over node indices 0..n-1."""

    n: int
    edges: dict[tuple[int, int], float]  # (i, j) with i < j -> similarity
    k: int = 0
    ids: list[str] | None = None
    adjacency: list[list[int]] = field(init=False, repr=False)

    def __post_init__(self):
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for (i, j) in self.edges:
            if not (0 <= i < j < self.n):
                raise ValueError(f"bad edge ({i}, {j}) for n={self.n}")
            adj[i].append(j)
            adj[j].append(i)
        self.adjacency = [sorted(neigh) for neigh in adj]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    def degrees(self) -> np.ndarray:
        return np.asarray([len(a) for a in self.adjacency], dtype=float)


@dataclass
class Partition:
    """Community labels per node index, dense from 1."""

    labels: np.ndarray

    @property
    def n_communities(self) -> int:
        return len(set(self.labels.tolist()))

    def communities(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for i, c in enumerate(self.labels.tolist()):
            out.setdefault(c, []).append(i)
        return out


@dataclass
class KTrace:
    k: int
    isolate_fraction: float
    average_degree: float
    modularity: float
    p_if: float
    p_ad: float
    score: float
    n_edges: int
    n_communities: int


@dataclass
class ClusterSet:
    """Communities retained for inference plus the excluded node indices."""

    clusters: dict[int, list[int]]
    excluded: list[int]

    @property
    def n_clustered(self) -> int:
        return sum(len(m) for m in self.clusters.values())


def top_k_neighbors(S: np.ndarray, i: int, k: int) -> np.ndarray:
    """The K nodes j != i with largest S[i, j]; ties go to the lower index."""
    n = S.shape[0]
    if not 1 <= k <= n - 1:
        raise KOutOfRange(f"K={k} outside [1, {n - 1}]")
    order = np.argsort(-S[i], kind="stable")  # stable: equal similarities keep index order
    order = order[order != i]
    return order[:k]


def mutual_knn(S: np.ndarray, k: int, ids: list[str] | None = None) -> SimilarityGraph:
    """Edge {i, j} iff j in topK(i) and i in topK(j)."""
    n = S.shape[0]
    neighbor_sets = [set(top_k_neighbors(S, i, k).tolist()) for i in range(n)]
    edges: dict[tuple[int, int], float] = {}
    for i in range(n):
        for j in sorted(neighbor_sets[i]):
            if j > i and i in neighbor_sets[j]:
                edges[(i, j)] = float(S[i, j])
    return SimilarityGraph(n=n, edges=edges, k=k, ids=ids)


def isolate_fraction(graph: SimilarityGraph) -> float:
    if graph.n < 1:
        raise ValueError("graph has no nodes")
    isolated = sum(1 for i in range(graph.n) if graph.degree(i) == 0)
    return isolated / graph.n


def average_degree(graph: SimilarityGraph) -> float:
    if graph.n < 1:
        raise ValueError("graph has no nodes")
    return 2.0 * graph.n_edges / graph.n


def penalty_ad(ad: float, k: int) -> float:
    if ad < 2.0:
        return 2.0 - ad
    if ad > k:
        return ad - k
    return 0.0


def penalty_if(iso: float) -> float:
    return max(0.0, iso - 0.05)


def modularity(graph: SimilarityGraph, partition: Partition | np.ndarray) -> float:
    """Unweighted Newman modularity of the partition."""
    m = graph.n_edges
    if m == 0:
        raise EmptyGraph("modularity undefined for an edgeless graph")
    labels = partition.labels if isinstance(partition, Partition) else np.asarray(partition)
    if len(labels) != graph.n:
        raise ValueError("partition does not cover all nodes")
    intra: dict[int, int] = {}
    deg_sum: dict[int, float] = {}
    for i in range(graph.n):
        c = int(labels[i])
        deg_sum[c] = deg_sum.get(c, 0.0) + graph.degree(i)
    for (i, j) in graph.edges:
        if labels[i] == labels[j]:
            c = int(labels[i])
            intra[c] = intra.get(c, 0) + 1
    q = 0.0
    for c, d in deg_sum.items():
        q += intra.get(c, 0) / m - (d / (2.0 * m)) ** 2
    return q


def _louvain_local_pass(W, strength, comm, tot, m, order):
    """One sweep of greedy node moves; returns whether anything moved.

    The gain of moving v from community a to b is
    (k_vb - k_va) / m - k_v * (tot_b - (tot_a - k_v)) / (2 m^2), with k_vc the
    weight from v into c. Self-loop weight moves with v and cancels out.
    Ties on gain pick the lowest community id.
    """
    moved = False
    two_m2 = 2.0 * m * m
    for v in order:
        a = comm[v]
        nbr_w: dict[int, float] = {}
        for u, w in W[v].items():
            c = comm[u]
            nbr_w[c] = nbr_w.get(c, 0.0) + w
        k_v = strength[v]
        k_va = nbr_w.get(a, 0.0)
        tot_a_without = tot[a] - k_v
        best_gain = 0.0
        best_comm = a
        for c in sorted(nbr_w):
            if c == a:
                continue
            gain = (nbr_w[c] - k_va) / m - k_v * (tot[c] - tot_a_without) / two_m2
            if gain > best_gain:
                best_gain = gain
                best_comm = c
        if best_comm != a:
            comm[v] = best_comm
            tot[a] -= k_v
            tot[best_comm] += k_v
            moved = True
    return moved


def detect_communities(graph: SimilarityGraph, seed: int) -> Partition:
    """Greedy modularity optimization: local moves then graph aggregation,
    repeated until no move improves Q. Node visit order is drawn from the
    seed; isolated nodes stay in singleton communities.
    """
    n = graph.n
    membership = np.arange(n)  # original node -> current-level community
    m = float(graph.n_edges)
    if m == 0:
        return Partition(labels=np.arange(1, n + 1))

    # level graph state: inter-node weights, self-loop weight, node strength
    W: list[dict[int, float]] = [dict() for _ in range(n)]
    for (i, j), _sim in graph.edges.items():
        W[i][j] = W[i].get(j, 0.0) + 1.0
        W[j][i] = W[j].get(i, 0.0) + 1.0
    selfw = [0.0] * n
    rng = substream(seed, "louvain")

    while True:
        n_cur = len(W)
        strength = [selfw[v] + sum(W[v].values()) for v in range(n_cur)]
        comm = list(range(n_cur))
        tot = strength.copy()
        order = rng.permutation(n_cur)
        moved_any = False
        while _louvain_local_pass(W, strength, comm, tot, m, order):
            moved_any = True
        if not moved_any:
            break
        # aggregate: dense-relabel communities in ascending old-id order
        present = sorted(set(comm))
        relabel = {c: idx for idx, c in enumerate(present)}
        comm = [relabel[c] for c in comm]
        n_next = len(present)
        new_W: list[dict[int, float]] = [dict() for _ in range(n_next)]
        new_self = [0.0] * n_next
        for v in range(n_cur):
            cv = comm[v]
            new_self[cv] += selfw[v]
            for u, w in W[v].items():
                cu = comm[u]
                if cu == cv:
                    # both endpoints contribute, giving the diagonal
                    # convention A_cc = 2 * intra-community weight
                    new_self[cv] += w
                else:
                    new_W[cv][cu] = new_W[cv].get(cu, 0.0) + w
        membership = np.asarray([comm[c] for c in membership])
        W = new_W
        selfw = new_self
        if n_next == n_cur:
            break

    # dense labels from 1 in first-appearance order over node index
    labels = np.empty(n, dtype=int)
    next_label = 1
    seen: dict[int, int] = {}
    for i in range(n):
        c = int(membership[i])
        if c not in seen:
            seen[c] = next_label
            next_label += 1
        labels[i] = seen[c]
    return Partition(labels=labels)


def score_k(S: np.ndarray, k: int, seed: int, ids: list[str] | None = None) -> KTrace:
    """Build the mutual-kNN graph for K, detect communities, score the result."""
    graph = mutual_knn(S, k, ids=ids)
    iso = isolate_fraction(graph)
    ad = average_degree(graph)
    p_i = penalty_if(iso)
    p_a = penalty_ad(ad, k)
    if graph.n_edges == 0:
        q = float("-inf")  # modularity undefined; score pinned to -inf
        n_comm = graph.n
    else:
        partition = detect_communities(graph, seed=seed)
        q = modularity(graph, partition)
        n_comm = partition.n_communities
    score = q - 10.0 * p_i - p_a
    return KTrace(
        k=k,
        isolate_fraction=iso,
        average_degree=ad,
        modularity=q,
        p_if=p_i,
        p_ad=p_a,
        score=score,
        n_edges=graph.n_edges,
        n_communities=n_comm,
    )


def select_k(
    S: np.ndarray,
    k_min: int = 2,
    k_max: int = 30,
    seed: int = 0,
    threads: int = 1,
) -> tuple[int, list[KTrace]]:
    """Score every K in [k_min, k_max]; the best score wins, ties pick the
    smaller K. Each K gets its own detection substream, so any sweep
    parallelism yields identical traces.
    """
    n = S.shape[0]
    if not (1 <= k_min <= k_max <= n - 1):
        raise KOutOfRange(f"[{k_min}, {k_max}] outside [1, {n - 1}]")
    ks = list(range(k_min, k_max + 1))

    def one(k: int) -> KTrace:
        return score_k(S, k, seed=derive_detection_seed(seed, k))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            traces = list(pool.map(one, ks))
    else:
        traces = [one(k) for k in ks]

    best = traces[0]
    for trace in traces[1:]:
        if trace.score > best.score:
            best = trace
    return best.k, traces


def derive_detection_seed(seed: int, k: int) -> int:
    """Detection substream id for one K of the sweep."""
    return derive_key(seed, "sweep", k)


def finalize(graph: SimilarityGraph, partition: Partition, min_cluster_size: int) -> ClusterSet:
    """Drop communities smaller than min_cluster_size from downstream inference."""
    clusters: dict[int, list[int]] = {}
    excluded: list[int] = []
    for c, members in sorted(partition.communities().items()):
        if len(members) >= min_cluster_size:
            clusters[c] = members
        else:
            excluded.extend(members)
    return ClusterSet(clusters=clusters, excluded=sorted(excluded))
