import numpy as np
import pytest

from gowergraph.synth import BlobSpec, generate_synthetic


class TestGenerateSynthetic:
    def test_deterministic(self):
        spec = BlobSpec()
        t1, l1, _ = generate_synthetic(spec, seed=3)
        t2, l2, _ = generate_synthetic(spec, seed=3)
        assert t1.ids == t2.ids
        assert np.array_equal(l1, l2)
        for name in t1.columns:
            assert np.array_equal(t1.columns[name], t2.columns[name])

    def test_sizes_and_labels(self):
        spec = BlobSpec(sizes=(5, 7, 9))
        table, labels, schema = generate_synthetic(spec, seed=0)
        assert table.n_rows == 21
        assert np.bincount(labels).tolist() == [5, 7, 9]
        assert schema.target == "adoption_count"
        assert schema.population == "population"

    def test_target_medians_near_levels(self):
        spec = BlobSpec(target_levels=(60.0, 20.0, 5.0))
        table, labels, schema = generate_synthetic(spec, seed=1)
        rate = 1e4 * table.column("adoption_count") / table.column("population")
        for b, level in enumerate(spec.target_levels):
            med = np.median(rate[labels == b])
            assert med == pytest.approx(level, abs=3.0)

    def test_blob_means_separated(self):
        spec = BlobSpec()
        table, labels, _ = generate_synthetic(spec, seed=2)
        col = table.column("num_0")
        means = [col[labels == b].mean() for b in range(3)]
        assert means[0] < means[1] < means[2]
        assert means[1] - means[0] > 5.0

    def test_validation(self):
        with pytest.raises(ValueError):
            BlobSpec(sizes=(0, 5))
        with pytest.raises(ValueError):
            BlobSpec(target_levels=(1.0,))
        with pytest.raises(ValueError):
            BlobSpec(alignment=1.5)

    def test_zero_structure_noise_has_no_planted_signal(self):
        from sklearn.metrics import adjusted_rand_score

        from gowergraph.dataset import prepare
        from gowergraph.network import (
            derive_detection_seed,
            detect_communities,
            modularity,
            mutual_knn,
            select_k,
        )
        from gowergraph.similarity import gower_matrix, to_similarity
        from gowergraph.weights import WeightVector

        spec = BlobSpec(
            shift=0.0,
            alignment=1.0 / 3.0,
            region_alignment=1.0 / 3.0,
            target_levels=(20.0, 20.0, 20.0),
        )
        table, blobs, schema = generate_synthetic(spec, seed=2)
        scaled = prepare(table, schema)
        weights = WeightVector({e.name: 1.0 for e in schema.features})
        S = to_similarity(gower_matrix(scaled, schema, weights))
        k, _ = select_k(S, 2, 30, seed=2)
        graph = mutual_knn(S, k)
        detected = detect_communities(graph, seed=derive_detection_seed(2, k))
        # no planted signal: detected communities ignore the nominal blobs,
        # and the planted split has no modularity support in the graph
        assert abs(adjusted_rand_score(blobs, detected.labels)) < 0.2
        assert modularity(graph, blobs) < 0.3
