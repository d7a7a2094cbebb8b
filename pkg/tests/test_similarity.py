import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gowergraph.dataset import FeatureSchema, SchemaEntry, Table
from gowergraph.errors import ZeroTotalWeight
from gowergraph.similarity import feature_ranges, gower_matrix, gower_pair, to_similarity


def schema_for(n_numeric, n_categorical):
    entries = [
        SchemaEntry("id", "categorical", "id"),
        SchemaEntry("t", "numeric", "target"),
    ]
    entries += [SchemaEntry(f"n{j}", "numeric", "feature") for j in range(n_numeric)]
    entries += [SchemaEntry(f"c{j}", "categorical", "feature") for j in range(n_categorical)]
    return FeatureSchema(entries)


def random_table(rng, n_rows, n_numeric, n_categorical):
    columns = {"t": rng.normal(size=n_rows)}
    for j in range(n_numeric):
        columns[f"n{j}"] = rng.normal(size=n_rows) * rng.uniform(0.5, 20)
    for j in range(n_categorical):
        columns[f"c{j}"] = np.asarray(
            rng.choice(["red", "green", "blue"], size=n_rows), dtype=object
        )
    return Table(ids=[f"r{i}" for i in range(n_rows)], columns=columns)


def brute_force_gower(table, schema, weights):
    """Independent double loop straight off the weighted-Gower definition."""
    n = table.n_rows
    numeric = [e.name for e in schema.numeric_features]
    categorical = [e.name for e in schema.categorical_features]
    ranges = {f: table.column(f).max() - table.column(f).min() for f in numeric}
    total = sum(weights[e.name] for e in schema.features)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            acc = 0.0
            for f in numeric:
                if ranges[f] > 0:
                    acc += weights[f] * abs(table.column(f)[i] - table.column(f)[j]) / ranges[f]
            for f in categorical:
                if table.column(f)[i] != table.column(f)[j]:
                    acc += weights[f]
            D[i, j] = acc / total
    return D


class TestGowerPair:
    SCHEMA = schema_for(1, 1)

    def test_identical_rows_zero(self):
        row = {"n0": 3.0, "c0": "red"}
        w = {"n0": 2.0, "c0": 1.0}
        assert gower_pair(row, row, self.SCHEMA, w, {"n0": 10.0}) == 0.0

    def test_extremes_give_one(self):
        schema = schema_for(1, 0)
        d = gower_pair({"n0": 0.0}, {"n0": 10.0}, schema, {"n0": 1.0}, {"n0": 10.0})
        assert d == 1.0

    def test_hand_oracle_mixed(self):
        # numeric range 10, values 2 and 7 with weight 2; mismatching categorical weight 1
        d = gower_pair(
            {"n0": 2.0, "c0": "a"},
            {"n0": 7.0, "c0": "b"},
            self.SCHEMA,
            {"n0": 2.0, "c0": 1.0},
            {"n0": 10.0},
        )
        assert d == pytest.approx(0.6667, abs=5e-5)

    def test_zero_total_weight(self):
        with pytest.raises(ZeroTotalWeight):
            gower_pair(
                {"n0": 1.0, "c0": "a"},
                {"n0": 2.0, "c0": "a"},
                self.SCHEMA,
                {"n0": 0.0, "c0": 0.0},
                {"n0": 1.0},
            )

    def test_zero_range_feature_keeps_weight_in_denominator(self):
        # constant numeric contributes 0 upstairs but its weight still counts
        schema = schema_for(2, 0)
        d = gower_pair(
            {"n0": 5.0, "n1": 0.0},
            {"n0": 5.0, "n1": 10.0},
            schema,
            {"n0": 1.0, "n1": 1.0},
            {"n0": 0.0, "n1": 10.0},
        )
        assert d == pytest.approx(0.5)


class TestGowerMatrix:
    def test_identical_rows(self):
        schema = schema_for(1, 0)
        table = Table(
            ids=["a", "b"],
            columns={"t": np.array([0.0, 0.0]), "n0": np.array([4.0, 4.0])},
        )
        D = gower_matrix(table, schema, {"n0": 1.0})
        assert D.tolist() == [[0.0, 0.0], [0.0, 0.0]]

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for trial in range(10):
            schema = schema_for(3, 2)
            table = random_table(rng, 10, 3, 2)
            weights = {e.name: float(rng.uniform(0.1, 3.0)) for e in schema.features}
            D = gower_matrix(table, schema, weights)
            oracle = brute_force_gower(table, schema, weights)
            assert np.max(np.abs(D - oracle)) < 1e-12
            assert np.all(D >= 0.0) and np.all(D <= 1.0 + 1e-15)
            assert np.array_equal(D, D.T)
            assert np.all(np.diag(D) == 0.0)

    def test_row_permutation_equivariance(self):
        rng = np.random.default_rng(1)
        schema = schema_for(2, 1)
        table = random_table(rng, 8, 2, 1)
        weights = {e.name: 1.0 for e in schema.features}
        D = gower_matrix(table, schema, weights)
        perm = rng.permutation(8)
        permuted = table.subset(perm)
        D2 = gower_matrix(permuted, schema, weights)
        assert np.max(np.abs(D2 - D[np.ix_(perm, perm)])) < 1e-15

    @given(st.floats(0.01, 100.0))
    @settings(max_examples=25, deadline=None)
    def test_weight_scale_invariance(self, alpha):
        rng = np.random.default_rng(2)
        schema = schema_for(2, 1)
        table = random_table(rng, 6, 2, 1)
        base = {e.name: 1.5 for e in schema.features}
        scaled = {k: alpha * v for k, v in base.items()}
        D1 = gower_matrix(table, schema, base)
        D2 = gower_matrix(table, schema, scaled)
        assert np.max(np.abs(D1 - D2)) < 1e-12

    def test_equal_weights_numeric_only_is_mean_of_normalized_diffs(self):
        rng = np.random.default_rng(3)
        schema = schema_for(3, 0)
        table = random_table(rng, 7, 3, 0)
        D = gower_matrix(table, schema, {e.name: 1.0 for e in schema.features})
        ranges = feature_ranges(table, schema)
        i, j = 2, 5
        expected = np.mean(
            [
                abs(table.column(f)[i] - table.column(f)[j]) / ranges[f]
                for f in ranges
            ]
        )
        assert D[i, j] == pytest.approx(expected, abs=1e-12)

    def test_scaled_table_accepted(self, table_factory, mixed_schema):
        from gowergraph.dataset import prepare

        table = table_factory(
            ["a", "b", "c"],
            population=[1e4, 1e4, 1e4],
            ev_count=[1.0, 2.0, 3.0],
            state=["X", "Y", "X"],
            income=[10.0, 20.0, 30.0],
            temperature=[50.0, 60.0, 70.0],
            ban=["none", "partial", "none"],
        )
        scaled = prepare(table, mixed_schema)
        D = gower_matrix(scaled, mixed_schema, {"income": 1.0, "temperature": 1.0, "ban": 1.0})
        assert D.shape == (3, 3)
        # a vs c: both numerics at full range, categorical matches -> 2/3
        assert D[0, 2] == pytest.approx(2.0 / 3.0)


class TestToSimilarity:
    def test_complement(self):
        D = np.array([[0.0, 0.25], [0.25, 0.0]])
        S = to_similarity(D)
        assert S[0, 1] == 0.75

    def test_extremes(self):
        D = np.array([[0.0, 1.0], [1.0, 0.0]])
        S = to_similarity(D)
        assert S[0, 1] == 0.0

    def test_diagonal_forced_zero(self):
        D = np.array([[0.4, 0.2], [0.2, 0.7]])
        S = to_similarity(D)
        assert np.all(np.diag(S) == 0.0)
