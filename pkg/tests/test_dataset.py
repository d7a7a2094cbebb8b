import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gowergraph.dataset import (
    FeatureSchema,
    SchemaEntry,
    load_table,
    normalize_target,
    one_hot,
    prepare,
    quantile_bins,
    scale_minmax,
)
from gowergraph.errors import (
    DuplicateId,
    MissingCell,
    MissingColumn,
    NonNumericCell,
    NonpositivePopulation,
    UnknownCategory,
)


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return path


CSV_OK = """county,population,ev_count,state,income,temperature,ban
c1,50000,100,NY,60000,55.2,none
c2,20000,40,TX,45000,71.0,partial
c3,80000,640,CA,82000,60.3,comprehensive
"""


class TestSchema:
    def test_roles_enforced(self):
        with pytest.raises(ValueError):
            FeatureSchema([SchemaEntry("a", "numeric", "feature")])  # no target/id

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            FeatureSchema(
                [
                    SchemaEntry("a", "numeric", "target"),
                    SchemaEntry("a", "categorical", "id"),
                    SchemaEntry("x", "numeric", "feature"),
                ]
            )

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            FeatureSchema(
                [
                    SchemaEntry("t", "numeric", "target"),
                    SchemaEntry("i", "categorical", "id"),
                    SchemaEntry("x", "numeric", "feature", weight=-0.5),
                ]
            )

    def test_json_roundtrip(self, tmp_path, mixed_schema):
        import json

        p = tmp_path / "schema.json"
        p.write_text(json.dumps(mixed_schema.to_json()))
        loaded = FeatureSchema.from_json(p)
        assert loaded == mixed_schema


class TestLoadTable:
    def test_wellformed(self, tmp_path, mixed_schema):
        table = load_table(write_csv(tmp_path / "t.csv", CSV_OK), mixed_schema)
        assert table.n_rows == 3
        assert table.ids == ["c1", "c2", "c3"]
        assert table.column("income").tolist() == [60000.0, 45000.0, 82000.0]
        assert table.column("ban").tolist() == ["none", "partial", "comprehensive"]

    def test_missing_target_column(self, tmp_path, mixed_schema):
        text = CSV_OK.replace("ev_count,", "").replace(",100,", ",").replace(",40,", ",").replace(",640,", ",")
        with pytest.raises(MissingColumn):
            load_table(write_csv(tmp_path / "t.csv", text), mixed_schema)

    def test_non_numeric_cell(self, tmp_path, mixed_schema):
        text = CSV_OK.replace("45000", "abc")
        with pytest.raises(NonNumericCell):
            load_table(write_csv(tmp_path / "t.csv", text), mixed_schema)

    def test_duplicate_id(self, tmp_path, mixed_schema):
        text = CSV_OK.replace("c2", "c1")
        with pytest.raises(DuplicateId):
            load_table(write_csv(tmp_path / "t.csv", text), mixed_schema)

    def test_missing_cell_strict(self, tmp_path, mixed_schema):
        text = CSV_OK.replace("45000", "")
        with pytest.raises(MissingCell):
            load_table(write_csv(tmp_path / "t.csv", text), mixed_schema, strict=True)

    def test_missing_cell_lenient_drops(self, tmp_path, mixed_schema):
        text = CSV_OK.replace("45000", "")
        table = load_table(write_csv(tmp_path / "t.csv", text), mixed_schema, strict=False)
        assert table.n_rows == 2
        assert table.n_dropped == 1
        assert "c2" not in table.ids


class TestNormalizeTarget:
    def test_simple(self):
        assert normalize_target(100, 50_000) == 20.0

    def test_zero_count(self):
        assert normalize_target(0, 12_345) == 0.0

    def test_hand_oracle(self):
        # 123 / 45600 * 1e4 = 26.9737 to 4 dp
        assert normalize_target(123, 45_600) == pytest.approx(26.9737, abs=5e-5)

    def test_nonpositive_population(self):
        with pytest.raises(NonpositivePopulation):
            normalize_target(10, 0)

    @given(
        count=st.floats(0, 1e6),
        pop=st.floats(1e-3, 1e9),
        alpha=st.floats(1e-3, 1e3),
    )
    def test_homogeneous(self, count, pop, alpha):
        base = normalize_target(count, pop)
        scaled = normalize_target(alpha * count, alpha * pop)
        assert scaled == pytest.approx(base, rel=1e-9, abs=1e-9)


class TestScaleMinmax:
    def test_endpoints(self):
        scaled, lo, hi = scale_minmax(np.array([2.0, 5.0, 8.0]))
        assert scaled.tolist() == [0.0, 0.5, 1.0]
        assert (lo, hi) == (2.0, 8.0)

    def test_reported_aqi_mean(self):
        # column with min 2, max 80, mean 40.28 scales to mean 0.491
        col = np.array([2.0, 80.0, 3 * 40.28 - 2.0 - 80.0])
        scaled, _, _ = scale_minmax(col)
        assert scaled.mean() == pytest.approx(0.491, abs=1e-3)

    def test_constant_column(self):
        scaled, lo, hi = scale_minmax(np.array([7.0, 7.0, 7.0]))
        assert scaled.tolist() == [0.0, 0.0, 0.0]
        assert lo == hi == 7.0

    @given(
        st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=50).filter(
            lambda xs: max(xs) > min(xs)
        )
    )
    def test_unscale_roundtrip(self, xs):
        col = np.asarray(xs)
        scaled, lo, hi = scale_minmax(col)
        assert np.all(scaled >= 0.0) and np.all(scaled <= 1.0)
        back = scaled * (hi - lo) + lo
        assert np.max(np.abs(back - col)) <= 1e-12 * max(1.0, np.max(np.abs(col)))


class TestOneHot:
    CATS = ["comprehensive", "none", "partial"]

    def test_basic(self):
        out = one_hot(np.array(["partial"], dtype=object), self.CATS)
        assert out.tolist() == [[0.0, 0.0, 1.0]]

    def test_party_order(self):
        out = one_hot(np.array(["DEMOCRAT"], dtype=object), ["DEMOCRAT", "REPUBLICAN"])
        assert out.tolist() == [[1.0, 0.0]]

    def test_unknown_category(self):
        with pytest.raises(UnknownCategory):
            one_hot(np.array(["PARTIALLY"], dtype=object), self.CATS)

    def test_row_sums_exactly_one(self):
        rng = np.random.default_rng(3)
        col = np.asarray(rng.choice(self.CATS, size=100), dtype=object)
        out = one_hot(col, self.CATS)
        assert np.all(out.sum(axis=1) == 1.0)


class TestQuantileBins:
    def test_even_split(self):
        values = np.arange(100, dtype=float)
        labels = quantile_bins(values, max_bins=10)
        counts = np.bincount(labels)
        assert len(counts) == 10
        assert np.all(counts == 10)

    def test_constant_column(self):
        labels = quantile_bins(np.full(17, 3.3), max_bins=10)
        assert set(labels.tolist()) == {0}

    def test_duplicate_boundaries_merge(self):
        values = np.array([1, 1, 1, 1, 2, 3, 4, 5, 6, 7], dtype=float)
        labels = quantile_bins(values, max_bins=4)
        # quantile cuts at .25/.5/.75 are 1.0, 2.5, 4.75 -> three nonempty bins
        assert labels.tolist() == [0, 0, 0, 0, 0, 1, 1, 2, 2, 2]

    @given(
        st.lists(st.integers(-50, 50), min_size=1, max_size=120),
        st.integers(1, 10),
    )
    @settings(max_examples=60)
    def test_against_sort_oracle(self, xs, max_bins):
        values = np.asarray(xs, dtype=float)
        labels = quantile_bins(values, max_bins=max_bins)
        k = labels.max() + 1
        assert k <= max_bins
        assert set(labels.tolist()) == set(range(k))  # dense, nonempty
        order = np.argsort(values, kind="stable")
        sorted_labels = labels[order]
        assert np.all(np.diff(sorted_labels) >= 0)  # monotone with value
        # equal values always share a bin
        for value in np.unique(values):
            assert len(set(labels[values == value].tolist())) == 1


class TestPrepare:
    def test_pipeline_fields(self, tmp_path, mixed_schema):
        table = load_table(write_csv(tmp_path / "t.csv", CSV_OK), mixed_schema)
        scaled = prepare(table, mixed_schema)
        rate = scaled.base.column("ev_count")
        assert rate.tolist() == [20.0, 20.0, 80.0]
        income = scaled.base.column("income")
        assert income.min() == 0.0 and income.max() == 1.0
        assert scaled.scale_params["income"] == (45000.0, 82000.0)
        assert scaled.onehot_map["ban"] == ["comprehensive", "none", "partial"]
        assert scaled.base.column("state").tolist() == ["NY", "TX", "CA"]

    def test_log_target(self, tmp_path, mixed_schema):
        table = load_table(write_csv(tmp_path / "t.csv", CSV_OK), mixed_schema)
        scaled = prepare(table, mixed_schema, log_target=True)
        assert scaled.base.column("ev_count").tolist() == pytest.approx(
            np.log1p([20.0, 20.0, 80.0]).tolist()
        )
