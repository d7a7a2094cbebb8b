import numpy as np
import pytest

from gowergraph.dataset import FeatureSchema, SchemaEntry, Table


@pytest.fixture
def mixed_schema():
    return FeatureSchema(
        [
            SchemaEntry("county", "categorical", "id"),
            SchemaEntry("population", "numeric", "population"),
            SchemaEntry("ev_count", "numeric", "target"),
            SchemaEntry("state", "categorical", "metadata"),
            SchemaEntry("income", "numeric", "feature", 1.0),
            SchemaEntry("temperature", "numeric", "feature", 1.0),
            SchemaEntry("ban", "categorical", "feature", 1.0),
        ]
    )


def make_table(ids, **columns):
    arrays = {}
    for name, values in columns.items():
        first = values[0]
        if isinstance(first, str):
            arrays[name] = np.asarray(values, dtype=object)
        else:
            arrays[name] = np.asarray(values, dtype=float)
    return Table(ids=list(ids), columns=arrays)


@pytest.fixture
def table_factory():
    return make_table
