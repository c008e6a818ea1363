import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from featgen.cli import make_synthetic
from featgen.dataset import DataTable, TaskKind, normalize


@pytest.fixture(scope="session")
def product_table():
    """Normalized y = x1*x2 + 0.1*eps benchmark, n=500."""
    names, X, y = make_synthetic("product", 500, 0.1, 7)
    table = DataTable(names, X, y, TaskKind.REGRESSION, target_name="y")
    normalized, _ = normalize(table, -1.0, 1.0)
    return normalized


@pytest.fixture(scope="session")
def small_product_table():
    names, X, y = make_synthetic("product", 300, 0.1, 7)
    table = DataTable(names, X, y, TaskKind.REGRESSION, target_name="y")
    normalized, _ = normalize(table, -1.0, 1.0)
    return normalized


@pytest.fixture()
def regression_table():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((120, 4))
    y = 2.0 * X[:, 0] - X[:, 2] + 0.05 * rng.standard_normal(120)
    return DataTable(("a", "b", "c", "d"), X, y, TaskKind.REGRESSION)


@pytest.fixture()
def classification_table():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((120, 4))
    y = (X[:, 0] + 0.2 * rng.standard_normal(120) > 0).astype(float)
    return DataTable(("a", "b", "c", "d"), X, y, TaskKind.CLASSIFICATION)
