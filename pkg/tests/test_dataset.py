import numpy as np
import pytest
from hypothesis import given, strategies as st

from featgen.dataset import (
    DataTable,
    TaskKind,
    column_stats,
    load_csv,
    normalize,
    read_csv,
)
from featgen.errors import DuplicateHeader, EmptyAfterCleaning, MissingTarget


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_basic_parse(self, tmp_path):
        path = write(tmp_path, "f1,f2,y\n1,2,3\n4,5,6\n7,8,9\n")
        table = load_csv(path, "y", TaskKind.REGRESSION)
        assert table.feature_names == ("f1", "f2")
        assert table.n_rows == 3
        assert table.target_name == "y"
        np.testing.assert_array_equal(table.y, [3.0, 6.0, 9.0])

    def test_nan_row_dropped_and_counted(self, tmp_path):
        path = write(tmp_path, "f1,f2,y\n1,2,3\n1,NaN,3\n4,5,6\n")
        table, cleaning = read_csv(path, "y", TaskKind.REGRESSION)
        assert table.n_rows == 2
        assert cleaning.dropped_rows == 1

    def test_inf_row_dropped(self, tmp_path):
        path = write(tmp_path, "f1,y\n1,3\ninf,0\n4,6\n")
        table, cleaning = read_csv(path, "y", TaskKind.REGRESSION)
        assert table.n_rows == 2
        assert cleaning.dropped_rows == 1

    def test_duplicate_header(self, tmp_path):
        path = write(tmp_path, "f1,f1,y\n1,2,3\n4,5,6\n")
        with pytest.raises(DuplicateHeader):
            load_csv(path, "y", TaskKind.REGRESSION)

    def test_missing_target(self, tmp_path):
        path = write(tmp_path, "f1,f2\n1,2\n3,4\n")
        with pytest.raises(MissingTarget):
            load_csv(path, "z", TaskKind.REGRESSION)

    def test_empty_after_cleaning(self, tmp_path):
        path = write(tmp_path, "f1,y\nx,1\ny,2\n1,3\n")
        with pytest.raises(EmptyAfterCleaning):
            load_csv(path, "y", TaskKind.REGRESSION)

    def test_reserved_characters_rejected(self, tmp_path):
        path = write(tmp_path, "f(1),y\n1,2\n3,4\n")
        with pytest.raises(ValueError):
            load_csv(path, "y", TaskKind.REGRESSION)

    def test_classification_needs_integer_labels(self, tmp_path):
        path = write(tmp_path, "f1,y\n1,0\n2,1\n3,0.5\n4,1\n")
        table, cleaning = read_csv(path, "y", TaskKind.CLASSIFICATION)
        assert table.n_rows == 3
        assert cleaning.dropped_rows == 1

    def test_pipeline_deterministic(self, tmp_path):
        text = "f1,f2,y\n0.25,2,3\n4,5.5,6\n7,8,9.125\n"
        t1 = load_csv(write(tmp_path, text, "a.csv"), "y", TaskKind.REGRESSION)
        t2 = load_csv(write(tmp_path, text, "b.csv"), "y", TaskKind.REGRESSION)
        n1, _ = normalize(t1)
        n2, _ = normalize(t2)
        assert np.array_equal(n1.X, n2.X)
        assert np.array_equal(n1.y, n2.y)


class TestNormalize:
    def test_three_point_column(self):
        t = DataTable(("f",), np.array([[0.0], [5.0], [10.0]]), np.array([1.0, 2.0, 3.0]), TaskKind.REGRESSION)
        out, params = normalize(t, -1.0, 1.0)
        np.testing.assert_array_equal(out.column(0), [-1.0, 0.0, 1.0])
        assert params.col_min[0] == 0.0 and params.col_max[0] == 10.0

    def test_constant_column_maps_to_midpoint(self):
        t = DataTable(("f",), np.array([[7.0], [7.0], [7.0]]), np.array([1.0, 2.0, 3.0]), TaskKind.REGRESSION)
        out, _ = normalize(t, -1.0, 1.0)
        np.testing.assert_array_equal(out.column(0), [0.0, 0.0, 0.0])

    def test_two_point_unit_interval(self):
        t = DataTable(("f",), np.array([[2.0], [4.0]]), np.array([0.0, 1.0]), TaskKind.REGRESSION)
        out, _ = normalize(t, 0.0, 1.0)
        np.testing.assert_array_equal(out.column(0), [0.0, 1.0])

    def test_target_untouched(self):
        y = np.array([10.0, 20.0, 30.0])
        t = DataTable(("f",), np.array([[1.0], [2.0], [3.0]]), y, TaskKind.REGRESSION)
        out, _ = normalize(t)
        np.testing.assert_array_equal(out.y, y)

    def test_exact_endpoints_random_tables(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            X = rng.standard_normal((30, 4)) * rng.uniform(0.1, 100)
            t = DataTable(("a", "b", "c", "d"), X, rng.standard_normal(30), TaskKind.REGRESSION)
            out, _ = normalize(t, -1.0, 1.0)
            assert np.all(out.X.min(axis=0) == -1.0)
            assert np.all(out.X.max(axis=0) == 1.0)

    def test_idempotent(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((50, 3)) * 40 + 3
        t = DataTable(("a", "b", "c"), X, rng.standard_normal(50), TaskKind.REGRESSION)
        once, _ = normalize(t, -1.0, 1.0)
        twice, _ = normalize(once, -1.0, 1.0)
        assert np.max(np.abs(twice.X - once.X)) < 1e-12

    def test_invalid_interval(self):
        t = DataTable(("f",), np.array([[1.0], [2.0]]), np.array([0.0, 1.0]), TaskKind.REGRESSION)
        with pytest.raises(ValueError):
            normalize(t, 1.0, 1.0)


class TestColumnStats:
    def test_one_two_three(self):
        stats = column_stats([1.0, 2.0, 3.0])
        np.testing.assert_allclose(stats, [2.0, np.sqrt(2.0 / 3.0), 1.0, 1.5, 2.0, 2.5, 3.0], rtol=1e-12)

    def test_constant_pair(self):
        np.testing.assert_array_equal(column_stats([5.0, 5.0]), [5, 0, 5, 5, 5, 5, 5])

    def test_interpolated_quartiles(self):
        np.testing.assert_array_equal(column_stats([0.0, 10.0]), [5, 5, 0, 2.5, 5, 7.5, 10])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40), st.randoms())
    def test_permutation_invariant(self, values, pyrandom):
        shuffled = list(values)
        pyrandom.shuffle(shuffled)
        # summation order shifts mean/std by O(eps * max);  rtol absorbs it
        np.testing.assert_allclose(
            column_stats(values), column_stats(shuffled), rtol=1e-9, atol=1e-12
        )


class TestDataTableInvariants:
    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            DataTable(("f",), np.array([[np.nan], [1.0]]), np.array([0.0, 1.0]), TaskKind.REGRESSION)

    def test_rejects_single_row(self):
        with pytest.raises(EmptyAfterCleaning):
            DataTable(("f",), np.array([[1.0]]), np.array([0.0]), TaskKind.REGRESSION)

    def test_columns_read_only(self):
        t = DataTable(("f",), np.array([[1.0], [2.0]]), np.array([0.0, 1.0]), TaskKind.REGRESSION)
        with pytest.raises(ValueError):
            t.X[0, 0] = 9.0

    def test_select_preserves_order(self):
        t = DataTable(("a", "b", "c"), np.arange(6.0).reshape(2, 3), np.array([0.0, 1.0]), TaskKind.REGRESSION)
        s = t.select({"c", "a"})
        assert s.feature_names == ("a", "c")
        np.testing.assert_array_equal(s.X, [[0.0, 2.0], [3.0, 5.0]])
