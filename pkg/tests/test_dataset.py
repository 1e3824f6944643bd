"""Tests for the stratified dataset container and CSV loading."""

import numpy as np
import pytest

from src.models.dataset import StratifiedDataset, read_csv, write_csv
from src.utils.errors import DatasetFormatError, ValidationError


@pytest.mark.unit
class TestStratifiedDataset:

    def test_from_strata_shapes(self):
        data = StratifiedDataset.from_strata([[1.0, 2.0, 3.0], [4.0, 5.0]])
        assert data.q == 2
        assert data.n == 5
        np.testing.assert_array_equal(data.sizes, [3, 2])
        assert not data.is_balanced

    def test_ragged_has_no_common_size(self):
        data = StratifiedDataset.from_strata([[1.0, 2.0, 3.0], [4.0, 5.0]])
        with pytest.raises(ValidationError):
            data.m

    def test_balanced_from_matrix(self):
        data = StratifiedDataset.balanced(np.arange(12.0).reshape(3, 4), x=[1, 1, 0, 0])
        assert (data.q, data.m) == (3, 4)
        np.testing.assert_array_equal(data.x[4:8], [1, 1, 0, 0])

    def test_stratum_reductions(self):
        data = StratifiedDataset.from_strata([[1.0, 3.0], [2.0, 4.0, 6.0]])
        np.testing.assert_allclose(data.stratum_sum(data.y), [4.0, 12.0])
        np.testing.assert_allclose(data.stratum_means(), [2.0, 4.0])
        np.testing.assert_allclose(data.expand([10.0, 20.0]), [10, 10, 20, 20, 20])

    def test_xs_defaults_to_zero(self):
        data = StratifiedDataset.from_strata([[1.0, 2.0]])
        np.testing.assert_array_equal(data.xs, [0.0, 0.0])

    def test_singleton_stratum_rejected(self):
        with pytest.raises(ValidationError):
            StratifiedDataset.from_strata([[1.0, 2.0], [3.0]])

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            StratifiedDataset.from_strata([[1.0, np.nan]])

    def test_arrays_are_read_only(self):
        data = StratifiedDataset.from_strata([[1.0, 2.0]])
        with pytest.raises(ValueError):
            data.y[0] = 3.0

    def test_drop_keeps_origin(self):
        data = StratifiedDataset.from_strata([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        kept = data.drop([1])
        assert kept.q == 2
        np.testing.assert_array_equal(kept.origin, [0, 2])
        np.testing.assert_array_equal(kept.y, [1.0, 2.0, 5.0, 6.0])
        np.testing.assert_array_equal(kept.drop([0]).origin, [2])

    def test_cannot_drop_everything(self):
        data = StratifiedDataset.from_strata([[1.0, 2.0]])
        with pytest.raises(ValidationError):
            data.drop([0])

    def test_with_y_keeps_layout(self):
        data = StratifiedDataset.from_strata([[1.0, 2.0], [3.0, 4.0]], covariates=[[1, 0], [1, 0]])
        new = data.with_y([9.0, 8.0, 7.0, 6.0])
        np.testing.assert_array_equal(new.stratum, data.stratum)
        np.testing.assert_array_equal(new.x, data.x)


@pytest.mark.unit
class TestCsv:

    def test_reads_unsorted_one_based_strata(self, tmp_path):
        path = tmp_path / 'data.csv'
        path.write_text("stratum,y\n2,5.0\n1,1.0\n2,6.0\n1,2.0\n")
        data = read_csv(path)
        assert data.q == 2
        np.testing.assert_array_equal(data.y, [1.0, 2.0, 5.0, 6.0])

    def test_reads_covariates(self, tmp_path):
        path = tmp_path / 'pairs.csv'
        path.write_text("stratum,y,x\n1,1,1\n1,0,0\n")
        np.testing.assert_array_equal(read_csv(path).x, [1.0, 0.0])

    def test_bad_value_names_line(self, tmp_path):
        path = tmp_path / 'bad.csv'
        path.write_text("stratum,y\n1,1.0\n1,abc\n")
        with pytest.raises(DatasetFormatError, match='line 3'):
            read_csv(path)

    def test_missing_column(self, tmp_path):
        path = tmp_path / 'bad.csv'
        path.write_text("group,y\n1,1.0\n1,2.0\n")
        with pytest.raises(DatasetFormatError, match='expected columns'):
            read_csv(path)

    def test_gap_in_strata(self, tmp_path):
        path = tmp_path / 'gap.csv'
        path.write_text("stratum,y\n1,1.0\n1,2.0\n3,1.0\n3,2.0\n")
        with pytest.raises(DatasetFormatError):
            read_csv(path)

    def test_non_integer_stratum(self, tmp_path):
        path = tmp_path / 'frac.csv'
        path.write_text("stratum,y\n1.5,1.0\n1.5,2.0\n")
        with pytest.raises(DatasetFormatError, match='line 2'):
            read_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetFormatError):
            read_csv(tmp_path / 'nope.csv')

    def test_singleton_stratum_is_format_error(self, tmp_path):
        path = tmp_path / 'single.csv'
        path.write_text("stratum,y\n1,1.0\n1,2.0\n2,3.0\n")
        with pytest.raises(DatasetFormatError):
            read_csv(path)

    def test_write_then_read(self, tmp_path):
        data = StratifiedDataset.from_strata([[0.25, 0.5], [0.75, 0.125, 0.5]])
        write_csv(data, tmp_path / 'out.csv')
        again = read_csv(tmp_path / 'out.csv')
        np.testing.assert_array_equal(again.y, data.y)
        np.testing.assert_array_equal(again.sizes, data.sizes)
