import numpy as np
import pytest

from cptdual.util import stats


def test_max_cdf_deviation():
    grid = (np.arange(1000) + 0.5) / 1000
    assert stats.max_cdf_deviation(grid) == pytest.approx(0.0005, abs=1e-12)
    assert stats.max_cdf_deviation(np.full(10, 0.5)) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        stats.max_cdf_deviation([])


def test_pairwise_correlations():
    rng = np.random.default_rng(0)
    x = rng.normal(size=500)
    matrix = np.column_stack([x, 2.0 * x + 1.0, -x])
    assert stats.pairwise_correlations(matrix) == pytest.approx([1.0, -1.0, -1.0])
    assert stats.pairwise_correlations(x[:, None]).size == 0


def test_quantile_chi_square():
    rng = np.random.default_rng(1)
    x, y = rng.uniform(size=(2, 4000))
    _, pvalue = stats.quantile_chi_square(x, y)
    assert pvalue > 1e-4
    statistic, pvalue = stats.quantile_chi_square(x, x)
    assert statistic > 1000
    assert pvalue < 1e-10
    with pytest.raises(ValueError):
        stats.quantile_chi_square(x, y[:10])


def test_log_log_slope():
    x = 2.0 ** np.arange(8)
    slope, residual = stats.log_log_slope(x, 3.0 * x**0.75)
    assert slope == pytest.approx(0.75)
    assert residual == pytest.approx(0.0, abs=1e-10)
    assert stats.log_log_slope([1.0, 2.0], [0.0, 0.0]) == (0.0, 0.0)
    assert stats.log_log_slope([2.0, 2.0], [1.0, 3.0]) == (0.0, 0.0)


def test_trend_slope():
    assert stats.trend_slope(np.full(11, 4.0)) == pytest.approx(0.0, abs=1e-12)
    assert stats.trend_slope(2.0 ** np.arange(6)) == pytest.approx(np.log(2.0))
    assert stats.trend_slope([0.0, 0.0, 5.0]) == 0.0
