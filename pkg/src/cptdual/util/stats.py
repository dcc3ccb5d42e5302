"""
Statistical functions used by cptdual
"""
from typing import Tuple

import numpy as np
from scipy import stats


def max_cdf_deviation(sample) -> float:
    """
    Kolmogorov-Smirnov distance between a sample and the uniform law on [0, 1]

    Parameters
    ----------
    sample : array-like
        One-dimensional sample

    Returns
    -------
    deviation : float
        sup_x |F_n(x) - x|
    """
    sample = np.asarray(sample, dtype=float).ravel()
    if sample.size == 0:
        raise ValueError("Cannot test an empty sample")
    return float(stats.kstest(sample, "uniform").statistic)


def pairwise_correlations(matrix) -> np.ndarray:
    """
    Off-diagonal Pearson correlations of the columns of ``matrix``

    Returns
    -------
    correlations : np.ndarray
        Upper-triangle correlations, column pairs in lexicographic order
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[1] < 2:
        return np.zeros(0)
    corr = np.corrcoef(matrix, rowvar=False)
    rows, cols = np.triu_indices(matrix.shape[1], k=1)
    return corr[rows, cols]


def quantile_chi_square(x, y, bins: int = 4) -> Tuple[float, float]:
    """
    Chi-square independence statistic on a ``bins`` x ``bins`` table of
    empirical quantile cells.

    Returns
    -------
    statistic : float
    pvalue : float
        Upper tail probability with ``(bins - 1) ** 2`` degrees of freedom
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError("Samples must have equal length")
    qs = np.linspace(0.0, 1.0, bins + 1)[1:-1]
    ix = np.searchsorted(np.quantile(x, qs), x, side="right")
    iy = np.searchsorted(np.quantile(y, qs), y, side="right")
    observed = np.zeros((bins, bins))
    np.add.at(observed, (ix, iy), 1.0)
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0)) / x.size
    mask = expected > 0
    statistic = float(np.sum((observed[mask] - expected[mask]) ** 2 / expected[mask]))
    pvalue = float(stats.chi2.sf(statistic, (bins - 1) ** 2))
    return statistic, pvalue


def log_log_slope(x, y) -> Tuple[float, float]:
    """
    Least-squares slope of log(y) against log(x).

    Non-positive pairs are dropped.  Fewer than two usable points give a
    slope of 0.

    Returns
    -------
    slope : float
    residual : float
        Root-mean-square residual of the fit
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if np.count_nonzero(keep) < 2:
        return 0.0, 0.0
    lx, ly = np.log(x[keep]), np.log(y[keep])
    if np.ptp(lx) == 0:
        return 0.0, 0.0
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2)))
    return float(slope), residual


def trend_slope(values) -> float:
    """
    Least-squares slope of log(values) against their index.

    Used to decide whether a sequence of positive constants grows along a
    dyadic ladder.  Zero entries are ignored.
    """
    values = np.asarray(values, dtype=float)
    index = np.arange(values.size, dtype=float)
    keep = (values > 0) & np.isfinite(values)
    if np.count_nonzero(keep) < 2:
        return 0.0
    slope, _ = np.polyfit(index[keep], np.log(values[keep]), 1)
    return float(slope)
