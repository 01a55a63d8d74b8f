"""Binning, jackknife, and weighted fits for correlated Monte Carlo series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimatorExhausted, InsufficientData

MIN_BINS = 8
DEFAULT_BLOCK = 5000


@dataclass
class BinnedSeries:
    """Non-overlapping block means of a raw series."""

    means: np.ndarray
    block_size: int
    n_raw: int

    @property
    def n_bins(self) -> int:
        return len(self.means)

    @property
    def mean(self) -> float:
        return float(np.mean(self.means))

    @property
    def stderr(self) -> float:
        n = self.n_bins
        return float(np.std(self.means, ddof=1) / np.sqrt(n))


def bin_series(series, block_size: int = DEFAULT_BLOCK, min_bins: int = MIN_BINS) -> BinnedSeries:
    """Block the series into complete bins, dropping the partial tail."""
    series = np.asarray(series, dtype=np.float64)
    n_bins = len(series) // block_size
    if n_bins < min_bins:
        raise InsufficientData(
            f"{len(series)} samples give {n_bins} blocks of {block_size}; "
            f"need at least {min_bins}")
    trimmed = series[:n_bins * block_size]
    means = trimmed.reshape(n_bins, block_size).mean(axis=1)
    return BinnedSeries(means=means, block_size=block_size, n_raw=len(series))


def jackknife_log(binned: BinnedSeries) -> tuple[float, float]:
    """(-ln of the mean, delete-one jackknife error).  The central value
    is exactly -ln(grand mean); only the error comes from the replicates."""
    m = binned.means
    n = len(m)
    total = m.sum()
    grand = total / n
    if grand <= 0.0:
        raise EstimatorExhausted(
            f"mean of the series is {grand:.3e}; -ln undefined")
    repl = (total - m) / (n - 1)
    if np.any(repl <= 0.0):
        raise EstimatorExhausted("a jackknife replicate is non-positive")
    theta = -np.log(repl)
    err = np.sqrt((n - 1) / n * np.sum((theta - theta.mean()) ** 2))
    return -float(np.log(grand)), float(err)


def jackknife_combine(binned_list: list[BinnedSeries], fn) -> tuple[float, float]:
    """Delete-one jackknife of fn(mean_1, ..., mean_k) over shared bins,
    propagating the correlations between the series."""
    mats = np.stack([b.means for b in binned_list])
    n = mats.shape[1]
    if any(b.n_bins != n for b in binned_list):
        raise InsufficientData("series must share the same binning")
    totals = mats.sum(axis=1)
    center = fn(*(totals / n))
    repl = np.empty(n)
    for k in range(n):
        repl[k] = fn(*((totals - mats[:, k]) / (n - 1)))
    err = np.sqrt((n - 1) / n * np.sum((repl - repl.mean()) ** 2))
    return float(center), float(err)


@dataclass
class FitResult:
    slope: float
    intercept: float
    slope_err: float
    intercept_err: float
    chi2: float
    dof: int
    r_squared: float

    @property
    def chi2_per_dof(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else np.nan


def fit_linear(x, y, yerr=None) -> FitResult:
    """Weighted least-squares line y = slope*x + intercept.  With no
    errors given, all points get unit weight and the parameter errors
    are scaled by the residual variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2:
        raise InsufficientData("need at least two points")
    scale_by_residuals = yerr is None
    w = np.ones_like(x) if yerr is None else 1.0 / np.asarray(yerr, dtype=np.float64) ** 2
    sw, swx, swy = w.sum(), (w * x).sum(), (w * y).sum()
    swxx, swxy = (w * x * x).sum(), (w * x * y).sum()
    delta = sw * swxx - swx ** 2
    slope = (sw * swxy - swx * swy) / delta
    intercept = (swxx * swy - swx * swxy) / delta
    resid = y - slope * x - intercept
    chi2 = float(np.sum(w * resid ** 2))
    dof = len(x) - 2
    var_slope = sw / delta
    var_intercept = swxx / delta
    if scale_by_residuals and dof > 0:
        var_slope *= chi2 / dof
        var_intercept *= chi2 / dof
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(slope=float(slope), intercept=float(intercept),
                     slope_err=float(np.sqrt(var_slope)),
                     intercept_err=float(np.sqrt(var_intercept)),
                     chi2=chi2, dof=dof, r_squared=r2)
