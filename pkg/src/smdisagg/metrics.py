"""Evaluation metrics: spatial RMSE, histogram KL divergence, Z-test,
and error-fraction summaries."""

from __future__ import annotations

import warnings

import numpy as np
from scipy import stats

from .errors import DimensionError, DomainError
from .grid import Grid

#: default histogram setup for soil-moisture densities
SM_KLD_BINS = 50
SM_KLD_RANGE = (0.0, 0.5)
KLD_EPS = 1e-12


def rmse(est: Grid | np.ndarray, truth: Grid | np.ndarray, mask: np.ndarray | None = None) -> float:
    """Root mean square difference over (optionally masked) pixels."""
    e = est.values if isinstance(est, Grid) else np.asarray(est, dtype=float)
    t = truth.values if isinstance(truth, Grid) else np.asarray(truth, dtype=float)
    if e.shape != t.shape:
        raise DimensionError(f"shape mismatch {e.shape} vs {t.shape}")
    diff = e - t
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != e.shape:
            raise DimensionError("mask shape does not match grids")
        diff = diff[mask]
        if diff.size == 0:
            raise DomainError("mask selects no pixels")
    return float(np.sqrt(np.mean(diff * diff)))


def error_sd(est: Grid | np.ndarray, truth: Grid | np.ndarray, mask: np.ndarray | None = None) -> float:
    """Standard deviation of the pixel errors."""
    e = est.values if isinstance(est, Grid) else np.asarray(est, dtype=float)
    t = truth.values if isinstance(truth, Grid) else np.asarray(truth, dtype=float)
    diff = (e - t).ravel() if mask is None else (e - t)[np.asarray(mask, dtype=bool)]
    return float(np.std(diff))


def rmse_by_landcover(est: Grid, truth: Grid, lc: Grid) -> dict[int, float]:
    """Per-class RMSE keyed by LC class id."""
    out = {}
    for cls in np.unique(lc.values[np.isfinite(lc.values)]).astype(int):
        out[int(cls)] = rmse(est, truth, mask=lc.values == cls)
    return out


def kld(
    est_samples: np.ndarray,
    truth_samples: np.ndarray,
    bins: int = SM_KLD_BINS,
    value_range: tuple[float, float] | None = None,
    direction: str = "truth_vs_est",
) -> float:
    """KL divergence between histogram densities of two sample sets.

    Default direction is KL(p_truth || p_est) with natural log, shared
    equal-width bins, and epsilon smoothing followed by renormalization
    (so the result is always >= 0).  value_range defaults to the pooled
    sample range.
    """
    a = np.asarray(est_samples, dtype=float).ravel()
    b = np.asarray(truth_samples, dtype=float).ravel()
    if a.size < 10 or b.size < 10:
        raise DomainError("need at least 10 samples per set")
    if value_range is None:
        lo = min(a.min(), b.min())
        hi = max(a.max(), b.max())
        if lo == hi:
            hi = lo + 1.0
        value_range = (lo, hi)
    c_est, _ = np.histogram(a, bins=bins, range=value_range)
    c_tru, _ = np.histogram(b, bins=bins, range=value_range)
    p_est = (c_est / c_est.sum() + KLD_EPS)
    p_tru = (c_tru / c_tru.sum() + KLD_EPS)
    p_est /= p_est.sum()
    p_tru /= p_tru.sum()
    if direction == "truth_vs_est":
        p, q = p_tru, p_est
    elif direction == "est_vs_truth":
        p, q = p_est, p_tru
    else:
        raise DomainError(f"unknown KLD direction {direction!r}")
    return float(np.sum(p * np.log(p / q)))


def ztest_threshold(daily_errors: np.ndarray, threshold: float, significance: float = 0.05):
    """One-sided test of H0: mean absolute error < threshold.

    Returns (passed, statistic).  The test passes when the data do not
    reject H0 at the given significance, i.e. the standardized mean
    stays below the upper critical value.  Fewer than 30 samples fall
    back to a t critical value with a warning.
    """
    err = np.abs(np.asarray(daily_errors, dtype=float).ravel())
    n = err.size
    if n == 0:
        raise DomainError("no errors supplied")
    mean = float(err.mean())
    sd = float(err.std(ddof=1)) if n > 1 else 0.0
    if sd == 0.0:
        return mean < threshold, -np.inf if mean < threshold else np.inf
    z = (mean - threshold) / (sd / np.sqrt(n))
    if n < 30:
        warnings.warn(f"only {n} samples; using t critical value", stacklevel=2)
        crit = float(stats.t.ppf(1.0 - significance, df=n - 1))
    else:
        crit = float(stats.norm.ppf(1.0 - significance))
    return bool(z < crit), float(z)


def error_fraction_below(est: Grid | np.ndarray, truth: Grid | np.ndarray, level: float) -> float:
    """Fraction of pixels with absolute error below level."""
    e = est.values if isinstance(est, Grid) else np.asarray(est, dtype=float)
    t = truth.values if isinstance(truth, Grid) else np.asarray(truth, dtype=float)
    if e.shape != t.shape:
        raise DimensionError(f"shape mismatch {e.shape} vs {t.shape}")
    return float(np.mean(np.abs(e - t) < level))
