"""Chain-quality statistics: autocorrelation, effective sample size,
Geweke-style convergence checks and acceptance rates, plus the report table
laid out as raw / after burn-in / after burn-in and thinning."""

from __future__ import annotations

import numpy as np
import pandas as pd
from scipy.special import ndtr

from .validation import DegenerateSeriesError, ValidationError

__all__ = [
    "acf",
    "effective_sample_size_ratio",
    "geweke_cd",
    "acceptance_rate",
    "chain_report",
]


def _check_series(series, min_len=2):
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValidationError(f"series must be 1-dimensional, got shape {x.shape}")
    if x.shape[0] < min_len:
        raise DegenerateSeriesError(f"series needs at least {min_len} points, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("series contains non-finite values")
    return x


def acf(series, lag):
    """Sample autocorrelation at the given lag (n-denominator estimator,
    so |acf| <= 1 always and the value is symmetric under series reversal)."""
    x = _check_series(series)
    lag = int(lag)
    if lag < 0 or lag >= x.shape[0]:
        raise ValidationError(f"lag must lie in [0, {x.shape[0] - 1}], got {lag}")
    dev = x - x.mean()
    denom = float(dev @ dev)
    if denom == 0.0:
        raise DegenerateSeriesError("autocorrelation undefined for a zero-variance series")
    if lag == 0:
        return 1.0
    return float(dev[:-lag] @ dev[lag:]) / denom


def effective_sample_size_ratio(series):
    """ESS divided by the series length, in (0, 1].

    The autocorrelation sum is truncated by Geyer's initial positive sequence
    (consecutive lag-pair sums are added while they stay positive); ratios
    above 1 from antithetic behaviour are capped at 1.
    """
    x = _check_series(series, min_len=10)
    n = x.shape[0]
    dev = x - x.mean()
    denom = float(dev @ dev)
    if denom == 0.0:
        raise DegenerateSeriesError("ESS undefined for a zero-variance series")
    rho_sum = 0.0
    lag = 1
    while lag + 1 < n:
        pair = (float(dev[:-lag] @ dev[lag:])
                + float(dev[:-(lag + 1)] @ dev[(lag + 1):])) / denom
        if pair <= 0.0:
            break
        rho_sum += pair
        lag += 2
    ratio = 1.0 / (1.0 + 2.0 * rho_sum)
    return float(min(ratio, 1.0))


def _spectral_var_at_zero(x):
    """Spectral density at frequency zero over n, via a Bartlett lag window
    of width floor(sqrt(n)); this is the variance of the window mean."""
    n = x.shape[0]
    dev = x - x.mean()
    gamma0 = float(dev @ dev) / n
    width = int(np.sqrt(n))
    s = gamma0
    for lag in range(1, width + 1):
        gamma = float(dev[:-lag] @ dev[lag:]) / n
        s += 2.0 * (1.0 - lag / (width + 1.0)) * gamma
    return max(s, 0.0) / n


def geweke_cd(series, frac_a=0.1, frac_b=0.5):
    """Two-sided p-value for equality of the means of the first ``frac_a``
    and last ``frac_b`` of the series, with spectral variance estimates."""
    if frac_a <= 0 or frac_b <= 0 or frac_a + frac_b > 1.0:
        raise ValidationError("need frac_a > 0, frac_b > 0 and frac_a + frac_b <= 1")
    x = _check_series(series)
    n = x.shape[0]
    n_a = int(np.floor(frac_a * n))
    n_b = int(np.floor(frac_b * n))
    if n_a < 20 or n_b < 20:
        raise DegenerateSeriesError("both comparison windows need at least 20 points")
    a = x[:n_a]
    b = x[n - n_b:]
    var = _spectral_var_at_zero(a) + _spectral_var_at_zero(b)
    if var == 0.0:
        raise DegenerateSeriesError("zero spectral variance in the comparison windows")
    z = (a.mean() - b.mean()) / np.sqrt(var)
    return float(2.0 * (1.0 - ndtr(abs(z))))


def acceptance_rate(accept_flags):
    """Mean of 0/1 acceptance indicators."""
    flags = np.asarray(accept_flags, dtype=float)
    if flags.size == 0:
        raise ValidationError("acceptance rate undefined for an empty flag list")
    if np.any((flags != 0.0) & (flags != 1.0)):
        raise ValidationError("acceptance flags must be 0 or 1")
    return float(flags.mean())


def _series_stats(x, lags=(1, 10, 30)):
    """Per-series statistics; undefined entries (short or degenerate series)
    are reported as NaN instead of failing the whole table."""
    out = {}
    for lag in lags:
        try:
            out[f"ACF({lag})"] = acf(x, lag) if lag < x.shape[0] else np.nan
        except (DegenerateSeriesError, ValidationError):
            out[f"ACF({lag})"] = np.nan
    for key, fn in (("ESS", effective_sample_size_ratio), ("CD p-val", geweke_cd)):
        try:
            out[key] = fn(x)
        except (DegenerateSeriesError, ValidationError):
            out[key] = np.nan
    return out


def chain_report(trace, names, burn_in, thin, groups=None, accept=None,
                 lags=(1, 10, 30)):
    """Diagnostics table over three row sections: the raw series, the series
    after burn-in, and the series after burn-in and thinning.

    trace : (n_iter, P) per-iteration parameter traces.
    groups : mapping of column label -> list of trace column names; grouped
        statistics are the mean of the member series' statistics.
    accept : optional mapping of column label -> realized acceptance rate,
        reported in the first two sections only (thinned series have none).
    """
    trace = np.asarray(trace, dtype=float)
    names = list(names)
    if trace.ndim != 2 or trace.shape[1] != len(names):
        raise ValidationError("trace and names are inconsistent")
    if groups is None:
        groups = {n: [n] for n in names}
    col_idx = {n: i for i, n in enumerate(names)}

    sections = {
        f"raw ({trace.shape[0]} obs.)": trace,
        f"burn-in ({trace.shape[0] - burn_in} obs.)": trace[burn_in:],
    }
    thinned = trace[burn_in:][thin - 1::thin]
    sections[f"burn-in + thin {thin} ({thinned.shape[0]} obs.)"] = thinned

    rows = []
    for section, data in sections.items():
        per_label = {
            label: [_series_stats(data[:, col_idx[m]], lags) for m in members]
            for label, members in groups.items()
        }
        stat_names = [f"ACF({lag})" for lag in lags] + ["ESS", "CD p-val"]
        if accept is not None and not section.startswith("burn-in + thin"):
            stat_names.insert(len(lags), "Acc.")
        for stat in stat_names:
            row = {"section": section, "statistic": stat}
            for label in groups:
                if stat == "Acc.":
                    row[label] = accept.get(label, np.nan)
                else:
                    row[label] = float(np.mean([s[stat] for s in per_label[label]]))
            rows.append(row)
    return pd.DataFrame(rows)
