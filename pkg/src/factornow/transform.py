"""Per-series transformation choice and panel standardization.

Each indicator enters the factor model under whichever of four
transformations lines it up best with the target: identity (n), monthly
percent variation (m), annual percent variation (a), or a one-month lag
(l). Selection maximizes absolute Pearson correlation on the overlapping
observed sample; the sign is kept for descriptive output.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .panel import TimeSeriesPanel

TRANSFORM_CODES = ("n", "m", "a", "l")

MIN_OBS = {"n": 1, "m": 2, "a": 13, "l": 2}


@dataclass(frozen=True)
class TransformedPanel:
    """Standardized, transformed panel plus the bookkeeping to invert it."""

    panel: TimeSeriesPanel
    codes: tuple
    means: np.ndarray
    sds: np.ndarray
    correlations: np.ndarray

    def __post_init__(self):
        n = self.panel.n_series
        codes = tuple(self.codes)
        if len(codes) != n or any(c not in TRANSFORM_CODES for c in codes):
            raise ValueError("one transform code per series, drawn from n/m/a/l")
        for name in ("means", "sds", "correlations"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have one entry per series")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.sds <= 0):
            raise ValueError("standard deviations must be strictly positive")
        object.__setattr__(self, "codes", codes)


def _ratio_change(values, mask, lag, series_id=""):
    out = np.full_like(values, np.nan)
    ok = np.zeros_like(mask)
    prev_v, prev_m = np.roll(values, lag), np.roll(mask, lag)
    ok[lag:] = mask[lag:] & prev_m[lag:]
    zero_den = ok & (prev_v == 0)
    if zero_den.any():
        warnings.warn(
            f"zero denominator in percent-variation transform{' of ' + series_id if series_id else ''}; "
            f"{int(zero_den.sum())} cell(s) masked",
            RuntimeWarning,
            stacklevel=3,
        )
        ok &= ~zero_den
    with np.errstate(divide="ignore", invalid="ignore"):
        out[ok] = values[ok] / prev_v[ok] * 100.0 - 100.0
    return out, ok


def apply_transform(values, mask, code, series_id=""):
    """Apply one of the four codes to a masked vector.

    Returns (values, mask). Cells whose inputs are unavailable stay masked,
    as do cells with a zero denominator (reported as a RuntimeWarning, not
    an error).
    """
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if code not in TRANSFORM_CODES:
        raise ValueError(f"unknown transform code {code!r}")
    if int(mask.sum()) < MIN_OBS[code]:
        raise ValueError(
            f"transform {code!r} needs at least {MIN_OBS[code]} observations"
            f"{' for ' + series_id if series_id else ''}"
        )
    if code == "n":
        return np.where(mask, values, np.nan), mask.copy()
    if code == "m":
        return _ratio_change(values, mask, 1, series_id)
    if code == "a":
        return _ratio_change(values, mask, 12, series_id)
    out = np.full_like(values, np.nan)
    ok = np.zeros_like(mask)
    ok[1:] = mask[:-1]
    out[1:] = np.where(ok[1:], values[:-1], np.nan)
    return out, ok


def _overlap_corr(x_values, x_mask, x_dates, target):
    lo = int(max(x_dates[0].astype(int), target.dates[0].astype(int)))
    hi = int(min(x_dates[-1].astype(int), target.dates[-1].astype(int)))
    if hi < lo:
        return np.nan, 0
    xi = lo - int(x_dates[0].astype(int))
    ti = lo - int(target.dates[0].astype(int))
    n = hi - lo + 1
    x = x_values[xi : xi + n]
    m = x_mask[xi : xi + n]
    y = target.values[ti : ti + n]
    k = int(m.sum())
    if k < 2:
        return np.nan, k
    xs, ys = x[m], y[m]
    xc, yc = xs - xs.mean(), ys - ys.mean()
    denom = np.sqrt((xc @ xc) * (yc @ yc))
    if denom == 0:
        return np.nan, k
    return float(xc @ yc / denom), k


def select_transform(values, mask, dates, target, min_overlap=24):
    """Pick the code with the largest |correlation| against the target.

    Ties break in the order n, m, a, l. Returns (code, signed correlation).
    """
    best_code, best_corr = None, None
    for code in TRANSFORM_CODES:
        if int(np.asarray(mask, bool).sum()) < MIN_OBS[code]:
            continue
        tv, tm = apply_transform(values, mask, code)
        corr, k = _overlap_corr(tv, tm, np.asarray(dates, dtype="datetime64[M]"), target)
        if k < min_overlap or not np.isfinite(corr):
            continue
        if best_corr is None or abs(corr) > abs(best_corr):
            best_code, best_corr = code, corr
    if best_code is None:
        raise ValueError(
            f"insufficient overlap: no transform has {min_overlap} observed months "
            "in common with the target"
        )
    return best_code, best_corr


def standardize(panel, codes=None, correlations=None):
    """Center and scale each series to mean 0, variance 1 on observed cells.

    The scale is the population standard deviation (divide by the number of
    observed cells), matching the principal-component eigenproblem scaling.
    """
    values, mask = panel.values, panel.mask
    n = panel.n_series
    means = np.empty(n)
    sds = np.empty(n)
    out = np.full_like(values, np.nan)
    for i in range(n):
        obs = values[mask[:, i], i]
        if obs.size < 2:
            raise ValueError(f"series {panel.ids[i]!r} has fewer than 2 observed cells")
        mu = obs.mean()
        sd = np.sqrt(((obs - mu) ** 2).mean())
        if sd == 0:
            raise ValueError(f"series {panel.ids[i]!r} has zero variance")
        means[i], sds[i] = mu, sd
        out[mask[:, i], i] = (obs - mu) / sd
    std_panel = TimeSeriesPanel(panel.dates.copy(), out, panel.mask.copy(), panel.meta)
    return TransformedPanel(
        panel=std_panel,
        codes=tuple(codes) if codes is not None else ("n",) * n,
        means=means,
        sds=sds,
        correlations=np.asarray(correlations, float) if correlations is not None else np.zeros(n),
    )


def transform_panel(panel, target, min_overlap=24):
    """Select, apply and standardize the best transform for every series."""
    codes, corrs = [], []
    values = np.full_like(panel.values, np.nan)
    mask = np.zeros_like(panel.mask)
    for i in range(panel.n_series):
        code, corr = select_transform(
            panel.values[:, i], panel.mask[:, i], panel.dates, target, min_overlap
        )
        tv, tm = apply_transform(panel.values[:, i], panel.mask[:, i], code, panel.ids[i])
        codes.append(code)
        corrs.append(corr)
        values[:, i], mask[:, i] = tv, tm
    raw = TimeSeriesPanel(panel.dates.copy(), values, mask, panel.meta)
    return standardize(raw, codes=codes, correlations=corrs)


def transforms_report(tp):
    """Chosen code and correlation per series, ordered by |correlation|."""
    order = np.argsort(-np.abs(tp.correlations))
    return {
        "series": [
            {
                "id": tp.panel.ids[i],
                "code": tp.codes[i],
                "correlation": float(tp.correlations[i]),
            }
            for i in order
        ]
    }
