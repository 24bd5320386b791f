"""Stationarity diagnostics for factors and idiosyncratic residuals.

The factor path is checked with an augmented Dickey-Fuller regression
whose lag order is picked by BIC; p-values interpolate MacKinnon's (1994)
response-surface approximation of the Dickey-Fuller distribution. The
idiosyncratic panel is screened by Fisher-type pooling of per-series ADF
p-values, a deliberately lighter stand-in for a full panel unit-root
procedure: the residuals are already defactored by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

SPECS = ("constant", "none", "trend")

# MacKinnon (1994) response-surface constants for the single-series tau
# distribution: cdf(stat) ~= Phi(polynomial(stat)), with a small-/large-stat
# split and hard saturation outside the tabulated range.
_MACKINNON = {
    "none": {
        "star": -1.04,
        "min": -19.04,
        "max": np.inf,
        "small": (0.6344, 1.2378, 0.032496),
        "large": (0.4797, 0.93557, -0.06999, 0.033066),
    },
    "constant": {
        "star": -1.61,
        "min": -18.83,
        "max": 2.74,
        "small": (2.1659, 1.4412, 0.038269),
        "large": (1.7339, 0.93202, -0.12745, -0.010368),
    },
    "trend": {
        "star": -2.89,
        "min": -16.18,
        "max": 0.7,
        "small": (3.2512, 1.6047, 0.049588),
        "large": (2.5261, 0.61654, -0.37956, -0.060285),
    },
}


@dataclass(frozen=True)
class UnitRootResult:
    statistic: float
    p_value: float
    lags_used: int
    spec: str


def mackinnon_pvalue(statistic, spec="constant"):
    """Approximate Dickey-Fuller p-value by the response surface."""
    tab = _MACKINNON[spec]
    if statistic > tab["max"]:
        return 1.0
    if statistic < tab["min"]:
        return 0.0
    coefs = tab["small"] if statistic <= tab["star"] else tab["large"]
    z = sum(c * statistic**i for i, c in enumerate(coefs))
    return float(stats.norm.cdf(z))


def _adf_design(y, lags, spec):
    dy = np.diff(y)
    rows = len(dy) - lags
    cols = [y[lags:-1]]
    for i in range(1, lags + 1):
        cols.append(dy[lags - i : len(dy) - i])
    if spec in ("constant", "trend"):
        cols.append(np.ones(rows))
    if spec == "trend":
        cols.append(np.arange(rows, dtype=float))
    x = np.column_stack(cols)
    return dy[lags:], x


def _adf_stat(y, lags, spec):
    target, x = _adf_design(y, lags, spec)
    beta, *_ = np.linalg.lstsq(x, target, rcond=None)
    resid = target - x @ beta
    dof = len(target) - x.shape[1]
    if dof <= 0:
        raise ValueError("series too short for the requested lag order")
    sigma2 = float(resid @ resid) / dof
    xtx_inv = np.linalg.inv(x.T @ x)
    se = np.sqrt(sigma2 * xtx_inv[0, 0])
    stat = float(beta[0] / se)
    bic = len(target) * np.log(max(float(resid @ resid) / len(target), 1e-300)) + x.shape[
        1
    ] * np.log(len(target))
    return stat, bic


def adf_test(series, max_lags=None, spec="constant"):
    """Augmented Dickey-Fuller test with BIC lag selection.

    The null is a unit root; small p-values indicate stationarity. The
    statistic is invariant to positive affine rescaling of the series
    (under the constant/trend specs).
    """
    y = np.asarray(series, dtype=float).ravel()
    y = y[np.isfinite(y)]
    if y.size < 20:
        raise ValueError("need at least 20 observations for the unit-root test")
    if spec not in SPECS:
        raise ValueError(f"unknown spec {spec!r}")
    if max_lags is None:
        max_lags = int(np.floor(12.0 * (y.size / 100.0) ** 0.25))
    max_lags = int(min(max_lags, (y.size - 10) // 2))

    # lag order chosen on the common sample trimmed at max_lags, then the
    # test statistic is recomputed on the full effective sample
    best_lag, best_bic = 0, np.inf
    for lag in range(max_lags + 1):
        trimmed = y[max_lags - lag :]
        _, bic = _adf_stat(trimmed, lag, spec)
        if bic < best_bic:
            best_lag, best_bic = lag, bic
    stat, _ = _adf_stat(y, best_lag, spec)
    return UnitRootResult(
        statistic=stat,
        p_value=mackinnon_pvalue(stat, spec),
        lags_used=best_lag,
        spec=spec,
    )


def pooled_idio_test(residuals, max_lags=None):
    """Fisher-type pooled unit-root screen of a residual panel.

    Per-series ADF p-values p_i combine into (-2 sum log p_i - 2N) /
    sqrt(4N), which is asymptotically standard normal under a pooled unit
    root; large positive values reject it (all series stationary).
    """
    e = np.asarray(residuals, dtype=float)
    if e.ndim != 2:
        raise ValueError("residuals must be a T x N matrix")
    n = e.shape[1]
    log_p = []
    for i in range(n):
        col = e[:, i]
        col = col[np.isfinite(col)]
        if col.size < 20:
            raise ValueError(f"residual column {i} has fewer than 20 observations")
        if np.ptp(col) == 0:
            raise ValueError(f"residual column {i} is degenerate (constant)")
        res = adf_test(col, max_lags=max_lags, spec="constant")
        log_p.append(np.log(max(res.p_value, 1e-300)))
    statistic = float((-2.0 * np.sum(log_p) - 2.0 * n) / np.sqrt(4.0 * n))
    return statistic, float(stats.norm.sf(statistic))


def diagnostics_report(factor_results, pooled):
    doc = {
        "factor_adf": [
            {
                "factor": j,
                "statistic": float(res.statistic),
                "p_value": float(res.p_value),
                "lags_used": int(res.lags_used),
                "spec": res.spec,
                "stationary_at_5pct": bool(res.p_value < 0.05),
            }
            for j, res in enumerate(factor_results)
        ],
        "idiosyncratic_pooled": {
            "statistic": float(pooled[0]),
            "p_value": float(pooled[1]),
            "stationary_at_5pct": bool(pooled[1] < 0.05),
        },
    }
    doc["warnings"] = []
    if any(not row["stationary_at_5pct"] for row in doc["factor_adf"]):
        doc["warnings"].append("factor unit root not rejected at the 5% level")
    if not doc["idiosyncratic_pooled"]["stationary_at_5pct"]:
        doc["warnings"].append("pooled idiosyncratic unit root not rejected at the 5% level")
    return doc
