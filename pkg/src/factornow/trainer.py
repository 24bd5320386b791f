"""Grid training, screening and combination of nowcast models.

Every (p, q) order pair on a grid is backtested by expanding-window
one-step nowcasts; models are ranked by weighted absolute error, screened
for equal accuracy against the winner with Diebold-Mariano tests, and the
survivors' nowcasts are combined by their median. A final blend folds in
the plain-regression benchmark with inverse-MAE weights.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import armareg
from .factor import two_step
from .panel import TargetSeries, TimeSeriesPanel, apply_vintage, check_alignment
from .transform import apply_transform, standardize, transform_panel

BACKTEST_FIT_KWARGS = {"n_restarts": 1, "compute_se": False, "max_iter": 50}
WARM_FIT_KWARGS = {"n_restarts": 0, "compute_se": False, "max_iter": 15}


@dataclass
class BacktestReport:
    """Per-origin errors and rankings over the order grid."""

    orders: tuple
    errors: np.ndarray
    abs_errors: np.ndarray
    forecasts: np.ndarray
    pred_sd: np.ndarray
    wae: np.ndarray
    weights: np.ndarray
    best_index: tuple
    dm_pvalues: np.ndarray
    survivors: tuple
    failed: np.ndarray
    actuals: np.ndarray = None

    def position(self, orders):
        return self.orders.index(tuple(orders))

    @property
    def best_position(self):
        return self.position(self.best_index)

    def mae(self, orders=None):
        pos = self.best_position if orders is None else self.position(orders)
        return float(np.mean(self.abs_errors[:, pos]))

    def coverage(self, orders=None, level_z=1.959963984540054):
        """Share of origins whose actual lies inside the prediction band."""
        pos = self.best_position if orders is None else self.position(orders)
        return float(np.mean(np.abs(self.errors[:, pos]) <= level_z * self.pred_sd[:, pos]))


@dataclass
class GridNowcasts:
    """Full-sample refits of every grid model, pushed through the horizons."""

    orders: tuple
    points: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    variances: np.ndarray
    failed: np.ndarray


@dataclass
class NowcastResult:
    """A point nowcast with interval and component provenance."""

    horizon: int
    point: float
    ci_low: float
    ci_high: float
    components: list
    method: str

    def __post_init__(self):
        if not (self.ci_low <= self.point <= self.ci_high):
            raise ValueError("nowcast interval must bracket the point")
        total = sum(w for _, _, w in self.components)
        if self.components and abs(total - 1.0) > 1e-9:
            raise ValueError("component weights must sum to 1")

    def to_dict(self):
        return {
            "horizon": int(self.horizon),
            "point": float(self.point),
            "ci_low": float(self.ci_low),
            "ci_high": float(self.ci_high),
            "method": self.method,
            "components": [
                {
                    "orders": list(o) if isinstance(o, tuple) else o,
                    "point": float(pt),
                    "weight": float(w),
                }
                for o, pt, w in self.components
            ],
        }


def grid_orders(p_max, q_max):
    return tuple((p, q) for q in range(q_max + 1) for p in range(p_max + 1))


def backtest_grid(y, factors, h_t, p_max=4, q_max=4, weights=None, alpha_dm=0.10, seed=0, fit_kwargs=None):
    """Expanding-window one-step backtest of every (p, q) model.

    Origin h fits on the first T* - h_t + h - 1 observations and nowcasts
    the next month; the weighted absolute errors rank the grid and
    Diebold-Mariano p-values against the winner feed the survivor screen.
    Models that fail to fit at any origin are excluded from the ranking.

    Parameters
    ----------
    y, factors : array_like
        Target sample and aligned factor path.
    h_t : int
        Number of backtest origins (the last ``h_t`` months are nowcast).
    p_max, q_max : int
        Grid bounds; the grid holds (p_max + 1)(q_max + 1) models.
    weights : array_like, optional
        Nonnegative origin weights summing to one; equal weights (the
        plain mean absolute error) when omitted.
    alpha_dm : float
        Equal-accuracy screen level for the survivor set.
    seed : int
        Seed forwarded to every model fit.
    fit_kwargs : dict, optional
        Overrides for the per-cell fits (restart and iteration budgets).

    Returns
    -------
    BacktestReport
    """
    y = np.asarray(y, dtype=float).ravel()
    f = np.asarray(factors, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    t_star = len(y)
    if not (0 < h_t < t_star):
        raise ValueError("backtest window must be shorter than the sample")
    if p_max < 0 or q_max < 0:
        raise ValueError("grid bounds must be nonnegative")
    orders = grid_orders(p_max, q_max)
    m = len(orders)
    if weights is None:
        weights = np.full(h_t, 1.0 / h_t)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (h_t,) or np.any(weights < 0):
            raise ValueError("weights must be a nonnegative vector of length h_t")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
    cold_kwargs = dict(BACKTEST_FIT_KWARGS)
    warm_kwargs = dict(WARM_FIT_KWARGS)
    if fit_kwargs:
        cold_kwargs.update(fit_kwargs)
        warm_kwargs.update({k: v for k, v in fit_kwargs.items() if k != "n_restarts"})

    errors = np.full((h_t, m), np.nan)
    forecasts = np.full((h_t, m), np.nan)
    pred_sd = np.full((h_t, m), np.nan)
    actuals = np.empty(h_t)
    failed = np.zeros(m, dtype=bool)
    warm = [None] * m
    for h in range(1, h_t + 1):
        end = t_star - h_t + h - 1
        actuals[h - 1] = y[end]
        for j, (p, q) in enumerate(orders):
            if failed[j]:
                continue
            try:
                kwargs = warm_kwargs if warm[j] is not None else cold_kwargs
                model = armareg.fit_armareg(
                    y[:end], f[:end], p, q, seed=seed, start=warm[j], **kwargs
                )
                warm[j] = (model.ar, model.ma) if p + q else None
                fc = armareg.forecast(model, f[end : end + 1])
            except (ValueError, np.linalg.LinAlgError, armareg.ArmaConvergenceError) as exc:
                warnings.warn(
                    f"order ({p},{q}) failed at origin {h}: {exc}; model excluded",
                    RuntimeWarning,
                    stacklevel=2,
                )
                failed[j] = True
                errors[:, j] = np.nan
                continue
            forecasts[h - 1, j] = fc.points[0]
            errors[h - 1, j] = y[end] - fc.points[0]
            pred_sd[h - 1, j] = np.sqrt(fc.variances[0])

    abs_errors = np.abs(errors)
    wae = np.where(failed, np.inf, weights @ np.where(np.isnan(abs_errors), 0.0, abs_errors))
    best_pos = int(np.argmin(wae))
    if not np.isfinite(wae[best_pos]):
        raise RuntimeError("every grid model failed in the backtest")

    dm_pvalues = np.empty(m)
    for j in range(m):
        if failed[j]:
            dm_pvalues[j] = np.nan
        elif j == best_pos:
            dm_pvalues[j] = 1.0
        else:
            dm_pvalues[j] = diebold_mariano(errors[:, j], errors[:, best_pos])[1]

    return BacktestReport(
        orders=orders,
        errors=errors,
        abs_errors=abs_errors,
        forecasts=forecasts,
        pred_sd=pred_sd,
        wae=wae,
        weights=weights,
        best_index=orders[best_pos],
        dm_pvalues=dm_pvalues,
        survivors=tuple(
            orders[j]
            for j in range(m)
            if not failed[j] and (j == best_pos or dm_pvalues[j] >= alpha_dm)
        ),
        failed=failed,
        actuals=actuals,
    )


def diebold_mariano(e_a, e_b, loss="absolute"):
    """Equal-predictive-accuracy test on two forecast-error sequences.

    The loss differential's long-run variance uses a Bartlett kernel with
    truncation floor(H^(1/3)); identical errors return p = 1 by convention.
    """
    e_a = np.asarray(e_a, dtype=float).ravel()
    e_b = np.asarray(e_b, dtype=float).ravel()
    if e_a.shape != e_b.shape:
        raise ValueError("error sequences must have equal length")
    h = e_a.size
    if h < 8:
        raise ValueError("need at least 8 forecast errors")
    if loss == "absolute":
        d = np.abs(e_a) - np.abs(e_b)
    elif loss == "squared":
        d = e_a**2 - e_b**2
    else:
        raise ValueError(f"unknown loss {loss!r}")
    d_bar = d.mean()
    dc = d - d_bar
    lag_trunc = int(np.floor(h ** (1.0 / 3.0)))
    lrv = float(dc @ dc) / h
    for k in range(1, lag_trunc + 1):
        gamma_k = float(dc[k:] @ dc[:-k]) / h
        lrv += 2.0 * (1.0 - k / (lag_trunc + 1.0)) * gamma_k
    if lrv <= 0:
        return 0.0, 1.0
    statistic = d_bar / np.sqrt(lrv / h)
    return float(statistic), float(2.0 * stats.norm.sf(abs(statistic)))


def grid_nowcast(y, factors, factors_future, p_max=4, q_max=4, seed=0, fit_kwargs=None):
    """Fit every grid model on the full sample and nowcast both horizons."""
    orders = grid_orders(p_max, q_max)
    m = len(orders)
    h = np.asarray(factors_future, dtype=float).shape[0]
    points = np.full((h, m), np.nan)
    ci_low = np.full((h, m), np.nan)
    ci_high = np.full((h, m), np.nan)
    variances = np.full((h, m), np.nan)
    failed = np.zeros(m, dtype=bool)
    kwargs = dict(fit_kwargs or {})
    for j, (p, q) in enumerate(orders):
        try:
            model = armareg.fit_armareg(y, factors, p, q, seed=seed, **kwargs)
            fc = armareg.forecast(model, factors_future)
        except (ValueError, np.linalg.LinAlgError, armareg.ArmaConvergenceError) as exc:
            warnings.warn(f"order ({p},{q}) failed on the full sample: {exc}", RuntimeWarning, stacklevel=2)
            failed[j] = True
            continue
        points[:, j] = fc.points
        ci_low[:, j] = fc.ci_low
        ci_high[:, j] = fc.ci_high
        variances[:, j] = fc.variances
    return GridNowcasts(
        orders=orders, points=points, ci_low=ci_low, ci_high=ci_high, variances=variances, failed=failed
    )


def combine_median(report, grid_nowcasts, alpha_dm=0.10):
    """Median combination of the statistically-equal best models.

    Survivors are the backtest winner plus every model whose DM p-value
    against it is at least ``alpha_dm``; interval bounds combine as the
    medians of the members' bounds.
    """
    best_pos = report.best_position
    keep = [
        j
        for j in range(len(report.orders))
        if not (report.failed[j] or grid_nowcasts.failed[j])
        and (j == best_pos or report.dm_pvalues[j] >= alpha_dm)
    ]
    if not keep:
        raise RuntimeError("no surviving model could be refit on the full sample")
    results = []
    w = 1.0 / len(keep)
    for h in range(grid_nowcasts.points.shape[0]):
        # the median point sits between the medians of the bounds because
        # the median is monotone and every point lies inside its own band
        results.append(
            NowcastResult(
                horizon=h + 1,
                point=float(np.median(grid_nowcasts.points[h, keep])),
                ci_low=float(np.median(grid_nowcasts.ci_low[h, keep])),
                ci_high=float(np.median(grid_nowcasts.ci_high[h, keep])),
                components=[(report.orders[j], float(grid_nowcasts.points[h, j]), w) for j in keep],
                method="median_combination",
            )
        )
    return results


def final_blend(combined, benchmark, mae_combined, mae_benchmark):
    """Inverse-MAE weighted average of the combined and benchmark nowcasts."""
    if mae_combined <= 0 or mae_benchmark <= 0:
        raise ValueError("MAEs must be strictly positive")
    if combined.horizon != benchmark.horizon:
        raise ValueError("horizons disagree")
    w_c = (1.0 / mae_combined) / (1.0 / mae_combined + 1.0 / mae_benchmark)
    w_b = 1.0 - w_c
    return NowcastResult(
        horizon=combined.horizon,
        point=w_c * combined.point + w_b * benchmark.point,
        ci_low=w_c * combined.ci_low + w_b * benchmark.ci_low,
        ci_high=w_c * combined.ci_high + w_b * benchmark.ci_high,
        components=[
            (("combined", "combined"), float(combined.point), float(w_c)),
            (("benchmark", "benchmark"), float(benchmark.point), float(w_b)),
        ],
        method="final_blend",
    )


def naive_factor(tp):
    """Equal-weight factor: the row mean of the standardized panel."""
    values, mask = tp.panel.values, tp.panel.mask
    counts = mask.sum(axis=1)
    sums = np.nansum(np.where(mask, values, 0.0), axis=1)
    out = np.full(values.shape[0], np.nan)
    ok = counts > 0
    out[ok] = sums[ok] / counts[ok]
    return out


def run_comparators(
    y,
    tp,
    h_t,
    include_traditional=True,
    p_max=4,
    q_max=4,
    r=1,
    k=1,
    seed=0,
    fit_kwargs=None,
    full_report=None,
):
    """MAE table for the full model, the naive factor, and the
    traditional-information-only pipeline.

    Cumulative mean absolute errors are reported per origin so the three
    curves can be charted against each other. Pass an existing
    ``full_report`` to avoid re-running the main grid backtest.
    """
    y_vals = y.values if isinstance(y, TargetSeries) else np.asarray(y, float)
    t_star = len(y_vals)

    table = {}

    if full_report is None:
        fm = two_step(tp, r=r, k=k, seed=seed, n_draws=200)
        full_report = backtest_grid(
            y_vals, fm.smoothed_factors[:t_star], h_t, p_max=p_max, q_max=q_max,
            seed=seed, fit_kwargs=fit_kwargs,
        )
    table["full"] = _comparator_row(full_report)

    naive = naive_factor(tp)[:t_star]
    naive_report = backtest_grid(y_vals, naive, h_t, p_max=0, q_max=0, seed=seed, fit_kwargs=fit_kwargs)
    table["naive"] = _comparator_row(naive_report)

    if include_traditional:
        blocks = [m.block for m in tp.panel.meta]
        keep = [
            tp.panel.ids[i]
            for i in range(tp.panel.n_series)
            if blocks[i] in ("traditional", "high_freq_traditional")
        ]
        if len(keep) == tp.panel.n_series:
            table["traditional"] = table["full"]
        elif keep:
            sub = standardize(tp.panel.select_series(keep))
            fm_t = two_step(sub, r=r, k=k, seed=seed, n_draws=200)
            trad_report = backtest_grid(
                y_vals, fm_t.smoothed_factors[:t_star], h_t, p_max=p_max, q_max=q_max,
                seed=seed, fit_kwargs=fit_kwargs,
            )
            table["traditional"] = _comparator_row(trad_report)
    return table


def _comparator_row(report):
    ae = report.abs_errors[:, report.best_position]
    cumulative = np.cumsum(ae) / np.arange(1, ae.size + 1)
    return {
        "best_orders": list(report.best_index),
        "mae": float(np.mean(ae)),
        "median_ae": float(np.median(ae)),
        "cumulative_mae": [float(v) for v in cumulative],
    }


def vintage_study(
    panel,
    target,
    cut_dates,
    h_t=36,
    p_max=4,
    q_max=4,
    r=1,
    k=1,
    alpha_dm=0.10,
    seed=0,
    target_release_day=25,
    target_lag=2,
    fit_kwargs=None,
    min_overlap=24,
):
    """Nowcast table across dataset vintages.

    Each cut date restricts the panel to the releases available then,
    truncates the target to the months already published, reruns the
    pipeline and records the two open months' nowcasts. Rows are months,
    columns are cut dates.
    """
    check_alignment(panel, target)
    codes = transform_panel(panel, target, min_overlap=min_overlap).codes

    columns = {}
    months = set()
    for cut in cut_dates:
        vintage = apply_vintage(panel, cut)
        cut_day = np.datetime64(str(cut), "D")
        released = [
            t
            for t in range(len(target))
            if (target.dates[t] + target_lag).astype("datetime64[D]")
            + np.timedelta64(target_release_day - 1, "D")
            <= cut_day
        ]
        if len(released) < h_t + 5:
            raise ValueError(f"cut date {cut} leaves too little published target history")
        t_star = released[-1] + 1
        y_cut = TargetSeries(target.dates[:t_star], target.values[:t_star])

        values = np.full_like(vintage.values, np.nan)
        mask = np.zeros_like(vintage.mask)
        for i in range(vintage.n_series):
            values[:, i], mask[:, i] = apply_transform(
                vintage.values[:, i], vintage.mask[:, i], codes[i], vintage.ids[i]
            )
        tp = standardize(TimeSeriesPanel(vintage.dates, values, mask, vintage.meta), codes=codes)

        fm = two_step(tp, r=r, k=k, seed=seed, n_draws=200)
        f_hist = fm.smoothed_factors[:t_star]
        f_future = fm.smoothed_factors[t_star : t_star + 2]
        report = backtest_grid(
            y_cut.values, f_hist, h_t, p_max=p_max, q_max=q_max, seed=seed, fit_kwargs=fit_kwargs
        )
        nc = grid_nowcast(
            y_cut.values, f_hist, f_future, p_max=p_max, q_max=q_max, seed=seed,
            fit_kwargs=fit_kwargs,
        )
        combined = combine_median(report, nc, alpha_dm=alpha_dm)
        col = {}
        for h, res in enumerate(combined):
            month = str(target.dates[0] + t_star + h)
            col[month] = res.point
            months.add(month)
        columns[str(cut)] = col

    months = sorted(months)
    return {
        "months": months,
        "cut_dates": [str(c) for c in cut_dates],
        "table": {
            cut: {m: (col[m] if m in col else None) for m in months} for cut, col in columns.items()
        },
    }
