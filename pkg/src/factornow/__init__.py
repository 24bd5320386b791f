"""Dynamic-factor nowcasting of monthly activity indicators.

The pipeline: ingest a ragged-edge monthly panel, pick per-series
transformations against the target, screen auxiliary regressors with
rolling LASSO, extract a common factor by the two-step
principal-components + Kalman-smoother method, train a grid of
factor regressions with ARMA errors by expanding-window backtest, and
combine the statistically equal best models into the published nowcast.
"""

from .panel import (
    PanelSchema,
    SeriesMeta,
    TargetSeries,
    TimeSeriesPanel,
    apply_vintage,
    availability_ratio,
    load_panel,
    load_target,
    save_panel,
)
from .transform import TransformedPanel, apply_transform, select_transform, standardize, transform_panel
from .select import LassoFit, SelectionResult, lasso_fit, lasso_path_cv, rolling_select
from .factor import (
    EigenReport,
    FactorModel,
    bai_confidence_intervals,
    estimate_num_factors,
    fit_var,
    kalman_smooth,
    pc_extract,
    smoothed_loadings_mc,
    two_step,
)
from .armareg import ArmaRegModel, Forecast, fit_armareg, forecast, ljung_box
from .trainer import (
    BacktestReport,
    NowcastResult,
    backtest_grid,
    combine_median,
    diebold_mariano,
    final_blend,
    grid_nowcast,
    run_comparators,
    vintage_study,
)
from .diag import UnitRootResult, adf_test, pooled_idio_test

__version__ = "0.1.0"

__all__ = [
    "PanelSchema",
    "SeriesMeta",
    "TargetSeries",
    "TimeSeriesPanel",
    "apply_vintage",
    "availability_ratio",
    "load_panel",
    "load_target",
    "save_panel",
    "TransformedPanel",
    "apply_transform",
    "select_transform",
    "standardize",
    "transform_panel",
    "LassoFit",
    "SelectionResult",
    "lasso_fit",
    "lasso_path_cv",
    "rolling_select",
    "EigenReport",
    "FactorModel",
    "bai_confidence_intervals",
    "estimate_num_factors",
    "fit_var",
    "kalman_smooth",
    "pc_extract",
    "smoothed_loadings_mc",
    "two_step",
    "ArmaRegModel",
    "Forecast",
    "fit_armareg",
    "forecast",
    "ljung_box",
    "BacktestReport",
    "NowcastResult",
    "backtest_grid",
    "combine_median",
    "diebold_mariano",
    "final_blend",
    "grid_nowcast",
    "run_comparators",
    "vintage_study",
    "UnitRootResult",
    "adf_test",
    "pooled_idio_test",
    "__version__",
]
