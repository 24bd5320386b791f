"""Command-line front door for the nowcasting pipeline.

Subcommands mirror the pipeline stages: ``ingest``, ``select``, ``fit``,
``backtest``, ``nowcast``, ``vintage`` and ``report``, plus ``fixture`` to
materialize the bundled synthetic dataset. Every run writes JSON/CSV
artifacts (plot-ready data, not rendered charts) under a run directory,
along with a manifest of the effective configuration. Runs are
deterministic given (inputs, seed): artifacts are byte-identical across
re-runs.

Exit codes: 0 success, 1 numeric/convergence failure, 2 input or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, armareg, diag, factor, select, trainer, transform
from .panel import (
    PanelSchema,
    TargetSeries,
    apply_vintage,
    availability_ratio,
    load_panel,
    load_target,
    save_panel,
)
from .synthetic import write_fixture

DEFAULT_SCHEMA = Path(__file__).parent / "data" / "default_schema.json"


@dataclass
class RunConfig:
    """Effective settings of one pipeline run; defaults follow the method's
    published configuration (36-month windows, 10% screens, order caps of
    4, one VAR lag, 95% bands)."""

    panel_path: str = ""
    target_path: str = ""
    schema_path: str = ""
    out_dir: str = "run"
    h_g: int = 36
    h_t: int = 36
    alpha_select: float = 0.10
    alpha_dm: float = 0.10
    p_max: int = 4
    q_max: int = 4
    r: str = "auto"
    k: int = 1
    ci_level: float = 0.95
    weights_spec: str = "equal"
    seed: int = 0
    as_of: str = ""
    n_draws: int = 1000
    backtest_restarts: int = 1
    min_overlap: int = 24
    target_release_day: int = 25
    target_lag: int = 2
    cut_dates: tuple = ()
    apply_selection: bool = True

    def resolved_r(self):
        if isinstance(self.r, str) and self.r != "auto":
            return int(self.r)
        return self.r

    def weights(self):
        if self.weights_spec == "equal":
            return None
        values = np.asarray([float(w) for w in str(self.weights_spec).split(",")], dtype=float)
        if values.size != self.h_t:
            raise ValueError(f"weights vector has {values.size} entries, expected h_t={self.h_t}")
        if np.any(values < 0) or abs(values.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        return values

    def fit_kwargs(self):
        return {"n_restarts": int(self.backtest_restarts), "compute_se": False}


def _load_config(args):
    cfg = RunConfig()
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = dataclasses.replace(cfg, **{k: (tuple(v) if k == "cut_dates" else v) for k, v in doc.items()})
    for f in dataclasses.fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            cfg = dataclasses.replace(cfg, **{f.name: tuple(flag) if f.name == "cut_dates" else flag})
    if not cfg.schema_path and DEFAULT_SCHEMA.exists():
        cfg = dataclasses.replace(cfg, schema_path=str(DEFAULT_SCHEMA))
    return cfg


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(cfg):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"version": __version__, "config": dataclasses.asdict(cfg)}
    manifest["config"]["cut_dates"] = list(manifest["config"]["cut_dates"])
    _write_json(out / "manifest.json", manifest)
    return out


def _load_inputs(cfg, need_target=True):
    if not cfg.panel_path:
        raise ValueError("panel_path is required")
    schema = PanelSchema.from_json(cfg.schema_path)
    panel = load_panel(cfg.panel_path, schema)
    target = None
    if need_target:
        if not cfg.target_path:
            raise ValueError("target_path is required")
        target = load_target(cfg.target_path)
    if cfg.as_of:
        panel = apply_vintage(panel, cfg.as_of)
        if target is not None:
            cut = np.datetime64(cfg.as_of, "D")
            released = [
                t
                for t in range(len(target))
                if (target.dates[t] + cfg.target_lag).astype("datetime64[D]")
                + np.timedelta64(cfg.target_release_day - 1, "D")
                <= cut
            ]
            if not released:
                raise ValueError("as_of predates every target release")
            t_star = released[-1] + 1
            target = TargetSeries(target.dates[:t_star], target.values[:t_star])
    return panel, target, schema


def _run_selection(cfg, panel, target, schema, out=None):
    pool = [i for i in schema.selection_pool if i in panel.ids]
    if not (cfg.apply_selection and pool):
        return panel, None
    tp_pool = transform.transform_panel(
        panel.select_series(pool), target, min_overlap=cfg.min_overlap
    )
    result = select.rolling_select(
        target, tp_pool.panel, h_g=cfg.h_g, alpha=cfg.alpha_select
    )
    if out is not None:
        _write_json(out / "selection.json", select.selection_report(result, cfg.h_g, cfg.alpha_select))
    drop = set(pool) - set(result.selected_ids)
    keep = [i for i in panel.ids if i not in drop]
    return panel.select_series(keep), result


def _fit_pipeline(cfg, panel, target, out=None):
    tp = transform.transform_panel(panel, target, min_overlap=cfg.min_overlap)
    fm = factor.two_step(
        tp, r=cfg.resolved_r(), k=cfg.k, level=cfg.ci_level, n_draws=cfg.n_draws, seed=cfg.seed
    )
    if out is not None:
        _write_json(out / "transforms.json", transform.transforms_report(tp))
        _write_json(out / "factor.json", factor.factor_report(fm, dates=tp.panel.dates))
        t_star = len(target)
        adf_rows = [diag.adf_test(fm.smoothed_factors[:t_star, j]) for j in range(fm.r)]
        resid = tp.panel.values - fm.static_factors @ fm.loadings.T
        pooled = diag.pooled_idio_test(np.where(tp.panel.mask, resid, np.nan))
        _write_json(out / "diagnostics.json", diag.diagnostics_report(adf_rows, pooled))
    return tp, fm


def cmd_ingest(cfg):
    out = _out_dir(cfg)
    panel, target, _ = _load_inputs(cfg, need_target=bool(cfg.target_path))
    save_panel(panel, out / "panel_normalized.csv")
    report = {
        "n_series": panel.n_series,
        "n_periods": panel.n_periods,
        "first_month": str(panel.dates[0]),
        "last_month": str(panel.dates[-1]),
        "availability_last_6": {
            str(panel.dates[t]): availability_ratio(panel, panel.dates[t])
            for t in range(max(0, panel.n_periods - 6), panel.n_periods)
        },
    }
    if target is not None:
        report["target_months"] = len(target)
    _write_json(out / "ingest_report.json", report)
    return 0


def cmd_select(cfg):
    out = _out_dir(cfg)
    panel, target, schema = _load_inputs(cfg)
    pool = [i for i in schema.selection_pool if i in panel.ids]
    if not pool:
        raise ValueError("schema lists no selection_pool candidates present in the panel")
    tp_pool = transform.transform_panel(panel.select_series(pool), target, min_overlap=cfg.min_overlap)
    result = select.rolling_select(target, tp_pool.panel, h_g=cfg.h_g, alpha=cfg.alpha_select)
    _write_json(out / "selection.json", select.selection_report(result, cfg.h_g, cfg.alpha_select))
    return 0


def cmd_fit(cfg):
    out = _out_dir(cfg)
    panel, target, schema = _load_inputs(cfg)
    panel, _ = _run_selection(cfg, panel, target, schema, out)
    _fit_pipeline(cfg, panel, target, out)
    return 0


def cmd_backtest(cfg):
    out = _out_dir(cfg)
    panel, target, schema = _load_inputs(cfg)
    panel, _ = _run_selection(cfg, panel, target, schema, out)
    tp, fm = _fit_pipeline(cfg, panel, target, out)
    t_star = len(target)
    report = trainer.backtest_grid(
        target.values,
        fm.smoothed_factors[:t_star],
        cfg.h_t,
        p_max=cfg.p_max,
        q_max=cfg.q_max,
        weights=cfg.weights(),
        alpha_dm=cfg.alpha_dm,
        seed=cfg.seed,
        fit_kwargs=cfg.fit_kwargs(),
    )
    _write_backtest_csv(out / "backtest.csv", report, target)
    comparators = trainer.run_comparators(
        target,
        tp,
        cfg.h_t,
        p_max=cfg.p_max,
        q_max=cfg.q_max,
        seed=cfg.seed,
        fit_kwargs=cfg.fit_kwargs(),
        full_report=report,
    )
    _write_json(out / "comparators.json", comparators)
    with open(out / "comparators.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "best_p", "best_q", "mae", "median_ae"])
        for name, row in comparators.items():
            writer.writerow(
                [name, row["best_orders"][0], row["best_orders"][1], repr(row["mae"]), repr(row["median_ae"])]
            )
    _write_json(
        out / "backtest_summary.json",
        {
            "best_orders": list(report.best_index),
            "wae_best": float(report.wae[report.best_position]),
            "mae_best": report.mae(),
            "median_ae_best": float(np.median(report.abs_errors[:, report.best_position])),
            "coverage_95": report.coverage(),
            "survivors": [list(o) for o in report.survivors],
        },
    )
    return 0


def _write_backtest_csv(path, report, target):
    t_star = len(target)
    h_t = report.errors.shape[0]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        labels = [f"p{p}q{q}" for p, q in report.orders]
        writer.writerow(["origin", "month", "actual", *labels])
        for h in range(h_t):
            idx = t_star - h_t + h
            row = [h + 1, str(target.dates[idx]), repr(float(target.values[idx]))]
            for j in range(len(report.orders)):
                ae = report.abs_errors[h, j]
                row.append("" if not np.isfinite(ae) else repr(float(ae)))
            writer.writerow(row)


def cmd_nowcast(cfg):
    out = _out_dir(cfg)
    panel, target, schema = _load_inputs(cfg)
    panel, _ = _run_selection(cfg, panel, target, schema, out)
    tp, fm = _fit_pipeline(cfg, panel, target, out)
    t_star = len(target)
    report = trainer.backtest_grid(
        target.values,
        fm.smoothed_factors[:t_star],
        cfg.h_t,
        p_max=cfg.p_max,
        q_max=cfg.q_max,
        weights=cfg.weights(),
        alpha_dm=cfg.alpha_dm,
        seed=cfg.seed,
        fit_kwargs=cfg.fit_kwargs(),
    )
    nc = trainer.grid_nowcast(
        target.values,
        fm.smoothed_factors[:t_star],
        fm.smoothed_factors[t_star : t_star + 2],
        p_max=cfg.p_max,
        q_max=cfg.q_max,
        seed=cfg.seed,
        fit_kwargs=cfg.fit_kwargs(),
    )
    combined = trainer.combine_median(report, nc, alpha_dm=cfg.alpha_dm)
    benchmark_pos = report.position((0, 0))
    mae_combined = report.mae()
    mae_benchmark = float(np.mean(report.abs_errors[:, benchmark_pos]))
    final = []
    for h, res in enumerate(combined):
        bench = trainer.NowcastResult(
            horizon=h + 1,
            point=float(nc.points[h, benchmark_pos]),
            ci_low=float(nc.ci_low[h, benchmark_pos]),
            ci_high=float(nc.ci_high[h, benchmark_pos]),
            components=[((0, 0), float(nc.points[h, benchmark_pos]), 1.0)],
            method="single",
        )
        final.append(trainer.final_blend(res, bench, mae_combined, mae_benchmark))
    horizon_months = [str(target.dates[0] + t_star + h) for h in range(2)]
    _write_json(
        out / "nowcast.json",
        {
            "months": horizon_months,
            "best_orders": list(report.best_index),
            "mae_trained": mae_combined,
            "mae_benchmark": mae_benchmark,
            "survivors": [list(o) for o in report.survivors],
            "median_combination": [res.to_dict() for res in combined],
            "final_blend": [res.to_dict() for res in final],
        },
    )
    return 0


def cmd_vintage(cfg):
    out = _out_dir(cfg)
    panel, target, _ = _load_inputs(cfg)
    if not cfg.cut_dates:
        raise ValueError("vintage study needs at least one cut date")
    table = trainer.vintage_study(
        panel,
        target,
        list(cfg.cut_dates),
        h_t=cfg.h_t,
        p_max=cfg.p_max,
        q_max=cfg.q_max,
        r=1 if cfg.resolved_r() == "auto" else int(cfg.resolved_r()),
        k=cfg.k,
        alpha_dm=cfg.alpha_dm,
        seed=cfg.seed,
        target_release_day=cfg.target_release_day,
        target_lag=cfg.target_lag,
        fit_kwargs=cfg.fit_kwargs(),
        min_overlap=cfg.min_overlap,
    )
    with open(out / "vintages.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["month", *table["cut_dates"]])
        for month in table["months"]:
            row = [month]
            for cut in table["cut_dates"]:
                val = table["table"][cut][month]
                row.append("" if val is None else repr(float(val)))
            writer.writerow(row)
    _write_json(out / "vintages.json", table)
    return 0


def cmd_report(cfg):
    out = _out_dir(cfg)
    panel, target, schema = _load_inputs(cfg)
    panel, _ = _run_selection(cfg, panel, target, schema, out)
    tp, fm = _fit_pipeline(cfg, panel, target, out)
    t_star = len(target)
    best = armareg.fit_armareg(
        target.values, fm.smoothed_factors[:t_star], 1, 0, compute_se=False, seed=cfg.seed
    )
    fitted, resid = armareg.fitted_and_residuals(best, target.values, fm.smoothed_factors[:t_star])

    with open(out / "factor_chart.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "series", "value"])
        for t in range(tp.panel.n_periods):
            d = str(tp.panel.dates[t])
            for j in range(fm.r):
                if np.isfinite(fm.static_factors[t, j]):
                    writer.writerow([d, f"static_{j}", repr(float(fm.static_factors[t, j]))])
                    writer.writerow([d, f"static_lo_{j}", repr(float(fm.factor_ci[t, j, 0]))])
                    writer.writerow([d, f"static_hi_{j}", repr(float(fm.factor_ci[t, j, 1]))])
                writer.writerow([d, f"smoothed_{j}", repr(float(fm.smoothed_factors[t, j]))])

    with open(out / "fit_chart.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "actual", "fitted", "residual"])
        for t in range(t_star):
            writer.writerow(
                [
                    str(target.dates[t]),
                    repr(float(target.values[t])),
                    repr(float(fitted[t])),
                    repr(float(resid[t])),
                ]
            )

    fc = armareg.forecast(best, fm.smoothed_factors[t_star : t_star + 2], level=cfg.ci_level)
    with open(out / "nowcast_chart.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "kind", "value", "ci_low", "ci_high"])
        for t in range(max(0, t_star - cfg.h_t), t_star):
            writer.writerow([str(target.dates[t]), "actual", repr(float(target.values[t])), "", ""])
            writer.writerow([str(target.dates[t]), "fitted", repr(float(fitted[t])), "", ""])
        for h in range(fc.points.size):
            writer.writerow(
                [
                    str(target.dates[0] + t_star + h),
                    "nowcast",
                    repr(float(fc.points[h])),
                    repr(float(fc.ci_low[h])),
                    repr(float(fc.ci_high[h])),
                ]
            )
    return 0


def cmd_fixture(cfg):
    out = _out_dir(cfg)
    paths = write_fixture(out, seed=cfg.seed or 20200813)
    _write_json(out / "fixture_report.json", {"files": [p.name for p in paths]})
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "select": cmd_select,
    "fit": cmd_fit,
    "backtest": cmd_backtest,
    "nowcast": cmd_nowcast,
    "vintage": cmd_vintage,
    "report": cmd_report,
    "fixture": cmd_fixture,
}


def _add_common_flags(sub):
    sub.add_argument("--config", help="JSON config file; flags override its values")
    sub.add_argument("--panel-path", dest="panel_path")
    sub.add_argument("--target-path", dest="target_path")
    sub.add_argument("--schema-path", dest="schema_path")
    sub.add_argument("--out-dir", dest="out_dir")
    sub.add_argument("--hg", dest="h_g", type=int)
    sub.add_argument("--ht", dest="h_t", type=int)
    sub.add_argument("--alpha", dest="alpha_select", type=float)
    sub.add_argument("--alpha-dm", dest="alpha_dm", type=float)
    sub.add_argument("--p-max", dest="p_max", type=int)
    sub.add_argument("--q-max", dest="q_max", type=int)
    sub.add_argument("--r", dest="r")
    sub.add_argument("--k", dest="k", type=int)
    sub.add_argument("--ci-level", dest="ci_level", type=float)
    sub.add_argument("--weights", dest="weights_spec")
    sub.add_argument("--seed", dest="seed", type=int)
    sub.add_argument("--as-of", dest="as_of")
    sub.add_argument("--n-draws", dest="n_draws", type=int)
    sub.add_argument("--backtest-restarts", dest="backtest_restarts", type=int)
    sub.add_argument("--cut-dates", dest="cut_dates", nargs="+")
    sub.add_argument(
        "--no-selection", dest="apply_selection", action="store_const", const=False, default=None
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="factornow", description="dynamic-factor nowcasting pipeline"
    )
    parser.add_argument("--version", action="version", version=f"factornow {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sub = subs.add_parser(name)
        _add_common_flags(sub)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        return _COMMANDS[args.command](cfg)
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
