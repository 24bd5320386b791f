import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factornow.armareg import fit_armareg, forecast
from factornow.panel import SeriesMeta, TargetSeries, TimeSeriesPanel, apply_vintage
from factornow.trainer import (
    BacktestReport,
    GridNowcasts,
    NowcastResult,
    backtest_grid,
    combine_median,
    diebold_mariano,
    final_blend,
    grid_nowcast,
    grid_orders,
    naive_factor,
    run_comparators,
    vintage_study,
)
from factornow.transform import standardize


def make_series(rng, t_len=120, noise=0.5):
    f = rng.normal(0, 1, t_len)
    y = 1.5 + 2.0 * f + rng.normal(0, noise, t_len)
    return y, f


class TestBacktestGrid:
    def test_equal_weights_give_column_means(self):
        rng = np.random.default_rng(0)
        y, f = make_series(rng)
        rep = backtest_grid(y, f, h_t=12, p_max=1, q_max=1, seed=0)
        for j in range(len(rep.orders)):
            if not rep.failed[j]:
                assert rep.wae[j] == pytest.approx(np.mean(rep.abs_errors[:, j]), abs=1e-12)

    def test_report_invariants(self):
        rng = np.random.default_rng(1)
        y, f = make_series(rng)
        rep = backtest_grid(y, f, h_t=10, p_max=1, q_max=1, seed=0)
        assert rep.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert rep.best_index in rep.survivors
        best = rep.best_position
        assert rep.wae[best] == np.min(rep.wae)
        assert rep.wae[best] == pytest.approx(rep.weights @ rep.abs_errors[:, best], abs=1e-12)

    def test_known_dgp_zero_order_error_level(self):
        # one-step errors of the correctly specified plain regression have
        # mean absolute value sigma * sqrt(2/pi); check within Monte Carlo error
        sigma = 0.5
        maes = []
        for s in range(10):
            rng = np.random.default_rng(100 + s)
            y, f = make_series(rng, t_len=200, noise=sigma)
            rep = backtest_grid(y, f, h_t=40, p_max=0, q_max=0, seed=0)
            maes.append(rep.mae())
        expected = sigma * np.sqrt(2 / np.pi)
        se = np.std(maes, ddof=1) / np.sqrt(len(maes))
        assert abs(np.mean(maes) - expected) < max(2 * se, 0.02)

    def test_one_hot_weights_rank_by_single_origin(self):
        rng = np.random.default_rng(2)
        y, f = make_series(rng)
        h_t = 10
        w = np.zeros(h_t)
        w[4] = 1.0
        rep = backtest_grid(y, f, h_t=h_t, p_max=1, q_max=1, weights=w, seed=0)
        ok = ~rep.failed
        assert np.allclose(rep.wae[ok], rep.abs_errors[4, ok], atol=1e-12)
        assert rep.best_position == np.flatnonzero(ok)[np.argmin(rep.abs_errors[4, ok])]

    def test_zero_cell_matches_standalone_ols_backtest(self):
        rng = np.random.default_rng(3)
        y, f = make_series(rng)
        h_t = 12
        rep = backtest_grid(y, f, h_t=h_t, p_max=1, q_max=0, seed=0)
        pos = rep.position((0, 0))
        t_star = len(y)
        for h in range(1, h_t + 1):
            end = t_star - h_t + h - 1
            model = fit_armareg(y[:end], f[:end], 0, 0, compute_se=False)
            fc = forecast(model, f[end : end + 1])
            assert rep.forecasts[h - 1, pos] == pytest.approx(fc.points[0], abs=1e-10)
            assert rep.errors[h - 1, pos] == pytest.approx(y[end] - fc.points[0], abs=1e-10)

    def test_forecast_consistency_with_trainer_origin(self):
        # h = 1 forecast on a truncated sample equals the backtest value
        rng = np.random.default_rng(4)
        y, f = make_series(rng)
        h_t = 8
        rep = backtest_grid(y, f, h_t=h_t, p_max=1, q_max=1, seed=0)
        end = len(y) - h_t  # origin h = 1 trains on y[:end]
        for orders in [(1, 0), (1, 1)]:
            pos = rep.position(orders)
            model = fit_armareg(
                y[:end], f[:end], *orders, seed=0, n_restarts=1, compute_se=False, max_iter=50
            )
            fc = forecast(model, f[end : end + 1])
            assert rep.forecasts[0, pos] == pytest.approx(fc.points[0], abs=1e-8)

    def test_bad_weights_rejected(self):
        rng = np.random.default_rng(5)
        y, f = make_series(rng)
        with pytest.raises(ValueError, match="sum to 1"):
            backtest_grid(y, f, h_t=10, p_max=0, q_max=0, weights=np.full(10, 0.2))

    def test_window_must_fit_sample(self):
        with pytest.raises(ValueError, match="shorter than the sample"):
            backtest_grid(np.zeros(10), np.zeros(10), h_t=10, p_max=0, q_max=0)


class TestDieboldMariano:
    def test_identical_errors_give_unit_pvalue(self):
        e = np.random.default_rng(0).normal(0, 1, 40)
        stat, p = diebold_mariano(e, e.copy())
        assert p == 1.0

    def test_doubled_errors_detected(self):
        rng = np.random.default_rng(1)
        e_a = np.abs(rng.normal(0, 1, 200)) + 0.1
        stat, p = diebold_mariano(e_a, 2 * e_a)
        assert p < 0.01
        assert stat < 0

    def test_hand_computed_statistic(self):
        # direct spreadsheet-style arithmetic on a fixed H = 36 vector
        rng = np.random.default_rng(7)
        e_a = rng.normal(0, 1, 36)
        e_b = rng.normal(0, 1.3, 36)
        d = np.abs(e_a) - np.abs(e_b)
        dbar = d.mean()
        dc = d - dbar
        h = 36
        trunc = int(np.floor(h ** (1 / 3)))  # = 3
        lrv = np.sum(dc * dc) / h
        for k in range(1, trunc + 1):
            gamma = np.sum(dc[k:] * dc[:-k]) / h
            lrv += 2 * (1 - k / (trunc + 1)) * gamma
        expected = dbar / np.sqrt(lrv / h)
        stat, _ = diebold_mariano(e_a, e_b)
        assert stat == pytest.approx(expected, abs=1e-10)

    def test_antisymmetry_exact(self):
        rng = np.random.default_rng(2)
        e_a = rng.normal(0, 1, 50)
        e_b = rng.normal(0, 2, 50)
        s_ab, p_ab = diebold_mariano(e_a, e_b)
        s_ba, p_ba = diebold_mariano(e_b, e_a)
        assert s_ab == -s_ba
        assert p_ab == p_ba

    def test_squared_loss_option(self):
        rng = np.random.default_rng(3)
        e_a = rng.normal(0, 1, 100)
        stat, p = diebold_mariano(e_a, 3 * e_a, loss="squared")
        assert p < 0.01

    def test_minimum_length(self):
        with pytest.raises(ValueError, match="at least 8"):
            diebold_mariano(np.zeros(5), np.zeros(5))

    @given(seed=st.integers(0, 10_000), h=st.integers(8, 120))
    @settings(max_examples=60, deadline=None)
    def test_antisymmetry_property(self, seed, h):
        rng = np.random.default_rng(seed)
        e_a = rng.normal(0, 1, h)
        e_b = rng.normal(0, rng.uniform(0.5, 2.0), h)
        s_ab, p_ab = diebold_mariano(e_a, e_b)
        s_ba, p_ba = diebold_mariano(e_b, e_a)
        assert s_ab == -s_ba
        assert p_ab == p_ba


def toy_report(wae_values, points=None):
    orders = grid_orders(1, 1)
    m = len(orders)
    h = 10
    rng = np.random.default_rng(0)
    errors = rng.normal(0, 1, (h, m))
    wae = np.asarray(wae_values, float)
    best = int(np.argmin(wae))
    dm = np.ones(m)
    return BacktestReport(
        orders=orders,
        errors=errors,
        abs_errors=np.abs(errors),
        forecasts=np.zeros((h, m)),
        pred_sd=np.ones((h, m)),
        wae=wae,
        weights=np.full(h, 0.1),
        best_index=orders[best],
        dm_pvalues=dm,
        survivors=orders,
        failed=np.zeros(m, bool),
        actuals=np.zeros(h),
    )


def toy_grid(points, spread=1.0):
    points = np.asarray(points, float)
    return GridNowcasts(
        orders=grid_orders(1, 1),
        points=points,
        ci_low=points - spread,
        ci_high=points + spread,
        variances=np.full_like(points, spread**2),
        failed=np.zeros(points.shape[1], bool),
    )


class TestCombineMedian:
    def test_single_survivor_equals_best(self):
        rep = toy_report([1.0, 2.0, 3.0, 4.0])
        rep.dm_pvalues = np.array([1.0, 0.01, 0.01, 0.01])
        grid = toy_grid(np.array([[5.0, 6.0, 7.0, 8.0], [1.0, 2.0, 3.0, 4.0]]))
        out = combine_median(rep, grid, alpha_dm=0.10)
        assert out[0].point == 5.0
        assert out[1].point == 1.0
        assert len(out[0].components) == 1

    def test_median_of_three(self):
        rep = toy_report([1.0, 1.1, 1.2, 9.0])
        rep.dm_pvalues = np.array([1.0, 0.5, 0.5, 0.0])
        grid = toy_grid(np.array([[-1.0, 0.0, 5.0, 99.0], [0.0, 0.0, 0.0, 99.0]]))
        out = combine_median(rep, grid, alpha_dm=0.10)
        assert out[0].point == 0.0

    def test_all_equal_points_any_alpha(self):
        rep = toy_report([1.0, 1.1, 1.2, 1.3])
        grid = toy_grid(np.full((2, 4), 3.25))
        for alpha in (0.01, 0.10, 0.5):
            out = combine_median(rep, grid, alpha_dm=alpha)
            assert out[0].point == 3.25 and out[1].point == 3.25

    def test_symmetric_duplication_leaves_median(self):
        rep = toy_report([1.0, 1.1, 1.2, 1.3])
        grid = toy_grid(np.array([[0.0, 1.0, 2.0, 99.0], [0.0, 1.0, 2.0, 99.0]]))
        rep.dm_pvalues = np.array([1.0, 0.9, 0.9, 0.0])
        base = combine_median(rep, grid, alpha_dm=0.10)[0].point
        # duplicate a symmetric pair around the median (0 and 2)
        grid2 = toy_grid(np.array([[0.0, 1.0, 2.0, 99.0], [0.0, 1.0, 2.0, 99.0]]))
        rep2 = toy_report([1.0, 1.1, 1.2, 1.3])
        rep2.dm_pvalues = np.array([1.0, 0.9, 0.9, 0.9])
        grid2.points[:, 3] = [1.0, 1.0]  # adding the median itself
        out = combine_median(rep2, grid2, alpha_dm=0.10)[0].point
        assert out == base == 1.0

    def test_interval_brackets_point(self):
        rep = toy_report([1.0, 1.1, 1.2, 1.3])
        grid = toy_grid(np.array([[0.0, 1.0, 2.0, 4.0], [0.0, 1.0, 2.0, 4.0]]), spread=0.5)
        for res in combine_median(rep, grid, alpha_dm=0.10):
            assert res.ci_low <= res.point <= res.ci_high


class TestFinalBlend:
    def mk(self, point, lo, hi, horizon=1):
        return NowcastResult(
            horizon=horizon, point=point, ci_low=lo, ci_high=hi,
            components=[((0, 0), point, 1.0)], method="single",
        )

    def test_equal_maes_simple_average(self):
        out = final_blend(self.mk(2.0, 1.0, 3.0), self.mk(4.0, 3.0, 5.0), 0.8, 0.8)
        assert out.point == pytest.approx(3.0)
        assert out.ci_low == pytest.approx(2.0)

    def test_huge_benchmark_mae_keeps_combined(self):
        out = final_blend(self.mk(2.0, 1.0, 3.0), self.mk(40.0, 39.0, 41.0), 0.5, 1e12)
        assert out.point == pytest.approx(2.0, abs=1e-9)

    def test_inverse_mae_weights(self):
        out = final_blend(self.mk(1.0, 0.0, 2.0), self.mk(4.0, 3.0, 5.0), 0.65, 1.30)
        weights = {lab: w for lab, _, w in out.components}
        assert weights[("combined", "combined")] == pytest.approx(2 / 3, abs=1e-12)
        assert weights[("benchmark", "benchmark")] == pytest.approx(1 / 3, abs=1e-12)
        assert out.point == pytest.approx(2 / 3 * 1.0 + 1 / 3 * 4.0, abs=1e-12)

    def test_convexity(self):
        a, b = self.mk(-3.0, -4.0, -2.0), self.mk(5.0, 4.0, 6.0)
        out = final_blend(a, b, 0.4, 0.9)
        assert min(a.point, b.point) <= out.point <= max(a.point, b.point)

    def test_nonpositive_mae_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            final_blend(self.mk(1.0, 0.0, 2.0), self.mk(2.0, 1.0, 3.0), 0.0, 1.0)

    @given(
        pa=st.floats(-50, 50),
        pb=st.floats(-50, 50),
        mae_a=st.floats(0.01, 10),
        mae_b=st.floats(0.01, 10),
    )
    @settings(max_examples=80, deadline=None)
    def test_convexity_property(self, pa, pb, mae_a, mae_b):
        out = final_blend(self.mk(pa, pa - 1, pa + 1), self.mk(pb, pb - 1, pb + 1), mae_a, mae_b)
        assert min(pa, pb) - 1e-9 <= out.point <= max(pa, pb) + 1e-9
        assert out.ci_low <= out.point <= out.ci_high
        assert sum(w for _, _, w in out.components) == pytest.approx(1.0, abs=1e-12)


class TestComparators:
    def single_series_panel(self, rng, t_len=60):
        dates = np.arange(np.datetime64("2010-01"), np.datetime64("2010-01") + t_len, dtype="datetime64[M]")
        vals = rng.normal(5, 2, (t_len, 1))
        return TimeSeriesPanel(dates, vals, np.ones((t_len, 1), bool), (SeriesMeta(id="only"),))

    def test_naive_factor_of_single_series_is_the_series(self):
        rng = np.random.default_rng(0)
        tp = standardize(self.single_series_panel(rng))
        nf = naive_factor(tp)
        assert np.allclose(nf, tp.panel.values[:, 0], atol=1e-12)

    def test_empty_nontraditional_block_collapses_to_full(self, fixture_data):
        # when every series is traditional the comparator is the main model
        rng = np.random.default_rng(1)
        t_len = 140
        dates = np.arange(np.datetime64("2005-01"), np.datetime64("2005-01") + t_len, dtype="datetime64[M]")
        f = rng.normal(0, 1, t_len)
        vals = np.column_stack([f * rng.uniform(0.5, 1.5) + rng.normal(0, 0.5, t_len) for _ in range(8)])
        meta = tuple(SeriesMeta(id=f"s{i}", block="traditional") for i in range(8))
        panel = TimeSeriesPanel(dates, vals, np.ones_like(vals, bool), meta)
        tp = standardize(panel)
        y = 1.0 + 2.0 * f + rng.normal(0, 0.3, t_len)
        table = run_comparators(
            y, tp, h_t=8, seed=0,
            fit_kwargs={"n_restarts": 0, "max_iter": 20, "compute_se": False},
        )
        assert table["traditional"] == table["full"]
        assert table["full"]["mae"] > 0
        assert len(table["full"]["cumulative_mae"]) == 8

    def test_fixture_full_beats_naive(self, fixture_data):
        from factornow.factor import two_step
        from factornow.transform import transform_panel

        panel, target, _ = fixture_data
        keep = [i for i in panel.ids if not i.startswith("topic_") or i in ("topic_lockdown", "topic_face_cover")]
        tp = transform_panel(panel.select_series(keep), target)
        fm = two_step(tp, r=1, n_draws=20, seed=0)
        t_star = len(target)
        small = {"n_restarts": 0, "max_iter": 20, "compute_se": False}
        full = backtest_grid(target.values, fm.smoothed_factors[:t_star], 24, p_max=1, q_max=1, seed=0, fit_kwargs=small)
        table = run_comparators(target, tp, 24, include_traditional=False, seed=0, fit_kwargs=small, full_report=full)
        assert table["full"]["mae"] < table["naive"]["mae"]


class TestVintageStudy:
    def build_panel(self, rng, t_len=90, n=6):
        dates = np.arange(np.datetime64("2010-01"), np.datetime64("2010-01") + t_len, dtype="datetime64[M]")
        f = np.zeros(t_len)
        for t in range(1, t_len):
            f[t] = 0.7 * f[t - 1] + rng.normal(0, 0.7)
        vals = np.column_stack([f * rng.uniform(0.6, 1.2) + rng.normal(0, 0.4, t_len) for _ in range(n)])
        days = [1, 5, 10, 16, 22, 28][:n]
        meta = tuple(SeriesMeta(id=f"s{i}", release_day=days[i]) for i in range(n))
        panel = TimeSeriesPanel(dates, vals, np.ones_like(vals, bool), meta)
        y = TargetSeries(dates[: t_len - 2], 1.0 + 2.0 * f[: t_len - 2] + rng.normal(0, 0.3, t_len - 2))
        return panel, y

    kwargs = dict(
        h_t=8, p_max=0, q_max=0, r=1, k=1, seed=0,
        fit_kwargs={"n_restarts": 0, "max_iter": 10, "compute_se": False},
    )

    def test_cut_after_all_releases_matches_unrestricted(self):
        rng = np.random.default_rng(11)
        panel, y = self.build_panel(rng)
        late = dt.date(2018, 6, 28)
        t1 = vintage_study(panel, y, [late], **self.kwargs)
        t2 = vintage_study(apply_vintage(panel, late), y, [late], **self.kwargs)
        assert t1["table"] == t2["table"]

    def test_cuts_straddling_one_release_differ_by_one_cell(self):
        rng = np.random.default_rng(12)
        panel, y = self.build_panel(rng)
        before = dt.date(2017, 6, 15)
        after = dt.date(2017, 6, 17)  # s3 releases on day 16
        v1 = apply_vintage(panel, before)
        v2 = apply_vintage(panel, after)
        diff = v2.mask & ~v1.mask
        assert diff.sum() == 1
        assert diff[:, 3].sum() == 1
        t1 = vintage_study(panel, y, [before], **self.kwargs)
        t2 = vintage_study(panel, y, [after], **self.kwargs)
        p1 = [v for v in t1["table"][str(before)].values() if v is not None]
        p2 = [v for v in t2["table"][str(after)].values() if v is not None]
        assert p1 != p2

    def test_deterministic_across_runs(self):
        rng = np.random.default_rng(13)
        panel, y = self.build_panel(rng)
        cuts = [dt.date(2017, 8, 2), dt.date(2017, 8, 20)]
        t1 = vintage_study(panel, y, cuts, **self.kwargs)
        t2 = vintage_study(panel, y, cuts, **self.kwargs)
        assert t1 == t2
        assert t1["months"]
