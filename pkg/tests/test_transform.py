import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factornow.panel import SeriesMeta, TargetSeries, TimeSeriesPanel
from factornow.transform import (
    TRANSFORM_CODES,
    apply_transform,
    select_transform,
    standardize,
    transform_panel,
    transforms_report,
)


def months(start, n):
    return np.arange(np.datetime64(start, "M"), np.datetime64(start, "M") + n, dtype="datetime64[M]")


class TestApplyTransform:
    def test_constant_series_monthly_variation_is_zero(self):
        v = np.full(24, 7.0)
        out, ok = apply_transform(v, np.ones(24, bool), "m")
        assert not ok[0]
        assert np.allclose(out[ok], 0.0)

    def test_two_point_monthly_variation(self):
        out, ok = apply_transform(np.array([100.0, 110.0]), np.ones(2, bool), "m")
        assert not ok[0] and ok[1]
        assert out[1] == pytest.approx(10.0, abs=1e-12)

    def test_annual_variation_of_geometric_series(self):
        # independent arithmetic: (1.01^12 - 1) * 100
        t = np.arange(40)
        v = 100.0 * 1.01**t
        expected = (1.01**12 - 1.0) * 100.0
        out, ok = apply_transform(v, np.ones(40, bool), "a")
        assert not ok[:12].any()
        assert np.allclose(out[ok], expected, atol=1e-9)
        assert expected == pytest.approx(12.6825, abs=5e-5)

    def test_lag_shifts_and_reproduces_original(self):
        rng = np.random.default_rng(0)
        v = rng.normal(0, 1, 30)
        out, ok = apply_transform(v, np.ones(30, bool), "l")
        assert not ok[0]
        assert np.array_equal(out[1:], v[:-1])

    def test_zero_denominator_masks_with_warning(self):
        v = np.array([1.0, 0.0, 2.0, 3.0])
        with pytest.warns(RuntimeWarning, match="zero denominator"):
            out, ok = apply_transform(v, np.ones(4, bool), "m")
        assert not ok[2]
        assert ok[1] and ok[3]

    def test_minimum_observation_preconditions(self):
        with pytest.raises(ValueError, match="at least 13"):
            apply_transform(np.arange(12.0), np.ones(12, bool), "a")
        with pytest.raises(ValueError, match="at least 2"):
            apply_transform(np.array([1.0, 2.0]), np.array([True, False]), "m")

    @given(
        data=st.lists(
            st.tuples(st.floats(0.5, 100.0), st.booleans()), min_size=14, max_size=40
        ),
        code=st.sampled_from(TRANSFORM_CODES),
    )
    @settings(max_examples=60, deadline=None)
    def test_masked_inputs_never_produce_observed_outputs(self, data, code):
        v = np.array([x for x, _ in data])
        m = np.array([b for _, b in data])
        m[:14] = True  # keep preconditions satisfiable
        _, ok = apply_transform(v, m, code)
        lag = {"n": 0, "m": 1, "a": 12, "l": 1}[code]
        for t in range(len(v)):
            if ok[t]:
                assert m[t] or code == "l"
                if lag and t >= lag:
                    assert m[t - lag]
            if t >= lag and code in ("m", "a") and ok[t]:
                assert m[t] and m[t - lag]


class TestSelectTransform:
    def test_series_equal_to_target_picks_identity(self):
        dates = months("2004-01", 60)
        rng = np.random.default_rng(1)
        y = rng.normal(0, 1, 60)
        target = TargetSeries(dates, y)
        code, corr = select_transform(y.copy(), np.ones(60, bool), dates, target)
        assert code == "n"
        assert corr == pytest.approx(1.0, abs=1e-12)

    def test_compounded_level_series_picks_annual_variation(self):
        # invert the annual-variation transform: x_t = x_{t-12} (1 + y_t/100)
        dates = months("2004-01", 80)
        rng = np.random.default_rng(2)
        y = rng.normal(2.0, 1.0, 80)
        x = np.empty(80)
        x[:12] = 100.0
        for t in range(12, 80):
            x[t] = x[t - 12] * (1 + y[t] / 100.0)
        target = TargetSeries(dates, y)
        code, corr = select_transform(x, np.ones(80, bool), dates, target)
        assert code == "a"
        assert corr == pytest.approx(1.0, abs=1e-9)

    def test_inverse_relation_selected_by_magnitude(self):
        dates = months("2004-01", 60)
        rng = np.random.default_rng(3)
        y = rng.normal(0, 1, 60)
        target = TargetSeries(dates, y)
        code, corr = select_transform(-y, np.ones(60, bool), dates, target)
        assert code == "n"
        assert corr == pytest.approx(-1.0, abs=1e-12)

    def test_insufficient_overlap_raises(self):
        dates = months("2004-01", 30)
        target = TargetSeries(months("2010-01", 30), np.zeros(30))
        with pytest.raises(ValueError, match="insufficient overlap"):
            select_transform(np.arange(30.0), np.ones(30, bool), dates, target)

    def test_selected_code_maximizes_abs_correlation(self):
        dates = months("2004-01", 90)
        rng = np.random.default_rng(4)
        target = TargetSeries(dates, rng.normal(0, 1, 90))
        v = np.abs(rng.normal(10, 2, 90)) + 1.0
        code, corr = select_transform(v, np.ones(90, bool), dates, target)
        for other in TRANSFORM_CODES:
            tv, tm = apply_transform(v, np.ones(90, bool), other)
            take = tm
            oc = np.corrcoef(tv[take], target.values[take])[0, 1]
            assert abs(corr) >= abs(oc) - 1e-12


class TestStandardize:
    def make_panel(self, values):
        values = np.asarray(values, float)
        dates = months("2010-01", values.shape[0])
        meta = tuple(SeriesMeta(id=f"s{i}") for i in range(values.shape[1]))
        return TimeSeriesPanel(dates, values, np.isfinite(values), meta)

    def test_observed_cells_centered_and_scaled(self, fixture_data):
        panel, _, _ = fixture_data
        tp = standardize(panel)
        for i in range(tp.panel.n_series):
            col = tp.panel.values[tp.panel.mask[:, i], i]
            assert abs(col.mean()) < 1e-10
            assert abs(col.var() - 1.0) < 1e-10

    def test_two_point_series_population_convention(self):
        tp = standardize(self.make_panel([[5.0], [7.0]]))
        assert tp.panel.values[:, 0] == pytest.approx([-1.0, 1.0], abs=1e-12)
        assert tp.sds[0] == pytest.approx(1.0)
        assert tp.means[0] == pytest.approx(6.0)

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        tp = standardize(self.make_panel(rng.normal(3, 4, (40, 3))))
        tp2 = standardize(tp.panel)
        assert np.allclose(
            tp.panel.values[tp.panel.mask], tp2.panel.values[tp2.panel.mask], atol=1e-12
        )

    def test_zero_variance_names_series(self):
        with pytest.raises(ValueError, match="s1"):
            standardize(self.make_panel([[1.0, 2.0], [3.0, 2.0], [4.0, 2.0]]))


def test_transform_panel_report_orders_by_correlation(fixture_data):
    panel, target, _ = fixture_data
    tp = transform_panel(panel, target)
    rep = transforms_report(tp)
    corrs = [abs(r["correlation"]) for r in rep["series"]]
    assert corrs == sorted(corrs, reverse=True)
    assert {r["code"] for r in rep["series"]} <= set(TRANSFORM_CODES)
    by_id = {r["id"]: r for r in rep["series"]}
    # the engineered strong movers sit far above the noise topics
    assert abs(by_id["topic_sports"]["correlation"]) < 0.3
    assert abs(by_id["ind_prod"]["correlation"]) > 0.4
    assert max(corrs) > 0.85
