import json

import numpy as np
import pytest

from factornow.cli import main


def run(args):
    return main([str(a) for a in args])


def base_args(fixture_dir, out, extra=()):
    return [
        "--panel-path", fixture_dir / "panel.csv",
        "--target-path", fixture_dir / "target.csv",
        "--schema-path", fixture_dir / "schema.json",
        "--out-dir", out,
        *extra,
    ]


SMALL = [
    "--p-max", "1", "--q-max", "1", "--ht", "12", "--hg", "12",
    "--n-draws", "50", "--backtest-restarts", "0",
]


class TestIngest:
    def test_valid_csv_exits_zero_and_writes_artifacts(self, fixture_dir, tmp_path):
        out = tmp_path / "run"
        assert run(["ingest", *base_args(fixture_dir, out)]) == 0
        assert (out / "panel_normalized.csv").exists()
        report = json.loads((out / "ingest_report.json").read_text())
        assert report["n_series"] == 68
        assert report["n_periods"] == 199

    def test_missing_schema_exits_two_with_filename(self, fixture_dir, tmp_path, capsys):
        out = tmp_path / "run"
        code = run(
            [
                "ingest",
                "--panel-path", fixture_dir / "panel.csv",
                "--schema-path", tmp_path / "nope.json",
                "--out-dir", out,
            ]
        )
        assert code == 2
        assert "nope.json" in capsys.readouterr().err

    def test_daily_file_aggregates_to_monthly(self, tmp_path):
        csv = tmp_path / "daily.csv"
        csv.write_text("date,a\n2020-01-01,2.0\n2020-01-21,4.0\n2020-02-01,6.0\n")
        schema = tmp_path / "schema.json"
        schema.write_text(json.dumps({"series": [{"id": "a"}], "aggregate_daily": True}))
        out = tmp_path / "run"
        assert run(["ingest", "--panel-path", csv, "--schema-path", schema, "--out-dir", out]) == 0
        lines = (out / "panel_normalized.csv").read_text().strip().splitlines()
        assert lines[1].split(",") == ["2020-01", "3.0"]
        assert lines[2].split(",") == ["2020-02", "6.0"]


class TestSelect:
    def test_fixture_selection_is_deterministic_golden(self, fixture_dir, tmp_path):
        out = tmp_path / "sel"
        assert run(["select", *base_args(fixture_dir, out)]) == 0
        doc = json.loads((out / "selection.json").read_text())
        assert doc["selected_ids"] == ["topic_lockdown", "topic_face_cover"]
        out2 = tmp_path / "sel2"
        assert run(["select", *base_args(fixture_dir, out2)]) == 0
        assert (out / "selection.json").read_bytes() == (out2 / "selection.json").read_bytes()

    def test_extreme_alphas_bracket_the_default(self, fixture_dir, tmp_path):
        # threshold is the (1 - alpha) frequency quantile: a tiny alpha pushes
        # it to the maximum count (nothing strictly exceeds it), a huge alpha
        # drops it toward the minimum (selection can only grow)
        out = tmp_path / "sel_tiny"
        assert run(["select", *base_args(fixture_dir, out), "--alpha", "0.001", "--hg", "12"]) == 0
        tiny = json.loads((out / "selection.json").read_text())
        assert tiny["selected_ids"] == []
        out2 = tmp_path / "sel_huge"
        assert run(["select", *base_args(fixture_dir, out2), "--alpha", "0.999", "--hg", "12"]) == 0
        huge = json.loads((out2 / "selection.json").read_text())
        out3 = tmp_path / "sel_def"
        assert run(["select", *base_args(fixture_dir, out3), "--hg", "12"]) == 0
        default = json.loads((out3 / "selection.json").read_text())
        assert set(default["selected_ids"]) <= set(huge["selected_ids"])
        assert {"topic_lockdown", "topic_face_cover"} <= set(huge["selected_ids"])

    def test_single_collinear_candidate_selected(self, tmp_path):
        rng = np.random.default_rng(0)
        t = 80
        dates = [f"{2010 + i // 12:04d}-{i % 12 + 1:02d}" for i in range(t)]
        y = rng.normal(0, 1, t)
        cand = y + rng.normal(0, 0.05, t)
        other = rng.normal(0, 1, t)
        panel_csv = tmp_path / "p.csv"
        rows = ["date,cand,other"] + [
            f"{dates[i]},{float(cand[i])!r},{float(other[i])!r}" for i in range(t)
        ]
        panel_csv.write_text("\n".join(rows) + "\n")
        target_csv = tmp_path / "t.csv"
        rows = ["date,value"] + [f"{dates[i]},{float(y[i])!r}" for i in range(t - 2)]
        target_csv.write_text("\n".join(rows) + "\n")
        schema = tmp_path / "s.json"
        schema.write_text(
            json.dumps(
                {
                    "series": [
                        {"id": "cand", "block": "high_freq_nontraditional"},
                        {"id": "other", "block": "high_freq_nontraditional"},
                    ],
                    "selection_pool": ["cand"],
                }
            )
        )
        out = tmp_path / "run"
        code = run(
            [
                "select",
                "--panel-path", panel_csv,
                "--target-path", target_csv,
                "--schema-path", schema,
                "--out-dir", out,
                "--hg", "12",
            ]
        )
        assert code == 0
        doc = json.loads((out / "selection.json").read_text())
        assert doc["selected_ids"] == ["cand"]


class TestNowcast:
    def test_reruns_are_byte_identical(self, fixture_dir, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        args = ["nowcast", *base_args(fixture_dir, out1), *SMALL, "--seed", "7"]
        assert run(args) == 0
        args2 = ["nowcast", *base_args(fixture_dir, out2), *SMALL, "--seed", "7"]
        assert run(args2) == 0
        for name in ("nowcast.json", "factor.json", "diagnostics.json", "transforms.json", "selection.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_nowcast_structure(self, fixture_dir, tmp_path):
        out = tmp_path / "nc"
        assert run(["nowcast", *base_args(fixture_dir, out), *SMALL]) == 0
        doc = json.loads((out / "nowcast.json").read_text())
        assert doc["months"] == ["2020-06", "2020-07"]
        assert len(doc["final_blend"]) == 2
        for res in doc["final_blend"]:
            assert res["ci_low"] <= res["point"] <= res["ci_high"]
            assert res["method"] == "final_blend"
        for res in doc["median_combination"]:
            weights = [c["weight"] for c in res["components"]]
            assert sum(weights) == pytest.approx(1.0, abs=1e-9)

    def test_vintage_restricted_run(self, fixture_dir, tmp_path):
        out = tmp_path / "nc_asof"
        code = run(["nowcast", *base_args(fixture_dir, out), *SMALL, "--as-of", "2020-07-07"])
        assert code == 0
        doc = json.loads((out / "nowcast.json").read_text())
        # at a July 7 cut the published target ends in April, so the open
        # months shift back accordingly
        assert doc["months"] == ["2020-05", "2020-06"]


class TestBacktest:
    def test_reproducible_and_comparators(self, fixture_dir, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        args = ["backtest", *base_args(fixture_dir, out1), *SMALL]
        assert run(args) == 0
        assert run(["backtest", *base_args(fixture_dir, out2), *SMALL]) == 0
        assert (out1 / "backtest.csv").read_bytes() == (out2 / "backtest.csv").read_bytes()
        rows = (out1 / "comparators.csv").read_text().strip().splitlines()
        assert len(rows) == 4  # header + full, naive, traditional
        names = {r.split(",")[0] for r in rows[1:]}
        assert names == {"full", "naive", "traditional"}

    def test_custom_weights_validation(self, fixture_dir, tmp_path):
        ok = ",".join(["0.25"] * 4)
        bad = ",".join(["0.3"] * 4)
        out = tmp_path / "w"
        args = base_args(fixture_dir, out) + ["--p-max", "0", "--q-max", "0", "--ht", "4", "--n-draws", "20"]
        assert run(["backtest", *args, "--weights", ok]) == 0
        assert run(["backtest", *args, "--weights", bad]) == 2


class TestFitAndReport:
    def test_fit_writes_model_artifacts(self, fixture_dir, tmp_path):
        out = tmp_path / "fit"
        assert run(["fit", *base_args(fixture_dir, out), "--hg", "12", "--n-draws", "50"]) == 0
        factor = json.loads((out / "factor.json").read_text())
        assert factor["r_hat"] == 1
        assert len(factor["factors"]) == 199
        assert len(factor["loadings"]) == 58  # 68 series minus 10 dropped topics
        diag_doc = json.loads((out / "diagnostics.json").read_text())
        assert diag_doc["factor_adf"][0]["stationary_at_5pct"]
        transforms = json.loads((out / "transforms.json").read_text())
        assert len(transforms["series"]) == 58

    def test_report_writes_chart_tables(self, fixture_dir, tmp_path):
        out = tmp_path / "rep"
        assert run(["report", *base_args(fixture_dir, out), "--hg", "12", "--n-draws", "50"]) == 0
        factor_rows = (out / "factor_chart.csv").read_text().strip().splitlines()
        assert factor_rows[0] == "date,series,value"
        assert len(factor_rows) > 199
        fit_rows = (out / "fit_chart.csv").read_text().strip().splitlines()
        assert fit_rows[0] == "date,actual,fitted,residual"
        assert len(fit_rows) == 198  # header + 197 target months
        # actual = fitted + residual, reconstructed from the table itself
        _, actual, fitted, resid = fit_rows[5].split(",")
        assert float(actual) == pytest.approx(float(fitted) + float(resid), abs=1e-9)
        nc_rows = (out / "nowcast_chart.csv").read_text().strip().splitlines()
        assert nc_rows[0] == "date,kind,value,ci_low,ci_high"
        nowcast_lines = [r for r in nc_rows if ",nowcast," in r]
        assert [r.split(",")[0] for r in nowcast_lines] == ["2020-06", "2020-07"]
        for line in nowcast_lines:
            _, _, value, lo, hi = line.split(",")
            assert float(lo) <= float(value) <= float(hi)


class TestExitCodes:
    def test_numeric_failure_maps_to_one(self, monkeypatch, tmp_path):
        import factornow.cli as cli

        def boom(cfg):
            raise RuntimeError("synthetic numeric blow-up")

        monkeypatch.setitem(cli._COMMANDS, "ingest", boom)
        assert cli.main(["ingest", "--out-dir", str(tmp_path / "x")]) == 1

    def test_config_defaults_match_published_choices(self):
        from factornow.cli import RunConfig

        cfg = RunConfig()
        assert cfg.h_g == 36 and cfg.h_t == 36
        assert cfg.alpha_select == 0.10 and cfg.alpha_dm == 0.10
        assert cfg.p_max == 4 and cfg.q_max == 4
        assert cfg.k == 1 and cfg.ci_level == 0.95
        assert cfg.r == "auto" and cfg.weights_spec == "equal"


class TestVintageCommand:
    def test_table_written(self, fixture_dir, tmp_path):
        out = tmp_path / "v"
        code = run(
            [
                "vintage", *base_args(fixture_dir, out),
                "--p-max", "0", "--q-max", "0", "--ht", "8", "--n-draws", "20",
                "--cut-dates", "2020-06-04", "2020-07-07",
            ]
        )
        assert code == 0
        lines = (out / "vintages.csv").read_text().strip().splitlines()
        assert lines[0] == "month,2020-06-04,2020-07-07"
        assert len(lines) >= 3

    def test_missing_cut_dates_is_config_error(self, fixture_dir, tmp_path):
        assert run(["vintage", *base_args(fixture_dir, tmp_path / "v")]) == 2


class TestConfigFile:
    def test_flags_override_file(self, fixture_dir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {
                    "panel_path": str(fixture_dir / "panel.csv"),
                    "target_path": str(fixture_dir / "target.csv"),
                    "schema_path": str(fixture_dir / "schema.json"),
                    "out_dir": str(tmp_path / "from_file"),
                    "h_g": 10,
                }
            )
        )
        out = tmp_path / "cli_wins"
        assert run(["ingest", "--config", cfg, "--out-dir", out]) == 0
        assert (out / "ingest_report.json").exists()
        assert not (tmp_path / "from_file").exists()

    def test_unknown_config_key_is_error(self, fixture_dir, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"panel": "x"}))
        assert run(["ingest", "--config", cfg]) == 2
        assert "unknown config keys" in capsys.readouterr().err

    def test_manifest_records_config(self, fixture_dir, tmp_path):
        out = tmp_path / "m"
        assert run(["ingest", *base_args(fixture_dir, out)]) == 0
        doc = json.loads((out / "manifest.json").read_text())
        assert doc["config"]["panel_path"].endswith("panel.csv")
        assert "version" in doc
