"""Bundled synthetic fixture: a realistic ragged-edge panel and target.

Sixty-eight monthly series over 2004-01..2020-07 in three blocks
(traditional, high-frequency traditional, high-frequency nontraditional),
driven by one persistent common factor that collapses in the final months
the way activity data did in spring 2020. The shipped CSVs carry the
ragged edge of an August 13, 2020 dataset build; the target runs two
months behind the panel. Everything is seeded, so the fixture regenerates
byte-identically.
"""

from __future__ import annotations

import numpy as np

from .panel import PanelSchema, SeriesMeta, TimeSeriesPanel, TargetSeries, apply_vintage

FIXTURE_SEED = 20200813
FIXTURE_BUILD_DATE = "2020-08-13"

_TRADITIONAL = [
    ("ind_prod", 10, "direct"),
    ("ind_prod_us", 16, "direct"),
    ("exports", 25, "direct"),
    ("imports", 25, "direct"),
    ("retail_sales", 20, "direct"),
    ("manuf_orders", 12, "direct"),
    ("constr_output", 28, "direct"),
    ("capacity_util", 16, "direct"),
    ("employment_formal", 12, "direct"),
    ("unemployment_rate", 12, "inverse"),
    ("business_conf_manuf", 1, "direct"),
    ("business_conf_constr", 1, "direct"),
    ("vehicle_sales", 8, "direct"),
    ("vehicle_prod", 8, "direct"),
    ("electricity_use", 15, "direct"),
    ("fuel_demand", 1, "direct"),
    ("air_cargo", 22, "direct"),
    ("air_passengers", 22, "direct"),
    ("rail_freight", 18, "direct"),
    ("port_traffic", 18, "direct"),
    ("cement_output", 20, "direct"),
    ("steel_output", 20, "direct"),
    ("mining_output", 24, "direct"),
    ("oil_output", 24, "direct"),
    ("remittances", 26, "direct"),
    ("tax_collection", 28, "direct"),
    ("credit_private", 26, "direct"),
    ("money_m1", 26, "direct"),
    ("money_m4", 26, "direct"),
    ("ppi_manuf", 15, "inverse"),
    ("wage_index", 18, "direct"),
    ("social_security_jobs", 12, "direct"),
    ("construction_permits", 21, "direct"),
    ("housing_starts", 21, "direct"),
    ("tourism_arrivals", 23, "direct"),
    ("hotel_occupancy", 23, "direct"),
    ("restaurant_sales", 19, "direct"),
    ("supermarket_sales", 19, "direct"),
    ("consumer_conf", 1, "direct"),
    ("investment_machinery", 27, "direct"),
    ("imports_capital", 25, "direct"),
    ("imports_consumer", 25, "direct"),
    ("exports_manuf", 25, "direct"),
    ("exports_agri", 25, "direct"),
    ("agri_output", 24, "direct"),
    ("services_revenue", 27, "direct"),
]

_HIGH_FREQ = [
    ("stock_index", 1, "direct"),
    ("exchange_rate", 1, "inverse"),
    ("interest_rate_short", 1, "inverse"),
    ("sovereign_spread", 1, "inverse"),
    ("equity_index_us", 1, "direct"),
    ("oil_price", 1, "direct"),
    ("commodity_index", 1, "direct"),
    ("volatility_index", 1, "inverse"),
]

_NONTRADITIONAL = [
    ("mobility_index", 1, "direct"),
    ("web_activity_index", 1, "direct"),
    ("topic_lockdown", 1, "inverse"),
    ("topic_face_cover", 1, "inverse"),
    ("topic_jobs", 1, "direct"),
    ("topic_crisis", 1, "direct"),
    ("topic_weather", 1, "direct"),
    ("topic_sports", 1, "direct"),
    ("topic_recipes", 1, "direct"),
    ("topic_travel", 1, "direct"),
    ("topic_games", 1, "direct"),
    ("topic_fitness", 1, "direct"),
    ("topic_music", 1, "direct"),
    ("topic_movies", 1, "direct"),
]

TOPIC_IDS = tuple(name for name, _, _ in _NONTRADITIONAL if name.startswith("topic_"))
LOADING_TOPICS = ("topic_lockdown", "topic_face_cover")

# series published with annual-growth semantics (levels in the CSV)
_LEVEL_SERIES = {name for name, _, _ in _TRADITIONAL} - {
    "business_conf_manuf",
    "business_conf_constr",
    "consumer_conf",
    "unemployment_rate",
    "capacity_util",
}
# leading indicators: today's value reflects next month's activity
_LEAD_SERIES = {"stock_index", "sovereign_spread", "volatility_index"}
_LATE_START = {"web_activity_index": 12, "topic_weather": 12, "mobility_index": 24}

_CRASH = {-5: -3.5, -4: -6.0, -3: -6.5, -2: -5.0, -1: -4.0}


def fixture_schema():
    series = tuple(
        SeriesMeta(id=name, block=block, release_day=day, sign_hint=sign)
        for block, rows in (
            ("traditional", _TRADITIONAL),
            ("high_freq_traditional", _HIGH_FREQ),
            ("high_freq_nontraditional", _NONTRADITIONAL),
        )
        for name, day, sign in rows
    )
    return PanelSchema(series=series, selection_pool=TOPIC_IDS)


def _factor_path(rng, t_len):
    phi = 0.8
    f = np.zeros(t_len + 1)
    f[0] = rng.normal(0, 1)
    innov_sd = np.sqrt(1 - phi**2)
    for t in range(1, t_len + 1):
        f[t] = phi * f[t - 1] + rng.normal(0, innov_sd)
    for offset, drop in _CRASH.items():
        f[t_len + offset] += drop
    return f


def make_fixture(seed=FIXTURE_SEED, as_of=FIXTURE_BUILD_DATE):
    """Generate (panel, target, schema) with the build-date ragged edge.

    Pass ``as_of=None`` for the fully observed panel (useful when a test
    wants to fabricate its own vintages).
    """
    rng = np.random.default_rng(seed)
    schema = fixture_schema()
    dates = np.arange(
        np.datetime64("2004-01", "M"), np.datetime64("2020-08", "M"), dtype="datetime64[M]"
    )
    t_len = dates.size  # 199
    f = _factor_path(rng, t_len)  # one lead month for the leading indicators

    values = np.empty((t_len, len(schema.series)))
    mask = np.ones((t_len, len(schema.series)), dtype=bool)
    for i, m in enumerate(schema.series):
        sign = -1.0 if m.sign_hint == "inverse" else 1.0
        if m.id in LOADING_TOPICS:
            load = sign * rng.uniform(0.9, 1.1)
        elif m.id.startswith("topic_"):
            load = 0.0
        elif m.block == "high_freq_nontraditional":
            load = sign * rng.uniform(0.7, 1.0)
        elif m.block == "high_freq_traditional":
            load = sign * rng.uniform(0.4, 0.9)
        else:
            load = sign * rng.uniform(0.35, 0.95)
        noise_sd = rng.uniform(0.4, 1.0)
        drive = f[1:] if m.id in _LEAD_SERIES else f[:-1]
        signal = load * drive + rng.normal(0, noise_sd, t_len)

        if m.id in _LEVEL_SERIES:
            growth = 2.0 + 2.5 * signal
            level = np.empty(t_len)
            level[:12] = 100.0 * (1.0 + 0.002 * np.arange(12)) * (
                1.0 + 0.01 * rng.normal(0, 1, 12)
            )
            for t in range(12, t_len):
                level[t] = level[t - 12] * (1.0 + growth[t] / 100.0)
            values[:, i] = np.round(level, 6)
        elif m.id.startswith("topic_") or m.id == "web_activity_index":
            raw = 45.0 + 12.0 * signal
            values[:, i] = np.clip(np.round(raw, 2), 0.0, 100.0)
        else:
            values[:, i] = np.round(10.0 + 3.0 * signal, 6)

        start = _LATE_START.get(m.id, 0)
        if start:
            mask[:start, i] = False
            values[:start, i] = np.nan

    panel = TimeSeriesPanel(dates, values, mask, schema.series)
    if as_of is not None:
        panel = apply_vintage(panel, as_of)

    u = np.zeros(t_len)
    e = rng.normal(0, 0.45, t_len)
    for t in range(1, t_len):
        u[t] = 0.3 * u[t - 1] + e[t]
    y = 1.7 + 3.2 * f[:-1] + u
    target = TargetSeries(dates[: t_len - 2], np.round(y[: t_len - 2], 6))
    return panel, target, schema


def write_fixture(out_dir, seed=FIXTURE_SEED, as_of=FIXTURE_BUILD_DATE):
    """Write panel.csv, target.csv and schema.json under ``out_dir``."""
    import pathlib

    from .panel import save_panel, save_target

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    panel, target, schema = make_fixture(seed=seed, as_of=as_of)
    save_panel(panel, out / "panel.csv")
    save_target(target, out / "target.csv")
    schema.to_json(out / "schema.json")
    return out / "panel.csv", out / "target.csv", out / "schema.json"


def simulate_factor_panel(
    n=68,
    t_len=200,
    r=1,
    phi=0.8,
    noise_scale=1.0,
    heteroskedastic=True,
    seed=0,
    missing_tail=0,
):
    """Plain DGP for Monte Carlo studies: X = F P' + e with AR(1) factors.

    Returns (x, mask, f_true, loadings). ``missing_tail`` masks that many
    trailing rows entirely, mimicking a nowcast-time panel.
    """
    rng = np.random.default_rng(seed)
    phi_vec = np.full(r, phi) if np.isscalar(phi) else np.asarray(phi, float)
    f = np.zeros((t_len, r))
    innov_sd = np.sqrt(1.0 - phi_vec**2)
    f[0] = rng.normal(0, 1, r)
    for t in range(1, t_len):
        f[t] = phi_vec * f[t - 1] + rng.normal(0, innov_sd, r)
    loadings = rng.normal(0, 1, (n, r))
    sd = rng.uniform(0.5, 1.5, n) if heteroskedastic else np.ones(n)
    x = f @ loadings.T + rng.normal(0, 1, (t_len, n)) * sd * noise_scale
    mask = np.ones((t_len, n), dtype=bool)
    if missing_tail:
        mask[-missing_tail:] = False
        x = np.where(mask, x, np.nan)
    return x, mask, f, loadings
