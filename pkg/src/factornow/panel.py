"""Monthly indicator panel with availability mask and release-day metadata.

The panel is the raw material for factor extraction: a dated T x N matrix
whose most recent rows are typically incomplete because series are published
with different delays (the "ragged edge"). Cells carry both a value and an
availability flag; every operation consults the mask, never the NaN sentinel
stored at unavailable cells.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass

import numpy as np

BLOCKS = ("traditional", "high_freq_traditional", "high_freq_nontraditional")
SIGN_HINTS = ("direct", "inverse")


def parse_month(text):
    """Parse ``YYYY-MM`` or ``YYYY/MM`` into a numpy month stamp."""
    s = str(text).strip().replace("/", "-")
    parts = s.split("-")
    if len(parts) < 2 or not (parts[0].isdigit() and parts[1].isdigit()):
        raise ValueError(f"malformed date {text!r}: expected YYYY-MM or YYYY/MM")
    year, month = int(parts[0]), int(parts[1])
    if not (1 <= month <= 12):
        raise ValueError(f"malformed date {text!r}: month out of range")
    return np.datetime64(f"{year:04d}-{month:02d}", "M")


def month_grid(start, end):
    """Gapless monthly grid from start to end inclusive."""
    return np.arange(start, end + 1, dtype="datetime64[M]")


def _as_day(d):
    if isinstance(d, np.datetime64):
        return d.astype("datetime64[D]")
    if isinstance(d, (dt.date, dt.datetime)):
        return np.datetime64(d.strftime("%Y-%m-%d"), "D")
    return np.datetime64(str(d), "D")


@dataclass(frozen=True)
class SeriesMeta:
    """Identity and release metadata of one panel series.

    ``release_day`` is the day of the month *after* the reference month on
    which the value becomes available: a series with release_day 1 for
    January is published on February 1.
    """

    id: str
    block: str = "traditional"
    release_day: int = 1
    sign_hint: str = "direct"

    def __post_init__(self):
        if not self.id:
            raise ValueError("series id must be nonempty")
        if self.block not in BLOCKS:
            raise ValueError(f"unknown block {self.block!r} for series {self.id!r}")
        if not (1 <= int(self.release_day) <= 31):
            raise ValueError(f"release_day of {self.id!r} must be within [1, 31]")
        if self.sign_hint not in SIGN_HINTS:
            raise ValueError(f"unknown sign_hint {self.sign_hint!r} for series {self.id!r}")

    def release_date(self, month):
        """Calendar day on which the value for ``month`` is released."""
        following = (np.datetime64(month, "M") + 1).astype("datetime64[D]")
        return following + np.timedelta64(int(self.release_day) - 1, "D")


@dataclass(frozen=True)
class TimeSeriesPanel:
    """Dated T x N matrix with per-cell availability.

    ``values[t, i]`` is NaN whenever ``mask[t, i]`` is False; consumers must
    branch on the mask. Instances are immutable (arrays are frozen), so
    panels can be shared freely across threads.
    """

    dates: np.ndarray
    values: np.ndarray
    mask: np.ndarray
    meta: tuple

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[M]")
        values = np.array(self.values, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        meta = tuple(self.meta)
        if values.ndim != 2:
            raise ValueError("values must be a T x N matrix")
        t, n = values.shape
        if t < 1 or n < 1:
            raise ValueError("panel needs at least one period and one series")
        if dates.shape != (t,) or mask.shape != (t, n) or len(meta) != n:
            raise ValueError("dates, values, mask and meta shapes disagree")
        steps = np.diff(dates.astype(int))
        if t > 1 and not np.all(steps == 1):
            raise ValueError("gap in monthly grid: dates must be consecutive months")
        ids = [m.id for m in meta]
        if len(set(ids)) != n:
            raise ValueError("duplicate series id in panel metadata")
        values = np.where(mask, values, np.nan)
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("observed cells must be finite")
        for arr in (dates, values, mask):
            arr.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "meta", meta)

    @property
    def n_periods(self):
        return self.values.shape[0]

    @property
    def n_series(self):
        return self.values.shape[1]

    @property
    def ids(self):
        return tuple(m.id for m in self.meta)

    def column(self, series_id):
        """Index of a series id; raises if absent."""
        try:
            return self.ids.index(series_id)
        except ValueError:
            raise KeyError(f"series {series_id!r} not in panel") from None

    def row(self, month):
        m = parse_month(month) if not isinstance(month, np.datetime64) else np.datetime64(month, "M")
        idx = int(m.astype(int) - self.dates[0].astype(int))
        if not (0 <= idx < self.n_periods):
            raise ValueError(f"month {m} outside panel range")
        return idx

    def select_series(self, ids):
        """New panel restricted to the given series ids, order preserved."""
        cols = [self.column(i) for i in ids]
        return TimeSeriesPanel(
            dates=self.dates.copy(),
            values=self.values[:, cols],
            mask=self.mask[:, cols],
            meta=tuple(self.meta[c] for c in cols),
        )


@dataclass(frozen=True)
class TargetSeries:
    """The nowcast target: a dated vector in annual-percent-variation units.

    Published with a two-month lag relative to the indicator panel, so a
    panel ending at month T pairs with a target ending at T - 2.
    """

    dates: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[M]")
        values = np.asarray(self.values, dtype=float)
        if dates.ndim != 1 or values.shape != dates.shape:
            raise ValueError("target dates and values must be aligned vectors")
        if dates.size > 1 and not np.all(np.diff(dates.astype(int)) == 1):
            raise ValueError("gap in monthly grid: target dates must be consecutive")
        for arr in (dates, values):
            arr.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size


def check_alignment(panel, target):
    """Validate the two-month publication-lag pairing of panel and target."""
    if len(target) != panel.n_periods - 2:
        raise ValueError(
            f"target length {len(target)} incompatible with panel length "
            f"{panel.n_periods}: expected panel length minus 2"
        )
    if target.dates[0] != panel.dates[0]:
        raise ValueError("target and panel must start at the same month")


@dataclass(frozen=True)
class PanelSchema:
    """Ingestion config: per-series metadata plus parsing flags."""

    series: tuple
    fill_gaps: bool = False
    aggregate_daily: bool = False
    selection_pool: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "series", tuple(self.series))
        object.__setattr__(self, "selection_pool", tuple(self.selection_pool))

    def meta_for(self, series_id):
        for m in self.series:
            if m.id == series_id:
                return m
        raise ValueError(f"series {series_id!r} missing from schema")

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        series = tuple(
            SeriesMeta(
                id=s["id"],
                block=s.get("block", "traditional"),
                release_day=int(s.get("release_day", 1)),
                sign_hint=s.get("sign_hint", "direct"),
            )
            for s in doc["series"]
        )
        return cls(
            series=series,
            fill_gaps=bool(doc.get("fill_gaps", False)),
            aggregate_daily=bool(doc.get("aggregate_daily", False)),
            selection_pool=tuple(doc.get("selection_pool", ())),
        )

    def to_json(self, path):
        doc = {
            "series": [
                {
                    "id": m.id,
                    "block": m.block,
                    "release_day": m.release_day,
                    "sign_hint": m.sign_hint,
                }
                for m in self.series
            ],
            "fill_gaps": self.fill_gaps,
            "aggregate_daily": self.aggregate_daily,
            "selection_pool": list(self.selection_pool),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _read_csv_table(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    return header, rows[1:]


def _parse_cell(text, where):
    s = text.strip()
    if s == "":
        return np.nan, False
    try:
        return float(s), True
    except ValueError:
        raise ValueError(f"non-numeric cell {text!r} at {where}") from None


def load_panel(path, schema):
    """Read a `date,<id1>,...,<idN>` CSV into a panel.

    Empty cells become unavailable. Daily input is averaged to monthly means
    when ``schema.aggregate_daily`` is set. Missing interior months are an
    error unless ``schema.fill_gaps`` requests an all-missing filler row.
    """
    header, body = _read_csv_table(path)
    if len(header) < 2:
        raise ValueError(f"{path}: need a date column plus at least one series")
    ids = header[1:]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate series id in header")
    meta = tuple(schema.meta_for(i) for i in ids)

    months, cells = [], []
    for r, row in enumerate(body, start=2):
        raw_date = row[0].strip()
        if schema.aggregate_daily and raw_date.count("-") == 2:
            months.append(np.datetime64(raw_date, "M"))
        else:
            months.append(parse_month(raw_date))
        padded = list(row[1:]) + [""] * (len(ids) - (len(row) - 1))
        cells.append(
            [_parse_cell(c, f"{path} line {r} column {ids[j]!r}") for j, c in enumerate(padded)]
        )

    months = np.asarray(months, dtype="datetime64[M]")
    vals = np.array([[c[0] for c in row] for row in cells], dtype=float)
    obs = np.array([[c[1] for c in row] for row in cells], dtype=bool)

    if schema.aggregate_daily:
        grid = month_grid(months.min(), months.max())
        values = np.full((grid.size, len(ids)), np.nan)
        mask = np.zeros((grid.size, len(ids)), dtype=bool)
        for t, m in enumerate(grid):
            take = months == m
            if not take.any():
                continue
            sub_vals, sub_obs = vals[take], obs[take]
            counts = sub_obs.sum(axis=0)
            with np.errstate(invalid="ignore"):
                means = np.nansum(np.where(sub_obs, sub_vals, 0.0), axis=0) / np.where(
                    counts > 0, counts, 1
                )
            mask[t] = counts > 0
            values[t] = np.where(mask[t], means, np.nan)
        return TimeSeriesPanel(grid, values, mask, meta)

    order = np.argsort(months)
    months, vals, obs = months[order], vals[order], obs[order]
    if np.unique(months).size != months.size:
        raise ValueError(f"{path}: duplicated month in date column")
    grid = month_grid(months[0], months[-1])
    if grid.size != months.size:
        if not schema.fill_gaps:
            raise ValueError(f"{path}: gap in monthly grid (set fill_gaps to pad)")
        values = np.full((grid.size, len(ids)), np.nan)
        mask = np.zeros((grid.size, len(ids)), dtype=bool)
        pos = (months.astype(int) - grid[0].astype(int)).astype(int)
        values[pos] = vals
        mask[pos] = obs
        return TimeSeriesPanel(grid, values, mask, meta)
    return TimeSeriesPanel(grid, vals, obs, meta)


def save_panel(panel, path):
    """Write a panel back to CSV; empty cells mark unavailable values.

    Uses shortest round-trip float formatting, so load -> save -> load is
    bit-exact on values and mask.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", *panel.ids])
        for t in range(panel.n_periods):
            row = [str(panel.dates[t])]
            for i in range(panel.n_series):
                row.append(repr(float(panel.values[t, i])) if panel.mask[t, i] else "")
            writer.writerow(row)


def load_target(path):
    """Read a two-column `date,value` CSV into a TargetSeries."""
    header, body = _read_csv_table(path)
    if len(header) != 2:
        raise ValueError(f"{path}: target file must have exactly two columns")
    dates, values = [], []
    for r, row in enumerate(body, start=2):
        dates.append(parse_month(row[0]))
        v, ok = _parse_cell(row[1], f"{path} line {r}")
        if not ok:
            raise ValueError(f"{path} line {r}: target values cannot be missing")
        values.append(v)
    order = np.argsort(np.asarray(dates, dtype="datetime64[M]"))
    return TargetSeries(
        np.asarray(dates, dtype="datetime64[M]")[order], np.asarray(values)[order]
    )


def save_target(target, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "value"])
        for t in range(len(target)):
            writer.writerow([str(target.dates[t]), repr(float(target.values[t]))])


def apply_vintage(panel, as_of):
    """Mask every cell whose release date falls after ``as_of``.

    Reconstructs the dataset as it existed on a calendar date. Masking is
    monotone: cells can only go from available to unavailable, so applying
    the same date twice is a no-op.
    """
    cut = _as_day(as_of)
    if cut < panel.dates[0].astype("datetime64[D]"):
        raise ValueError(f"as_of {cut} precedes the panel's first month")
    mask = panel.mask.copy()
    for i, m in enumerate(panel.meta):
        release = (panel.dates + 1).astype("datetime64[D]") + np.timedelta64(
            int(m.release_day) - 1, "D"
        )
        mask[:, i] &= release <= cut
    return TimeSeriesPanel(panel.dates.copy(), np.where(mask, panel.values, np.nan), mask, panel.meta)


def availability_ratio(panel, month):
    """Share of series observed at ``month``."""
    t = panel.row(month)
    return float(panel.mask[t].mean())
