"""The indicator panel: ragged edges, release calendars and vintages.

Monthly series arrive on different days of the following month, so on any
given date the most recent rows of the panel are only partially filled.
This walkthrough builds the bundled synthetic dataset the way it looked on
an August 13 data cut, then rewinds the calendar to watch cells disappear.
"""

import numpy as np

from factornow.panel import apply_vintage, availability_ratio
from factornow.synthetic import make_fixture

panel, target, schema = make_fixture()

print(f"panel: {panel.n_periods} months x {panel.n_series} series "
      f"({panel.dates[0]} .. {panel.dates[-1]})")
print(f"target: {len(target)} months, published two months behind the panel\n")

print("availability of the last four months at the August 13 build date:")
for t in range(panel.n_periods - 4, panel.n_periods):
    month = panel.dates[t]
    print(f"  {month}: {availability_ratio(panel, month):5.1%}")

print("\nthe July row is the ragged edge: only series released by day 13")
print("of August are in. A few of the missing ones:")
missing = [m.id for i, m in enumerate(panel.meta) if not panel.mask[-1, i]][:6]
for sid in missing:
    meta = panel.meta[panel.column(sid)]
    print(f"  {sid:24s} releases on day {meta.release_day}")

# rewind the dataset to earlier cut dates; beyond the August 13 build the
# ratio saturates, because cells the shipped dataset never had cannot appear
print("\nJuly availability as the cut date advances through August:")
for day in (1, 5, 13, 20, 28):
    vint = apply_vintage(panel, f"2020-08-{day:02d}")
    print(f"  2020-08-{day:02d}: {availability_ratio(vint, '2020-07'):5.1%}")

# vintages only ever mask, never reveal
early = apply_vintage(panel, "2020-08-01")
again = apply_vintage(early, "2020-08-01")
assert np.array_equal(early.mask, again.mask), "vintage application is idempotent"
assert not (early.mask & ~panel.mask).any(), "a vintage never unmasks a cell"
print("\nvintage operations are idempotent and monotone, as they must be")
