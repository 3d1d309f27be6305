"""Year-indexed series, vintages, and the training-window leakage guard.

The unit of everything in this package is an annual series whose points
carry a vintage: the year by which the value was knowable.  This script
builds a small revision-prone dataset and shows how the guard keeps a
forecast origin honest.
"""

from enrolcast.timebase import (
    AnnualSeries,
    Cohort,
    CovariateSet,
    Dataset,
    Point,
    align_to_common_grid,
    slice_training_window,
    validate_dataset,
)

# A target series: the 2013 value was revised and only published in 2015.
target = AnnualSeries(
    id="domestic",
    unit="headcount",
    points=(
        Point(2010, 5200.0, 2010),
        Point(2011, 5350.0, 2011),
        Point(2012, 5100.0, 2012),
        Point(2013, 5425.0, 2015),  # late vintage: revised two years later
        Point(2014, 5500.0, 2014),
        Point(2015, 5610.0, 2015),
    ),
)

# A covariate published with a one-year delay, so its vintage trails its year.
indicator = AnnualSeries(
    id="sector_index",
    unit="index",
    points=tuple(Point(y, 40.0 + 3.0 * i, y + 1) for i, y in enumerate(range(2010, 2016))),
)

print("== training windows per origin")
for origin in (2013, 2014, 2015):
    window = slice_training_window(target, origin)
    print(f"origin {origin}: target years {window.years()}")
print("note: 2013 only enters once its 2015 vintage has passed.\n")

print("== the covariate's availability lag")
for origin in (2013, 2014):
    window = slice_training_window(indicator, origin)
    print(f"origin {origin}: indicator years {window.years()}")
print("the year-t value is never usable at origin t because it ships at t+1.\n")

print("== common grid alignment")
grid, aligned = align_to_common_grid([target, indicator])
print(f"grid: {grid[0]}..{grid[-1]}")
for s in aligned:
    marks = "".join("." if p.missing else "x" for p in s.points)
    print(f"  {s.id:>12}: {marks}")

print("\n== dataset validation findings")
ds = Dataset(
    targets={Cohort("domestic"): target},
    covariate_regimes=(CovariateSet("indicator", {"sector_index": indicator}),),
)
for finding in validate_dataset(ds):
    print(f"  {finding}")
