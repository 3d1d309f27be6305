"""Engineering leakage-safe demand-proxy features from a monthly index.

A 0-100 search-intensity index is aggregated to annual means, smoothed with
two- and three-year EWMAs, lagged one year, and standardized strictly
within a training window.
"""

import math

from enrolcast.features import (
    EwmaSpec,
    MonthlyPoint,
    MonthlySeries,
    aggregate_monthly_to_annual,
    apply_standardizer,
    build_trends_features,
    ewma,
    fit_standardizer,
)

# Synthetic monthly relative-search-volume: a slow rise, a shock year, recovery.
annual_level = {2015: 42, 2016: 47, 2017: 52, 2018: 58, 2019: 61, 2020: 35, 2021: 44, 2022: 55}
points = []
for year, level in annual_level.items():
    for month in range(1, 13):
        wiggle = 6 * math.sin(month / 12 * 2 * math.pi)
        points.append(MonthlyPoint(year, month, min(100, max(0, level + wiggle))))
monthly = MonthlySeries(id="rsv_worldwide", points=tuple(points))

annual = aggregate_monthly_to_annual(monthly, min_months=10)
print("== annual aggregate (mean of months, vintage = year)")
for p in annual.points:
    print(f"  {p.year}: {p.value:6.2f}")

print("\n== the four-feature regime")
regime, findings = build_trends_features(monthly)
for name in sorted(regime.series):
    s = regime.series[name]
    values = ", ".join(f"{v:.1f}" for v in s.values())
    print(f"  {name:>6} ({s.years()[0]}..{s.years()[-1]}): {values}")
for f in findings:
    print(f"  finding: {f}")

print("\n== EWMA responsiveness: span 2 reacts faster than span 3")
fast = ewma(annual, EwmaSpec(2))
slow = ewma(annual, EwmaSpec(3))
print(f"  2020 shock year: level {annual.value_at(2020):.1f}, "
      f"ewma2 {fast.value_at(2020):.1f}, ewma3 {slow.value_at(2020):.1f}")

print("\n== within-window standardization (no leakage)")
for window_end in (2019, 2022):
    params = fit_standardizer(annual, window_end=window_end)
    z = apply_standardizer(annual, params)
    print(f"  window to {window_end}: mean {params.mean:6.2f} std {params.std:5.2f} "
          f"-> z(2019) = {z.value_at(2019):+.2f}")
print("the 2019 z-score changes with the window: standardization is origin-specific.")
