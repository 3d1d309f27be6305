"""Leakage-safe covariate feature engineering.

Turns raw proxy signals (monthly search-intensity indices, annual indicators)
into the engineered covariates used by the backtest: EWMA smoothers, lagged
levels, and within-training-window standardization.  Nothing here ever looks
past the point it is evaluated at: EWMA and lag are strictly causal, and the
standardizer splits into a fit step (window only) and an apply step.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass

from .timebase import AnnualSeries, CovariateSet, Finding, Point

__all__ = [
    "EwmaSpec",
    "StandardizationParams",
    "MonthlyPoint",
    "MonthlySeries",
    "FeatureError",
    "ewma",
    "lag",
    "fit_standardizer",
    "apply_standardizer",
    "aggregate_monthly_to_annual",
    "build_trends_features",
    "read_monthly_csv",
]

DEGENERATE_STD = 1e-12


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class EwmaSpec:
    """Span-parameterised exponential smoother: alpha = 2 / (span + 1)."""

    span_years: int

    def __post_init__(self) -> None:
        if self.span_years < 1:
            raise FeatureError("span_years must be >= 1")

    @property
    def alpha(self) -> float:
        return 2.0 / (self.span_years + 1)


@dataclass(frozen=True)
class StandardizationParams:
    """Mean/std fitted on observations with year and vintage <= window_end."""

    mean: float
    std: float
    window_end: int
    degenerate: bool = False


@dataclass(frozen=True)
class MonthlyPoint:
    year: int
    month: int
    value: float

    def __post_init__(self) -> None:
        if not 1 <= self.month <= 12:
            raise FeatureError(f"month {self.month} out of range")
        if not 0.0 <= self.value <= 100.0:
            raise FeatureError(f"value {self.value} outside [0, 100]")


@dataclass(frozen=True)
class MonthlySeries:
    """A 0-100 scaled monthly index, e.g. relative search volume."""

    id: str
    points: tuple[MonthlyPoint, ...]

    def __post_init__(self) -> None:
        keys = [(p.year, p.month) for p in self.points]
        if len(keys) != len(set(keys)):
            raise FeatureError(f"series {self.id!r}: duplicate (year, month)")
        object.__setattr__(
            self, "points", tuple(sorted(self.points, key=lambda p: (p.year, p.month)))
        )


def _require_contiguous_observed(series: AnnualSeries, what: str) -> list[Point]:
    series.ensure_valid()
    pts = list(series.points)
    for prev, cur in zip(pts, pts[1:]):
        if cur.year != prev.year + 1:
            raise FeatureError(f"gap in {what} input: {prev.year} -> {cur.year}")
    if any(p.missing for p in pts):
        raise FeatureError(f"gap in {what} input: missing value")
    return pts


def ewma(series: AnnualSeries, spec: EwmaSpec) -> AnnualSeries:
    """Causal exponential smoothing, initialised at the first observation.

    m_1 = x_1 and m_t = alpha*x_t + (1-alpha)*m_{t-1}.  The output covers the
    same years as the input; each output vintage is the max input vintage up
    to that year, since the smoothed value depends on the whole prefix.
    """
    pts = _require_contiguous_observed(series, "EWMA")
    a = spec.alpha
    out: list[Point] = []
    m = pts[0].value
    vin = pts[0].vintage
    out.append(Point(pts[0].year, m, vin))
    for p in pts[1:]:
        m = a * p.value + (1.0 - a) * m
        vin = max(vin, p.vintage)
        out.append(Point(p.year, m, vin))
    return AnnualSeries(
        id=f"{series.id}_ewma{spec.span_years}", unit=series.unit, points=tuple(out)
    )


def lag(series: AnnualSeries, k: int) -> AnnualSeries:
    """Shift values forward by k years within the input's year span.

    The output is defined on the input years minus the first k; its value at
    year t is the input value at t-k, with the source point's vintage carried
    along (the lagged value was knowable when its source was).
    """
    if k < 1:
        raise FeatureError("lag must be >= 1")
    series.ensure_valid()
    pts = list(series.points)
    if k >= len(pts):
        raise FeatureError(f"lag exceeds history: k={k}, length={len(pts)}")
    by_year = {p.year: p for p in pts}
    out = []
    for p in pts[k:]:
        src = by_year.get(p.year - k)
        if src is None:
            raise FeatureError(f"gap in lag input at {p.year - k}")
        out.append(Point(p.year, src.value, src.vintage))
    return AnnualSeries(id=f"{series.id}_lag{k}", unit=series.unit, points=tuple(out))


def fit_standardizer(series: AnnualSeries, window_end: int) -> StandardizationParams:
    """Sample mean and (n-1) standard deviation of the training window.

    Only observations with year <= window_end and vintage <= window_end are
    eligible, so a standardizer fitted at origin t cannot react to anything
    published later.  A constant window yields a degenerate flag, not an
    error: downstream maps it to all-zero features.
    """
    series.ensure_valid()
    vals = [
        p.value
        for p in series.points
        if not p.missing and p.year <= window_end and p.vintage <= window_end
    ]
    if len(vals) < 2:
        raise FeatureError(
            f"standardizer for {series.id!r} needs >= 2 points at window_end {window_end}"
        )
    mean = statistics.fmean(vals)
    std = statistics.stdev(vals)
    return StandardizationParams(
        mean=mean, std=std, window_end=window_end, degenerate=std < DEGENERATE_STD
    )


def apply_standardizer(series: AnnualSeries, params: StandardizationParams) -> AnnualSeries:
    """z_t = (x_t - mean) / std; degenerate windows map every value to 0."""
    series.ensure_valid()
    out = []
    for p in series.points:
        if p.missing:
            out.append(p)
        elif params.degenerate:
            out.append(Point(p.year, 0.0, p.vintage))
        else:
            out.append(Point(p.year, (p.value - params.mean) / params.std, p.vintage))
    return AnnualSeries(id=series.id, unit="z-score", points=tuple(out))


def aggregate_monthly_to_annual(m: MonthlySeries, min_months: int = 10) -> AnnualSeries:
    """Annual mean of the available months; thin years become missing slots.

    The annual value is observable once the year has ended, so the vintage of
    every slot is the year itself.
    """
    if not 1 <= min_months <= 12:
        raise FeatureError("min_months must be in 1..12")
    if not m.points:
        raise FeatureError(f"monthly series {m.id!r} is empty")
    by_year: dict[int, list[float]] = {}
    for p in m.points:
        by_year.setdefault(p.year, []).append(p.value)
    lo, hi = min(by_year), max(by_year)
    pts = []
    for year in range(lo, hi + 1):
        months = by_year.get(year, [])
        if len(months) >= min_months:
            pts.append(Point(year, statistics.fmean(months), year))
        else:
            pts.append(Point(year, None, year))
    return AnnualSeries(id=f"{m.id}_annual", unit="index 0-100", points=tuple(pts))


def build_trends_features(
    raw: MonthlySeries, min_months: int = 10, regime_name: str = "google_trends"
) -> tuple[CovariateSet, list[Finding]]:
    """The demand-proxy regime: annual level, EWMA-2, EWMA-3, and lag-1.

    All four features derive from the annual aggregate of the raw monthly
    index.  A one-year history cannot support the lag-1 feature; the regime
    is then built from the remaining three with a finding.
    """
    findings: list[Finding] = []
    annual = aggregate_monthly_to_annual(raw, min_months=min_months)
    observed = annual.observed()
    if not observed:
        raise FeatureError(f"no year of {raw.id!r} reaches {min_months} months")
    if len(observed) < len(annual):
        findings.append(
            Finding("warning", "thin-years", "years below the month threshold were dropped", annual.id)
        )
    base = annual.with_points(observed)
    series = {
        "level": base,
        "ewma2": ewma(base, EwmaSpec(2)),
        "ewma3": ewma(base, EwmaSpec(3)),
    }
    if len(base) > 1:
        series["lag1"] = lag(base, 1)
    else:
        findings.append(
            Finding("warning", "feature-omitted", "lag-1 omitted: single year of history", base.id)
        )
    return (
        CovariateSet(regime_name=regime_name, series=series, lag_years={n: 0 for n in series}),
        findings,
    )


def read_monthly_csv(path, series_id: str | None = None) -> MonthlySeries:
    """Read a monthly input file: header ``series_id,year,month,value``."""
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv.DictReader(fh)
        header = set(reader.fieldnames or ())
        if not {"series_id", "year", "month", "value"}.issubset(header):
            raise FeatureError(f"{path}: header must be series_id,year,month,value")
        rows: dict[str, list[MonthlyPoint]] = {}
        for row in reader:
            sid = row["series_id"].strip()
            rows.setdefault(sid, []).append(
                MonthlyPoint(int(row["year"]), int(row["month"]), float(row["value"]))
            )
    if not rows:
        raise FeatureError(f"{path}: no rows")
    if series_id is None:
        if len(rows) > 1:
            raise FeatureError(f"{path}: multiple series present, pass series_id")
        series_id = next(iter(rows))
    if series_id not in rows:
        raise FeatureError(f"{path}: series {series_id!r} not found")
    return MonthlySeries(id=series_id, points=tuple(rows[series_id]))
