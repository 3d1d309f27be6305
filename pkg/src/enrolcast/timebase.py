"""Year-indexed series with per-point vintage stamps.

Everything downstream (features, baselines, the backtest engine) works on
:class:`AnnualSeries`: an ordered run of annual points where each point
carries the calendar year it describes, the observed value (or an explicit
missing marker), and the *vintage* -- the year by which the value was
knowable.  Vintages are what make expanding-window backtests honest: a
forecast issued at origin year ``t`` may only see points whose year AND
vintage are both ``<= t``.

All types here are immutable after construction; operations are pure
functions and safe to run concurrently.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

__all__ = [
    "Point",
    "AnnualSeries",
    "Cohort",
    "CovariateSet",
    "Dataset",
    "Finding",
    "TimebaseError",
    "align_to_common_grid",
    "slice_training_window",
    "validate_series",
    "validate_dataset",
    "read_series_csv",
    "write_series_csv",
    "load_dataset",
    "write_dataset_manifest",
]


class TimebaseError(ValueError):
    """Raised when a series operation is asked to violate its contract."""


@dataclass(frozen=True)
class Point:
    """One annual observation: (year, value, vintage).

    ``value`` of ``None`` is an explicit missing marker (a grid slot with no
    observation).  ``vintage`` records the year by which the value became
    knowable; revisions mean vintage may exceed the observation year.
    """

    year: int
    value: float | None
    vintage: int

    def __post_init__(self) -> None:
        if not isinstance(self.year, int) or not isinstance(self.vintage, int):
            raise TimebaseError("year and vintage must be integers")
        if self.value is not None:
            object.__setattr__(self, "value", float(self.value))

    @property
    def missing(self) -> bool:
        return self.value is None


@dataclass(frozen=True)
class AnnualSeries:
    """An identified, unit-labelled run of annual points.

    Construction is permissive (so that dirty inputs can be *represented*
    and then reported by :func:`validate_series`); operations that need a
    clean series call :meth:`ensure_valid` first.
    """

    id: str
    unit: str
    points: tuple[Point, ...]

    def __post_init__(self) -> None:
        if not self.id:
            raise TimebaseError("series id must be non-empty")
        pts = tuple(self.points)
        if len(pts) < 1:
            raise TimebaseError(f"series {self.id!r}: at least one point required")
        object.__setattr__(self, "points", pts)

    # -- accessors ---------------------------------------------------------

    def years(self) -> tuple[int, ...]:
        return tuple(p.year for p in self.points)

    def values(self) -> tuple[float | None, ...]:
        return tuple(p.value for p in self.points)

    def observed(self) -> tuple[Point, ...]:
        """Points that actually carry a value (missing markers dropped)."""
        return tuple(p for p in self.points if not p.missing)

    def value_at(self, year: int) -> float | None:
        for p in self.points:
            if p.year == year:
                return p.value
        return None

    def point_at(self, year: int) -> Point | None:
        for p in self.points:
            if p.year == year:
                return p
        return None

    @property
    def first_year(self) -> int:
        return self.points[0].year

    @property
    def last_year(self) -> int:
        return self.points[-1].year

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[Point]:
        return iter(self.points)

    # -- validation --------------------------------------------------------

    def ensure_valid(self) -> "AnnualSeries":
        """Raise :class:`TimebaseError` on the first error-level finding."""
        for f in validate_series(self):
            if f.level == "error":
                raise TimebaseError(f"series {self.id!r}: {f.message}")
        return self

    def with_points(self, points: Iterable[Point]) -> "AnnualSeries":
        return AnnualSeries(id=self.id, unit=self.unit, points=tuple(points))


@dataclass(frozen=True)
class Cohort:
    """A target population label, e.g. domestic or international entrants."""

    name: str

    def __post_init__(self) -> None:
        if not self.name:
            raise TimebaseError("cohort label must be non-empty")


DOMESTIC = Cohort("domestic")
INTERNATIONAL = Cohort("international")


@dataclass(frozen=True)
class CovariateSet:
    """A named covariate regime: series plus per-series availability lags.

    ``lag_years`` is a publication/availability lag applied when a request
    is assembled: a series lagged by ``k`` contributes its year ``t - k``
    value to year ``t``.  The regime ``"none"`` must carry no series.
    """

    regime_name: str
    series: Mapping[str, AnnualSeries]
    lag_years: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.regime_name:
            raise TimebaseError("regime name must be non-empty")
        series = dict(self.series)
        lags = {name: int(self.lag_years.get(name, 0)) for name in series}
        if self.regime_name == "none" and series:
            raise TimebaseError('regime "none" must carry no covariate series')
        for name, lag in lags.items():
            if lag < 0:
                raise TimebaseError(f"covariate {name!r}: lag_years must be >= 0")
        object.__setattr__(self, "series", series)
        object.__setattr__(self, "lag_years", lags)

    def names(self) -> tuple[str, ...]:
        return tuple(sorted(self.series))


@dataclass(frozen=True)
class Dataset:
    """Targets per cohort plus the covariate regimes of one experiment."""

    targets: Mapping[Cohort, AnnualSeries]
    covariate_regimes: tuple[CovariateSet, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "targets", dict(self.targets))
        object.__setattr__(self, "covariate_regimes", tuple(self.covariate_regimes))
        if not self.targets:
            raise TimebaseError("dataset needs at least one target series")

    def regime(self, name: str) -> CovariateSet:
        for cs in self.covariate_regimes:
            if cs.regime_name == name:
                return cs
        raise TimebaseError(f"unknown covariate regime {name!r}")

    def regime_names(self) -> tuple[str, ...]:
        return tuple(cs.regime_name for cs in self.covariate_regimes)

    def all_series(self) -> tuple[AnnualSeries, ...]:
        out = list(self.targets.values())
        for cs in self.covariate_regimes:
            out.extend(cs.series.values())
        return tuple(out)


@dataclass(frozen=True)
class Finding:
    """One validation observation. ``level`` is ``error`` or ``warning``."""

    level: str
    code: str
    message: str
    series_id: str = ""
    year: int | None = None

    def __str__(self) -> str:  # printable one-liner for the CLI
        loc = self.series_id + (f"@{self.year}" if self.year is not None else "")
        return f"[{self.level}] {self.code}: {self.message}" + (f" ({loc})" if loc else "")


# ---------------------------------------------------------------------------
# validation


def validate_series(series: AnnualSeries, tolerance: float = 0.0) -> list[Finding]:
    """Structural findings for one series; empty list means clean.

    ``tolerance`` is an absolute reconciliation allowance: duplicate-year
    rows whose values agree within it downgrade to a warning (historical
    reporting often re-states a year with rounding noise); beyond it they
    are errors.  The default of 0 treats every duplicate as an error.
    """
    out: list[Finding] = []
    seen: dict[int, Point] = {}
    prev_year: int | None = None
    for p in series.points:
        if p.year in seen:
            first = seen[p.year]
            reconcilable = (
                tolerance > 0.0
                and p.value is not None
                and first.value is not None
                and abs(p.value - first.value) <= tolerance
            )
            out.append(
                Finding(
                    "warning" if reconcilable else "error",
                    "duplicate-year",
                    f"duplicate year {p.year}"
                    + (" (within tolerance)" if reconcilable else ""),
                    series.id,
                    p.year,
                )
            )
        else:
            seen[p.year] = p
        if prev_year is not None and p.year < prev_year:
            out.append(
                Finding("error", "unordered-years", f"year {p.year} not after {prev_year}", series.id, p.year)
            )
        elif prev_year is not None and p.year > prev_year + 1:
            out.append(
                Finding("warning", "grid-gap", f"gap between {prev_year} and {p.year}", series.id, p.year)
            )
        prev_year = p.year
        if p.value is not None and not math.isfinite(p.value):
            out.append(Finding("error", "non-finite-value", f"non-finite value at {p.year}", series.id, p.year))
        if p.missing:
            out.append(Finding("warning", "missing-value", f"missing value at {p.year}", series.id, p.year))
    return out


def validate_dataset(ds: Dataset, tolerance: float = 0.0) -> list[Finding]:
    """Findings across the whole dataset; empty list means valid.

    Reports per-series structural problems, unit mismatches between targets,
    and the common-grid alignment of everything in the dataset (grid gaps
    are warnings: downstream modules decide whether to impute or reject).
    ``tolerance`` is the reconciliation allowance of :func:`validate_series`.
    """
    out: list[Finding] = []
    for s in ds.all_series():
        out.extend(validate_series(s, tolerance=tolerance))
    units = {s.unit for s in ds.targets.values()}
    if len(units) > 1:
        out.append(Finding("warning", "unit-mismatch", f"target units differ: {sorted(units)}"))
    try:
        grid, aligned = align_to_common_grid(list(ds.all_series()))
    except TimebaseError:
        return out
    out.append(
        Finding("info", "alignment", f"common grid {grid[0]}..{grid[-1]} ({len(grid)} years)")
    )
    for s in aligned:
        n_missing = sum(1 for p in s.points if p.missing)
        if n_missing:
            out.append(
                Finding("warning", "grid-missing", f"{n_missing} missing slot(s) on the common grid", s.id)
            )
    return out


def error_findings(findings: Iterable[Finding]) -> list[Finding]:
    return [f for f in findings if f.level == "error"]


# ---------------------------------------------------------------------------
# operations


def align_to_common_grid(
    series_list: Sequence[AnnualSeries],
) -> tuple[tuple[int, ...], list[AnnualSeries]]:
    """Align series onto the contiguous union of their year ranges.

    The grid runs from the earliest to the latest year seen anywhere, step
    one; each output series gets exactly one slot per grid year, with slots
    it does not cover marked missing.  No values are invented.  Idempotent.
    """
    if not series_list:
        raise TimebaseError("no series")
    for s in series_list:
        s.ensure_valid()
    lo = min(s.first_year for s in series_list)
    hi = max(s.last_year for s in series_list)
    grid = tuple(range(lo, hi + 1))
    aligned = []
    for s in series_list:
        by_year = {p.year: p for p in s.points}
        pts = tuple(
            by_year.get(y, Point(year=y, value=None, vintage=y)) for y in grid
        )
        aligned.append(s.with_points(pts))
    return grid, aligned


def slice_training_window(series: AnnualSeries, origin: int) -> AnnualSeries:
    """Observations available at the forecast origin: year <= origin and
    vintage <= origin.  Missing markers are dropped; order is preserved.

    This is the global leakage guard every other module builds on.
    """
    series.ensure_valid()
    eligible = tuple(
        p for p in series.points if not p.missing and p.year <= origin and p.vintage <= origin
    )
    if not eligible:
        raise TimebaseError(f"empty training window for {series.id!r} at origin {origin}")
    return series.with_points(eligible)


# ---------------------------------------------------------------------------
# file formats
#
# Series file: comma-separated, header ``series_id,year,value,vintage``; the
# vintage column may be omitted, in which case vintage defaults to the
# observation year (flagged).  Missing values are written as empty fields.
# Dataset manifest: JSON naming target files per cohort and covariate files
# per regime with per-series lag_years.


def _format_value(v: float | None) -> str:
    return "" if v is None else repr(v)


def write_series_csv(path: str | Path, series_list: Sequence[AnnualSeries]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "year", "value", "vintage"])
        for s in series_list:
            for p in s.points:
                w.writerow([s.id, p.year, _format_value(p.value), p.vintage])


def read_series_csv(
    path: str | Path, unit: str = ""
) -> tuple[dict[str, AnnualSeries], list[Finding]]:
    """Read one series file; returns series keyed by id plus findings.

    Rows with an unparsable year are dropped with an error finding; a
    missing vintage column defaults vintage to the observation year and is
    flagged once per series.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        return _read_series_rows(fh, unit=unit, source=str(path))


def read_series_text(text: str, unit: str = "") -> tuple[dict[str, AnnualSeries], list[Finding]]:
    return _read_series_rows(io.StringIO(text), unit=unit, source="<text>")


def _read_series_rows(fh, unit: str, source: str):
    findings: list[Finding] = []
    reader = csv.DictReader(fh)
    required = {"series_id", "year", "value"}
    header = set(reader.fieldnames or ())
    if not required.issubset(header):
        raise TimebaseError(f"{source}: header must contain {sorted(required)}")
    has_vintage = "vintage" in header
    rows: dict[str, list[Point]] = {}
    defaulted: set[str] = set()
    for i, row in enumerate(reader, start=2):
        sid = (row.get("series_id") or "").strip()
        if not sid:
            findings.append(Finding("error", "bad-row", f"{source}:{i}: empty series_id"))
            continue
        try:
            year = int(row["year"])
        except (TypeError, ValueError):
            findings.append(Finding("error", "bad-row", f"{source}:{i}: unparsable year", sid))
            continue
        raw_value = (row.get("value") or "").strip()
        value: float | None
        if raw_value == "":
            value = None
        else:
            try:
                value = float(raw_value)
            except ValueError:
                findings.append(Finding("error", "bad-row", f"{source}:{i}: unparsable value", sid, year))
                continue
        raw_vintage = (row.get("vintage") or "").strip() if has_vintage else ""
        if raw_vintage == "":
            vintage = year
            if has_vintage or sid not in defaulted:
                defaulted.add(sid)
        else:
            vintage = int(raw_vintage)
        rows.setdefault(sid, []).append(Point(year=year, value=value, vintage=vintage))
    series: dict[str, AnnualSeries] = {}
    for sid, pts in rows.items():
        pts_sorted = sorted(pts, key=lambda p: p.year)
        s = AnnualSeries(id=sid, unit=unit, points=tuple(pts_sorted))
        findings.extend(validate_series(s))
        if sid in defaulted:
            findings.append(
                Finding("warning", "vintage-defaulted", "vintage defaulted to observation year", sid)
            )
        series[sid] = s
    return series, findings


def load_dataset(manifest_path: str | Path) -> tuple[Dataset, list[Finding]]:
    """Load a dataset manifest and every series file it names.

    Manifest schema::

        {
          "targets": {"domestic": {"file": "dom.csv", "series_id": "domestic",
                                   "unit": "headcount"}},
          "regimes": [
            {"name": "none"},
            {"name": "ioci",
             "series": [{"name": "ioci", "file": "ioci.csv",
                         "series_id": "ioci", "lag_years": 0}]}
          ]
        }

    Paths are resolved relative to the manifest file.
    """
    manifest_path = Path(manifest_path)
    with open(manifest_path, encoding="utf-8") as fh:
        doc = json.load(fh)
    base = manifest_path.parent
    findings: list[Finding] = []

    def pick(path: Path, sid: str, unit: str) -> AnnualSeries:
        series, fs = read_series_csv(path, unit=unit)
        findings.extend(fs)
        if sid not in series:
            raise TimebaseError(f"{path}: series {sid!r} not found")
        return series[sid]

    targets: dict[Cohort, AnnualSeries] = {}
    for cohort_name, entry in doc.get("targets", {}).items():
        sid = entry.get("series_id", cohort_name)
        s = pick(base / entry["file"], sid, entry.get("unit", ""))
        targets[Cohort(cohort_name)] = s

    regimes: list[CovariateSet] = []
    for rg in doc.get("regimes", []):
        name = rg["name"]
        series_map: dict[str, AnnualSeries] = {}
        lags: dict[str, int] = {}
        for entry in rg.get("series", []):
            cname = entry["name"]
            sid = entry.get("series_id", cname)
            series_map[cname] = pick(base / entry["file"], sid, entry.get("unit", ""))
            lags[cname] = int(entry.get("lag_years", 0))
        regimes.append(CovariateSet(regime_name=name, series=series_map, lag_years=lags))

    ds = Dataset(targets=targets, covariate_regimes=tuple(regimes))
    findings.extend(validate_dataset(ds))
    deduped: list[Finding] = []
    seen_keys = set()
    for f in findings:
        key = (f.level, f.code, f.series_id, f.year, f.message)
        if key not in seen_keys:
            seen_keys.add(key)
            deduped.append(f)
    return ds, deduped


def write_dataset_manifest(
    path: str | Path, ds: Dataset, series_dir: str | Path | None = None
) -> None:
    """Write a dataset back out: one CSV per series plus the JSON manifest."""
    path = Path(path)
    base = Path(series_dir) if series_dir is not None else path.parent
    base.mkdir(parents=True, exist_ok=True)
    doc: dict = {"targets": {}, "regimes": []}
    for cohort, s in ds.targets.items():
        fname = f"target_{cohort.name}.csv"
        write_series_csv(base / fname, [s])
        doc["targets"][cohort.name] = {"file": fname, "series_id": s.id, "unit": s.unit}
    for cs in ds.covariate_regimes:
        rg: dict = {"name": cs.regime_name, "series": []}
        for name, s in cs.series.items():
            fname = f"cov_{cs.regime_name}_{name}.csv"
            write_series_csv(base / fname, [s])
            rg["series"].append(
                {
                    "name": name,
                    "file": fname,
                    "series_id": s.id,
                    "unit": s.unit,
                    "lag_years": cs.lag_years.get(name, 0),
                }
            )
        doc["regimes"].append(rg)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
