"""Expanding-window backtest engine with strict vintage control.

A plan is a grid of cells: adapter x covariate regime x forecast origin.
Every cell assembles a request whose target and covariate histories contain
nothing dated or versioned after the origin -- a point that is in-window by
year but carries a later vintage is a hard "leakage detected" error, never a
silent drop.  Cells fail independently: a crashing external adapter costs
its own cells only.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from . import metrics as metrics_mod
from .adapters import (
    AdapterDescriptor,
    AdapterError,
    ForecastRequest,
    forecast as run_forecast,
    resolve_adapter,
)
from .baselines import ArimaError
from .features import FeatureError, apply_standardizer, fit_standardizer, lag
from .quantiles import QuantileError
from .timebase import AnnualSeries, Cohort, Dataset, TimebaseError, slice_training_window

__all__ = [
    "BacktestError",
    "LeakageError",
    "BacktestPlan",
    "ForecastRecord",
    "CellFailure",
    "BacktestReport",
    "plan_origins",
    "make_plan",
    "assemble_request",
    "run_backtest",
    "summarize_report",
    "effect_sizes",
    "write_records_csv",
    "read_records_csv",
]

UNCONDITIONED_FLAG = "unconditioned"
DEFAULT_QUANTILE_LEVELS = (0.025, 0.1, 0.5, 0.9, 0.975)


class BacktestError(RuntimeError):
    pass


class LeakageError(BacktestError):
    """Information dated or versioned after the forecast origin reached a
    request; names the offending series and year."""


@dataclass(frozen=True)
class BacktestPlan:
    cohort: Cohort
    origins: tuple[int, ...]
    regimes: tuple[str, ...]
    adapters: tuple[AdapterDescriptor, ...]
    horizon: int = 1
    min_train_years: int = 8
    quantile_levels: tuple[float, ...] = DEFAULT_QUANTILE_LEVELS
    standardize_covariates: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        origins = tuple(int(o) for o in self.origins)
        for a, b in zip(origins, origins[1:]):
            if b <= a:
                raise BacktestError("origins must be strictly increasing")
        if not origins:
            raise BacktestError("plan needs at least one origin")
        if self.horizon < 1:
            raise BacktestError("horizon must be >= 1")
        if not self.regimes:
            raise BacktestError("plan needs at least one regime")
        if not self.adapters:
            raise BacktestError("plan needs at least one adapter")
        object.__setattr__(self, "origins", origins)
        object.__setattr__(self, "regimes", tuple(self.regimes))
        object.__setattr__(self, "adapters", tuple(self.adapters))
        object.__setattr__(self, "quantile_levels", tuple(float(v) for v in self.quantile_levels))


@dataclass(frozen=True)
class ForecastRecord:
    model: str
    regime: str
    origin: int
    step: int
    target_year: int
    point: float
    quantiles: Mapping[float, float]
    actual: float | None
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.target_year != self.origin + self.step:
            raise BacktestError("target_year must equal origin + step")
        object.__setattr__(self, "quantiles", dict(self.quantiles))
        object.__setattr__(self, "flags", tuple(self.flags))


@dataclass(frozen=True)
class CellFailure:
    model: str
    regime: str
    origin: int
    error: str


@dataclass(frozen=True)
class BacktestReport:
    cohort: str
    horizon: int
    records: tuple[ForecastRecord, ...]
    failures: tuple[CellFailure, ...] = ()
    seed: int = 0

    def for_cell(self, model: str | None = None, regime: str | None = None):
        return tuple(
            r
            for r in self.records
            if (model is None or r.model == model) and (regime is None or r.regime == regime)
        )

    def models(self) -> tuple[str, ...]:
        return tuple(sorted({r.model for r in self.records}))

    def regimes(self) -> tuple[str, ...]:
        return tuple(sorted({r.regime for r in self.records}))


# ---------------------------------------------------------------------------
# planning


def plan_origins(series: AnnualSeries, min_train_years: int, horizon: int = 1) -> tuple[int, ...]:
    """Every origin with enough training history and a scorable outcome.

    An origin t qualifies when at least ``min_train_years`` observations are
    available at t (year and vintage both <= t) and the actual at
    t + horizon is observed.
    """
    series.ensure_valid()
    if min_train_years < 1:
        raise BacktestError("min_train_years must be >= 1")
    observed = [p for p in series.points if not p.missing]
    if len(observed) < min_train_years + horizon:
        raise BacktestError(
            f"series {series.id!r} has {len(observed)} observations; "
            f"needs {min_train_years + horizon}"
        )
    origins = []
    for p in observed:
        t = p.year
        n_train = sum(1 for o in observed if o.year <= t and o.vintage <= t)
        target = series.point_at(t + horizon)
        if n_train >= min_train_years and target is not None and not target.missing:
            origins.append(t)
    if not origins:
        raise BacktestError("no feasible forecast origins")
    return tuple(origins)


def make_plan(
    dataset: Dataset,
    cohort: Cohort,
    adapters: Sequence[AdapterDescriptor],
    regimes: Sequence[str] | None = None,
    horizon: int = 1,
    min_train_years: int = 8,
    quantile_levels: Sequence[float] = DEFAULT_QUANTILE_LEVELS,
    standardize_covariates: bool = True,
    seed: int = 0,
) -> BacktestPlan:
    target = dataset.targets[cohort]
    origins = plan_origins(target, min_train_years, horizon)
    regime_names = tuple(regimes) if regimes is not None else dataset.regime_names()
    if not regime_names:
        regime_names = ("none",)
    return BacktestPlan(
        cohort=cohort,
        origins=origins,
        regimes=regime_names,
        adapters=tuple(adapters),
        horizon=horizon,
        min_train_years=min_train_years,
        quantile_levels=tuple(quantile_levels),
        standardize_covariates=standardize_covariates,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# request assembly


def _guard_series(series: AnnualSeries, origin: int) -> None:
    """Hard leakage check: in-window years must carry in-window vintages."""
    for p in series.points:
        if not p.missing and p.year <= origin and p.vintage > origin:
            raise LeakageError(
                f"leakage detected: series {series.id!r} year {p.year} has vintage "
                f"{p.vintage} after origin {origin}"
            )


def assemble_request(
    plan: BacktestPlan,
    dataset: Dataset,
    origin: int,
    regime: str,
    request_id: str | None = None,
) -> ForecastRequest:
    """Build the leakage-safe request for one (origin, regime) cell.

    Covariates are lagged per the regime's availability rules, windowed to
    the origin, and standardized with parameters fitted at window_end ==
    origin.  Any in-window point with a post-origin vintage raises
    :class:`LeakageError` naming the series and year.
    """
    target = dataset.targets[plan.cohort]
    _guard_series(target, origin)
    window = slice_training_window(target, origin)
    cov_history: dict[str, tuple[tuple[int, float], ...]] = {}
    cs = dataset.regime(regime)
    for name in sorted(cs.series):
        s = cs.series[name]
        k = cs.lag_years.get(name, 0)
        shifted = lag(s, k) if k >= 1 else s
        _guard_series(shifted, origin)
        try:
            sliced = slice_training_window(shifted, origin)
        except TimebaseError:
            continue  # no in-window data: covariate simply absent at this origin
        if plan.standardize_covariates and len(sliced) >= 2:
            params = fit_standardizer(sliced, window_end=origin)
            sliced = apply_standardizer(sliced, params)
        cov_history[name] = tuple((p.year, p.value) for p in sliced.points if not p.missing)
    request = ForecastRequest(
        request_id=request_id or f"{plan.cohort.name}|{regime}|{origin}",
        series_id=target.id,
        target_history=tuple((p.year, p.value) for p in window.points),
        covariate_history=cov_history,
        horizon=plan.horizon,
        quantile_levels=plan.quantile_levels,
    )
    _assert_leakage_free(request, origin)
    return request


def _assert_leakage_free(request: ForecastRequest, origin: int) -> None:
    for year, _ in request.target_history:
        if year > origin:
            raise LeakageError(f"leakage detected: target year {year} after origin {origin}")
    for name, pairs in request.covariate_history.items():
        for year, _ in pairs:
            if year > origin:
                raise LeakageError(
                    f"leakage detected: covariate {name!r} year {year} after origin {origin}"
                )


# ---------------------------------------------------------------------------
# execution


def run_backtest(
    plan: BacktestPlan,
    dataset: Dataset,
    adapters: Mapping[str, object] | None = None,
) -> BacktestReport:
    """Run every (adapter x regime x origin) cell of the plan.

    ``adapters`` may inject live adapter instances keyed by descriptor name
    (tests, pre-spawned sessions); otherwise descriptors are resolved here.
    Cell failures are recorded, never fatal -- only an entirely empty report
    is an error.
    """
    target = dataset.targets[plan.cohort]
    resolved = dict(adapters) if adapters is not None else {}
    spawned = []
    for desc in plan.adapters:
        if desc.name not in resolved:
            resolved[desc.name] = resolve_adapter(desc)
            spawned.append(resolved[desc.name])
    records: list[ForecastRecord] = []
    failures: list[CellFailure] = []
    try:
        for desc in plan.adapters:
            adapter = resolved[desc.name]
            for regime in plan.regimes:
                for origin in plan.origins:
                    try:
                        request = assemble_request(plan, dataset, origin, regime)
                        flags: tuple[str, ...] = ()
                        if request.covariate_history and not adapter.supports_covariates:
                            request = ForecastRequest(
                                request_id=request.request_id,
                                series_id=request.series_id,
                                target_history=request.target_history,
                                covariate_history={},
                                horizon=request.horizon,
                                quantile_levels=request.quantile_levels,
                            )
                            flags = (UNCONDITIONED_FLAG,)
                        _assert_leakage_free(request, origin)
                        reply = run_forecast(adapter, request)
                        for step_idx, step in enumerate(reply.steps, start=1):
                            year = origin + step_idx
                            actual_point = target.point_at(year)
                            actual = (
                                actual_point.value
                                if actual_point is not None and not actual_point.missing
                                else None
                            )
                            records.append(
                                ForecastRecord(
                                    model=desc.name,
                                    regime=regime,
                                    origin=origin,
                                    step=step_idx,
                                    target_year=year,
                                    point=step.point,
                                    quantiles=dict(step.quantiles),
                                    actual=actual,
                                    flags=flags + reply.flags,
                                )
                            )
                    except (
                        AdapterError,
                        ArimaError,
                        BacktestError,
                        FeatureError,
                        QuantileError,
                        TimebaseError,
                    ) as exc:
                        failures.append(
                            CellFailure(model=desc.name, regime=regime, origin=origin, error=str(exc))
                        )
    finally:
        for adapter in spawned:
            close = getattr(adapter, "close", None)
            if close:
                close()
    if not records:
        raise BacktestError(
            "empty report: every cell failed"
            + (f" (first: {failures[0].error})" if failures else "")
        )
    records.sort(key=lambda r: (r.model, r.regime, r.origin, r.step))
    failures.sort(key=lambda f: (f.model, f.regime, f.origin))
    return BacktestReport(
        cohort=plan.cohort.name,
        horizon=plan.horizon,
        records=tuple(records),
        failures=tuple(failures),
        seed=plan.seed,
    )


# ---------------------------------------------------------------------------
# summaries


def summarize_report(
    report: BacktestReport,
) -> tuple[list[metrics_mod.ErrorSummary], list[metrics_mod.ProbSummary]]:
    """Point and probabilistic summaries per (regime, model), scored records only."""
    errors = []
    probs = []
    for regime in report.regimes():
        for model in report.models():
            cell = [r for r in report.for_cell(model, regime) if r.actual is not None]
            if not cell:
                continue
            errors.append(metrics_mod.point_errors(cell, model=model, regime=regime))
            if all(len(r.quantiles) >= 3 for r in cell):
                try:
                    probs.append(metrics_mod.prob_summary(cell, model=model, regime=regime))
                except metrics_mod.MetricsError:
                    pass  # quantile levels do not cover the central intervals
    return errors, probs


def effect_sizes(
    report: BacktestReport, reference_model: str = "persistence"
) -> list[dict]:
    """Per (regime, model) paired MAE reduction against the reference."""
    out = []
    for regime in report.regimes():
        ref = [r for r in report.for_cell(reference_model, regime) if r.actual is not None]
        if not ref:
            continue
        for model in report.models():
            if model == reference_model:
                continue
            cell = [r for r in report.for_cell(model, regime) if r.actual is not None]
            if not cell:
                continue
            dm = metrics_mod.delta_mae(cell, ref)
            out.append(
                {
                    "regime": regime,
                    "model": model,
                    "reference": reference_model,
                    "delta_mae": dm.delta,
                    "n": len(dm.paired),
                }
            )
    return out


# ---------------------------------------------------------------------------
# record table IO (delimited text)


_RECORD_COLUMNS = [
    "model", "regime", "origin", "step", "target_year", "point", "quantiles", "actual", "flags",
]


def write_records_csv(report: BacktestReport, path: str | Path, header_comment: str = "") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(_RECORD_COLUMNS)
        for r in report.records:
            w.writerow(
                [
                    r.model, r.regime, r.origin, r.step, r.target_year,
                    repr(r.point),
                    json.dumps({repr(k): v for k, v in sorted(r.quantiles.items())}),
                    "" if r.actual is None else repr(r.actual),
                    ";".join(r.flags),
                ]
            )


def read_records_csv(path: str | Path) -> list[ForecastRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(io.StringIO("".join(lines)))
    for row in reader:
        records.append(
            ForecastRecord(
                model=row["model"],
                regime=row["regime"],
                origin=int(row["origin"]),
                step=int(row["step"]),
                target_year=int(row["target_year"]),
                point=float(row["point"]),
                quantiles={float(k): float(v) for k, v in json.loads(row["quantiles"]).items()},
                actual=float(row["actual"]) if row["actual"] else None,
                flags=tuple(f for f in row["flags"].split(";") if f),
            )
        )
    return records
