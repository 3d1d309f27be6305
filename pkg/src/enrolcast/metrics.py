"""Point and probabilistic forecast evaluation.

Point metrics (MAE, MSE/RMSE, SMAPE, MAPE) work on any records carrying
``point`` and ``actual`` attributes.  Probabilistic quality is scored from
discrete predictive quantiles: pinball loss, a central-interval CRPS
approximation, Winkler-style interval scores, and PIT calibration
diagnostics.  Paired effect sizes (delta-MAE against a reference baseline)
and multi-metric fractional rank aggregation summarise model comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

__all__ = [
    "MetricsError",
    "ErrorSummary",
    "ProbSummary",
    "PitResult",
    "EcdfResult",
    "DeltaMae",
    "RankRow",
    "RankTable",
    "point_errors",
    "pinball",
    "crps_from_quantiles",
    "interval_score",
    "central_interval_levels",
    "pit",
    "pit_ecdf",
    "delta_mae",
    "prob_summary",
    "rank_models",
]

LEVEL_TOL = 1e-9


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorSummary:
    model: str
    regime: str
    mae: float
    mse: float
    rmse: float
    smape: float
    mape: float
    n: int
    mape_excluded: int = 0  # zero-actual terms dropped from MAPE


@dataclass(frozen=True)
class ProbSummary:
    model: str
    regime: str
    crps80: float
    crps95: float
    interval_score_80: float
    interval_score_95: float
    pit_values: tuple[float, ...]
    n: int


@dataclass(frozen=True)
class PitResult:
    value: float
    clamped: bool = False


@dataclass(frozen=True)
class EcdfResult:
    points: tuple[tuple[float, float], ...]  # (u, ecdf(u)) at each sorted value
    max_deviation: float  # Kolmogorov sup |ECDF(u) - u|


@dataclass(frozen=True)
class DeltaMae:
    """MAE_reference - MAE_model; positive favours the model."""

    delta: float
    paired: tuple[tuple[object, float], ...]  # per-key |e_ref| - |e_model|


@dataclass(frozen=True)
class RankRow:
    regime: str
    model: str
    metric_ranks: Mapping[str, float]
    average_rank: float
    final_ordinal: int


@dataclass(frozen=True)
class RankTable:
    rows: tuple[RankRow, ...]

    def for_regime(self, regime: str) -> tuple[RankRow, ...]:
        return tuple(r for r in self.rows if r.regime == regime)


# ---------------------------------------------------------------------------
# point metrics


def point_errors(records: Sequence, model: str = "", regime: str = "") -> ErrorSummary:
    """Aggregate point-error metrics over scored records.

    SMAPE terms where actual and forecast are both zero are defined as 0;
    MAPE terms with a zero actual are excluded and counted in
    ``mape_excluded`` instead of producing infinities.
    """
    if not records:
        raise MetricsError("no records to score")
    abs_errs: list[float] = []
    sq_errs: list[float] = []
    smape_terms: list[float] = []
    mape_terms: list[float] = []
    excluded = 0
    for r in records:
        y = r.actual
        yhat = r.point
        if y is None:
            raise MetricsError("record without an actual cannot be scored")
        e = y - yhat
        abs_errs.append(abs(e))
        sq_errs.append(e * e)
        denom = abs(y) + abs(yhat)
        smape_terms.append(0.0 if denom == 0.0 else 2.0 * abs(e) / denom)
        if y == 0.0:
            excluded += 1
        else:
            mape_terms.append(abs(e) / abs(y))
    n = len(records)
    mae = sum(abs_errs) / n
    mse = sum(sq_errs) / n
    smape = 100.0 * sum(smape_terms) / n
    mape = 100.0 * sum(mape_terms) / len(mape_terms) if mape_terms else 0.0
    return ErrorSummary(
        model=model, regime=regime, mae=mae, mse=mse, rmse=math.sqrt(mse),
        smape=smape, mape=mape, n=n, mape_excluded=excluded,
    )


# ---------------------------------------------------------------------------
# probabilistic metrics


def pinball(level: float, predicted: float, actual: float) -> float:
    """Quantile (pinball) loss at the given level."""
    if not 0.0 < level < 1.0:
        raise MetricsError(f"quantile level {level} outside (0, 1)")
    if actual >= predicted:
        return level * (actual - predicted)
    return (1.0 - level) * (predicted - actual)


def central_interval_levels(central_level: float) -> tuple[float, float, float]:
    """The lower, median, upper quantile levels of a central interval."""
    if not 0.0 < central_level < 1.0:
        raise MetricsError(f"central level {central_level} outside (0, 1)")
    return ((1.0 - central_level) / 2.0, 0.5, (1.0 + central_level) / 2.0)


def _lookup_level(quantiles: Mapping[float, float], level: float) -> float | None:
    for k, v in quantiles.items():
        if abs(k - level) <= LEVEL_TOL:
            return v
    return None


def crps_from_quantiles(
    quantiles: Mapping[float, float], actual: float, central_level: float = 0.8
) -> float:
    """CRPS approximated from the quantiles of a central interval.

    Averages pinball loss over the interval's lower, median, and upper
    levels and doubles it, which reduces to |y - median| when only the
    median is available.
    """
    levels = central_interval_levels(central_level)
    present = [(lv, _lookup_level(quantiles, lv)) for lv in levels]
    missing = [f"{lv:g}" for lv, v in present if v is None]
    if missing:
        if _lookup_level(quantiles, 0.5) is not None and len(missing) == 2:
            # median-only forecasts are admissible: K = 1
            return 2.0 * pinball(0.5, _lookup_level(quantiles, 0.5), actual)
        raise MetricsError(f"missing quantile level(s): {', '.join(missing)}")
    losses = [pinball(lv, v, actual) for lv, v in present]
    return 2.0 * sum(losses) / len(losses)


def interval_score(lower: float, upper: float, actual: float, central_level: float) -> float:
    """Winkler interval score: width plus scaled cover penalties."""
    if lower > upper:
        raise MetricsError("interval lower bound above upper bound")
    alpha = 1.0 - central_level
    if alpha <= 0.0:
        raise MetricsError("central level must be < 1")
    score = upper - lower
    if actual < lower:
        score += (2.0 / alpha) * (lower - actual)
    elif actual > upper:
        score += (2.0 / alpha) * (actual - upper)
    return score


def pit(quantiles: Mapping[float, float], actual: float) -> PitResult:
    """Probability integral transform from discrete predictive quantiles.

    Linearly interpolates the predictive CDF between quantile knots.
    Outcomes outside the outermost quantiles clamp to the outermost levels
    (flagged) rather than inventing tail shape the forecaster never stated.
    """
    if len(quantiles) < 2:
        raise MetricsError("pit needs at least two quantile levels")
    items = sorted(quantiles.items())
    levels = [lv for lv, _ in items]
    values = [v for _, v in items]
    for a, b in zip(values, values[1:]):
        if b < a:
            raise MetricsError("non-monotone quantiles; repair upstream")
    if actual <= values[0]:
        return PitResult(levels[0], clamped=actual < values[0])
    if actual >= values[-1]:
        return PitResult(levels[-1], clamped=actual > values[-1])
    for (lv0, v0), (lv1, v1) in zip(items, items[1:]):
        if v0 <= actual <= v1:
            if v1 == v0:
                return PitResult(lv1)
            frac = (actual - v0) / (v1 - v0)
            return PitResult(lv0 + frac * (lv1 - lv0))
    raise AssertionError("unreachable: actual inside the knot range")


def pit_ecdf(pit_values: Sequence[float]) -> EcdfResult:
    """Empirical CDF of PIT values plus the Kolmogorov distance to uniform."""
    if not pit_values:
        raise MetricsError("no PIT values")
    xs = sorted(pit_values)
    n = len(xs)
    points = []
    max_dev = 0.0
    for i, u in enumerate(xs, start=1):
        ecdf = i / n
        points.append((u, ecdf))
        max_dev = max(max_dev, abs(ecdf - u), abs((i - 1) / n - u))
    return EcdfResult(points=tuple(points), max_deviation=max_dev)


def prob_summary(
    records: Sequence, model: str = "", regime: str = ""
) -> ProbSummary:
    """CRPS, interval scores, and PIT values over scored quantile records.

    Records need ``quantiles`` (level -> value), ``point``, and ``actual``.
    """
    if not records:
        raise MetricsError("no records to score")
    crps80 = []
    crps95 = []
    is80 = []
    is95 = []
    pits = []
    for r in records:
        q = r.quantiles
        y = r.actual
        crps80.append(crps_from_quantiles(q, y, 0.8))
        crps95.append(crps_from_quantiles(q, y, 0.95))
        for central, sink in ((0.8, is80), (0.95, is95)):
            lo_lv, _, hi_lv = central_interval_levels(central)
            lo = _lookup_level(q, lo_lv)
            hi = _lookup_level(q, hi_lv)
            if lo is None or hi is None:
                raise MetricsError(f"missing interval bounds for central {central:g}")
            sink.append(interval_score(lo, hi, y, central))
        if len(q) >= 2:
            pits.append(pit(q, y).value)
    n = len(records)
    return ProbSummary(
        model=model, regime=regime,
        crps80=sum(crps80) / n, crps95=sum(crps95) / n,
        interval_score_80=sum(is80) / n, interval_score_95=sum(is95) / n,
        pit_values=tuple(pits), n=n,
    )


# ---------------------------------------------------------------------------
# paired comparison and ranking


def _record_key(r) -> tuple:
    return (getattr(r, "origin", None), getattr(r, "step", None))


def delta_mae(model_records: Sequence, reference_records: Sequence) -> DeltaMae:
    """Paired point-error reduction of a model against a reference.

    Both sets must score the same (origin, step) keys.  The headline number
    is MAE_reference - MAE_model; the per-key paired differences support
    origin-level inspection.
    """
    mk = {_record_key(r): r for r in model_records}
    rk = {_record_key(r): r for r in reference_records}
    if set(mk) != set(rk):
        raise MetricsError("model and reference score different record keys")
    if not mk:
        raise MetricsError("no records to compare")
    paired = []
    for key in sorted(mk, key=repr):
        em = abs(mk[key].actual - mk[key].point)
        er = abs(rk[key].actual - rk[key].point)
        paired.append((key, er - em))
    delta = sum(d for _, d in paired) / len(paired)
    return DeltaMae(delta=delta, paired=tuple(paired))


def fractional_ranks(values: Sequence[float]) -> list[float]:
    """Ascending ranks, ties resolved to the average of spanned positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def rank_models(
    summaries: Sequence[ErrorSummary],
    metrics: Sequence[str] = ("mae", "rmse", "smape", "mape"),
) -> RankTable:
    """Within-regime fractional ranks per metric, averaged across metrics.

    The final ordering sorts by average rank, breaking ties by MAE rank and
    then by model name so output is deterministic.
    """
    regimes: dict[str, list[ErrorSummary]] = {}
    for s in summaries:
        regimes.setdefault(s.regime, []).append(s)
    rows: list[RankRow] = []
    for regime in sorted(regimes):
        group = sorted(regimes[regime], key=lambda s: s.model)
        if len(group) < 2:
            raise MetricsError(f"regime {regime!r} needs >= 2 models to rank")
        per_metric: dict[str, list[float]] = {}
        for m in metrics:
            per_metric[m] = fractional_ranks([getattr(s, m) for s in group])
        averages = [
            sum(per_metric[m][i] for m in metrics) / len(metrics) for i in range(len(group))
        ]
        mae_key = metrics[0]
        order = sorted(
            range(len(group)),
            key=lambda i: (averages[i], per_metric[mae_key][i], group[i].model),
        )
        for ordinal, i in enumerate(order, start=1):
            rows.append(
                RankRow(
                    regime=regime,
                    model=group[i].model,
                    metric_ranks={m: per_metric[m][i] for m in metrics},
                    average_rank=averages[i],
                    final_ordinal=ordinal,
                )
            )
    return RankTable(rows=tuple(rows))
