"""Quantile forecast values: the universal forecaster output.

Every forecaster -- built-in baseline, wrapped model, or external process --
replies with one :class:`StepForecast` per horizon step: a point value plus
a map of quantile levels to values.  Crossing quantiles straight out of a
model are repaired here (tiny inversions are common in sampled quantile
heads) or rejected when the crossing is gross.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

__all__ = [
    "QuantileError",
    "StepForecast",
    "QuantileForecast",
    "repair_quantiles",
    "gaussian_quantiles",
]

DEFAULT_REPAIR_TOLERANCE = 1e-6


class QuantileError(ValueError):
    pass


@dataclass(frozen=True)
class StepForecast:
    """One horizon step: point forecast plus level -> value quantiles."""

    point: float
    quantiles: Mapping[float, float]

    def __post_init__(self) -> None:
        if not math.isfinite(self.point):
            raise QuantileError(f"non-finite point forecast {self.point!r}")
        q = {float(k): float(v) for k, v in self.quantiles.items()}
        levels = sorted(q)
        for lv in levels:
            if not 0.0 < lv < 1.0:
                raise QuantileError(f"quantile level {lv} outside (0, 1)")
            if not math.isfinite(q[lv]):
                raise QuantileError(f"non-finite quantile value at level {lv}")
        for a, b in zip(levels, levels[1:]):
            if q[b] < q[a]:
                raise QuantileError(
                    f"crossing quantiles: level {a} -> {q[a]} above level {b} -> {q[b]}"
                )
        object.__setattr__(self, "quantiles", q)


@dataclass(frozen=True)
class QuantileForecast:
    steps: tuple[StepForecast, ...]
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.steps:
            raise QuantileError("forecast needs at least one horizon step")
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "flags", tuple(self.flags))

    @property
    def points(self) -> tuple[float, ...]:
        return tuple(s.point for s in self.steps)

    def __len__(self) -> int:
        return len(self.steps)


def repair_quantiles(
    quantiles: Mapping[float, float], tolerance: float = DEFAULT_REPAIR_TOLERANCE
) -> dict[float, float]:
    """Monotonize near-crossing quantiles; reject gross violations.

    The worst adjacent crossing is compared against ``tolerance`` times the
    value spread (interquartile range when the 0.25/0.75 levels are present,
    full range otherwise).  Within tolerance the values are pooled by
    adjacent-violators averaging; beyond it the forecast is invalid.
    """
    items = sorted((float(k), float(v)) for k, v in quantiles.items())
    if not items:
        return {}
    values = [v for _, v in items]
    worst = max(
        (a - b for a, b in zip(values, values[1:]) if a > b), default=0.0
    )
    if worst == 0.0:
        return dict(items)
    q25 = dict(items).get(0.25)
    q75 = dict(items).get(0.75)
    if q25 is not None and q75 is not None and q75 > q25:
        scale = q75 - q25
    else:
        scale = max(values) - min(values)
    scale = max(scale, 1e-12)
    if worst > tolerance * scale:
        raise QuantileError(
            f"invalid quantiles: crossing of {worst!r} exceeds tolerance {tolerance * scale!r}"
        )
    # pool adjacent violators (equal weights): the closest monotone fit in L2
    pooled: list[list[float]] = []  # [sum, count, mean]
    for v in values:
        pooled.append([v, 1.0, v])
        while len(pooled) > 1 and pooled[-2][2] > pooled[-1][2]:
            s2, c2, _ = pooled.pop()
            pooled[-1][0] += s2
            pooled[-1][1] += c2
            pooled[-1][2] = pooled[-1][0] / pooled[-1][1]
    repaired: list[float] = []
    for s, c, m in pooled:
        repaired.extend([m] * int(c))
    return {lv: rv for (lv, _), rv in zip(items, repaired)}


def gaussian_quantiles(
    point: float, sd: float, levels: Sequence[float]
) -> dict[float, float]:
    """Quantiles of a normal predictive distribution centred at the point."""
    from scipy.stats import norm

    out = {}
    for lv in levels:
        if not 0.0 < lv < 1.0:
            raise QuantileError(f"quantile level {lv} outside (0, 1)")
        out[float(lv)] = point + sd * float(norm.ppf(lv))
    return out
