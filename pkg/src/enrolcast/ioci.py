"""Operating-conditions index: deterministic year-by-year scoring engine.

Converts year-tied narrative evidence into a 0-100 annual stress index.
Five weighted dimensions (financial, demand, operational, workforce,
governance) are scored per year; the engine computes the weighted overall,
enforces narrative band anchors, and -- when a reference series is supplied
-- back-fits dimension scores so the emitted overall reproduces the
reference exactly wherever the evidence admits it.

Judgment stays outside: baseline dimension scores arrive as input (from an
analyst, a file, or an external text-model adapter); this module only does
the arithmetic, the feasibility checks, the bounded fitting, and the exact
output schema.  Everything is deterministic: same inputs, same bytes.
"""

from __future__ import annotations

import json
import math
import re
import statistics
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .metrics import fractional_ranks

__all__ = [
    "IociError",
    "IociWeights",
    "DimensionScores",
    "LedgerItem",
    "YearEvidence",
    "ReferenceSeries",
    "BandConstraint",
    "Feasibility",
    "YearInput",
    "YearScore",
    "Diagnostics",
    "IociAssessment",
    "DIMENSIONS",
    "BANDS",
    "round_half_up",
    "band_of",
    "select_mode",
    "compute_strict",
    "fit_calibration",
    "feasibility_check",
    "confidence",
    "score_series",
    "diagnostics",
    "emit_schema",
    "parse_assessment",
    "parse_evidence_json",
    "parse_evidence_prose",
    "parse_reference",
    "parse_baselines",
]


class IociError(ValueError):
    pass


DIMENSIONS = ("financial", "demand", "operational", "workforce", "governance")

# JSON field names for the five dimensions, in fixed order.
DIMENSION_KEYS = (
    "financial_strain",
    "demand_enrolment_pressure",
    "operational_disruption",
    "workforce_capacity",
    "governance_strategic_constraint",
)

# Hard anchor bands per canonical narrative label.  "upper_moderate" shares
# the moderate hard band but prefers its upper half when no target is given.
BANDS: dict[str, tuple[int, int]] = {
    "exceptionally_stable": (0, 20),
    "mild": (21, 40),
    "moderate": (41, 60),
    "upper_moderate": (41, 60),
    "high": (61, 80),
    "crisis": (81, 100),
}
PREFERRED_SUBBAND = {"upper_moderate": (51, 60)}

SCALE_ANCHORS = {
    "0-20": "exceptionally favourable operating conditions",
    "21-40": "mildly constrained",
    "41-60": "moderately constrained",
    "61-80": "highly constrained",
    "81-100": "crisis-level",
}

# Stressor tags concentrate stress in one dimension and widen its upward
# allowance beyond the default +/-15 around the overall.
TAG_TO_DIM = {
    "enrolment": "demand",
    "covid_disruption": "operational",
    "restructure": "workforce",
    "funding": "financial",
    "strategic": "governance",
}
UP_ALLOWANCE = {"financial": 25, "demand": 25, "operational": 25, "workforce": 25, "governance": 20}
BASE_ALLOWANCE = 15
RESILIENCE_DOWN = 20
KNOWN_TAGS = frozenset(TAG_TO_DIM) | {"resilience"}

MISSING_EVIDENCE_FLAG = "Missing evidence for year"
USED_REFERENCE_FLAG = "Used reference due to missing evidence"
INFEASIBLE_FLAG = "Reference infeasible under evidence"
FIT_POLICY_FLAG = "fit_policy: v1"


@dataclass(frozen=True)
class IociWeights:
    financial: float = 0.30
    demand: float = 0.25
    operational: float = 0.20
    workforce: float = 0.15
    governance: float = 0.10

    def __post_init__(self) -> None:
        vals = self.as_tuple()
        if any(w < 0 for w in vals):
            raise IociError("weights must be non-negative")
        if abs(sum(vals) - 1.0) > 1e-12:
            raise IociError(f"weights must sum to 1, got {sum(vals)!r}")

    def as_tuple(self) -> tuple[float, ...]:
        return (self.financial, self.demand, self.operational, self.workforce, self.governance)


DEFAULT_WEIGHTS = IociWeights()


@dataclass(frozen=True)
class DimensionScores:
    financial: int
    demand: int
    operational: int
    workforce: int
    governance: int

    def __post_init__(self) -> None:
        for name, v in zip(DIMENSIONS, self.as_tuple()):
            if not isinstance(v, int) or isinstance(v, bool):
                raise IociError(f"dimension {name} must be an integer, got {v!r}")
            if not 0 <= v <= 100:
                raise IociError(f"dimension {name}={v} outside [0, 100]")

    def as_tuple(self) -> tuple[int, ...]:
        return (self.financial, self.demand, self.operational, self.workforce, self.governance)

    @classmethod
    def flat(cls, value: int) -> "DimensionScores":
        return cls(*([int(value)] * 5))

    @classmethod
    def from_sequence(cls, seq: Sequence[int]) -> "DimensionScores":
        if len(seq) != 5:
            raise IociError(f"need 5 dimension scores, got {len(seq)}")
        return cls(*(int(v) for v in seq))


@dataclass(frozen=True)
class LedgerItem:
    kind: str  # "Constraint" or "Offset"
    note: str

    def __post_init__(self) -> None:
        if self.kind not in ("Constraint", "Offset"):
            raise IociError(f"ledger kind must be Constraint or Offset, got {self.kind!r}")
        if not self.note:
            raise IociError("ledger note must be non-empty")


@dataclass(frozen=True)
class YearEvidence:
    year: int
    ledger: tuple[LedgerItem, ...] = ()
    narrative_band: str | None = None
    stressor_tags: frozenset[str] = frozenset()
    thin: bool = False

    def __post_init__(self) -> None:
        if self.narrative_band is not None and self.narrative_band not in BANDS:
            raise IociError(f"unknown narrative band label {self.narrative_band!r}")
        unknown = set(self.stressor_tags) - KNOWN_TAGS
        if unknown:
            raise IociError(f"unknown stressor tag(s): {sorted(unknown)}")
        object.__setattr__(self, "ledger", tuple(self.ledger))
        object.__setattr__(self, "stressor_tags", frozenset(self.stressor_tags))


@dataclass(frozen=True)
class ReferenceSeries:
    """A year -> value mapping; valid only with at least one explicit pair."""

    values: Mapping[int, int]

    def __post_init__(self) -> None:
        vals = {int(y): int(v) for y, v in self.values.items()}
        if not vals:
            raise IociError("reference series needs at least one (year -> value) pair")
        for y, v in vals.items():
            if not 0 <= v <= 100:
                raise IociError(f"reference {y} -> {v} outside [0, 100]")
        object.__setattr__(self, "values", vals)

    def get(self, year: int) -> int | None:
        return self.values.get(year)

    def years(self) -> tuple[int, ...]:
        return tuple(sorted(self.values))


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    closest_feasible: int


@dataclass(frozen=True)
class BandConstraint:
    """Hard anchor band plus per-dimension boxes around a given overall."""

    overall_band: tuple[int, int]
    tags: frozenset[str] = frozenset()

    def boxes(self, overall: int) -> dict[str, tuple[int, int]]:
        matched = {TAG_TO_DIM[t] for t in self.tags if t in TAG_TO_DIM}
        down = RESILIENCE_DOWN if "resilience" in self.tags else BASE_ALLOWANCE
        out = {}
        for dim in DIMENSIONS:
            up = UP_ALLOWANCE[dim] if dim in matched else BASE_ALLOWANCE
            out[dim] = (max(0, overall - down), min(100, overall + up))
        return out


# ---------------------------------------------------------------------------
# elementary rules


def round_half_up(x: float) -> int:
    """floor(x + 0.5) for non-negative x: 2.5 -> 3, 2.4 -> 2."""
    if x < 0:
        raise IociError(f"round_half_up requires non-negative input, got {x!r}")
    return int(math.floor(x + 0.5))


_LABEL_ALIASES = {
    "exceptionally stable": "exceptionally_stable",
    "exceptionally favourable": "exceptionally_stable",
    "exceptionally favorable": "exceptionally_stable",
    "very low stress": "exceptionally_stable",
    "near-minimal stress": "exceptionally_stable",
    "minor constraint": "mild",
    "mild constraint": "mild",
    "mildly constrained": "mild",
    "stabilising": "mild",
    "stabilizing": "mild",
    "moderately constrained": "moderate",
    "moderate constraint": "moderate",
    "upper-moderate constraint": "upper_moderate",
    "upper moderate": "upper_moderate",
    "highly constrained": "high",
    "crisis-level": "crisis",
    "crisis level": "crisis",
}


def band_of(label: str) -> tuple[int, int]:
    """Hard anchor band for a canonical label or a recognised alias."""
    key = label.strip().lower().replace(" ", "_") if label else ""
    if key in BANDS:
        return BANDS[key]
    alias = _LABEL_ALIASES.get(label.strip().lower())
    if alias is not None:
        return BANDS[alias]
    raise IociError(f"unknown band label {label!r}")


def canonical_label(label: str) -> str:
    key = label.strip().lower().replace(" ", "_")
    if key in BANDS:
        return key
    alias = _LABEL_ALIASES.get(label.strip().lower())
    if alias is not None:
        return alias
    raise IociError(f"unknown band label {label!r}")


def select_mode(reference: ReferenceSeries | None) -> str:
    """"calibration" iff a valid reference series is present, else "strict"."""
    return "calibration" if reference is not None else "strict"


def compute_strict(
    dims: DimensionScores, sanity: int = 0, weights: IociWeights = DEFAULT_WEIGHTS
) -> tuple[float, int]:
    """Weighted raw average and the clamped, rounded, sanity-adjusted final."""
    if not isinstance(sanity, int) or isinstance(sanity, bool) or not -5 <= sanity <= 5:
        raise IociError(f"sanity adjustment {sanity!r} outside [-5, 5]")
    raw = sum(w * s for w, s in zip(weights.as_tuple(), dims.as_tuple()))
    final = max(0, min(100, round_half_up(raw) + sanity))
    return raw, final


def feasibility_check(target: int, band: tuple[int, int]) -> Feasibility:
    lo, hi = band
    if lo <= target <= hi:
        return Feasibility(True, target)
    return Feasibility(False, lo if target < lo else hi)


def confidence(
    ledger_items: int = 0, thin: bool = False, missing: bool = False
) -> float:
    """Deterministic confidence: start at 0.85, subtract for weak evidence.

    Missing-evidence years are additionally capped at 0.4.
    """
    c = 0.85
    if thin:
        c -= 0.10
    if ledger_items < 3:
        c -= 0.10
    if missing:
        c -= 0.15
    c = max(0.0, min(1.0, c))
    if missing:
        c = min(c, 0.4)
    return round(c, 10)


# ---------------------------------------------------------------------------
# calibration fitting


def _preference_order(direction: int, tags: frozenset[str], weights: IociWeights) -> list[str]:
    """Which dimension to nudge first.

    Raising the overall favours the dimensions the year's stressors point
    at, then higher weights (fastest progress per unit moved); lowering it
    favours the least-supported, lowest-weight dimensions.  The fixed
    dimension order breaks every remaining tie, so fitting is total.
    """
    matched = {TAG_TO_DIM[t] for t in tags if t in TAG_TO_DIM}
    w = dict(zip(DIMENSIONS, weights.as_tuple()))
    idx = {d: i for i, d in enumerate(DIMENSIONS)}
    if direction > 0:
        return sorted(DIMENSIONS, key=lambda d: (d not in matched, -w[d], idx[d]))
    return sorted(DIMENSIONS, key=lambda d: (d in matched, w[d], idx[d]))


def fit_calibration(
    baseline: DimensionScores,
    target: int,
    constraint: BandConstraint,
    tags: frozenset[str] = frozenset(),
    weights: IociWeights = DEFAULT_WEIGHTS,
    max_steps: int = 500,
) -> DimensionScores:
    """Walk single-unit dimension adjustments until the rounded overall hits
    the target, staying inside the per-dimension boxes.

    The walk is greedy over a total preference order and stops at the first
    satisfying assignment; each step moves the rounded overall by at most
    one, so no admissible target is stepped over.
    """
    if not 0 <= target <= 100:
        raise IociError(f"target {target} outside [0, 100]")
    boxes = constraint.boxes(target)
    cur = list(baseline.as_tuple())
    for dim, v in zip(DIMENSIONS, cur):
        lo, hi = boxes[dim]
        if not lo <= v <= hi:
            raise IociError(
                f"baseline {dim}={v} outside its box [{lo}, {hi}] for target {target}"
            )
    wts = weights.as_tuple()

    def rounded() -> int:
        return round_half_up(sum(w * s for w, s in zip(wts, cur)))

    steps = 0
    while rounded() != target:
        if steps >= max_steps:
            raise IociError(f"calibration fit failed: step budget {max_steps} exhausted")
        direction = 1 if rounded() < target else -1
        for dim in _preference_order(direction, tags, weights):
            i = DIMENSIONS.index(dim)
            nv = cur[i] + direction
            lo, hi = boxes[dim]
            if lo <= nv <= hi:
                cur[i] = nv
                break
        else:
            raise IociError("calibration fit failed: no dimension can move within its box")
        steps += 1
    return DimensionScores(*cur)


# ---------------------------------------------------------------------------
# series scoring


@dataclass(frozen=True)
class YearInput:
    """Per-year judgment inputs: baseline dimensions and optional sanity."""

    dims: DimensionScores | None = None
    sanity: int = 0


@dataclass(frozen=True)
class YearScore:
    year: int
    dims: DimensionScores
    raw: float
    sanity: int
    final: int
    confidence: float
    flags: tuple[str, ...] = ()
    ledger: tuple[LedgerItem, ...] = ()


@dataclass(frozen=True)
class Diagnostics:
    enabled: bool
    aligned_years: tuple[int, ...] = ()
    pearson_r: float | None = None
    spearman_rho: float | None = None
    mae: float | None = None
    rmse: float | None = None
    comparison: tuple[tuple[int, int, int], ...] = ()  # (year, reference, output)


@dataclass(frozen=True)
class IociAssessment:
    weights: IociWeights
    mode: str
    series: tuple[YearScore, ...]
    sequence: tuple[int, ...]
    diagnostics: Diagnostics
    flags: tuple[str, ...] = ()


def _score_missing_year(year: int, mode: str, ref_val: int | None) -> YearScore:
    if mode == "calibration" and ref_val is not None:
        final, flag = ref_val, USED_REFERENCE_FLAG
    else:
        final, flag = 50, MISSING_EVIDENCE_FLAG
    return YearScore(
        year=year,
        dims=DimensionScores.flat(final),
        raw=float(final),
        sanity=0,
        final=final,
        confidence=confidence(ledger_items=0, thin=False, missing=True),
        flags=(flag,),
        ledger=(),
    )


def _score_strict_year(
    year: int, ev: YearEvidence, inp: YearInput, weights: IociWeights
) -> YearScore:
    flags: list[str] = []
    if inp.dims is None:
        score = _score_missing_year(year, "strict", None)
        return YearScore(
            year=year, dims=score.dims, raw=score.raw, sanity=0, final=score.final,
            confidence=score.confidence,
            flags=("Missing dimension scores for year",), ledger=ev.ledger,
        )
    raw, final = compute_strict(inp.dims, inp.sanity, weights)
    if ev.narrative_band is not None:
        lo, hi = BANDS[ev.narrative_band]
        if not lo <= final <= hi:
            flags.append(f"Outside narrative band {lo}-{hi}")
    return YearScore(
        year=year, dims=inp.dims, raw=raw, sanity=inp.sanity, final=final,
        confidence=confidence(len(ev.ledger), ev.thin, missing=False),
        flags=tuple(flags), ledger=ev.ledger,
    )


def _score_calibration_year(
    year: int, ev: YearEvidence, inp: YearInput, ref_val: int, weights: IociWeights
) -> YearScore:
    flags: list[str] = []
    band = BANDS[ev.narrative_band] if ev.narrative_band else (0, 100)
    feas = feasibility_check(ref_val, band)
    target = feas.closest_feasible
    if not feas.feasible:
        flags.append(INFEASIBLE_FLAG)
    constraint = BandConstraint(overall_band=band, tags=ev.stressor_tags)
    if inp.dims is None:
        baseline = DimensionScores.flat(target)
        flags.append("Baseline dimensions defaulted to reference")
    else:
        baseline = inp.dims
    boxes = constraint.boxes(target)
    clamped = []
    for dim, v in zip(DIMENSIONS, baseline.as_tuple()):
        lo, hi = boxes[dim]
        clamped.append(min(max(v, lo), hi))
    if tuple(clamped) != baseline.as_tuple():
        flags.append("Baseline dimensions clamped to band boxes")
        baseline = DimensionScores(*clamped)
    fitted = fit_calibration(baseline, target, constraint, ev.stressor_tags, weights)
    if fitted != baseline:
        flags.append(FIT_POLICY_FLAG)
    raw = sum(w * s for w, s in zip(weights.as_tuple(), fitted.as_tuple()))
    return YearScore(
        year=year, dims=fitted, raw=raw, sanity=0, final=target,
        confidence=confidence(len(ev.ledger), ev.thin, missing=False),
        flags=tuple(flags), ledger=ev.ledger,
    )


def score_series(
    evidence: Mapping[int, YearEvidence],
    reference: ReferenceSeries | None = None,
    inputs: Mapping[int, YearInput] | None = None,
    weights: IociWeights = DEFAULT_WEIGHTS,
) -> IociAssessment:
    """Score every year of an evidence pack, strict or calibration mode.

    Strict mode scores the evidence years from the supplied dimension
    baselines.  Calibration mode scores the union of evidence and reference
    years and reproduces every band-feasible reference value exactly via
    bounded dimension fitting; reference years without evidence emit the
    reference value with a flag, and evidence years without a reference fall
    back to strict scoring.
    """
    inputs = dict(inputs or {})
    mode = select_mode(reference)
    years = set(evidence)
    if reference is not None:
        years |= set(reference.years())
    if not years:
        return IociAssessment(
            weights=weights, mode=mode, series=(), sequence=(),
            diagnostics=Diagnostics(enabled=False),
            flags=("No years in evidence or reference",),
        )
    scores: list[YearScore] = []
    for year in sorted(years):
        ev = evidence.get(year)
        ref_val = reference.get(year) if reference is not None else None
        inp = inputs.get(year, YearInput())
        if ev is None or not ev.ledger:
            scores.append(_score_missing_year(year, mode, ref_val))
        elif mode == "calibration" and ref_val is not None:
            scores.append(_score_calibration_year(year, ev, inp, ref_val, weights))
        else:
            scores.append(_score_strict_year(year, ev, inp, weights))
    sequence = tuple(s.final for s in scores)
    if reference is not None:
        diag = diagnostics(reference.values, {s.year: s.final for s in scores})
    else:
        diag = Diagnostics(enabled=False)
    return IociAssessment(
        weights=weights, mode=mode, series=tuple(scores), sequence=sequence,
        diagnostics=diag, flags=(),
    )


# ---------------------------------------------------------------------------
# diagnostics


def _pearson(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    n = len(xs)
    mx, my = statistics.fmean(xs), statistics.fmean(ys)
    sx = math.sqrt(sum((x - mx) ** 2 for x in xs))
    sy = math.sqrt(sum((y - my) ** 2 for y in ys))
    if sx == 0.0 or sy == 0.0:
        return None
    cov = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    return cov / (sx * sy)


def diagnostics(
    reference: Mapping[int, int], output: Mapping[int, int]
) -> Diagnostics:
    """Reference-vs-output agreement on the year intersection only.

    Correlations are null below two aligned years or under zero variance;
    MAE/RMSE are null only when no years align at all.  Spearman uses
    fractional ranks.
    """
    aligned = tuple(sorted(set(reference) & set(output)))
    if not aligned:
        return Diagnostics(enabled=True, aligned_years=())
    ref = [float(reference[y]) for y in aligned]
    out = [float(output[y]) for y in aligned]
    mae = sum(abs(a - b) for a, b in zip(ref, out)) / len(aligned)
    rmse = math.sqrt(sum((a - b) ** 2 for a, b in zip(ref, out)) / len(aligned))
    pearson_r = spearman_rho = None
    if len(aligned) >= 2:
        pearson_r = _pearson(ref, out)
        if pearson_r is not None:
            spearman_rho = _pearson(fractional_ranks(ref), fractional_ranks(out))
    comparison = tuple((y, int(reference[y]), int(output[y])) for y in aligned)
    return Diagnostics(
        enabled=True, aligned_years=aligned, pearson_r=pearson_r,
        spearman_rho=spearman_rho, mae=mae, rmse=rmse, comparison=comparison,
    )


# ---------------------------------------------------------------------------
# schema serialization


def _require_finite(x: float, where: str) -> float:
    if not math.isfinite(x):
        raise IociError(f"non-finite value reached serialization at {where}")
    return x


def emit_schema(assessment: IociAssessment) -> str:
    """Serialize an assessment to its canonical JSON document.

    Key order is fixed, floats are emitted as-is (never NaN/Infinity; nulls
    where the diagnostics rules mandate them), so identical assessments
    produce identical bytes.
    """
    w = assessment.weights
    doc: dict = {
        "weights": dict(zip(DIMENSION_KEYS, w.as_tuple())),
        "scale_anchors": dict(SCALE_ANCHORS),
        "series": [],
        "sequence": list(assessment.sequence),
        "diagnostics": None,
    }
    for s in assessment.series:
        doc["series"].append(
            {
                "year": s.year,
                "ioci_overall": s.final,
                "dimension_scores": dict(zip(DIMENSION_KEYS, s.dims.as_tuple())),
                "calculation": {
                    "weighted_average_raw": _require_finite(s.raw, f"year {s.year}"),
                    "rounding": "round_half_up",
                    "sanity_adjustment": s.sanity,
                    "final_ioci": s.final,
                },
                "evidence_ledger": [{"type": li.kind, "note": li.note} for li in s.ledger],
                "confidence": _require_finite(s.confidence, f"year {s.year}"),
                "flags": list(s.flags),
            }
        )
    d = assessment.diagnostics
    doc["diagnostics"] = {
        "enabled": d.enabled,
        "aligned_years": list(d.aligned_years),
        "pearson_r": None if d.pearson_r is None else _require_finite(d.pearson_r, "pearson_r"),
        "spearman_rho": None if d.spearman_rho is None else _require_finite(d.spearman_rho, "spearman_rho"),
        "mae": None if d.mae is None else _require_finite(d.mae, "mae"),
        "rmse": None if d.rmse is None else _require_finite(d.rmse, "rmse"),
        "comparison": [
            {"year": y, "reference": r, "llm_ioci": o} for y, r, o in d.comparison
        ],
    }
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def parse_assessment(text: str) -> IociAssessment:
    """Rebuild an assessment from its schema document (emit round-trip)."""
    doc = json.loads(text)
    weights = IociWeights(*(doc["weights"][k] for k in DIMENSION_KEYS))
    series = []
    for entry in doc["series"]:
        calc = entry["calculation"]
        series.append(
            YearScore(
                year=entry["year"],
                dims=DimensionScores(*(entry["dimension_scores"][k] for k in DIMENSION_KEYS)),
                raw=calc["weighted_average_raw"],
                sanity=calc["sanity_adjustment"],
                final=calc["final_ioci"],
                confidence=entry["confidence"],
                flags=tuple(entry["flags"]),
                ledger=tuple(LedgerItem(e["type"], e["note"]) for e in entry["evidence_ledger"]),
            )
        )
    d = doc["diagnostics"]
    diag = Diagnostics(
        enabled=d["enabled"],
        aligned_years=tuple(d["aligned_years"]),
        pearson_r=d["pearson_r"],
        spearman_rho=d["spearman_rho"],
        mae=d["mae"],
        rmse=d["rmse"],
        comparison=tuple((c["year"], c["reference"], c["llm_ioci"]) for c in d["comparison"]),
    )
    mode = "calibration" if d["enabled"] else "strict"
    flags = () if doc["series"] else ("No years in evidence or reference",)
    return IociAssessment(
        weights=weights, mode=mode, series=tuple(series),
        sequence=tuple(doc["sequence"]), diagnostics=diag, flags=flags,
    )


# ---------------------------------------------------------------------------
# input parsing


def parse_evidence_json(doc: Mapping | str) -> dict[int, YearEvidence]:
    """Structured evidence pack: ``{year: {ledger, band, tags, thin}}``.

    Ledger entries may be ``{"type": ..., "note": ...}`` objects or plain
    strings (treated as constraints).
    """
    if isinstance(doc, str):
        doc = json.loads(doc)
    years = doc.get("years", doc)
    out: dict[int, YearEvidence] = {}
    for key, entry in years.items():
        year = int(key)
        ledger = []
        for item in entry.get("ledger", []):
            if isinstance(item, str):
                ledger.append(LedgerItem("Constraint", item))
            else:
                ledger.append(LedgerItem(item.get("type", "Constraint"), item["note"]))
        band = entry.get("band")
        out[year] = YearEvidence(
            year=year,
            ledger=tuple(ledger),
            narrative_band=canonical_label(band) if band else None,
            stressor_tags=frozenset(entry.get("tags", [])),
            thin=bool(entry.get("thin", False)),
        )
    return out


_YEAR_LINE = re.compile(r"^(\d{4})\s*[:&]\s*(.*)$")
_CONTEXT_FROM = re.compile(r"context from (\d{4}) applied", re.IGNORECASE)


def parse_evidence_prose(text: str) -> dict[int, YearEvidence]:
    """Parse the ``YYYY: text`` prose form of an evidence pack.

    Each year's prose becomes a single constraint ledger note.  The band is
    inferred from the earliest recognised label in the text; a leading
    "context from YYYY applied" inherits the referenced year's band.
    """
    chunks: dict[int, str] = {}
    current: int | None = None
    for line in text.splitlines():
        m = _YEAR_LINE.match(line.strip())
        if m:
            current = int(m.group(1))
            chunks[current] = m.group(2).strip()
        elif current is not None and line.strip():
            chunks[current] += " " + line.strip()
    bands: dict[int, str | None] = {}
    for year in sorted(chunks):
        prose = chunks[year].lower()
        found: tuple[int, str] | None = None
        for alias, label in _LABEL_ALIASES.items():
            pos = prose.find(alias)
            if pos >= 0 and (found is None or pos < found[0]):
                found = (pos, label)
        band = found[1] if found else None
        ctx = _CONTEXT_FROM.search(prose)
        if ctx:
            ref_year = int(ctx.group(1))
            inherited = bands.get(ref_year)
            if band is None or (ctx.start() < (found[0] if found else 1 << 30)):
                band = inherited if inherited is not None else band
        bands[year] = band
    out = {}
    for year, prose in chunks.items():
        out[year] = YearEvidence(
            year=year,
            ledger=(LedgerItem("Constraint", chunks[year]),),
            narrative_band=bands[year],
            stressor_tags=frozenset(),
            thin=False,
        )
    return out


def parse_reference(doc: Mapping | Sequence | str) -> ReferenceSeries | None:
    """Build a reference series; plain lists without years are NO reference."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    if isinstance(doc, Mapping):
        inner = doc.get("reference", doc)
        if isinstance(inner, Mapping) and inner:
            try:
                return ReferenceSeries({int(k): int(v) for k, v in inner.items()})
            except (TypeError, ValueError):
                return None
        return None
    return None  # bare sequences carry no year mapping


def parse_baselines(doc: Mapping | str) -> dict[int, YearInput]:
    """Per-year dimension baselines: ``{year: [f,d,o,w,g]}`` or keyed maps."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    out: dict[int, YearInput] = {}
    for key, entry in doc.items():
        year = int(key)
        sanity = 0
        if isinstance(entry, Mapping):
            sanity = int(entry.get("sanity", 0))
            if "dims" in entry:
                dims = DimensionScores.from_sequence(entry["dims"])
            else:
                dims = DimensionScores(*(int(entry[k]) for k in DIMENSION_KEYS))
        else:
            dims = DimensionScores.from_sequence(entry)
        out[year] = YearInput(dims=dims, sanity=sanity)
    return out
