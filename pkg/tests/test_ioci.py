import itertools
import json

import pytest

from enrolcast import ioci
from enrolcast.ioci import (
    BandConstraint,
    DimensionScores,
    IociError,
    IociWeights,
    ReferenceSeries,
    YearEvidence,
    YearInput,
    band_of,
    compute_strict,
    confidence,
    diagnostics,
    emit_schema,
    feasibility_check,
    fit_calibration,
    parse_assessment,
    parse_evidence_prose,
    parse_reference,
    round_half_up,
    score_series,
    select_mode,
)


class TestRoundHalfUp:
    def test_half_rounds_up(self):
        assert round_half_up(2.5) == 3

    def test_below_half_rounds_down(self):
        assert round_half_up(2.4) == 2

    def test_zero(self):
        assert round_half_up(0.0) == 0

    def test_negative_rejected(self):
        with pytest.raises(IociError):
            round_half_up(-0.1)


class TestBands:
    def test_crisis(self):
        assert band_of("crisis") == (81, 100)
        assert band_of("crisis-level") == (81, 100)

    def test_upper_moderate_hard_band(self):
        assert band_of("upper_moderate") == (41, 60)
        assert ioci.PREFERRED_SUBBAND["upper_moderate"] == (51, 60)

    def test_unknown_label(self):
        with pytest.raises(IociError, match="unknown band label"):
            band_of("catastrophic")

    def test_aliases(self):
        assert band_of("exceptionally stable") == (0, 20)
        assert band_of("mildly constrained") == (21, 40)
        assert band_of("highly constrained") == (61, 80)


class TestModeSelection:
    def test_single_pair_triggers_calibration(self):
        assert select_mode(ReferenceSeries({2014: 48})) == "calibration"

    def test_absent_reference_is_strict(self):
        assert select_mode(None) == "strict"

    def test_plain_list_is_no_reference(self):
        assert parse_reference([48, 51, 53]) is None
        assert parse_reference(json.dumps([48, 51, 53])) is None


class TestStrictArithmetic:
    def test_flat_fifty(self):
        raw, final = compute_strict(DimensionScores.flat(50))
        assert raw == 50.0 and final == 50

    def test_weighted_example(self):
        raw, final = compute_strict(DimensionScores(60, 50, 40, 30, 20))
        assert raw == pytest.approx(45.0, abs=0)
        assert final == 45

    def test_round_half_up_case(self):
        raw, final = compute_strict(DimensionScores(90, 85, 95, 90, 80))
        assert raw == pytest.approx(88.75, abs=0)
        assert final == 89

    def test_sanity_out_of_range(self):
        with pytest.raises(IociError):
            compute_strict(DimensionScores.flat(50), sanity=6)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(IociError):
            IociWeights(0.5, 0.25, 0.20, 0.15, 0.10)


def brute_force_min_l1(baseline, target, boxes, weights, radius=6):
    """Exhaustive oracle: smallest L1 perturbation whose rounded weighted
    average hits the target while staying inside the boxes."""
    best = None
    dims = baseline.as_tuple()
    w = weights.as_tuple()
    deltas = range(-radius, radius + 1)
    for combo in itertools.product(deltas, repeat=5):
        l1 = sum(abs(d) for d in combo)
        if best is not None and l1 >= best:
            continue
        cand = [dims[i] + combo[i] for i in range(5)]
        ok = all(
            boxes[name][0] <= cand[i] <= boxes[name][1]
            for i, name in enumerate(ioci.DIMENSIONS)
        )
        if not ok or any(not 0 <= v <= 100 for v in cand):
            continue
        if round_half_up(sum(wi * vi for wi, vi in zip(w, cand))) == target:
            best = l1
    return best


class TestFitCalibration:
    def test_worked_example_and_minimality(self):
        constraint = BandConstraint((41, 60))
        fitted = fit_calibration(DimensionScores.flat(50), 52, constraint)
        assert fitted == DimensionScores(55, 50, 50, 50, 50)
        l1 = sum(abs(a - b) for a, b in zip(fitted.as_tuple(), (50,) * 5))
        oracle = brute_force_min_l1(
            DimensionScores.flat(50), 52, constraint.boxes(52), ioci.DEFAULT_WEIGHTS
        )
        assert l1 == oracle == 5

    def test_already_satisfied(self):
        fitted = fit_calibration(DimensionScores.flat(50), 50, BandConstraint((41, 60)))
        assert fitted == DimensionScores.flat(50)

    def test_pinned_boxes_fail(self):
        class PinnedConstraint(BandConstraint):
            def boxes(self, overall):
                return {d: (30, 30) for d in ioci.DIMENSIONS}

        with pytest.raises(IociError, match="calibration fit failed"):
            fit_calibration(DimensionScores.flat(30), 90, PinnedConstraint((0, 100)))

    def test_deterministic(self):
        constraint = BandConstraint((41, 60), tags=frozenset({"funding"}))
        runs = {
            fit_calibration(DimensionScores(45, 52, 50, 48, 50), 55, constraint,
                            tags=frozenset({"funding"}))
            for _ in range(5)
        }
        assert len(runs) == 1

    def test_tag_preference_steers_increase(self):
        constraint = BandConstraint((41, 60), tags=frozenset({"covid_disruption"}))
        fitted = fit_calibration(
            DimensionScores.flat(50), 52, constraint, tags=frozenset({"covid_disruption"})
        )
        assert fitted.operational > 50
        assert fitted.financial == 50

    def test_upward_steps_never_skip_target(self):
        constraint = BandConstraint((0, 100))
        for target in range(45, 60):
            fitted = fit_calibration(DimensionScores.flat(50), target, constraint)
            raw = sum(w * s for w, s in zip(ioci.DEFAULT_WEIGHTS.as_tuple(), fitted.as_tuple()))
            assert round_half_up(raw) == target


class TestFeasibility:
    def test_feasible_inside_band(self):
        assert feasibility_check(94, (81, 100)) == ioci.Feasibility(True, 94)

    def test_below_band_clamps_to_lower_edge(self):
        assert feasibility_check(30, (81, 100)) == ioci.Feasibility(False, 81)

    def test_band_edge_is_feasible(self):
        assert feasibility_check(81, (81, 100)).feasible


class TestConfidence:
    def test_rich_evidence(self):
        assert confidence(ledger_items=3, thin=False) == 0.85

    def test_thin_and_short(self):
        assert confidence(ledger_items=2, thin=True) == pytest.approx(0.65)

    def test_missing_capped(self):
        assert confidence(ledger_items=0, thin=False, missing=True) == pytest.approx(0.40)


class TestScoreSeries:
    def test_table_fixture_reproduced_exactly(self, evidence_pack, calibrated_reference,
                                              primary_baselines, model_columns):
        a = score_series(evidence_pack, reference=calibrated_reference, inputs=primary_baselines)
        expected = tuple(model_columns["calibrated"][y] for y in sorted(model_columns["calibrated"]))
        assert a.sequence == expected
        assert a.mode == "calibration"

    def test_calibrated_stays_within_one_of_primary_signal(
        self, evidence_pack, calibrated_reference, primary_baselines, model_columns
    ):
        a = score_series(evidence_pack, reference=calibrated_reference, inputs=primary_baselines)
        primary = model_columns["gpt_5_4_thinking"]
        for score in a.series:
            assert abs(score.final - primary[score.year]) <= 1

    def test_strict_single_year(self):
        ev = {2020: YearEvidence(2020, ledger=(ioci.LedgerItem("Constraint", "x"),))}
        a = score_series(ev, inputs={2020: YearInput(dims=DimensionScores.flat(50))})
        assert a.sequence == (50,)
        assert a.mode == "strict"

    def test_missing_evidence_year_with_reference(self, evidence_pack):
        ref = ReferenceSeries({2030: 44})
        a = score_series({}, reference=ref)
        rec = a.series[0]
        assert rec.year == 2030 and rec.final == 44
        assert ioci.USED_REFERENCE_FLAG in rec.flags
        assert rec.confidence <= 0.4

    def test_missing_evidence_strict_defaults_to_fifty(self):
        ev = {2020: YearEvidence(2020, ledger=())}
        a = score_series(ev)
        assert a.sequence == (50,)
        assert ioci.MISSING_EVIDENCE_FLAG in a.series[0].flags

    def test_empty_everything_yields_flagged_empty_result(self):
        a = score_series({})
        assert a.series == () and a.sequence == ()
        assert a.flags

    def test_infeasible_reference_clamped_and_flagged(self):
        ev = {
            2020: YearEvidence(
                2020,
                ledger=(ioci.LedgerItem("Constraint", "severe shock"),),
                narrative_band="crisis",
            )
        }
        a = score_series(ev, reference=ReferenceSeries({2020: 30}),
                         inputs={2020: YearInput(dims=DimensionScores.flat(85))})
        assert a.series[0].final == 81
        assert ioci.INFEASIBLE_FLAG in a.series[0].flags

    def test_strict_band_membership_under_in_band_dims(self):
        # convexity: dims inside the hard band keep the rounded overall inside it
        for lo, hi in ((21, 40), (41, 60), (81, 100)):
            for dims in ((lo, lo, hi, hi, lo), (hi, lo, hi, lo, hi), (lo + 1,) * 5):
                raw, final = compute_strict(DimensionScores(*dims))
                assert lo <= final <= hi


class TestDiagnostics:
    def test_identical_series(self):
        d = diagnostics({1: 1, 2: 2, 3: 3}, {1: 1, 2: 2, 3: 3})
        assert d.pearson_r == pytest.approx(1.0)
        assert d.spearman_rho == pytest.approx(1.0)
        assert d.mae == 0.0 and d.rmse == 0.0

    def test_single_aligned_year_nulls_correlations(self):
        d = diagnostics({2014: 48}, {2014: 50})
        assert d.pearson_r is None and d.spearman_rho is None
        assert d.mae == 2.0

    def test_zero_variance_nulls_correlations(self):
        d = diagnostics({1: 5, 2: 5}, {1: 4, 2: 6})
        assert d.pearson_r is None

    def test_no_aligned_years(self):
        d = diagnostics({2014: 48}, {2015: 50})
        assert d.mae is None and d.rmse is None

    def test_model_column_agreement(self, model_columns):
        d = diagnostics(model_columns["calibrated"], model_columns["gpt_5_4_thinking"])
        assert d.mae == pytest.approx(10 / 19, abs=1e-12)
        assert max(abs(r - o) for _, r, o in d.comparison) <= 1


class TestSchema:
    def test_emit_parse_round_trip(self, evidence_pack, calibrated_reference, primary_baselines):
        a = score_series(evidence_pack, reference=calibrated_reference, inputs=primary_baselines)
        doc = emit_schema(a)
        assert parse_assessment(doc) == a
        assert emit_schema(parse_assessment(doc)) == doc

    def test_empty_series_schema(self):
        doc = json.loads(emit_schema(score_series({})))
        assert doc["series"] == [] and doc["sequence"] == []

    def test_strict_mode_disables_diagnostics(self):
        ev = {2020: YearEvidence(2020, ledger=(ioci.LedgerItem("Constraint", "x"),))}
        a = score_series(ev, inputs={2020: YearInput(dims=DimensionScores.flat(40))})
        doc = json.loads(emit_schema(a))
        assert doc["diagnostics"]["enabled"] is False
        assert doc["diagnostics"]["pearson_r"] is None

    def test_no_nan_literals(self, evidence_pack, calibrated_reference, primary_baselines):
        a = score_series(evidence_pack, reference=calibrated_reference, inputs=primary_baselines)
        doc = emit_schema(a)
        assert "NaN" not in doc and "Infinity" not in doc

    def test_key_set(self, evidence_pack, calibrated_reference, primary_baselines):
        a = score_series(evidence_pack, reference=calibrated_reference, inputs=primary_baselines)
        doc = json.loads(emit_schema(a))
        assert list(doc) == ["weights", "scale_anchors", "series", "sequence", "diagnostics"]
        entry = doc["series"][0]
        assert list(entry) == [
            "year", "ioci_overall", "dimension_scores", "calculation",
            "evidence_ledger", "confidence", "flags",
        ]
        assert list(entry["calculation"]) == [
            "weighted_average_raw", "rounding", "sanity_adjustment", "final_ioci",
        ]


class TestProseParser:
    def test_years_and_bands(self, fixtures_dir):
        ev = parse_evidence_prose((fixtures_dir / "institution_evidence.txt").read_text())
        assert sorted(ev) == list(range(2007, 2026))
        assert ev[2007].narrative_band == "exceptionally_stable"
        assert ev[2008].narrative_band == "exceptionally_stable"  # inherited via context
        assert ev[2013].narrative_band == "exceptionally_stable"
        assert ev[2014].narrative_band == "moderate"
        assert ev[2019].narrative_band == "upper_moderate"
        assert ev[2020].narrative_band == "crisis"
        assert ev[2023].narrative_band == "high"
        assert ev[2025].narrative_band == "mild"

    def test_prose_becomes_single_ledger_note(self, fixtures_dir):
        ev = parse_evidence_prose((fixtures_dir / "institution_evidence.txt").read_text())
        assert len(ev[2014].ledger) == 1
        assert "cost inflation" in ev[2014].ledger[0].note

    def test_boundary_year_infeasibility_path(self, fixtures_dir, calibrated_reference,
                                              primary_baselines):
        # the prose label for 2010 implies the 0-20 band while the reference
        # says 21: the engine must clamp to 20 and flag it, not silently match
        ev = parse_evidence_prose((fixtures_dir / "institution_evidence.txt").read_text())
        assert ev[2010].narrative_band == "exceptionally_stable"
        a = score_series(ev, reference=calibrated_reference, inputs=primary_baselines)
        rec = {s.year: s for s in a.series}[2010]
        assert rec.final == 20
        assert ioci.INFEASIBLE_FLAG in rec.flags
