import math
from dataclasses import dataclass, field

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from enrolcast.metrics import (
    MetricsError,
    central_interval_levels,
    crps_from_quantiles,
    delta_mae,
    fractional_ranks,
    interval_score,
    pinball,
    pit,
    pit_ecdf,
    point_errors,
    prob_summary,
    rank_models,
    ErrorSummary,
)


@dataclass
class Rec:
    point: float
    actual: float
    origin: int = 0
    step: int = 1
    quantiles: dict = field(default_factory=dict)


class TestPointErrors:
    def test_perfect_forecasts(self):
        s = point_errors([Rec(10.0, 10.0), Rec(-3.0, -3.0)])
        assert s.mae == s.mse == s.rmse == s.smape == s.mape == 0.0

    def test_single_pair_hand_arithmetic(self):
        s = point_errors([Rec(point=50.0, actual=100.0)])
        assert s.mae == 50.0
        assert s.rmse == 50.0
        assert s.smape == pytest.approx(66.6666666667, abs=1e-6)
        assert s.mape == 50.0

    def test_two_pair_hand_arithmetic(self):
        s = point_errors([Rec(90.0, 100.0), Rec(110.0, 100.0)])
        assert s.mae == 10.0
        assert s.rmse == 10.0
        assert s.smape == pytest.approx(50.0 * (20.0 / 190.0 + 20.0 / 210.0), abs=1e-12)

    def test_both_zero_smape_term(self):
        s = point_errors([Rec(0.0, 0.0)])
        assert s.smape == 0.0

    def test_zero_actual_excluded_from_mape(self):
        s = point_errors([Rec(5.0, 0.0), Rec(90.0, 100.0)])
        assert s.mape_excluded == 1
        assert s.mape == pytest.approx(10.0)

    def test_empty_rejected(self):
        with pytest.raises(MetricsError):
            point_errors([])

    @given(
        pairs=st.lists(
            st.tuples(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4)),
            min_size=1, max_size=40,
        )
    )
    @settings(max_examples=100)
    def test_rmse_dominates_mae_and_smape_bounds(self, pairs):
        recs = [Rec(point=p, actual=a) for p, a in pairs]
        s = point_errors(recs)
        assert s.rmse >= s.mae - 1e-12
        assert 0.0 <= s.smape <= 200.0 + 1e-9
        assert abs(s.rmse - math.sqrt(s.mse)) <= 1e-12


class TestPinball:
    def test_hand_value(self):
        assert pinball(0.9, 20.0, 25.0) == pytest.approx(4.5)

    def test_exact_hit(self):
        assert pinball(0.3, 7.0, 7.0) == 0.0

    def test_median_is_half_absolute_error(self):
        assert pinball(0.5, 10.0, 4.0) == pytest.approx(0.5 * 6.0)


class TestCrpsFromQuantiles:
    def test_median_only_reduces_to_absolute_error(self):
        assert crps_from_quantiles({0.5: 12.0}, 17.0, 0.8) == pytest.approx(5.0)

    def test_degenerate_at_actual(self):
        q = {0.1: 5.0, 0.5: 5.0, 0.9: 5.0}
        assert crps_from_quantiles(q, 5.0, 0.8) == 0.0

    def test_missing_levels_named(self):
        with pytest.raises(MetricsError, match="0.9"):
            crps_from_quantiles({0.1: 1.0, 0.5: 2.0, 0.8: 2.5}, 2.0, 0.8)

    def test_average_of_pinball_doubled(self):
        q = {0.1: 8.0, 0.5: 10.0, 0.9: 12.0}
        expected = 2.0 * (
            pinball(0.1, 8.0, 11.0) + pinball(0.5, 10.0, 11.0) + pinball(0.9, 12.0, 11.0)
        ) / 3.0
        assert crps_from_quantiles(q, 11.0, 0.8) == pytest.approx(expected)

    def test_float_level_arithmetic_tolerated(self):
        lo, mid, hi = central_interval_levels(0.8)
        q = {lo: 1.0, mid: 2.0, hi: 3.0}
        assert crps_from_quantiles(q, 2.0, 0.8) >= 0.0


class TestIntervalScore:
    def test_covered(self):
        assert interval_score(10.0, 20.0, 15.0, 0.8) == pytest.approx(10.0)

    def test_above_upper(self):
        assert interval_score(10.0, 20.0, 25.0, 0.8) == pytest.approx(60.0)

    def test_on_lower_bound(self):
        assert interval_score(10.0, 20.0, 10.0, 0.8) == pytest.approx(10.0)


class TestPit:
    def test_exact_knot(self):
        assert pit({0.1: 10.0, 0.5: 20.0, 0.9: 30.0}, 20.0).value == pytest.approx(0.5)

    def test_interpolation(self):
        assert pit({0.1: 10.0, 0.5: 20.0, 0.9: 30.0}, 25.0).value == pytest.approx(0.7)

    def test_clamped_above(self):
        res = pit({0.1: 10.0, 0.5: 20.0, 0.9: 30.0}, 40.0)
        assert res.value == pytest.approx(0.9)
        assert res.clamped

    def test_non_monotone_rejected(self):
        with pytest.raises(MetricsError):
            pit({0.1: 10.0, 0.5: 5.0}, 7.0)

    @given(ys=st.lists(st.floats(-50, 50), min_size=2, max_size=2))
    @settings(max_examples=60)
    def test_monotone_in_actual(self, ys):
        q = {0.05: -10.0, 0.5: 0.0, 0.95: 10.0}
        lo, hi = sorted(ys)
        assert pit(q, lo).value <= pit(q, hi).value + 1e-12


class TestPitEcdf:
    def test_steps(self):
        res = pit_ecdf([0.25, 0.5, 0.75])
        assert res.points == ((0.25, 1 / 3), (0.5, 2 / 3), (0.75, 1.0))
        assert res.max_deviation == pytest.approx(0.25)

    def test_total_miscalibration(self):
        assert pit_ecdf([0.0, 0.0, 0.0]).max_deviation == pytest.approx(1.0)


class TestDeltaMae:
    def test_table_style_pairs(self):
        ref = [Rec(point=100.0 - 371.5, actual=100.0, origin=i) for i in range(5)]
        model = [Rec(point=100.0 - 321.3, actual=100.0, origin=i) for i in range(5)]
        d = delta_mae(model, ref)
        assert d.delta == pytest.approx(50.2, abs=1e-9)
        assert abs(d.delta - 50.22) <= 0.1  # published rounding

    def test_second_pair(self):
        ref = [Rec(point=209.6, actual=0.0, origin=i) for i in range(3)]
        model = [Rec(point=168.8, actual=0.0, origin=i) for i in range(3)]
        assert delta_mae(model, ref).delta == pytest.approx(40.8, abs=1e-9)

    def test_self_comparison_zero_and_antisymmetry(self):
        a = [Rec(point=10.0, actual=12.0, origin=i) for i in range(4)]
        b = [Rec(point=9.0, actual=12.0, origin=i) for i in range(4)]
        assert delta_mae(a, a).delta == 0.0
        assert delta_mae(a, b).delta == pytest.approx(-delta_mae(b, a).delta)

    def test_mismatched_keys_rejected(self):
        a = [Rec(point=1.0, actual=1.0, origin=1)]
        b = [Rec(point=1.0, actual=1.0, origin=2)]
        with pytest.raises(MetricsError):
            delta_mae(a, b)


def summary(model, regime, mae, rmse, smape=1.0, mape=1.0):
    return ErrorSummary(model=model, regime=regime, mae=mae, mse=rmse**2, rmse=rmse,
                        smape=smape, mape=mape, n=10)


class TestRankModels:
    def test_tie_broken_by_mae(self):
        table = rank_models(
            [summary("A", "r", mae=1.0, rmse=2.0), summary("B", "r", mae=2.0, rmse=1.0)],
            metrics=("mae", "rmse"),
        )
        rows = table.for_regime("r")
        assert [r.average_rank for r in rows] == [1.5, 1.5]
        assert rows[0].model == "A" and rows[0].final_ordinal == 1

    def test_dominating_model_first(self):
        table = rank_models(
            [summary("A", "r", 1.0, 1.0, 1.0, 1.0), summary("B", "r", 2.0, 2.0, 2.0, 2.0)]
        )
        assert table.for_regime("r")[0].model == "A"

    def test_identical_summaries_name_tiebreak(self):
        table = rank_models(
            [summary("B", "r", 1.0, 1.0), summary("A", "r", 1.0, 1.0)], metrics=("mae", "rmse")
        )
        rows = table.for_regime("r")
        assert [r.model for r in rows] == ["A", "B"]
        assert all(r.average_rank == 1.5 for r in rows)

    def test_rank_invariance_under_monotone_rescale(self):
        base = [
            summary("A", "r", 1.0, 3.0, 5.0, 2.0),
            summary("B", "r", 2.0, 2.0, 4.0, 9.0),
            summary("C", "r", 3.0, 1.0, 6.0, 4.0),
        ]
        rescaled = [
            summary(s.model, "r", s.mae, s.rmse, s.smape, 10.0 + 3.0 * s.mape) for s in base
        ]
        t1 = rank_models(base)
        t2 = rank_models(rescaled)
        assert [(r.model, r.final_ordinal) for r in t1.rows] == [
            (r.model, r.final_ordinal) for r in t2.rows
        ]

    def test_fractional_ranks(self):
        assert fractional_ranks([10.0, 10.0, 20.0]) == [1.5, 1.5, 3.0]


class TestProbSummary:
    def test_prob_summary_fields(self):
        q = {0.025: 0.0, 0.1: 5.0, 0.5: 10.0, 0.9: 15.0, 0.975: 20.0}
        recs = [Rec(point=10.0, actual=12.0, quantiles=q, origin=i) for i in range(3)]
        p = prob_summary(recs)
        assert p.n == 3
        assert p.crps80 >= 0 and p.crps95 >= 0
        assert len(p.pit_values) == 3
