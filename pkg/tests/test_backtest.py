import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import series
from enrolcast.adapters import AdapterDescriptor, PersistenceAdapter
from enrolcast.backtest import (
    BacktestError,
    LeakageError,
    assemble_request,
    make_plan,
    plan_origins,
    read_records_csv,
    run_backtest,
    summarize_report,
    effect_sizes,
    write_records_csv,
)
from enrolcast.timebase import AnnualSeries, Cohort, CovariateSet, Dataset, Point

DOM = Cohort("domestic")


def target_series(n=19, start=2007):
    vals = [4000.0 + 150.0 * i + (73.0 * i * i) % 211 for i in range(n)]
    return series(vals, start=start, series_id="domestic", unit="headcount")


def ioci_series(n=19, start=2007):
    vals = [15.0, 15.0, 15.0, 21.0, 7.0, 6.0, 7.0, 49.0, 51.0, 54.0,
            39.0, 51.0, 58.0, 86.0, 95.0, 94.0, 75.0, 59.0, 39.0][:n]
    return series(vals, start=start, series_id="ioci", unit="index 0-100")


def dataset(n=19):
    return Dataset(
        targets={DOM: target_series(n)},
        covariate_regimes=(
            CovariateSet("none", {}),
            CovariateSet("ioci", {"ioci": ioci_series(n)}),
        ),
    )


def descriptors():
    return (AdapterDescriptor(name="persistence"),)


class TestPlanOrigins:
    def test_nineteen_year_geometry(self):
        origins = plan_origins(target_series(), min_train_years=8, horizon=1)
        assert origins == tuple(range(2014, 2025))
        assert len(origins) == 11

    def test_min_train_equals_length_errors(self):
        with pytest.raises(BacktestError):
            plan_origins(target_series(5), min_train_years=5, horizon=1)

    def test_tiny_series(self):
        origins = plan_origins(series([1.0, 2.0, 3.0], start=2000), min_train_years=1, horizon=1)
        assert origins == (2000, 2001)

    def test_future_vintage_point_not_counted_for_training(self):
        s = AnnualSeries(
            id="t", unit="",
            points=tuple(
                Point(2000 + i, float(i), 2000 + i if i != 2 else 2030) for i in range(6)
            ),
        )
        origins = plan_origins(s, min_train_years=3, horizon=1)
        # the 2002 point is not knowable until 2030, so 2002 cannot count
        assert 2002 not in origins or sum(1 for p in s.points if p.vintage <= 2002) >= 3


class TestAssembleRequest:
    def test_regime_none_has_empty_covariates(self):
        ds = dataset()
        plan = make_plan(ds, DOM, descriptors())
        req = assemble_request(plan, ds, origin=2014, regime="none")
        assert req.covariate_history == {}
        assert req.target_history[-1][0] == 2014

    def test_future_vintage_covariate_is_hard_error(self):
        cov = AnnualSeries(
            id="ioci", unit="",
            points=tuple(Point(2007 + i, 10.0, 2007 + i) for i in range(17))
            + (Point(2024, 10.0, 2026),),
        )
        ds = Dataset(
            targets={DOM: target_series()},
            covariate_regimes=(CovariateSet("ioci", {"ioci": cov}),),
        )
        plan = make_plan(ds, DOM, descriptors(), regimes=("ioci",))
        with pytest.raises(LeakageError, match="leakage detected"):
            assemble_request(plan, ds, origin=2024, regime="ioci")

    def test_covariate_window_respects_origin(self):
        ds = dataset()
        plan = make_plan(ds, DOM, descriptors())
        for origin in plan.origins:
            req = assemble_request(plan, ds, origin=origin, regime="ioci")
            years = [y for y, _ in req.covariate_history["ioci"]]
            assert max(years) <= origin

    def test_lag_years_shift_coverage(self):
        ds = Dataset(
            targets={DOM: target_series()},
            covariate_regimes=(
                CovariateSet("lagged", {"x": ioci_series()}, {"x": 2}),
            ),
        )
        plan = make_plan(ds, DOM, descriptors(), regimes=("lagged",))
        req = assemble_request(plan, ds, origin=2014, regime="lagged")
        years = [y for y, _ in req.covariate_history["x"]]
        assert min(years) == 2009  # first source year 2007 shifted by 2
        assert max(years) <= 2014

    def test_standardized_features_have_window_moments(self):
        ds = dataset()
        plan = make_plan(ds, DOM, descriptors())
        req = assemble_request(plan, ds, origin=2020, regime="ioci")
        vals = [v for _, v in req.covariate_history["ioci"]]
        assert abs(sum(vals) / len(vals)) < 1e-9

    @given(
        bump_year_idx=st.integers(0, 18),
        bump=st.integers(1, 10),
    )
    @settings(max_examples=40)
    def test_no_request_carries_post_origin_information(self, bump_year_idx, bump):
        # randomized vintage perturbations either raise or stay leakage-free
        pts = list(ioci_series().points)
        p = pts[bump_year_idx]
        pts[bump_year_idx] = Point(p.year, p.value, p.vintage + bump)
        ds = Dataset(
            targets={DOM: target_series()},
            covariate_regimes=(CovariateSet("ioci", {"ioci": AnnualSeries("ioci", "", tuple(pts))}),),
        )
        plan = make_plan(ds, DOM, descriptors(), regimes=("ioci",))
        for origin in plan.origins:
            try:
                req = assemble_request(plan, ds, origin=origin, regime="ioci")
            except LeakageError:
                continue
            for name, pairs in req.covariate_history.items():
                assert all(y <= origin for y, _ in pairs)
            assert all(y <= origin for y, _ in req.target_history)


class TestRunBacktest:
    def test_cell_product_count(self):
        ds = dataset()
        plan = make_plan(
            ds, DOM,
            adapters=(AdapterDescriptor(name="persistence"), AdapterDescriptor(name="echo")),
        )
        report = run_backtest(plan, ds)
        assert len(report.records) == 2 * 2 * 11

    def test_persistence_identical_across_regimes(self):
        ds = dataset()
        plan = make_plan(ds, DOM, descriptors())
        report = run_backtest(plan, ds)
        none_cells = {
            (r.origin, r.step): (r.point, tuple(sorted(r.quantiles.items())), r.actual)
            for r in report.for_cell("persistence", "none")
        }
        ioci_cells = {
            (r.origin, r.step): (r.point, tuple(sorted(r.quantiles.items())), r.actual)
            for r in report.for_cell("persistence", "ioci")
        }
        assert none_cells == ioci_cells

    def test_unconditioned_flag_set(self):
        ds = dataset()
        plan = make_plan(ds, DOM, descriptors())
        report = run_backtest(plan, ds)
        assert all("unconditioned" in r.flags for r in report.for_cell("persistence", "ioci"))
        assert all("unconditioned" not in r.flags for r in report.for_cell("persistence", "none"))

    def test_failing_adapter_isolated(self):
        class Flaky:
            name = "flaky"
            supports_covariates = False

            def forecast(self, request):
                if request.target_history[-1][0] == 2016:
                    raise RuntimeError("boom")  # escapes the cell barrier?
                from enrolcast.baselines import persistence_forecast

                return persistence_forecast(
                    [v for _, v in request.target_history], request.horizon,
                    request.quantile_levels,
                )

        ds = dataset()
        plan = make_plan(
            ds, DOM,
            adapters=(AdapterDescriptor(name="flaky"), AdapterDescriptor(name="persistence")),
            regimes=("none",),
        )
        with pytest.raises(RuntimeError):
            # non-adapter exceptions are bugs and must not be swallowed
            run_backtest(plan, ds, adapters={"flaky": Flaky(), "persistence": PersistenceAdapter()})

    def test_adapter_error_recorded_not_fatal(self):
        from enrolcast.adapters import AdapterTimeout

        class Timing:
            name = "timing"
            supports_covariates = False

            def forecast(self, request):
                if request.target_history[-1][0] == 2016:
                    raise AdapterTimeout("adapter timeout: injected")
                from enrolcast.baselines import persistence_forecast

                return persistence_forecast(
                    [v for _, v in request.target_history], request.horizon,
                    request.quantile_levels,
                )

        ds = dataset()
        plan = make_plan(
            ds, DOM, adapters=(AdapterDescriptor(name="timing"),), regimes=("none",),
        )
        report = run_backtest(plan, ds, adapters={"timing": Timing()})
        assert len(report.records) == 10
        assert len(report.failures) == 1
        assert report.failures[0].origin == 2016
        assert "timeout" in report.failures[0].error

    def test_all_cells_failed_is_error(self):
        class Dead:
            name = "dead"
            supports_covariates = False

            def forecast(self, request):
                from enrolcast.adapters import AdapterError

                raise AdapterError("always down")

        ds = dataset()
        plan = make_plan(ds, DOM, adapters=(AdapterDescriptor(name="dead"),), regimes=("none",))
        with pytest.raises(BacktestError, match="empty report"):
            run_backtest(plan, ds, adapters={"dead": Dead()})

    def test_deterministic_reports(self):
        ds = dataset()
        plan = make_plan(ds, DOM, descriptors())
        r1 = run_backtest(plan, ds)
        r2 = run_backtest(plan, ds)
        assert r1 == r2

    def test_future_observations_do_not_change_report(self, tmp_path):
        ds_full = dataset()
        plan = make_plan(ds_full, DOM, descriptors())
        max_needed = max(plan.origins) + plan.horizon
        trimmed_target = target_series().with_points(
            p for p in target_series().points if p.year <= max_needed
        )
        ds_trimmed = Dataset(
            targets={DOM: trimmed_target},
            covariate_regimes=ds_full.covariate_regimes,
        )
        r_full = run_backtest(plan, ds_full)
        r_trim = run_backtest(plan, ds_trimmed)
        p1 = tmp_path / "full.csv"
        p2 = tmp_path / "trim.csv"
        write_records_csv(r_full, p1)
        write_records_csv(r_trim, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_records_pass_leakage_revalidation(self):
        ds = dataset()
        plan = make_plan(ds, DOM, descriptors())
        report = run_backtest(plan, ds)
        for r in report.records:
            assert r.target_year == r.origin + r.step
            assert r.target_year > r.origin


class TestMultiStepHorizon:
    def test_two_step_plan_records_both_steps(self):
        ds = dataset()
        plan = make_plan(ds, DOM, descriptors(), regimes=("none",), horizon=2)
        # an origin only qualifies when its two-step-ahead actual is observed
        assert plan.origins == tuple(range(2014, 2024))
        report = run_backtest(plan, ds)
        assert len(report.records) == len(plan.origins) * 2
        for r in report.records:
            assert r.step in (1, 2)
            assert r.target_year == r.origin + r.step
            assert r.actual is not None

    def test_persistence_steps_carry_same_level(self):
        ds = dataset()
        plan = make_plan(ds, DOM, descriptors(), regimes=("none",), horizon=3)
        report = run_backtest(plan, ds)
        by_origin = {}
        for r in report.records:
            by_origin.setdefault(r.origin, []).append(r.point)
        for origin, points in by_origin.items():
            assert len(set(points)) == 1


class TestResidualWrapperIntegration:
    def test_wrapped_persistence_runs_over_covariate_regime(self):
        from enrolcast.adapters import PersistenceAdapter, residual_covariate_wrap

        ds = dataset()
        plan = make_plan(
            ds, DOM,
            adapters=(AdapterDescriptor(name="persistence+resid", supports_covariates=True),),
            regimes=("ioci",),
        )
        report = run_backtest(
            plan, ds, adapters={"persistence+resid": residual_covariate_wrap(PersistenceAdapter())}
        )
        assert len(report.records) == 11
        assert not report.failures
        # covariates actually moved the forecasts away from pure persistence
        naive = run_backtest(
            make_plan(ds, DOM, descriptors(), regimes=("ioci",)), ds
        )
        wrapped_points = [r.point for r in report.records]
        naive_points = [r.point for r in naive.records]
        assert wrapped_points != naive_points


class TestReportIO:
    def test_records_csv_round_trip(self, tmp_path):
        ds = dataset()
        plan = make_plan(ds, DOM, descriptors())
        report = run_backtest(plan, ds)
        path = tmp_path / "records.csv"
        write_records_csv(report, path, header_comment="run: abc123")
        loaded = read_records_csv(path)
        assert tuple(loaded) == report.records

    def test_summaries_and_effect_sizes(self):
        ds = dataset()
        plan = make_plan(
            ds, DOM,
            adapters=(AdapterDescriptor(name="persistence"),
                      AdapterDescriptor(name="rw", command="arima:0,1,0")),
        )
        report = run_backtest(plan, ds)
        errors, probs = summarize_report(report)
        assert {e.model for e in errors} == {"persistence", "rw"}
        es = effect_sizes(report, reference_model="persistence")
        assert {e["model"] for e in es} == {"rw"}
        for e in es:
            assert e["n"] == 11
