"""Command-line surface: validation, feature building, backtests, reports,
and operating-conditions scoring.

Exit codes: 0 success, 1 domain failure (empty report, invalid reply),
2 usage or IO failure.  Every table written into a run directory embeds the
run manifest hash, so a run can be audited back to its exact configuration;
identical config + fixtures + seed produce byte-identical tables.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from importlib import resources
from pathlib import Path

from . import __version__, backtest as bt, ioci, metrics as metrics_mod
from .adapters import (
    AdapterDescriptor,
    AdapterError,
    AdapterTimeout,
    ChildProcessAdapter,
    ProtocolError,
)
from .features import FeatureError, build_trends_features, read_monthly_csv
from .timebase import Cohort, TimebaseError, load_dataset, write_series_csv

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def _fail(msg: str, code: int) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def assessor_prompt_text() -> str:
    """The scoring rubric shipped with the package, sent to text assessors."""
    return (resources.files("enrolcast") / "data" / "ioci_assessor_prompt.txt").read_text(
        encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# validate


def cmd_validate(args) -> int:
    from .timebase import validate_dataset

    try:
        ds, findings = load_dataset(args.manifest)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        return _fail(f"cannot read manifest: {exc}", EXIT_USAGE)
    except TimebaseError as exc:
        return _fail(str(exc), EXIT_USAGE)
    if args.tolerance > 0.0:
        # re-run structural checks under the reconciliation allowance
        findings = [f for f in findings if f.code != "duplicate-year"]
        findings += [
            f for f in validate_dataset(ds, tolerance=args.tolerance)
            if f.code == "duplicate-year"
        ]
    for f in findings:
        print(f)
    errors = [f for f in findings if f.level == "error"]
    return EXIT_DOMAIN if errors else EXIT_OK


# ---------------------------------------------------------------------------
# features build-trends


def cmd_features_build_trends(args) -> int:
    try:
        monthly = read_monthly_csv(args.monthly, series_id=args.series_id)
        regime, findings = build_trends_features(monthly, min_months=args.min_months)
    except (OSError, FeatureError) as exc:
        return _fail(str(exc), EXIT_USAGE)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fragment = {"name": regime.regime_name, "series": []}
    for name in sorted(regime.series):
        s = regime.series[name]
        fname = f"cov_{regime.regime_name}_{name}.csv"
        write_series_csv(out / fname, [s])
        fragment["series"].append(
            {
                "name": name,
                "file": fname,
                "series_id": s.id,
                "unit": s.unit,
                "lag_years": regime.lag_years.get(name, 0),
            }
        )
    with open(out / "regime_fragment.json", "w", encoding="utf-8") as fh:
        json.dump(fragment, fh, indent=2)
        fh.write("\n")
    for f in findings:
        print(f)
    print(f"wrote {len(fragment['series'])} feature series to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# backtest run


def _load_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _descriptors(config: dict) -> tuple[AdapterDescriptor, ...]:
    out = []
    for entry in config.get("adapters", [{"name": "persistence"}]):
        out.append(
            AdapterDescriptor(
                name=entry["name"],
                transport=entry.get("transport", "in-process"),
                command=entry.get("command"),
                timeout_seconds=int(entry.get("timeout", 60)),
                supports_covariates=bool(entry.get("supports_covariates", False)),
            )
        )
    return tuple(out)


def _manifest_hash(config: dict, seed: int) -> str:
    canon = json.dumps({"config": config, "seed": seed}, sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _write_table(path: Path, header: list[str], rows: list[list], run_hash: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# run: {run_hash}\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def write_run_outputs(report: bt.BacktestReport, run_dir: Path, run_hash: str,
                      reference_model: str) -> None:
    bt.write_records_csv(report, run_dir / "records.csv", header_comment=f"run: {run_hash}")
    errors, probs = bt.summarize_report(report)
    prob_by_key = {(p.regime, p.model): p for p in probs}
    try:
        ranks = metrics_mod.rank_models(errors)
        rank_by_key = {(r.regime, r.model): r for r in ranks.rows}
    except metrics_mod.MetricsError:
        rank_by_key = {}
    for regime in report.regimes():
        rows = []
        regime_errors = sorted(
            (e for e in errors if e.regime == regime),
            key=lambda e: rank_by_key.get((regime, e.model), None).final_ordinal
            if (regime, e.model) in rank_by_key
            else 0,
        )
        for e in regime_errors:
            rank = rank_by_key.get((regime, e.model))
            rows.append(
                [e.model, _fmt(e.mae), _fmt(e.rmse), _fmt(e.smape), _fmt(e.mape),
                 rank.final_ordinal if rank else ""]
            )
        _write_table(
            run_dir / f"metrics_{regime}.csv",
            ["model", "mae", "rmse", "smape", "mape", "rank"],
            rows, run_hash,
        )
        rank_rows = [
            [r.model] + [_fmt(r.metric_ranks[m]) for m in ("mae", "rmse", "smape", "mape")]
            + [_fmt(r.average_rank), r.final_ordinal]
            for r in sorted(
                (r for r in rank_by_key.values() if r.regime == regime),
                key=lambda r: r.final_ordinal,
            )
        ]
        if rank_rows:
            _write_table(
                run_dir / f"rank_{regime}.csv",
                ["model", "mae_rank", "rmse_rank", "smape_rank", "mape_rank",
                 "average_rank", "final_rank"],
                rank_rows, run_hash,
            )
        pit_rows = []
        for r in report.records:
            if r.regime != regime or r.actual is None or len(r.quantiles) < 2:
                continue
            res = metrics_mod.pit(r.quantiles, r.actual)
            pit_rows.append([r.model, r.origin, r.step, _fmt(res.value), int(res.clamped)])
        _write_table(
            run_dir / f"pit_{regime}.csv",
            ["model", "origin", "step", "pit", "clamped"],
            pit_rows, run_hash,
        )
    es_rows = []
    for entry in bt.effect_sizes(report, reference_model=reference_model):
        p = prob_by_key.get((entry["regime"], entry["model"]))
        es_rows.append(
            [
                entry["regime"], entry["model"], entry["reference"],
                _fmt(entry["delta_mae"]),
                _fmt(p.crps80) if p else "", _fmt(p.crps95) if p else "",
                _fmt(p.interval_score_80) if p else "", _fmt(p.interval_score_95) if p else "",
                entry["n"],
            ]
        )
    _write_table(
        run_dir / "effect_sizes.csv",
        ["regime", "model", "reference", "delta_mae", "crps80", "crps95",
         "interval_score_80", "interval_score_95", "n"],
        es_rows, run_hash,
    )
    if report.failures:
        _write_table(
            run_dir / "failures.csv",
            ["model", "regime", "origin", "error"],
            [[f.model, f.regime, f.origin, f.error] for f in report.failures],
            run_hash,
        )


def cmd_backtest_run(args) -> int:
    try:
        config = _load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(f"cannot read config: {exc}", EXIT_USAGE)
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    config_dir = Path(args.config).parent
    manifest_path = config_dir / config["manifest"]
    try:
        dataset, findings = load_dataset(manifest_path)
    except (OSError, json.JSONDecodeError, KeyError, TimebaseError) as exc:
        return _fail(f"cannot load dataset: {exc}", EXIT_USAGE)
    for f in findings:
        if f.level == "error":
            return _fail(f"dataset invalid: {f}", EXIT_DOMAIN)
    cohort = Cohort(config.get("cohort", "domestic"))
    try:
        plan = bt.make_plan(
            dataset,
            cohort,
            adapters=_descriptors(config),
            regimes=config.get("regimes"),
            horizon=int(config.get("horizon", 1)),
            min_train_years=int(config.get("min_train_years", 8)),
            quantile_levels=tuple(config.get("quantile_levels", bt.DEFAULT_QUANTILE_LEVELS)),
            standardize_covariates=bool(config.get("standardize_covariates", True)),
            seed=seed,
        )
        report = bt.run_backtest(plan, dataset)
    except (bt.BacktestError, AdapterError, TimebaseError) as exc:
        return _fail(str(exc), EXIT_DOMAIN)
    run_hash = _manifest_hash(config, seed)
    stamp = time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
    run_dir = Path(args.out) / f"run-{run_hash}-{stamp}"
    run_dir.mkdir(parents=True, exist_ok=False)
    write_run_outputs(report, run_dir, run_hash, config.get("reference_model", "persistence"))
    import numpy
    import scipy

    manifest = {
        "hash": run_hash,
        "config": config,
        "seed": seed,
        "created_utc": stamp,
        "versions": {
            "enrolcast": __version__,
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "records": len(report.records),
        "failures": len(report.failures),
    }
    with open(run_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    if report.failures:
        print(f"warning: {len(report.failures)} cell(s) failed; see failures.csv", file=sys.stderr)
    print(run_dir)
    return EXIT_OK


# ---------------------------------------------------------------------------
# report metrics / report rank


def _report_from_run_dir(run_dir: Path) -> bt.BacktestReport:
    records_path = run_dir / "records.csv"
    if not records_path.exists():
        raise FileNotFoundError(f"{records_path} not found")
    records = bt.read_records_csv(records_path)
    if not records:
        raise ValueError("run directory holds no records")
    return bt.BacktestReport(
        cohort="", horizon=max(r.step for r in records), records=tuple(records)
    )


def cmd_report_metrics(args) -> int:
    try:
        report = _report_from_run_dir(Path(args.run_dir))
    except (OSError, ValueError) as exc:
        return _fail(str(exc), EXIT_DOMAIN)
    errors, probs = bt.summarize_report(report)
    if not errors:
        return _fail("no scored records", EXIT_DOMAIN)
    try:
        ranks = metrics_mod.rank_models(errors)
        rank_by_key = {(r.regime, r.model): r.final_ordinal for r in ranks.rows}
    except metrics_mod.MetricsError:
        rank_by_key = {}
    for regime in sorted({e.regime for e in errors}):
        print(f"== regime: {regime}")
        print("model,mae,rmse,smape,mape,rank")
        group = sorted(
            (e for e in errors if e.regime == regime),
            key=lambda e: (rank_by_key.get((regime, e.model), 0), e.model),
        )
        for e in group:
            print(
                f"{e.model},{_fmt(e.mae)},{_fmt(e.rmse)},{_fmt(e.smape)},{_fmt(e.mape)},"
                f"{rank_by_key.get((regime, e.model), '')}"
            )
    if probs:
        print("== probabilistic")
        print("regime,model,crps80,crps95,interval_score_80,interval_score_95")
        for p in sorted(probs, key=lambda p: (p.regime, p.model)):
            print(
                f"{p.regime},{p.model},{_fmt(p.crps80)},{_fmt(p.crps95)},"
                f"{_fmt(p.interval_score_80)},{_fmt(p.interval_score_95)}"
            )
    return EXIT_OK


def cmd_report_rank(args) -> int:
    try:
        report = _report_from_run_dir(Path(args.run_dir))
    except (OSError, ValueError) as exc:
        return _fail(str(exc), EXIT_DOMAIN)
    errors, _ = bt.summarize_report(report)
    try:
        ranks = metrics_mod.rank_models(errors)
    except metrics_mod.MetricsError as exc:
        return _fail(str(exc), EXIT_DOMAIN)
    print("regime,model,mae_rank,rmse_rank,smape_rank,mape_rank,average_rank,final_rank")
    for r in sorted(ranks.rows, key=lambda r: (r.regime, r.final_ordinal)):
        mr = r.metric_ranks
        print(
            f"{r.regime},{r.model},{_fmt(mr['mae'])},{_fmt(mr['rmse'])},{_fmt(mr['smape'])},"
            f"{_fmt(mr['mape'])},{_fmt(r.average_rank)},{r.final_ordinal}"
        )
    out_dir = Path(args.run_dir)
    run_hash = ""
    manifest_path = out_dir / "run_manifest.json"
    if manifest_path.exists():
        run_hash = json.loads(manifest_path.read_text()).get("hash", "")
    for regime in sorted({r.regime for r in ranks.rows}):
        rows = [
            [r.model] + [_fmt(r.metric_ranks[m]) for m in ("mae", "rmse", "smape", "mape")]
            + [_fmt(r.average_rank), r.final_ordinal]
            for r in sorted(
                (r for r in ranks.rows if r.regime == regime), key=lambda r: r.final_ordinal
            )
        ]
        _write_table(
            out_dir / f"rank_{regime}.csv",
            ["model", "mae_rank", "rmse_rank", "smape_rank", "mape_rank",
             "average_rank", "final_rank"],
            rows, run_hash,
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# ioci score / diagnose


class AssessorSession(ChildProcessAdapter):
    """Text-model session reusing the forecaster wire protocol.

    The request carries the scoring rubric and the evidence pack; the reply
    must map years to five integer dimension scores.
    """

    def assess(self, evidence: dict[int, ioci.YearEvidence], request_id: str) -> dict:
        doc = {
            "request_id": request_id,
            "kind": "ioci-dimensions",
            "system_prompt": assessor_prompt_text(),
            "evidence": {
                str(y): {
                    "ledger": [{"type": li.kind, "note": li.note} for li in ev.ledger],
                    "band": ev.narrative_band,
                    "tags": sorted(ev.stressor_tags),
                    "thin": ev.thin,
                }
                for y, ev in sorted(evidence.items())
            },
            "years": sorted(evidence),
        }
        with self._lock:
            if self._proc is None or self._proc.poll() is not None:
                self._spawn()
            self._proc.stdin.write(json.dumps(doc) + "\n")
            self._proc.stdin.flush()
            line = self._read_line()
        reply = json.loads(line)
        if reply.get("request_id") != request_id:
            raise ProtocolError("assessor reply does not match the request", raw=line)
        return reply


def _read_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_ioci_score(args) -> int:
    try:
        text = Path(args.evidence).read_text(encoding="utf-8")
    except OSError as exc:
        return _fail(f"cannot read evidence: {exc}", EXIT_USAGE)
    try:
        if args.evidence.endswith(".json"):
            evidence = ioci.parse_evidence_json(text)
        else:
            evidence = ioci.parse_evidence_prose(text)
    except (json.JSONDecodeError, ioci.IociError) as exc:
        return _fail(f"cannot parse evidence: {exc}", EXIT_USAGE)
    reference = None
    if args.reference:
        try:
            reference = ioci.parse_reference(_read_json(args.reference))
        except (OSError, json.JSONDecodeError) as exc:
            return _fail(f"cannot read reference: {exc}", EXIT_USAGE)
    inputs: dict[int, ioci.YearInput] = {}
    if args.baselines:
        try:
            inputs = ioci.parse_baselines(_read_json(args.baselines))
        except (OSError, json.JSONDecodeError, ioci.IociError) as exc:
            return _fail(f"cannot read baselines: {exc}", EXIT_USAGE)
    elif args.assessor:
        session = AssessorSession(
            AdapterDescriptor(
                name="assessor", transport="child-process", command=args.assessor,
                timeout_seconds=args.timeout, supports_covariates=False,
            )
        )
        try:
            reply = session.assess(evidence, request_id="ioci-score-1")
            dims = reply.get("dimensions")
            if not isinstance(dims, dict):
                raise ValueError("reply lacks a dimensions map")
            sanity = reply.get("sanity", {})
            for year_key, seq in dims.items():
                inputs[int(year_key)] = ioci.YearInput(
                    dims=ioci.DimensionScores.from_sequence(seq),
                    sanity=int(sanity.get(year_key, 0)),
                )
        except (AdapterTimeout, ProtocolError, ValueError, TypeError, ioci.IociError,
                json.JSONDecodeError) as exc:
            raw = getattr(exc, "raw", "")
            if args.out:
                raw_path = Path(args.out).with_suffix(".raw_reply.txt")
                raw_path.write_text(raw or str(exc), encoding="utf-8")
                print(f"raw assessor reply saved to {raw_path}", file=sys.stderr)
            return _fail(f"assessor reply invalid: {exc}", EXIT_DOMAIN)
        finally:
            session.close()
    else:
        return _fail("no dimension source: pass --baselines or --assessor", EXIT_USAGE)
    try:
        assessment = ioci.score_series(evidence, reference=reference, inputs=inputs)
        doc = ioci.emit_schema(assessment)
    except ioci.IociError as exc:
        return _fail(str(exc), EXIT_DOMAIN)
    if args.out:
        Path(args.out).write_text(doc, encoding="utf-8")
        print(args.out)
    else:
        sys.stdout.write(doc)
    return EXIT_OK


def cmd_ioci_diagnose(args) -> int:
    try:
        ref = {int(k): int(v) for k, v in _read_json(args.reference).items()}
        cand = {int(k): int(v) for k, v in _read_json(args.candidate).items()}
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        return _fail(f"cannot read series: {exc}", EXIT_USAGE)
    d = ioci.diagnostics(ref, cand)
    doc = {
        "enabled": d.enabled,
        "aligned_years": list(d.aligned_years),
        "pearson_r": d.pearson_r,
        "spearman_rho": d.spearman_rho,
        "mae": d.mae,
        "rmse": d.rmse,
        "comparison": [
            {"year": y, "reference": r, "llm_ioci": o} for y, r, o in d.comparison
        ],
    }
    out = json.dumps(doc, indent=2, allow_nan=False) + "\n"
    if args.out:
        Path(args.out).write_text(out, encoding="utf-8")
        print(args.out)
    else:
        sys.stdout.write(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="enrolcast",
        description="Leakage-safe annual forecasting backtests and covariate tooling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a dataset manifest")
    p.add_argument("manifest")
    p.add_argument("--tolerance", type=float, default=0.0,
                   help="absolute reconciliation allowance for duplicate-year rows")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("features", help="feature engineering")
    fsub = p.add_subparsers(dest="subcommand", required=True)
    fb = fsub.add_parser("build-trends", help="build the demand-proxy feature regime")
    fb.add_argument("--monthly", required=True, help="monthly series CSV")
    fb.add_argument("--series-id", default=None)
    fb.add_argument("--min-months", type=int, default=10)
    fb.add_argument("--out", required=True)
    fb.set_defaults(func=cmd_features_build_trends)

    p = sub.add_parser("backtest", help="expanding-window backtests")
    bsub = p.add_subparsers(dest="subcommand", required=True)
    br = bsub.add_parser("run", help="run a configured backtest")
    br.add_argument("--config", required=True)
    br.add_argument("--out", required=True)
    br.add_argument("--seed", type=int, default=None)
    br.set_defaults(func=cmd_backtest_run)

    p = sub.add_parser("report", help="summaries from a run directory")
    rsub = p.add_subparsers(dest="subcommand", required=True)
    rm = rsub.add_parser("metrics", help="metric tables per regime")
    rm.add_argument("run_dir")
    rm.set_defaults(func=cmd_report_metrics)
    rr = rsub.add_parser("rank", help="multi-metric rank tables")
    rr.add_argument("run_dir")
    rr.set_defaults(func=cmd_report_rank)

    p = sub.add_parser("ioci", help="operating-conditions index")
    isub = p.add_subparsers(dest="subcommand", required=True)
    isc = isub.add_parser("score", help="score an evidence pack")
    isc.add_argument("--evidence", required=True)
    isc.add_argument("--reference", default=None)
    isc.add_argument("--baselines", default=None)
    isc.add_argument("--assessor", default=None, help="external text-model command")
    isc.add_argument("--timeout", type=int, default=120)
    isc.add_argument("--out", default=None)
    isc.set_defaults(func=cmd_ioci_score)
    idg = isub.add_parser("diagnose", help="compare two year-indexed series")
    idg.add_argument("--reference", required=True)
    idg.add_argument("--candidate", required=True)
    idg.add_argument("--out", default=None)
    idg.set_defaults(func=cmd_ioci_diagnose)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
