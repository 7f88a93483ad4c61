"""Command-line entry point: ingest, impute, evolve, eval, pifl, report."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from datetime import date
from pathlib import Path

from buildevo import METER_TYPES, __version__
from buildevo.data import DataError, align_and_resample, load_dataset, missingness_report, read_dataset, save_dataset
from buildevo.dsl import DslError, HeuristicProgram
from buildevo.evaluation import BASELINES, EvaluationError, LinearRegressionBaseline, baseline, make_windows, score_heuristic
from buildevo.evolution import ConfigError, EvolutionConfig, EvolutionError, run_evolution
from buildevo.imputation import ImputationConfig, ImputationError, impute_all
from buildevo.ledger import RunLedger
from buildevo.llm import HttpProvider, MockProvider, ProviderError
from buildevo.pifl import NonExecutable, analyze
from buildevo.report import MalformedLedger, write_report

logger = logging.getLogger("buildevo")

EXIT_OK, EXIT_USAGE, EXIT_PROVIDER = 0, 2, 3


class UsageError(Exception):
    pass


def _csv_list(text: str | None):
    return [s.strip() for s in text.split(",") if s.strip()] if text else None


def _load_program(path) -> HeuristicProgram:
    p = Path(path)
    return HeuristicProgram.from_source(p.read_text(), id=p.stem)


def _split(ds, args, t_obs, t_pred, stride):
    train_b = _csv_list(getattr(args, "train_buildings", None))
    test_b = _csv_list(getattr(args, "test_buildings", None))
    train = make_windows(ds, t_obs=t_obs, t_pred=t_pred, stride=stride, buildings=train_b).train
    test = make_windows(ds, t_obs=t_obs, t_pred=t_pred, stride=stride, buildings=test_b).test
    return train, test


def cmd_ingest(args) -> int:
    meter_dir = Path(args.meter_dir)
    if not meter_dir.is_dir():
        raise UsageError(f"{meter_dir} is not a directory")
    meters = {m: meter_dir / f"{m}.csv" for m in METER_TYPES if (meter_dir / f"{m}.csv").exists()}
    raw = load_dataset(args.metadata, args.weather, meters)
    ds = align_and_resample(raw)
    save_dataset(ds, args.out)
    report_path = Path(args.report) if args.report else Path(args.out).with_suffix(".missing.csv")
    rep = missingness_report(ds)
    with report_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["building_id", "meter_type", "missing_pct", "longest_gap", "gaps_by_hour_of_day"])
        for (b, m), r in sorted(rep.items()):
            w.writerow([b, m, f"{r.missing_pct:.3f}", r.longest_gap, " ".join(map(str, r.gaps_by_hour_of_day))])
    print(f"{len(ds.buildings)} buildings, {len(ds.meters)} series, {len(ds.grid)} hours -> {args.out}")
    for (b, m), r in sorted(rep.items()):
        print(f"  {b} {m}: {r.missing_pct:.2f}% missing, longest gap {r.longest_gap} h")
    if raw.report.total_dropped or raw.report.unknown_buildings:
        print(f"  dropped rows: {raw.report.total_dropped}; unknown buildings: {', '.join(raw.report.unknown_buildings) or 'none'}")
    return EXIT_OK


def _holidays(path) -> frozenset:
    days = set()
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            try:
                days.add(date.fromisoformat(line))
            except ValueError as exc:
                raise UsageError(f"{path}: bad holiday date {line!r}") from exc
    return frozenset(days)


def cmd_impute(args) -> int:
    ds = read_dataset(args.input)
    cfg = ImputationConfig(
        irrigation_winter_rule=args.irrigation_winter_rule,
        holidays=_holidays(args.holidays) if args.holidays else frozenset(),
    )
    out, audit = impute_all(ds, cfg)
    save_dataset(out, args.out)
    audit.write_jsonl(args.audit)
    counts = audit.counts()
    print(f"filled {len(audit.records)} slots -> {args.out}")
    for tier in sorted(counts):
        print(f"  {tier}: {counts[tier]}")
    for key in audit.dropped_series:
        print(f"  dropped series {key}")
    return EXIT_OK


def _provider(name: str, seed: int):
    if name == "mock":
        return MockProvider(seed)
    return HttpProvider()


def _baseline_table(ds, train, test, program, objective) -> dict:
    md = ds.metadata_index
    methods = {}
    for name in BASELINES:
        if name == "linear_regression":
            res = LinearRegressionBaseline().fit(ds, train).score(test, objective)
        else:
            res = score_heuristic(baseline(name), test, md, objective)
        methods[name] = res.to_dict()
    methods["evolved"] = score_heuristic(program, test, md, objective).to_dict()
    return {"split": "test", "windows": len(test), "methods": methods}


def cmd_evolve(args) -> int:
    try:
        doc = json.loads(Path(args.config).read_text()) if args.config else {}
        overrides = {"rng_seed": args.seed}
        if args.no_pifl:
            overrides["use_pifl"] = False
        config = EvolutionConfig.from_dict(doc, **overrides)
    except (ConfigError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad run config: {exc}") from exc
    ds = read_dataset(args.dataset)
    train, test = _split(ds, args, config.t_obs, config.t_pred, config.stride)
    if not train:
        raise UsageError("no training windows; check the dataset length and window sizes")
    ledger = RunLedger(args.out, config, extra={"provider": args.provider, "dataset": str(args.dataset)})
    provider = _provider(args.provider, args.seed)
    run_evolution(config, train, ds.metadata_index, provider, ledger=ledger, threads=args.threads)
    if test:
        ledger.write_baselines(_baseline_table(ds, train, test, ledger.best.program, config.objective))
    write_report(args.out)
    print(f"run {ledger.run_id}: best J {ledger.best.J:.4f} ({ledger.best.id}) -> {args.out}")
    print(ledger.best.program.source)
    return EXIT_OK


def cmd_eval(args) -> int:
    ds = read_dataset(args.dataset)
    train, test = _split(ds, args, args.t_obs, args.t_pred, args.stride)
    windows = test if args.split == "test" else train
    if not windows:
        raise UsageError(f"no {args.split} windows")
    if args.baseline == "linear_regression":
        res = LinearRegressionBaseline().fit(ds, train).score(windows, args.objective)
        label = args.baseline
    elif args.baseline:
        res = score_heuristic(baseline(args.baseline, args.t_obs), windows, ds.metadata_index, args.objective)
        label = args.baseline
    else:
        res = score_heuristic(_load_program(args.heuristic), windows, ds.metadata_index, args.objective)
        label = Path(args.heuristic).name
    out = Path(args.out) if args.out else Path(f"eval_{Path(label).stem}.json")
    out.write_text(json.dumps({"heuristic": label, "split": args.split, **res.to_dict()}, indent=2) + "\n")
    print(f"{label}: MAPE / RMSE / MAE = {res.triple()}  (J={res.J:.4f}, failed {res.windows_failed}/{res.windows_total})")
    return EXIT_OK


def cmd_pifl(args) -> int:
    ds = read_dataset(args.dataset)
    train, test = _split(ds, args, args.t_obs, args.t_pred, args.stride)
    windows = test if args.split == "test" else train
    program = _load_program(args.heuristic)
    report = analyze(program, windows, ds.metadata_index, args.objective, args.threads)
    Path(args.out).write_text(report.to_json() + "\n")
    print(report.rendered_text)
    return EXIT_OK


def cmd_report(args) -> int:
    path = write_report(args.run_dir)
    print(path.read_text())
    return EXIT_OK


def _window_flags(p) -> None:
    p.add_argument("--t-obs", type=int, default=168)
    p.add_argument("--t-pred", type=int, default=24)
    p.add_argument("--stride", type=int, default=24)
    p.add_argument("--objective", choices=["rmse", "mae", "mape"], default="rmse")


def _building_flags(p) -> None:
    p.add_argument("--train-buildings", help="comma-separated building ids used for training windows")
    p.add_argument("--test-buildings", help="comma-separated building ids used for test windows")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="buildevo", description="Evolve building energy forecasting heuristics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for scoring")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load CSV sources into an aligned dataset JSON")
    p.add_argument("--metadata", required=True)
    p.add_argument("--weather", required=True)
    p.add_argument("--meter-dir", required=True, help="directory holding <meter_type>.csv files")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="missingness CSV (default: next to --out)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("impute", help="fill missing meter readings")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--audit", required=True)
    p.add_argument("--holidays", help="file with one ISO date per line")
    p.add_argument("--irrigation-winter-rule", action="store_true")
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("evolve", help="run the evolutionary search")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--provider", choices=["mock", "http"], default="mock")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--no-pifl", action="store_true", help="leave segment statistics out of prompts")
    _building_flags(p)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("eval", help="score a heuristic or baseline")
    p.add_argument("--dataset", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--heuristic")
    g.add_argument("--baseline", choices=BASELINES)
    _window_flags(p)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--out", help="JSON result file")
    _building_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pifl", help="segment contribution analysis")
    p.add_argument("--dataset", required=True)
    p.add_argument("--heuristic", required=True)
    _window_flags(p)
    p.add_argument("--split", choices=["train", "test"], default="train")
    p.add_argument("--out", default="pifl.json")
    _building_flags(p)
    p.set_defaults(func=cmd_pifl)

    p = sub.add_parser("report", help="render report.md for a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ProviderError as exc:
        print(f"error: provider failure: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (UsageError, DataError, DslError, EvaluationError, EvolutionError, ImputationError,
            MalformedLedger, NonExecutable, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
