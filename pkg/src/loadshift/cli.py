"""loadshift command line: ingest, train, recommend, evaluate, gridsearch.

Every command reads its inputs from disk, writes its artifacts plus a
``manifest_<command>.json`` (input hashes, config snapshot, version) into the
output directory, and exits 0 on success, 1 on a user/input error and 2 on an
internal error. Errors are printed to stderr as one JSON line.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .activity import activity_frame, forecast_activities, load_mapping
from .config import RunConfig, load_config
from .errors import LoadshiftError
from .evaluation import (all_forecasts, cold_start, evaluate_agents, grid_search,
                         simulate_savings, timing_histogram)
from .ingest import HourlyDataset, engineer_features, load_catalog, load_readings, resample_hourly
from .models import FAMILIES, RollingFitter, build_features, load_model, predict_proba, save_model
from .plotting import plot_cold_start, plot_daily_auc, plot_schedule, plot_timing_histogram
from .predictors import AVAILABILITY, export_forecasts, load_forecasts
from .recommend import build_schedule
from .signals import AlignedSignals, FixtureSource, RemoteSource

log = logging.getLogger("loadshift")

HOURLY_FILE = "hourly.csv"


class _Parser(argparse.ArgumentParser):
    """Usage errors count as user errors (exit 1) and are reported as JSON."""

    def error(self, message):
        raise LoadshiftError(f"{self.prog}: {message}")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _unit(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"value must lie in [0, 1], got {v}")
    return v


# -- shared plumbing -------------------------------------------------------------

def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _abs(path):
    return None if path is None else str(Path(path).resolve())


def _config(args) -> RunConfig:
    overrides = {
        "paths": {
            "output_dir": _abs(args.output_dir),
            "price": _abs(getattr(args, "price_file", None)),
            "carbon": _abs(getattr(args, "carbon_file", None)),
            "price_url": getattr(args, "price_url", None),
            "carbon_url": getattr(args, "carbon_url", None),
            "consumption": _abs(getattr(args, "consumption", None)),
            "catalog": _abs(getattr(args, "catalog", None)),
        },
        "model": {"family": args.family, "seed": args.seed},
    }
    return load_config(args.config, overrides)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(cfg: RunConfig, command: str, inputs: dict, outputs: list[Path],
                    extra: dict | None = None, name: str | None = None) -> Path:
    out = _out_dir(cfg)
    manifest = {
        "command": command,
        "version": __version__,
        "config": cfg.snapshot(),
        "inputs": {k: {"path": str(p), "sha256": sha256_file(p)}
                   for k, p in sorted(inputs.items()) if p is not None and Path(p).is_file()},
        "outputs": {str(Path(p).relative_to(out)) if Path(p).is_relative_to(out) else str(p): sha256_file(p)
                    for p in outputs},
    }
    if extra:
        manifest["parameters"] = extra
    path = out / f"manifest_{name or command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def _write_csv(path: Path, frame: pd.DataFrame) -> Path:
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def _hourly_path(cfg: RunConfig) -> Path:
    return Path(cfg.paths.output_dir) / HOURLY_FILE


def _load_hourly(cfg: RunConfig) -> HourlyDataset:
    path = _hourly_path(cfg)
    if not path.is_file():
        raise LoadshiftError(f"hourly dataset not found: {path} (run `loadshift ingest` first)")
    return HourlyDataset.load(path)


def _mapping(cfg: RunConfig, dataset: HourlyDataset):
    cfg.require("mapping")
    mapping = load_mapping(cfg.paths.mapping)
    missing = [d for d in mapping.device_ids if d not in dataset.device_ids]
    if missing:
        raise LoadshiftError(f"mapping references devices absent from the dataset: {missing}")
    return mapping


def _signals(cfg: RunConfig) -> AlignedSignals:
    cfg.require("price", "carbon")
    price = RemoteSource(cfg.paths.price_url, "price") if cfg.paths.price_url \
        else FixtureSource(cfg.paths.price, "price")
    carbon = RemoteSource(cfg.paths.carbon_url, "carbon") if cfg.paths.carbon_url \
        else FixtureSource(cfg.paths.carbon, "carbon")
    return AlignedSignals(price, carbon)


def _signal_inputs(cfg: RunConfig) -> dict:
    return {"price": None if cfg.paths.price_url else cfg.paths.price,
            "carbon": None if cfg.paths.carbon_url else cfg.paths.carbon}


def _day(dataset: HourlyDataset, date: str) -> int:
    try:
        return dataset.day_of(date)
    except (KeyError, ValueError) as exc:
        raise LoadshiftError(f"date {date} is not a complete day of the hourly dataset") from exc


def _days(dataset: HourlyDataset, cfg: RunConfig, n: int | None) -> list[int]:
    first = cfg.schedule.headstart_days
    total = len(dataset.day_starts)
    if total <= first:
        raise LoadshiftError(f"dataset has {total} full days; need more than {first}")
    last = total if n is None else min(total, first + n)
    return list(range(first, last))


def _forecasts(args, cfg: RunConfig, dataset: HourlyDataset, mapping):
    if getattr(args, "forecasts_dir", None):
        fc = load_forecasts(args.forecasts_dir, dataset, list(mapping.device_ids))
        if args.days is not None:
            keep = set(_days(dataset, cfg, args.days))
            fc = {d: f for d, f in fc.items() if d in keep}
        if not fc:
            raise LoadshiftError(f"no forecast days found in {args.forecasts_dir}")
        return fc
    return all_forecasts(dataset, mapping, cfg.family, cfg.schedule, cfg.seed,
                         _days(dataset, cfg, args.days))


def _signals_by_day(cfg: RunConfig, dataset: HourlyDataset):
    aligned = _signals(cfg)
    return lambda day: aligned.for_date(dataset.date_of(day))


# -- commands --------------------------------------------------------------------

def cmd_ingest(args) -> int:
    cfg = _config(args)
    cfg.require("consumption", "catalog")
    catalog = load_catalog(cfg.paths.catalog)
    loaded = load_readings(cfg.paths.consumption, reorder_window=args.reorder_window)
    known = {r.device_id for r in loaded.readings}
    missing = [d for d in catalog.ids if d not in known]
    if missing:
        raise LoadshiftError(f"catalog devices not present in {cfg.paths.consumption}: {missing}")
    readings = [r for r in loaded.readings if r.device_id in set(catalog.ids)]
    dataset = engineer_features(resample_hourly(readings), catalog)
    out = _hourly_path(cfg)
    _out_dir(cfg)
    dataset.save(out)
    summary = {"hours": len(dataset), "full_days": len(dataset.day_starts),
               "gap_hours": int(dataset.gap.sum()), "malformed_rows": loaded.malformed_rows,
               "reordered_rows": loaded.reordered_rows}
    _write_manifest(cfg, "ingest", {"consumption": cfg.paths.consumption, "catalog": cfg.paths.catalog},
                    [out], summary)
    print(json.dumps(summary, sort_keys=True))
    return 0


def _store_dir(cfg: RunConfig, date: str) -> Path:
    return Path(cfg.paths.model_store) / date


def _targets(mapping) -> list[str]:
    return [AVAILABILITY, *mapping.device_ids]


def cmd_train(args) -> int:
    cfg = _config(args)
    dataset = _load_hourly(cfg)
    mapping = _mapping(cfg, dataset)
    day = _day(dataset, args.date)
    date = dataset.date_of(day)
    store = _store_dir(cfg, date)
    store.mkdir(parents=True, exist_ok=True)
    written = []
    for target in _targets(mapping):
        fitter = RollingFitter(dataset, target, cfg.family, cfg.schedule, cfg.seed)
        model = fitter.fit(day)
        path = store / f"{target}.json"
        save_model(model, path)
        written.append(path)
    _write_manifest(cfg, "train", {"hourly": _hourly_path(cfg), "mapping": cfg.paths.mapping},
                    written, {"date": date}, name=f"train_{date}")
    print(json.dumps({"date": date, "models": [p.name for p in written]}, sort_keys=True))
    return 0


def _load_day_models(cfg: RunConfig, dataset: HourlyDataset, mapping, day: int) -> dict[str, np.ndarray]:
    date = dataset.date_of(day)
    store = _store_dir(cfg, date)
    sl = dataset.day_slice(day)
    probs = {}
    for target in _targets(mapping):
        path = store / f"{target}.json"
        if not path.is_file():
            raise LoadshiftError(f"no trained model for {target} on {date}: {path} "
                                 f"(run `loadshift train --date {date}` first)")
        model = load_model(path)
        probs[target] = predict_proba(model, build_features(dataset, target).rows(sl))
    return probs


def cmd_recommend(args) -> int:
    cfg = _config(args).with_recommendation(
        aval_off=args.aval_off, emissions_ratio=args.ratio,
        availability_threshold=args.avail_th, activity_threshold=args.act_th)
    dataset = _load_hourly(cfg)
    mapping = _mapping(cfg, dataset)
    signals = _signals(cfg)
    day = _day(dataset, args.date)
    date = dataset.date_of(day)
    probs = _load_day_models(cfg, dataset, mapping, day)
    carbon, price = signals.for_date(date)
    report = build_schedule({d: probs[d] for d in mapping.device_ids}, probs[AVAILABILITY],
                            carbon.values, price.values, mapping, dataset.avg_kwh,
                            cfg.recommendation, date=date)
    out = _out_dir(cfg)
    text = out / f"schedule_{date}.txt"
    text.write_text(report.to_text())
    js = out / f"schedule_{date}.json"
    js.write_text(report.to_json())
    fig = plot_schedule(report, carbon.values, price.values, out / f"schedule_{date}.png")
    inputs = {"hourly": _hourly_path(cfg), "mapping": cfg.paths.mapping, **_signal_inputs(cfg)}
    inputs.update({f"model:{t}": _store_dir(cfg, date) / f"{t}.json" for t in _targets(mapping)})
    _write_manifest(cfg, "recommend", inputs, [text, js, fig], {"date": date}, name=f"recommend_{date}")
    sys.stdout.write(report.to_text())
    return 0


def cmd_evaluate_agents(args) -> int:
    cfg = _config(args)
    dataset = _load_hourly(cfg)
    mapping = _mapping(cfg, dataset)
    forecasts = _forecasts(args, cfg, dataset, mapping)
    report = evaluate_agents(dataset, mapping, forecasts, cfg.use_th, cfg.act_th)
    out = _out_dir(cfg)
    outputs = export_forecasts(forecasts, out / "forecasts")
    per_day = {day: forecast_activities(fc.usage_matrix(mapping.device_ids), mapping,
                                        cfg.recommendation.activity_threshold)
               for day, fc in forecasts.items()}
    outputs.append(_write_csv(out / "forecasts" / "activity_probs.csv", activity_frame(per_day)))
    data = {"config": cfg.snapshot(), "report": report.to_dict()}
    outputs.append(_write_json(out / "agents.json", data))
    outputs.append(_write_csv(out / "agents.csv", report.summary_frame()))
    daily = report.daily_frame()
    outputs.append(_write_csv(out / "agents_daily_auc.csv", daily))
    outputs.append(plot_daily_auc(daily, out / "agents_daily_auc.png"))
    _write_manifest(cfg, "evaluate_agents", {"hourly": _hourly_path(cfg), "mapping": cfg.paths.mapping},
                    outputs, {"days": len(forecasts)})
    sys.stdout.write(report.summary_frame().to_string(index=False) + "\n")
    return 0


def cmd_evaluate_coldstart(args) -> int:
    cfg = _config(args)
    dataset = _load_hourly(cfg)
    mapping = _mapping(cfg, dataset)
    agent = args.agent
    if agent not in (AVAILABILITY, "activity") and agent not in dataset.device_ids:
        raise LoadshiftError(f"unknown agent {agent!r}: use availability, activity or a device id")
    total = len(dataset.day_starts)
    first_test = args.test_start if args.test_start is not None else cfg.schedule.headstart_days + args.max_days
    test_days = list(range(first_test, first_test + args.test_days))
    if first_test < cfg.schedule.headstart_days or test_days[-1] >= total:
        raise LoadshiftError(f"test days {test_days[0]}..{test_days[-1]} do not fit the "
                             f"{total}-day dataset after a {cfg.schedule.headstart_days}-day headstart")
    lengths = range(cfg.schedule.headstart_days, first_test + 1, args.step)
    result = cold_start(dataset, agent, args.threshold, test_days, cfg.family, cfg.schedule, cfg.seed,
                        mapping, lengths, cfg.use_th, cfg.act_th)
    out = _out_dir(cfg)
    stem = f"coldstart_{agent}"
    curve = result.curve_frame()
    outputs = [
        _write_csv(out / f"{stem}.csv", curve),
        _write_json(out / f"{stem}.json", {"config": cfg.snapshot(), "result": result.to_dict()}),
        plot_cold_start(curve, args.threshold, out / f"{stem}.png",
                        "EQUAL" if agent == "activity" else "mean daily AUC"),
    ]
    _write_manifest(cfg, "evaluate_coldstart", {"hourly": _hourly_path(cfg), "mapping": cfg.paths.mapping},
                    outputs, {"agent": agent, "threshold": args.threshold, "test_days": test_days},
                    name=f"evaluate_{stem}")
    print(json.dumps({"agent": agent, "days_to_threshold": result.days_to_threshold}, sort_keys=True))
    return 0


def cmd_evaluate_savings(args) -> int:
    cfg = _config(args).with_recommendation(
        aval_off=args.aval_off, availability_threshold=args.avail_th, activity_threshold=args.act_th)
    dataset = _load_hourly(cfg)
    mapping = _mapping(cfg, dataset)
    signals = _signals_by_day(cfg, dataset)
    forecasts = _forecasts(args, cfg, dataset, mapping)
    ratios = args.ratios or [cfg.recommendation.emissions_ratio]
    out = _out_dir(cfg)
    outputs, summary = [], []
    for r in ratios:
        rc = cfg.with_recommendation(emissions_ratio=r)
        res = simulate_savings(dataset, signals, mapping, dataset.avg_kwh, rc.recommendation, forecasts)
        tag = f"r{r:.2f}"
        hist = timing_histogram(res.accepted)
        outputs += [
            _write_csv(out / f"savings_{tag}_accepted.csv", res.accepted),
            _write_csv(out / f"savings_{tag}_timing.csv", hist),
            plot_timing_histogram(hist, out / f"savings_{tag}_timing.png", f"emissions ratio {r:.2f}"),
        ]
        summary.append({"emissions_ratio": r, **rc.snapshot()["recommendation"], **res.report.to_dict()})
    frame = pd.DataFrame(summary)
    outputs.append(_write_csv(out / "savings.csv", frame))
    outputs.append(_write_json(out / "savings.json", {"config": cfg.snapshot(), "scenarios": summary}))
    _write_manifest(cfg, "evaluate_savings",
                    {"hourly": _hourly_path(cfg), "mapping": cfg.paths.mapping, **_signal_inputs(cfg)},
                    outputs, {"ratios": ratios, "days": len(forecasts)})
    cols = ["emissions_ratio", "recommendations", "total_emissions_saving", "relative_emissions_saving",
            "total_price_saving", "relative_price_saving"]
    sys.stdout.write(frame[cols].to_string(index=False) + "\n")
    return 0


def cmd_gridsearch(args) -> int:
    cfg = _config(args)
    dataset = _load_hourly(cfg)
    mapping = _mapping(cfg, dataset)
    signals = _signals_by_day(cfg, dataset)
    forecasts = _forecasts(args, cfg, dataset, mapping)
    grids = {}
    if args.avail_th_grid:
        grids["availability_threshold"] = args.avail_th_grid
    if args.act_th_grid:
        grids["activity_threshold"] = args.act_th_grid
    result = grid_search(dataset, signals, mapping, dataset.avg_kwh, forecasts, grids, args.objective)
    out = _out_dir(cfg)
    stem = f"gridsearch_{args.objective}"
    outputs = [
        _write_csv(out / f"{stem}.csv", result.table),
        _write_json(out / f"{stem}.json", {"config": cfg.snapshot(), "objective": args.objective,
                                           "best": result.best}),
    ]
    _write_manifest(cfg, "gridsearch",
                    {"hourly": _hourly_path(cfg), "mapping": cfg.paths.mapping, **_signal_inputs(cfg)},
                    outputs, {"objective": args.objective, "days": len(forecasts)}, name=stem)
    print(json.dumps({"objective": args.objective, "best": result.best}, sort_keys=True))
    return 0


def cmd_make_fixture(args) -> int:
    from .synthetic import write_bundle

    paths = write_bundle(args.out_dir, days=args.days, start=args.start, seed=args.seed)
    print(json.dumps({k: str(v) for k, v in paths.items()}, sort_keys=True))
    return 0


# -- argument parsing ----------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="run configuration YAML file")
    p.add_argument("--output-dir", help="override paths.output_dir")
    p.add_argument("--family", choices=FAMILIES, help="override model.family")
    p.add_argument("--seed", type=int, help="override model.seed")


def _signal_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--price-file", help="day-ahead price CSV (datetime,value); overrides paths.price")
    p.add_argument("--carbon-file", help="carbon intensity CSV (datetime,value); overrides paths.carbon")
    p.add_argument("--price-url", help="fetch the price CSV from this URL instead of a file")
    p.add_argument("--carbon-url", help="fetch the carbon CSV from this URL instead of a file")


def _forecast_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--days", type=int,
                   help="only the first N days after the headstart (default: all)")
    p.add_argument("--forecasts-dir",
                   help="reuse forecast_<target>.csv files from `evaluate agents` instead of refitting")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="loadshift", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="resample readings into the hourly dataset")
    _common(p)
    p.add_argument("--consumption", help="override paths.consumption")
    p.add_argument("--catalog", help="override paths.catalog")
    p.add_argument("--reorder-window", type=float, default=60.0,
                   help="seconds within which out-of-order rows are re-sorted (default 60)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="fit and store the models used for one day")
    _common(p)
    p.add_argument("--date", required=True, help="forecast day YYYY-MM-DD; models see only earlier data")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("recommend", help="schedule one day from stored models and day-ahead signals")
    _common(p)
    _signal_flags(p)
    p.add_argument("--date", required=True, help="day to schedule, YYYY-MM-DD")
    p.add_argument("--ratio", type=_unit, help="emissions ratio r in [0, 1]")
    p.add_argument("--aval-off", type=_bool, help="let flexible activities ignore availability (true/false)")
    p.add_argument("--avail-th", type=_unit, help="availability probability threshold")
    p.add_argument("--act-th", type=_unit, help="activity probability threshold")
    p.set_defaults(func=cmd_recommend)

    ev = sub.add_parser("evaluate", help="replay evaluations")
    evsub = ev.add_subparsers(dest="evaluation", required=True, parser_class=_Parser)

    p = evsub.add_parser("agents", help="daily AUC per prediction agent and EQUAL for activities")
    _common(p)
    _forecast_flags(p)
    p.set_defaults(func=cmd_evaluate_agents)

    p = evsub.add_parser("coldstart", help="score against training-history length on a fixed test set")
    _common(p)
    p.add_argument("--agent", default=AVAILABILITY, help="availability, activity or a device id")
    p.add_argument("--threshold", type=float, default=0.79, help="score to reach (default 0.79)")
    p.add_argument("--max-days", type=int, default=45,
                   help="longest history past the headstart; the test set starts right after it")
    p.add_argument("--test-start", type=int, help="first test day index (overrides --max-days)")
    p.add_argument("--test-days", type=int, default=14, help="number of test days (default 14)")
    p.add_argument("--step", type=int, default=1, help="history length increment in days")
    p.set_defaults(func=cmd_evaluate_coldstart)

    p = evsub.add_parser("savings", help="simulated savings of acceptable recommendations")
    _common(p)
    _signal_flags(p)
    _forecast_flags(p)
    p.add_argument("--ratios", type=_unit, nargs="+", help="emissions ratios to simulate, e.g. 1 0.5 0")
    p.add_argument("--aval-off", type=_bool, help="override recommendation.aval_off")
    p.add_argument("--avail-th", type=_unit, help="override the availability threshold")
    p.add_argument("--act-th", type=_unit, help="override the activity threshold")
    p.set_defaults(func=cmd_evaluate_savings)

    p = sub.add_parser("gridsearch", help="search aval_off and both thresholds for one objective")
    _common(p)
    _signal_flags(p)
    _forecast_flags(p)
    p.add_argument("--objective", choices=("emissions", "price"), default="emissions",
                   help="savings total to maximise (emissions uses r=1, price r=0)")
    p.add_argument("--avail-th-grid", type=_unit, nargs="+", help="availability thresholds to try")
    p.add_argument("--act-th-grid", type=_unit, nargs="+", help="activity thresholds to try")
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("make-fixture", help="write a synthetic household bundle with a config")
    p.add_argument("out_dir", help="directory to create")
    p.add_argument("--days", type=int, default=365, help="number of days (default 365)")
    p.add_argument("--start", default="2014-01-06", help="first day YYYY-MM-DD")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.set_defaults(func=cmd_make_fixture)
    return parser


def _fail(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}, sort_keys=True) + "\n")


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except LoadshiftError as exc:
        _fail(type(exc).__name__, str(exc))
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except LoadshiftError as exc:
        _fail(type(exc).__name__, str(exc))
        return 1
    except Exception as exc:  # anything else is a bug, not bad input
        log.debug("internal error", exc_info=True)
        _fail("InternalError", f"{type(exc).__name__}: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
