"""Command-line front end: ingest, train, forecast, backtest, synthetic.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
All randomness flows from --seed (falling back to the QFAN_SEED environment
variable, then 0); identical seeds and inputs give byte-identical outputs.
A JSON config file may supply any flag value; explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from . import backtest as bt
from . import baselines, network, synthetic
from .features import (DataValidationError, RawRecord, TimeSeriesDataset,
                       derive_features, fit_standardizer)
from .network import HyperParams, TrainingDivergedError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DEFAULT_COLUMN_MAP = {
    "timestamp": "TIMESTAMP",
    "zone": "ZONEID",
    "target": "TARGETVAR",
    "u10": "U10",
    "v10": "V10",
    "u100": "U100",
    "v100": "V100",
}

HYPER_KEYS = ("iterations", "hidden_nodes", "learning_rate", "alpha",
              "lambda1", "lambda2")


@dataclass
class RunConfig:
    """Flag values merged from the command line, config file, and environment."""

    data: str | None = None
    output: str | None = None
    column_map: dict = field(default_factory=lambda: dict(DEFAULT_COLUMN_MAP))
    seed: int = 0
    hyper: HyperParams = field(default_factory=HyperParams)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; this tool reserves 2 for
    # data problems.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_timestamp(text: str) -> datetime:
    """Accept 'YYYYMMDD HH:MM' or any ISO-8601 timestamp."""
    text = text.strip()
    try:
        return datetime.strptime(text, "%Y%m%d %H:%M")
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        raise DataValidationError(f"unparseable timestamp {text!r}") from None


def ingest_csv(path: str, column_map: dict | None = None) -> dict[str, TimeSeriesDataset]:
    """Parse a CSV with header into per-zone datasets, validating invariants.

    The target column may be empty (missing power); wind components may not.
    Rows are sorted by timestamp within each zone; duplicates are fatal.
    """
    colmap = dict(DEFAULT_COLUMN_MAP)
    colmap.update(column_map or {})
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataValidationError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataValidationError(f"{path}: no records (empty file)")
        header = [h.strip() for h in header]
        index = {}
        for key, col in colmap.items():
            if col not in header:
                raise DataValidationError(
                    f"{path}: missing column {col!r} (have {header})")
            index[key] = header.index(col)

        per_zone: dict[str, list[RawRecord]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                ts = parse_timestamp(row[index["timestamp"]])
                zone = row[index["zone"]].strip()
                winds = {}
                for key in ("u10", "v10", "u100", "v100"):
                    text = row[index[key]].strip()
                    if not text:
                        raise DataValidationError(f"missing wind component {key}")
                    winds[key] = float(text)
                target_text = row[index["target"]].strip()
                power = float(target_text) if target_text else None
                if power is not None and not (0.0 <= power <= 1.0):
                    raise DataValidationError(
                        f"power {power} outside normalized range [0, 1]")
            except (DataValidationError, ValueError, IndexError) as exc:
                raise DataValidationError(f"{path} line {lineno}: {exc}") from None
            per_zone.setdefault(zone, []).append(
                RawRecord(timestamp=ts, zone=zone, power=power, **winds))

    if not per_zone:
        raise DataValidationError(f"{path}: no records")
    datasets = {}
    for zone, records in per_zone.items():
        records.sort(key=lambda r: r.timestamp)
        datasets[zone] = TimeSeriesDataset.from_records(records)
    return datasets


def print_gap_report(datasets: dict[str, TimeSeriesDataset], out=sys.stdout) -> None:
    for zone in sorted(datasets):
        data = datasets[zone]
        missing = int(np.sum(~np.isfinite(data.power)))
        print(f"zone {zone}: {len(data)} records, "
              f"{data.timestamps[0]} .. {data.timestamps[-1]}, "
              f"{missing} missing targets", file=out)
        gaps = data.hourly_gaps()
        for prev, nxt, hours in gaps:
            print(f"  gap: {prev} -> {nxt} ({hours} missing hours)", file=out)
        if not gaps:
            print("  no gaps (hourly spacing throughout)", file=out)


def _resolve(args, config: dict, key: str, default=None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _resolve_seed(args, config: dict) -> int:
    value = _resolve(args, config, "seed")
    if value is None:
        value = os.environ.get("QFAN_SEED")
    return int(value) if value is not None else 0


def _resolve_hyper(args, config: dict, seed: int) -> HyperParams:
    defaults = HyperParams()
    values = {key: _resolve(args, config, key, getattr(defaults, key))
              for key in HYPER_KEYS}
    return HyperParams(seed=seed, **values)


def _load_config(args) -> dict:
    path = getattr(args, "config", None)
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except OSError as exc:
        raise DataValidationError(f"cannot open config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"bad config {path}: {exc}") from exc
    if not isinstance(config, dict):
        raise DataValidationError(f"bad config {path}: expected a JSON object")
    return config


def _column_map(args, config: dict) -> dict:
    raw = _resolve(args, config, "column_map")
    if raw is None:
        return dict(DEFAULT_COLUMN_MAP)
    if isinstance(raw, str):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"bad --column-map JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataValidationError("column map must be a JSON object")
    merged = dict(DEFAULT_COLUMN_MAP)
    merged.update(raw)
    return merged


def _comma_list(text) -> tuple[str, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(str(t) for t in text)
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


# --- subcommands -----------------------------------------------------------

def cmd_ingest(args) -> int:
    config = _load_config(args)
    data_path = _resolve(args, config, "data")
    if not data_path:
        raise DataValidationError("ingest: --data is required")
    datasets = ingest_csv(data_path, _column_map(args, config))
    print(f"parsed {sum(len(d) for d in datasets.values())} records "
          f"from {len(datasets)} zone(s)")
    print_gap_report(datasets)
    return EXIT_OK


def _training_slice(datasets, zone: str, months: tuple[str, ...]):
    if zone not in datasets:
        raise DataValidationError(f"zone {zone!r} not in data "
                                  f"(have {sorted(datasets)})")
    data = datasets[zone]
    mask = np.zeros(len(data), dtype=bool)
    for month in months:
        month_mask = data.month_mask(month)
        if not np.any(month_mask):
            raise DataValidationError(f"zone {zone}: no rows in month {month}")
        mask |= month_mask
    observed = mask & np.isfinite(data.power)
    if int(observed.sum()) < 2:
        raise DataValidationError("fewer than 2 observed training targets")
    return data, observed


def cmd_train(args) -> int:
    config = _load_config(args)
    data_path = _resolve(args, config, "data")
    out_path = _resolve(args, config, "output")
    months = _comma_list(_resolve(args, config, "months") or ())
    zone = _resolve(args, config, "zone")
    kind = _resolve(args, config, "model", "spnn-w")
    if not (data_path and out_path and months and zone):
        raise DataValidationError("train: --data, --zone, --months and --out are required")
    if kind not in ("spnn-w", "spnn-wo", "mqr"):
        raise DataValidationError(f"train: model must be spnn-w, spnn-wo or mqr, got {kind}")
    seed = _resolve_seed(args, config)
    hyper = _resolve_hyper(args, config, seed)
    levels = bt.default_levels()

    datasets = ingest_csv(data_path, _column_map(args, config))
    data, observed = _training_slice(datasets, str(zone), months)
    features = derive_features(data)
    standardizer = fit_standardizer(features.select(observed))
    x_train = standardizer.transform(features.values[observed])
    y_train = data.power[observed]

    if kind == "mqr":
        model = baselines.train_mqr(x_train, y_train, levels, hyper)
    else:
        if kind == "spnn-w":
            model = network.init_noncrossing(x_train.shape[1], x_train, hyper, levels)
        else:
            model = network.init_random(x_train.shape[1], hyper, levels)
        model, _ = network.train(model, x_train, y_train)

    doc = model.to_dict()
    doc["standardizer"] = {"means": standardizer.means.tolist(),
                           "stds": standardizer.stds.tolist()}
    doc["feature_columns"] = list(features.column_names)
    doc["zone"] = str(zone)
    doc["train_months"] = list(months)
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    print(f"trained {kind} on zone {zone}, months {','.join(months)} "
          f"({int(observed.sum())} rows) -> {out_path}")
    return EXIT_OK


def cmd_forecast(args) -> int:
    config = _load_config(args)
    data_path = _resolve(args, config, "data")
    model_path = _resolve(args, config, "model")
    out_path = _resolve(args, config, "output")
    month = _resolve(args, config, "month")
    zone = _resolve(args, config, "zone")
    if not (data_path and model_path and out_path and month and zone):
        raise DataValidationError(
            "forecast: --data, --model, --zone, --month and --out are required")

    model = network.load_model(model_path)
    with open(model_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    std = doc.get("standardizer")
    if std is None:
        raise DataValidationError(
            f"{model_path}: no standardizer block; cannot reproduce feature scaling")

    datasets = ingest_csv(data_path, _column_map(args, config))
    if str(zone) not in datasets:
        raise DataValidationError(f"zone {zone!r} not in data (have {sorted(datasets)})")
    data = datasets[str(zone)]
    mask = data.month_mask(str(month))
    if not np.any(mask):
        raise DataValidationError(f"zone {zone}: no rows in month {month}")

    features = derive_features(data)
    x = (features.values[mask] - np.asarray(std["means"])) / np.asarray(std["stds"])
    if x.shape[1] != model.n_x:
        raise DataValidationError(
            f"feature width {x.shape[1]} does not match model n_x={model.n_x}")
    fan = network.predict_fan(model, x)
    bt.write_fan_csv(fan, data.timestamps[mask], out_path)
    print(f"wrote {fan.values.shape[0]} forecast rows to {out_path}")
    return EXIT_OK


def cmd_backtest(args) -> int:
    config = _load_config(args)
    data_path = _resolve(args, config, "data")
    outdir = _resolve(args, config, "output_dir")
    zones = _comma_list(_resolve(args, config, "zones") or ())
    months = _comma_list(_resolve(args, config, "months") or ())
    models = _comma_list(_resolve(args, config, "models") or ())
    if not (data_path and outdir and zones and months and models):
        raise DataValidationError(
            "backtest: --data, --zones, --months, --models and --out-dir are required")
    seed = _resolve_seed(args, config)
    hyper = _resolve_hyper(args, config, seed)
    window = int(_resolve(args, config, "train_window", 2))
    jobs = _resolve(args, config, "jobs")
    jobs = int(jobs) if jobs is not None else (os.cpu_count() or 1)
    save_fans = bool(getattr(args, "save_fans", False) or config.get("save_fans", False))

    try:
        plan = bt.BacktestPlan(zones=zones, test_months=months, models=models,
                               train_window_months=window, hyper=hyper, seed=seed)
    except ValueError as exc:
        raise DataValidationError(str(exc)) from exc
    datasets = ingest_csv(data_path, _column_map(args, config))
    result = bt.run_plan(plan, datasets, jobs=jobs, keep_fans=save_fans)
    bt.write_results(result, outdir, write_fans=save_fans)

    print(bt.summary_table(result))
    for cell in result.cells:
        if cell.status != "ok":
            print(f"{cell.status}: zone {cell.zone} month {cell.month} "
                  f"model {cell.model}: {cell.reason}", file=sys.stderr)
    print(f"wrote results to {outdir} "
          f"({len(result.ok_cells)} ok, {len(result.skipped_cells)} skipped, "
          f"{len(result.failed_cells)} failed)")
    if result.failed_cells:
        return EXIT_NUMERIC
    if result.skipped_cells:
        return EXIT_DATA
    return EXIT_OK


def cmd_synthetic(args) -> int:
    config = _load_config(args)
    out_path = _resolve(args, config, "output")
    if not out_path:
        raise DataValidationError("synthetic: --out is required")
    months = int(_resolve(args, config, "months_count", 4))
    zone = str(_resolve(args, config, "zone", "1"))
    start = str(_resolve(args, config, "start", "2013-01"))
    seed = _resolve_seed(args, config)

    first = np.datetime64(start, "M")
    first_s = first.astype("datetime64[s]")
    end_s = (first + np.timedelta64(months, "M")).astype("datetime64[s]")
    hours = int((end_s - first_s) / np.timedelta64(3600, "s"))
    dataset = synthetic.synthetic_dataset(
        hours, seed, zone=zone, start=str(first_s), clip=True)
    write_gefcom_csv(dataset, out_path)
    print(f"wrote {hours} synthetic rows ({months} months from {first}) to {out_path}")
    return EXIT_OK


def write_gefcom_csv(data: TimeSeriesDataset, path: str) -> None:
    """Emit the standard competition layout with 'YYYYMMDD HH:MM' timestamps."""
    lines = ["ZONEID,TIMESTAMP,TARGETVAR,U10,V10,U100,V100"]
    stamps = data.timestamps.tolist()     # datetime objects
    for i, ts in enumerate(stamps):
        power = data.power[i]
        target = repr(float(power)) if np.isfinite(power) else ""
        lines.append(",".join([
            data.zone, ts.strftime("%Y%m%d %H:%M"), target,
            repr(float(data.u10[i])), repr(float(data.v10[i])),
            repr(float(data.u100[i])), repr(float(data.v100[i])),
        ]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# --- parser ----------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags take precedence")
    p.add_argument("--seed", type=int, help="RNG seed (default: $QFAN_SEED or 0)")


def _add_hyper(p):
    p.add_argument("--iterations", type=int)
    p.add_argument("--hidden-nodes", dest="hidden_nodes", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--alpha", type=float, help="loss smoothing width")
    p.add_argument("--lambda1", type=float, help="L2 penalty, first layer")
    p.add_argument("--lambda2", type=float, help="L2 penalty, output layer")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qfan",
                     description="Multiple-quantile forecasting toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate a CSV and print a gap report")
    p.add_argument("--data")
    p.add_argument("--column-map", dest="column_map")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="fit one model on a month range")
    p.add_argument("--data")
    p.add_argument("--zone")
    p.add_argument("--months", help="comma-separated training months YYYY-MM")
    p.add_argument("--model", choices=["spnn-w", "spnn-wo", "mqr"])
    p.add_argument("--out", dest="output")
    p.add_argument("--column-map", dest="column_map")
    _add_hyper(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forecast", help="emit a quantile fan CSV from a saved model")
    p.add_argument("--model", help="model JSON file")
    p.add_argument("--data")
    p.add_argument("--zone")
    p.add_argument("--month", help="forecast month YYYY-MM")
    p.add_argument("--out", dest="output")
    p.add_argument("--column-map", dest="column_map")
    _add_common(p)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("backtest", help="run a sliding-window evaluation plan")
    p.add_argument("--data")
    p.add_argument("--zones", help="comma-separated zone ids")
    p.add_argument("--months", help="comma-separated test months YYYY-MM")
    p.add_argument("--models", help=f"comma-separated kinds from {bt.MODEL_KINDS}")
    p.add_argument("--out-dir", dest="output_dir")
    p.add_argument("--train-window", dest="train_window", type=int,
                   help="training months per cell (default 2)")
    p.add_argument("--jobs", type=int, help="parallel cells (default: cpu count)")
    p.add_argument("--save-fans", dest="save_fans", action="store_true",
                   help="write per-cell fan CSVs")
    p.add_argument("--column-map", dest="column_map")
    _add_hyper(p)
    _add_common(p)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("synthetic", help="write the seeded synthetic fixture CSV")
    p.add_argument("--out", dest="output")
    p.add_argument("--months", dest="months_count", type=int,
                   help="calendar months to generate (default 4)")
    p.add_argument("--zone")
    p.add_argument("--start", help="first month YYYY-MM (default 2013-01)")
    _add_common(p)
    p.set_defaults(func=cmd_synthetic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataValidationError as exc:
        print(f"qfan: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDivergedError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"qfan: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"qfan: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"qfan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
