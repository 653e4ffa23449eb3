"""Sliding-window backtest: train on the preceding months, score one month out.

Each cell of a plan is (zone, test month, model kind). The model for a cell
sees only rows strictly before its test month: features are standardized with
statistics fit on the training rows, distribution baselines are fit once at
the train/test boundary and held fixed across the month, and every hour of
the test month gets a quantile forecast from that month's NWP features.
Cells are independent and may run in parallel; per-cell seeds are derived
deterministically from the plan seed and the cell coordinates so results do
not depend on scheduling.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines, network
from .features import (DataValidationError, TimeSeriesDataset, apply_standardizer,
                       derive_features, fit_standardizer)
from .loss import QuantileLevels
from .metrics import (EvaluationReport, QuantileFan, evaluate, report_csv_header,
                      report_csv_row)
from .network import HyperParams, TrainingDivergedError

MODEL_KINDS = ("uniform", "persistence", "climatology", "mqr", "spnn-wo", "spnn-w")

PERSISTENCE_HOURS = 24


def default_levels() -> QuantileLevels:
    """The 18 symmetric levels 0.05, 0.10, ..., 0.45, 0.55, ..., 0.95.

    Their symmetric pairs (beta/2, 1 - beta/2) yield exactly the nine nested
    intervals with nominal coverage 10% through 90%; the median is excluded.
    """
    taus = tuple(round(0.05 * k, 2) for k in range(1, 20) if k != 10)
    return QuantileLevels(taus)


@dataclass(frozen=True)
class BacktestPlan:
    zones: tuple[str, ...]
    test_months: tuple[str, ...]           # "YYYY-MM"
    models: tuple[str, ...]
    train_window_months: int = 2
    levels: QuantileLevels = field(default_factory=default_levels)
    hyper: HyperParams = field(default_factory=HyperParams)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "zones", tuple(str(z) for z in self.zones))
        object.__setattr__(self, "test_months", tuple(self.test_months))
        object.__setattr__(self, "models", tuple(self.models))
        for kind in self.models:
            if kind not in MODEL_KINDS:
                raise ValueError(f"unknown model kind {kind!r}; known: {MODEL_KINDS}")
        for month in self.test_months:
            _parse_month(month)
        if self.train_window_months < 1:
            raise ValueError("train_window_months must be >= 1")
        if not self.levels.is_symmetric(atol=1e-9):
            raise ValueError("plan levels must be symmetric about 0.5")

    def cells(self):
        for zone in self.zones:
            for month in self.test_months:
                for kind in self.models:
                    yield zone, month, kind

    def to_dict(self) -> dict:
        return {
            "zones": list(self.zones),
            "test_months": list(self.test_months),
            "models": list(self.models),
            "train_window_months": self.train_window_months,
            "levels": list(self.levels.taus),
            "hyper": self.hyper.to_dict(),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class CellResult:
    zone: str
    month: str
    model: str
    status: str                            # "ok" | "skipped" | "failed"
    reason: str | None = None
    report: EvaluationReport | None = None
    fan: QuantileFan | None = None         # full test month, when requested
    fan_timestamps: np.ndarray | None = None


@dataclass(frozen=True)
class BacktestResult:
    plan: BacktestPlan
    cells: tuple[CellResult, ...]

    @property
    def ok_cells(self):
        return [c for c in self.cells if c.status == "ok"]

    @property
    def failed_cells(self):
        return [c for c in self.cells if c.status == "failed"]

    @property
    def skipped_cells(self):
        return [c for c in self.cells if c.status == "skipped"]

    def zone_means(self) -> dict:
        """Per (zone, model) means of qs/ace/interval_score/crossovers over months."""
        out = {}
        for zone in self.plan.zones:
            for kind in self.plan.models:
                picked = [c.report for c in self.ok_cells
                          if c.zone == zone and c.model == kind]
                if not picked:
                    continue
                out[(zone, kind)] = {
                    "qs": float(np.mean([r.qs for r in picked])),
                    "ace": float(np.mean([r.ace for r in picked])),
                    "interval_score": float(np.mean([r.interval_score for r in picked])),
                    "crossovers": float(np.mean([r.crossovers for r in picked])),
                    "months": len(picked),
                }
        return out


def _parse_month(month: str) -> np.datetime64:
    try:
        m = np.datetime64(month, "M")
    except ValueError as exc:
        raise DataValidationError(f"bad month {month!r}, expected YYYY-MM") from exc
    if str(m) != month:
        raise DataValidationError(f"bad month {month!r}, expected YYYY-MM")
    return m


def cell_seed(plan_seed: int, zone: str, month: str) -> int:
    """Deterministic 63-bit seed per (plan seed, zone, month).

    Model kind is deliberately excluded so the spnn-w / spnn-wo pair share
    their random input layer within a cell.
    """
    digest = hashlib.sha256(f"{plan_seed}:{zone}:{month}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def run_cell(data: TimeSeriesDataset, month: str, model_kind: str, *,
             levels: QuantileLevels | None = None,
             hyper: HyperParams | None = None,
             train_window_months: int = 2,
             seed: int = 0,
             keep_fan: bool = False) -> CellResult:
    """Fit one model on the window before ``month`` and score that month."""
    levels = levels if levels is not None else default_levels()
    hyper = hyper if hyper is not None else HyperParams()
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}; known: {MODEL_KINDS}")
    zone = data.zone

    def finish(status, reason=None, report=None, fan=None, fan_ts=None):
        return CellResult(zone=zone, month=month, model=model_kind, status=status,
                          reason=reason, report=report,
                          fan=fan if keep_fan else None,
                          fan_timestamps=fan_ts if keep_fan else None)

    test_month = _parse_month(month)
    months_axis = data.timestamps.astype("datetime64[M]")
    test_mask = months_axis == test_month
    if not np.any(test_mask):
        return finish("skipped", f"no rows in test month {month}")

    train_mask = np.zeros(len(data), dtype=bool)
    for k in range(1, train_window_months + 1):
        month_mask = months_axis == (test_month - np.timedelta64(k, "M"))
        if not np.any(month_mask):
            return finish(
                "skipped",
                f"training month {test_month - np.timedelta64(k, 'M')} has no rows")
        train_mask |= month_mask

    observed_train = train_mask & np.isfinite(data.power)
    if int(observed_train.sum()) < 2:
        return finish("skipped", "fewer than 2 observed training targets")

    all_features = derive_features(data)
    y_train = data.power[observed_train]
    n_test = int(test_mask.sum())
    rng_seed = cell_seed(seed, zone, month)

    try:
        if model_kind == "uniform":
            fan = baselines.uniform_fan(levels, n_test)
        elif model_kind == "persistence":
            recent = y_train[-PERSISTENCE_HOURS:]
            fan = baselines.persistence_fan(recent, levels, n_test)
        elif model_kind == "climatology":
            fan = baselines.climatology_fan(y_train, levels, n_test)
        else:
            standardizer = fit_standardizer(all_features.select(observed_train))
            x_train = standardizer.transform(all_features.values[observed_train])
            x_test = standardizer.transform(all_features.values[test_mask])
            hyper_cell = replace(hyper, seed=rng_seed)
            if model_kind == "mqr":
                model = baselines.train_mqr(x_train, y_train, levels, hyper_cell)
            else:
                n_x = x_train.shape[1]
                if model_kind == "spnn-w":
                    model = network.init_noncrossing(n_x, x_train, hyper_cell, levels)
                else:
                    model = network.init_random(n_x, hyper_cell, levels)
                model, _ = network.train(model, x_train, y_train)
            fan = network.predict_fan(model, x_test)
    except (TrainingDivergedError, np.linalg.LinAlgError) as exc:
        return finish("failed", str(exc))

    y_test = data.power[test_mask]
    observed = np.isfinite(y_test)
    if not np.any(observed):
        return finish("skipped", "no observed targets in test month")
    fan_scored = QuantileFan(values=fan.values[observed], levels=levels)
    report = evaluate(y_test[observed], fan_scored)
    return finish("ok", report=report, fan=fan,
                  fan_ts=data.timestamps[test_mask])


def _run_cell_task(args):
    data, month, kind, levels, hyper, window, seed, keep_fan = args
    return run_cell(data, month, kind, levels=levels, hyper=hyper,
                    train_window_months=window, seed=seed, keep_fan=keep_fan)


def run_plan(plan: BacktestPlan, data: dict, jobs: int = 1,
             keep_fans: bool = False) -> BacktestResult:
    """Execute every plan cell; failures are recorded, never raised.

    ``data`` maps zone identifiers to their datasets. Cells are independent,
    so any execution order (or parallel degree) produces the same result.
    """
    for zone in plan.zones:
        if zone not in data:
            raise DataValidationError(f"plan zone {zone!r} not present in data")
    tasks = [(data[zone], month, kind, plan.levels, plan.hyper,
              plan.train_window_months, plan.seed, keep_fans)
             for zone, month, kind in plan.cells()]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell_task, tasks))
    else:
        cells = [_run_cell_task(t) for t in tasks]
    return BacktestResult(plan=plan, cells=tuple(cells))


def write_results(result: BacktestResult, outdir, write_fans: bool = False) -> None:
    """Persist plan.json, reports.csv, cells.csv, and optional per-cell fans."""
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "plan.json"), "w", encoding="utf-8") as fh:
        json.dump(result.plan.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    betas = 2.0 * result.plan.levels.as_array()[:len(result.plan.levels) // 2][::-1]
    lines = [report_csv_header(betas)]
    for cell in result.cells:
        if cell.status == "ok":
            lines.append(report_csv_row(cell.report, cell.model, cell.zone, cell.month))
    with open(os.path.join(outdir, "reports.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

    status_lines = ["zone,month,model,status,reason"]
    for cell in result.cells:
        reason = (cell.reason or "").replace(",", ";")
        status_lines.append(f"{cell.zone},{cell.month},{cell.model},{cell.status},{reason}")
    with open(os.path.join(outdir, "cells.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(status_lines) + "\n")

    if write_fans:
        for cell in result.cells:
            if cell.fan is None:
                continue
            path = os.path.join(outdir, f"fan_{cell.zone}_{cell.month}_{cell.model}.csv")
            write_fan_csv(cell.fan, cell.fan_timestamps, path)


def write_fan_csv(fan: QuantileFan, timestamps, path) -> None:
    """timestamp plus one q<tau> column per level, full float precision."""
    header = "timestamp," + ",".join(f"q{t:.3f}" for t in fan.levels)
    lines = [header]
    ts = np.ascontiguousarray(timestamps, dtype="datetime64[s]")
    for i in range(fan.values.shape[0]):
        row = ",".join(repr(float(v)) for v in fan.values[i])
        lines.append(f"{ts[i]},{row}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def summary_table(result: BacktestResult) -> str:
    """Text table per score block (QS, IS, ACE): zones down, models across.

    The IS block is shown negated, matching the sign convention of published
    comparison tables; reports.csv keeps the positively oriented score.
    """
    means = result.zone_means()
    models = list(result.plan.models)
    blocks = [("QS", "qs", 1.0, "{:.4f}"), ("IS", "interval_score", -1.0, "{:.4f}"),
              ("ACE", "ace", 1.0, "{:.2f}"), ("CROSSOVERS", "crossovers", 1.0, "{:.1f}")]
    width = max(12, max((len(m) for m in models), default=12) + 2)
    lines = []
    for title, key, sign, fmt in blocks:
        lines.append(title)
        lines.append("zone".ljust(8) + "".join(m.rjust(width) for m in models))
        for zone in result.plan.zones:
            row = [zone.ljust(8)]
            for kind in models:
                cell = means.get((zone, kind))
                row.append(("-" if cell is None else fmt.format(sign * cell[key]))
                           .rjust(width))
            lines.append("".join(row))
        lines.append("")
    return "\n".join(lines)
