"""Feature derivation from NWP wind components plus train-window standardization.

Twelve features per hourly record, in fixed column order: wind speed at 10m
and 100m, wind direction at both heights (degrees), kinetic energy proxy at
both heights (ws**3 / 2, unit density), hour of day, day of year, and the four
raw wind components. Standardization statistics are always fit on training
rows only and carried along with the transformed matrix, so applying them to
later rows cannot leak test information.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

import numpy as np


class DataValidationError(ValueError):
    """Raised when input records violate dataset invariants."""


FEATURE_COLUMNS = (
    "ws10", "ws100", "dir10", "dir100", "energy10", "energy100",
    "hour_of_day", "day_of_year", "u10", "v10", "u100", "v100",
)

HOUR = np.timedelta64(1, "h")


@dataclass(frozen=True)
class RawRecord:
    """One hourly observation: NWP wind components and (optional) power."""

    timestamp: datetime
    zone: str
    u10: float
    v10: float
    u100: float
    v100: float
    power: float | None = None     # normalized to [0, 1]; None when unobserved


@dataclass(frozen=True)
class TimeSeriesDataset:
    """Column-oriented hourly series for one zone; NaN power marks missing."""

    zone: str
    timestamps: np.ndarray         # datetime64[s], strictly increasing
    u10: np.ndarray
    v10: np.ndarray
    u100: np.ndarray
    v100: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        ts = np.ascontiguousarray(self.timestamps, dtype="datetime64[s]")
        n = ts.shape[0]
        if n == 0:
            raise DataValidationError(f"zone {self.zone}: no records")
        deltas = np.diff(ts)
        if np.any(deltas <= np.timedelta64(0, "s")):
            bad = ts[1:][deltas <= np.timedelta64(0, "s")][0]
            raise DataValidationError(
                f"zone {self.zone}: duplicate or out-of-order timestamp {bad}")
        object.__setattr__(self, "timestamps", ts)
        for name in ("u10", "v10", "u100", "v100", "power"):
            col = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if col.shape != (n,):
                raise DataValidationError(
                    f"zone {self.zone}: column {name} has length {col.shape[0]}, expected {n}")
            object.__setattr__(self, name, col)
        for name in ("u10", "v10", "u100", "v100"):
            col = getattr(self, name)
            if not np.all(np.isfinite(col)):
                bad = ts[~np.isfinite(col)][0]
                raise DataValidationError(
                    f"zone {self.zone}: missing wind component {name} at {bad}")

    def __len__(self) -> int:
        return self.timestamps.shape[0]

    @classmethod
    def from_records(cls, records) -> "TimeSeriesDataset":
        records = list(records)
        if not records:
            raise DataValidationError("no records")
        zones = {r.zone for r in records}
        if len(zones) != 1:
            raise DataValidationError(f"records span multiple zones: {sorted(zones)}")
        ts = np.array([np.datetime64(r.timestamp, "s") for r in records])
        to_col = lambda get: np.array([get(r) for r in records], dtype=np.float64)
        return cls(
            zone=records[0].zone,
            timestamps=ts,
            u10=to_col(lambda r: r.u10),
            v10=to_col(lambda r: r.v10),
            u100=to_col(lambda r: r.u100),
            v100=to_col(lambda r: r.v100),
            power=to_col(lambda r: np.nan if r.power is None else r.power),
        )

    def hourly_gaps(self) -> list[tuple[np.datetime64, np.datetime64, int]]:
        """(previous ts, next ts, hours skipped) for every non-hourly step."""
        deltas = np.diff(self.timestamps)
        gaps = []
        for i in np.nonzero(deltas != HOUR)[0]:
            missing = int(deltas[i] / HOUR) - 1
            gaps.append((self.timestamps[i], self.timestamps[i + 1], missing))
        return gaps

    def month_mask(self, month: str) -> np.ndarray:
        """Boolean mask for rows falling in calendar month 'YYYY-MM'."""
        return self.timestamps.astype("datetime64[M]") == np.datetime64(month, "M")


@dataclass(frozen=True)
class Standardizer:
    """Per-column location/scale; zero-variance columns get scale 1, flagged."""

    means: np.ndarray
    stds: np.ndarray
    degenerate: np.ndarray         # bool mask of columns whose std was replaced

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.means) / self.stds

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return values * self.stds + self.means


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray                 # (N, n_x)
    column_names: tuple[str, ...]
    standardizer: Standardizer | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != len(self.column_names):
            raise ValueError(
                f"FeatureMatrix: values shape {v.shape} does not match "
                f"{len(self.column_names)} column names")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "column_names", tuple(self.column_names))

    def select(self, mask) -> "FeatureMatrix":
        """Row subset (boolean mask or index array), same columns and stats."""
        return FeatureMatrix(values=self.values[mask],
                             column_names=self.column_names,
                             standardizer=self.standardizer)


def derive_features(records) -> FeatureMatrix:
    """Compute the twelve standard features from raw hourly records.

    Accepts a TimeSeriesDataset or a sequence of RawRecord. Direction is
    (180/pi)*atan2(u, v) in degrees, mapped into (-180, 180]; calm wind
    (u = v = 0) gets direction 0 by convention. Energy is ws**3 / 2.
    """
    data = records if isinstance(records, TimeSeriesDataset) else \
        TimeSeriesDataset.from_records(records)
    ts = data.timestamps
    ws10 = np.hypot(data.u10, data.v10)
    ws100 = np.hypot(data.u100, data.v100)
    dir10 = np.degrees(np.arctan2(data.u10, data.v10))
    dir100 = np.degrees(np.arctan2(data.u100, data.v100))
    dir10 = np.where(dir10 <= -180.0, dir10 + 360.0, dir10)
    dir100 = np.where(dir100 <= -180.0, dir100 + 360.0, dir100)
    energy10 = 0.5 * ws10 ** 3
    energy100 = 0.5 * ws100 ** 3
    hour = (ts - ts.astype("datetime64[D]")).astype("timedelta64[h]").astype(np.float64)
    day = (ts.astype("datetime64[D]") - ts.astype("datetime64[Y]")).astype(
        "timedelta64[D]").astype(np.float64) + 1.0
    values = np.column_stack([
        ws10, ws100, dir10, dir100, energy10, energy100,
        hour, day, data.u10, data.v10, data.u100, data.v100,
    ])
    return FeatureMatrix(values=values, column_names=FEATURE_COLUMNS)


def fit_standardizer(features: FeatureMatrix) -> Standardizer:
    """Column means and sample standard deviations (n-1 divisor) of these rows."""
    v = features.values
    if v.shape[0] < 2:
        raise ValueError(f"fit_standardizer: need at least 2 rows, got {v.shape[0]}")
    means = v.mean(axis=0)
    stds = v.std(axis=0, ddof=1)
    degenerate = stds == 0.0
    stds = np.where(degenerate, 1.0, stds)
    return Standardizer(means=means, stds=stds, degenerate=degenerate)


def apply_standardizer(features: FeatureMatrix, standardizer: Standardizer) -> FeatureMatrix:
    """Columnwise (x - mean)/std; the statistics ride along in the result."""
    if features.values.shape[1] != standardizer.means.shape[0]:
        raise ValueError(
            f"apply_standardizer: {features.values.shape[1]} columns vs "
            f"{standardizer.means.shape[0]} statistics")
    return FeatureMatrix(
        values=standardizer.transform(features.values),
        column_names=features.column_names,
        standardizer=standardizer,
    )
