"""Seeded heteroskedastic fixture with analytically known conditional quantiles.

The target follows

    y_t = 0.5 + 0.3 * sin(2*pi*t/24) * x_t + (0.05 + 0.1*|x_t|) * eps_t

with x_t and eps_t independent standard normal draws, so the conditional
tau-quantile is the deterministic part plus the scale times the normal
inverse CDF at tau. The driver x_t is exposed to models through the v100
wind-component slot; the other components are independent noise. This makes
the data nonlinear in the features (a time-of-day interaction) and
heteroskedastic, which linear quantile regression cannot fully capture.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import norm_ppf
from .features import TimeSeriesDataset
from .loss import QuantileLevels
from .metrics import QuantileFan


@dataclass(frozen=True)
class SyntheticSeries:
    hour_index: np.ndarray         # t = 0, 1, 2, ...
    x: np.ndarray                  # driver exposed as v100
    power: np.ndarray              # y_t, optionally clipped to [0, 1]
    mean: np.ndarray               # 0.5 + 0.3*sin(2*pi*t/24)*x
    scale: np.ndarray              # 0.05 + 0.1*|x|
    clipped: bool

    def true_fan(self, levels: QuantileLevels) -> QuantileFan:
        """Exact conditional quantiles of the generating process."""
        values = self.mean[:, None] + self.scale[:, None] * norm_ppf(levels.as_array())
        if self.clipped:
            values = np.clip(values, 0.0, 1.0)
        return QuantileFan(values=values, levels=levels)


def heteroskedastic_series(n: int, seed: int, clip: bool = False) -> SyntheticSeries:
    """Draw n hourly steps of the fixture process from one seeded generator."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    eps = rng.standard_normal(n)
    t = np.arange(n, dtype=np.float64)
    mean = 0.5 + 0.3 * np.sin(2.0 * np.pi * t / 24.0) * x
    scale = 0.05 + 0.1 * np.abs(x)
    power = mean + scale * eps
    if clip:
        power = np.clip(power, 0.0, 1.0)
    return SyntheticSeries(hour_index=t, x=x, power=power, mean=mean,
                           scale=scale, clipped=clip)


def synthetic_dataset(n: int, seed: int, zone: str = "1",
                      start: str = "2013-01-01T00:00:00",
                      clip: bool = True) -> TimeSeriesDataset:
    """Wrap the fixture in an hourly single-zone dataset.

    The driver x_t rides in v100 with a low-noise u100, so the derived speed
    ws100 tracks |x_t| (the heteroskedastic scale); u10/v10 trace the diurnal
    phase, so direction at 10m encodes time of day. Power is clipped to
    [0, 1] by default so the dataset passes the normalized-power invariants
    of the ingestion path. The start time is aligned to midnight so
    hour-of-day equals t mod 24.
    """
    series = heteroskedastic_series(n, seed, clip=clip)
    rng = np.random.default_rng(seed + 1)
    t0 = np.datetime64(start, "s")
    timestamps = t0 + np.arange(n) * np.timedelta64(3600, "s")
    phase = 2.0 * np.pi * series.hour_index / 24.0
    return TimeSeriesDataset(
        zone=zone,
        timestamps=timestamps,
        u10=np.sin(phase) + 0.1 * rng.standard_normal(n),
        v10=np.cos(phase) + 0.1 * rng.standard_normal(n),
        u100=0.25 * rng.standard_normal(n),
        v100=series.x,
        power=series.power,
    )
