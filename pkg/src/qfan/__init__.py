"""qfan: nonparametric multiple-quantile forecasting.

A single-hidden-layer quantile network trained on a smooth pinball objective,
a least-squares initialization that keeps the quantile fan ordered,
distribution and linear-regression baselines, interval evaluation metrics,
and a sliding-window backtest harness for hourly power-style series.
"""

from .backtest import BacktestPlan, BacktestResult, default_levels, run_cell, run_plan
from .baselines import (LinearQuantileModel, NormalParams, climatology_fan,
                        norm_ppf, persistence_fan, train_mqr, uniform_fan)
from .features import (FeatureMatrix, RawRecord, Standardizer, TimeSeriesDataset,
                       apply_standardizer, derive_features, fit_standardizer)
from .loss import QuantileLevels, objective, pinball, smooth_pinball, smooth_pinball_grad
from .metrics import (EvaluationReport, IntervalSet, QuantileFan, ace,
                      crossover_count, evaluate, interval_score,
                      intervals_from_fan, picp, quantile_score)
from .network import (HyperParams, SpnnModel, TrainingDivergedError, forward,
                      init_noncrossing, init_random, load_model, predict_fan,
                      save_model, train)

__version__ = "0.1.0"

__all__ = [
    "BacktestPlan", "BacktestResult", "default_levels", "run_cell", "run_plan",
    "LinearQuantileModel", "NormalParams", "climatology_fan", "norm_ppf",
    "persistence_fan", "train_mqr", "uniform_fan",
    "FeatureMatrix", "RawRecord", "Standardizer", "TimeSeriesDataset",
    "apply_standardizer", "derive_features", "fit_standardizer",
    "QuantileLevels", "objective", "pinball", "smooth_pinball", "smooth_pinball_grad",
    "EvaluationReport", "IntervalSet", "QuantileFan", "ace", "crossover_count",
    "evaluate", "interval_score", "intervals_from_fan", "picp", "quantile_score",
    "HyperParams", "SpnnModel", "TrainingDivergedError", "forward",
    "init_noncrossing", "init_random", "load_model", "predict_fan", "save_model",
    "train",
]
