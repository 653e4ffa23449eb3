"""Reference forecasters: uniform, persistence, climatology, and linear MQR.

The three distribution baselines are non-crossing by construction (each is a
monotone quantile function evaluated at increasing levels). MQR is the
network with its hidden layer removed: a linear map trained by gradient
descent on the same smooth pinball objective.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .linalg import as_matrix
from .loss import QuantileLevels
from .metrics import QuantileFan
from .network import SCHEMA_VERSION, HyperParams, TrainingDivergedError, _feature_array


@dataclass(frozen=True)
class NormalParams:
    """Location/scale of a fitted normal; sigma = 0 collapses to a point mass."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and np.isfinite(self.sigma)):
            raise ValueError("NormalParams: mu and sigma must be finite")
        if self.sigma < 0:
            raise ValueError(f"NormalParams: sigma must be >= 0, got {self.sigma}")


# Rational minimax approximation to the standard normal inverse CDF
# (Wichura's PPND16 coefficients); absolute error well below 1e-9.
_PPF_A = (3.3871328727963666080e0, 1.3314166789178437745e2,
          1.9715909503065514427e3, 1.3731693765509461125e4,
          4.5921953931549871457e4, 6.7265770927008700853e4,
          3.3430575583588128105e4, 2.5090809287301226727e3)
_PPF_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
          5.3941960214247511077e3, 2.1213794301586595867e4,
          3.9307895800092710610e4, 2.8729085735721942674e4,
          5.2264952788528545610e3)
_PPF_C = (1.42343711074968357734e0, 4.63033784615654529590e0,
          5.76949722146069140550e0, 3.64784832476320460504e0,
          1.27045825245236838258e0, 2.41780725177450611770e-1,
          2.27238449892691845833e-2, 7.74545014278341407640e-4)
_PPF_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
          6.89767334985100004550e-1, 1.48103976427480074590e-1,
          1.51986665636164571966e-2, 5.47593808499534494600e-4,
          1.05075007164441684324e-9)
_PPF_E = (6.65790464350110377720e0, 5.46378491116411436990e0,
          1.78482653991729133580e0, 2.96560571828504891230e-1,
          2.65321895265761230930e-2, 1.24266094738807843860e-3,
          2.71155556874348757815e-5, 2.01033439929228813265e-7)
_PPF_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
          1.48753612908506148525e-2, 7.86869131145613259100e-4,
          1.84631831751005468180e-5, 1.42151175831644588870e-7,
          2.04426310338993978564e-15)


def _poly(coefs, r):
    out = np.full_like(r, coefs[-1])
    for c in coefs[-2::-1]:
        out = out * r + c
    return out


def norm_ppf(p):
    """Standard normal inverse CDF by rational approximation.

    Valid on the open interval (0, 1); raises outside it.
    """
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any(p_arr <= 0.0) or np.any(p_arr >= 1.0):
        raise ValueError(f"norm_ppf: probability must lie in (0, 1), got {p}")
    q = p_arr - 0.5
    out = np.empty_like(p_arr)

    central = np.abs(q) <= 0.425
    if np.any(central):
        r = 0.180625 - q[central] ** 2
        out[central] = q[central] * _poly(_PPF_A, r) / _poly(_PPF_B, r)

    tail = ~central
    if np.any(tail):
        r = np.where(q[tail] < 0.0, p_arr[tail], 1.0 - p_arr[tail])
        r = np.sqrt(-np.log(r))
        near = r <= 5.0
        val = np.empty_like(r)
        val[near] = _poly(_PPF_C, r[near] - 1.6) / _poly(_PPF_D, r[near] - 1.6)
        val[~near] = _poly(_PPF_E, r[~near] - 5.0) / _poly(_PPF_F, r[~near] - 5.0)
        out[tail] = np.where(q[tail] < 0.0, -val, val)
    return out if out.ndim else float(out)


def fit_normal(observations) -> NormalParams:
    """Sample mean and standard deviation (n-1 divisor) of recent observations."""
    obs = np.asarray(observations, dtype=np.float64)
    obs = obs[np.isfinite(obs)]
    if obs.shape[0] < 2:
        raise ValueError(
            f"fit_normal: need at least 2 finite observations, got {obs.shape[0]}")
    return NormalParams(mu=float(obs.mean()), sigma=float(obs.std(ddof=1)))


def uniform_fan(levels: QuantileLevels, n: int) -> QuantileFan:
    """Every row is the level vector itself: the quantiles of Uniform[0, 1]."""
    values = np.tile(levels.as_array(), (n, 1))
    return QuantileFan(values=values, levels=levels)


def persistence_fan(recent, levels: QuantileLevels, horizon: int,
                    clip_unit: bool = False) -> QuantileFan:
    """Normal quantiles fitted to the most recent observations, held constant.

    The forecast row mu + sigma * ppf(tau) repeats across the horizon.
    Outputs are not clipped to [0, 1] unless ``clip_unit`` is set.
    """
    params = fit_normal(recent)
    row = params.mu + params.sigma * norm_ppf(levels.as_array())
    if clip_unit:
        row = np.clip(row, 0.0, 1.0)
    return QuantileFan(values=np.tile(row, (horizon, 1)), levels=levels)


def climatology_fan(history, levels: QuantileLevels, horizon: int,
                    clip_unit: bool = False) -> QuantileFan:
    """Empirical quantiles of all historical power, held constant.

    Linear interpolation between order statistics at position tau*(n-1).
    """
    hist = np.asarray(history, dtype=np.float64)
    hist = hist[np.isfinite(hist)]
    if hist.shape[0] == 0:
        raise ValueError("climatology_fan: history is empty")
    row = np.quantile(hist, levels.as_array(), method="linear")
    if clip_unit:
        row = np.clip(row, 0.0, 1.0)
    return QuantileFan(values=np.tile(row, (horizon, 1)), levels=levels)


@dataclass(frozen=True)
class LinearQuantileModel:
    """Multi-output linear quantile regressor: qhat = weights @ x + bias."""

    weights: np.ndarray            # (M, n_x)
    bias: np.ndarray               # (M,)
    levels: QuantileLevels
    hyper: HyperParams

    def __post_init__(self):
        w = as_matrix(self.weights)
        b = np.ascontiguousarray(self.bias, dtype=np.float64)
        if w.shape[0] != len(self.levels) or b.shape != (w.shape[0],):
            raise ValueError(
                f"LinearQuantileModel: weights {w.shape}, bias {b.shape}, "
                f"{len(self.levels)} levels")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def n_x(self) -> int:
        return self.weights.shape[1]

    def batch_outputs(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights.T + self.bias

    def to_dict(self) -> dict:
        # Same document as the network with n_h = 0: the single weight matrix
        # rides in the w2 slot, w1/b1 are empty.
        return {
            "schema_version": SCHEMA_VERSION,
            "n_x": self.n_x,
            "n_h": 0,
            "levels": list(self.levels.taus),
            "hyper": self.hyper.to_dict(),
            "w1": [],
            "b1": [],
            "w2": self.weights.tolist(),
            "b2": self.bias.tolist(),
            "seed": self.hyper.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearQuantileModel":
        return cls(
            weights=np.asarray(d["w2"], dtype=np.float64).reshape(-1, d["n_x"]),
            bias=np.asarray(d["b2"], dtype=np.float64),
            levels=QuantileLevels(tuple(d["levels"])),
            hyper=HyperParams.from_dict(d["hyper"]),
        )


def train_mqr(features, targets, levels: QuantileLevels,
              hyper: HyperParams) -> LinearQuantileModel:
    """Gradient descent on the smooth pinball objective for a linear model.

    Zero-initialized (the objective is convex here, so the start point only
    affects the path), with the lambda2 penalty on the weight matrix and an
    unpenalized bias. Aborts like network training if values go non-finite.
    """
    x = _feature_array(features)
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != (x.shape[0],):
        raise ValueError(f"train_mqr: targets shape {y.shape}, expected ({x.shape[0]},)")
    if not np.all(np.isfinite(y)):
        raise ValueError("train_mqr: targets must be finite")
    taus = levels.as_array()
    n, m = x.shape[0], taus.shape[0]
    scale = 1.0 / (n * m)

    model = LinearQuantileModel(weights=np.zeros((m, x.shape[1])),
                                bias=np.zeros(m), levels=levels, hyper=hyper)
    for it in range(hyper.iterations):
        qhat = model.batch_outputs(x)
        u = y[:, None] - qhat
        d = expit(-u / hyper.alpha) - taus
        gw = scale * (d.T @ x + hyper.lambda2 * model.weights)
        gb = scale * d.sum(axis=0)
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise TrainingDivergedError(it, "gradient is not finite")
        model = replace(model,
                        weights=model.weights - hyper.learning_rate * gw,
                        bias=model.bias - hyper.learning_rate * gb)
    return model
