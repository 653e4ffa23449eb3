"""One-hidden-layer multiple-quantile network with non-crossing initialization.

The network maps a feature vector through a tanh hidden layer to M linear
outputs, one per quantile level, and is trained by full-batch gradient
descent on the smooth pinball objective with L2 weight penalties.

The non-crossing initializer draws the input weights at random, zeroes the
biases, and solves a least-squares problem so that the initial outputs equal
the quantile levels of a uniform distribution: every initial forecast is
tau_m times a common input-dependent scalar, hence ordered in m. Training
then grows the fan outward without, in practice, tangling the quantiles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .linalg import as_matrix, pinv
from .loss import QuantileLevels
from .metrics import QuantileFan

SCHEMA_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Raised when the objective or a gradient stops being finite."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class HyperParams:
    """Training configuration; defaults follow the reference setup."""

    iterations: int = 10000
    hidden_nodes: int = 20
    learning_rate: float = 0.3
    alpha: float = 0.01            # smoothing width of the loss
    lambda1: float = 0.1           # L2 penalty, input-to-hidden weights
    lambda2: float = 0.1           # L2 penalty, hidden-to-output weights
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.hidden_nodes < 1:
            raise ValueError(f"hidden_nodes must be >= 1, got {self.hidden_nodes}")
        # learning_rate 0 is allowed: a zero step is the cheapest no-op probe.
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda penalties must be >= 0")

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "hidden_nodes": self.hidden_nodes,
            "learning_rate": self.learning_rate,
            "alpha": self.alpha,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        return cls(**d)


@dataclass(frozen=True)
class SpnnModel:
    w1: np.ndarray                 # (n_h, n_x)
    b1: np.ndarray                 # (n_h,)
    w2: np.ndarray                 # (M, n_h)
    b2: np.ndarray                 # (M,)
    levels: QuantileLevels
    hyper: HyperParams

    def __post_init__(self):
        w1 = as_matrix(self.w1)
        w2 = as_matrix(self.w2)
        b1 = np.ascontiguousarray(self.b1, dtype=np.float64)
        b2 = np.ascontiguousarray(self.b2, dtype=np.float64)
        if b1.shape != (w1.shape[0],):
            raise ValueError(f"b1 shape {b1.shape} does not match w1 {w1.shape}")
        if w2.shape[1] != w1.shape[0]:
            raise ValueError(f"w2 shape {w2.shape} does not match w1 {w1.shape}")
        if b2.shape != (w2.shape[0],):
            raise ValueError(f"b2 shape {b2.shape} does not match w2 {w2.shape}")
        if w2.shape[0] != len(self.levels):
            raise ValueError(
                f"{w2.shape[0]} output rows but {len(self.levels)} quantile levels")
        if not (np.all(np.isfinite(b1)) and np.all(np.isfinite(b2))):
            raise ValueError("bias vectors must be finite")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", b2)

    @property
    def n_x(self) -> int:
        return self.w1.shape[1]

    @property
    def n_h(self) -> int:
        return self.w1.shape[0]

    @property
    def n_out(self) -> int:
        return self.w2.shape[0]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n_x": self.n_x,
            "n_h": self.n_h,
            "levels": list(self.levels.taus),
            "hyper": self.hyper.to_dict(),
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
            "seed": self.hyper.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpnnModel":
        return cls(
            w1=np.asarray(d["w1"], dtype=np.float64).reshape(d["n_h"], d["n_x"]),
            b1=np.asarray(d["b1"], dtype=np.float64),
            w2=np.asarray(d["w2"], dtype=np.float64).reshape(-1, d["n_h"]),
            b2=np.asarray(d["b2"], dtype=np.float64),
            levels=QuantileLevels(tuple(d["levels"])),
            hyper=HyperParams.from_dict(d["hyper"]),
        )

    def batch_outputs(self, x: np.ndarray) -> np.ndarray:
        h = np.tanh(x @ self.w1.T + self.b1)
        return h @ self.w2.T + self.b2


def forward(model: SpnnModel, x) -> np.ndarray:
    """Quantile vector for one input: w2 @ tanh(w1 @ x + b1) + b2."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n_x,):
        raise ValueError(f"forward: input shape {x.shape}, expected ({model.n_x},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("forward: input must be finite")
    h = np.tanh(model.w1 @ x + model.b1)
    return model.w2 @ h + model.b2


def predict_fan(model, features) -> QuantileFan:
    """Batch forward pass over feature rows; the fan carries the model levels.

    Works for any model exposing n_x, levels, and batch_outputs, including
    the linear quantile model.
    """
    x = _feature_array(features)
    if x.shape[1] != model.n_x:
        raise ValueError(
            f"predict_fan: features have width {x.shape[1]}, expected {model.n_x}")
    return QuantileFan(values=model.batch_outputs(x), levels=model.levels)


def _feature_array(features) -> np.ndarray:
    return as_matrix(getattr(features, "values", features))


def init_noncrossing(n_x: int, training_features, hyper: HyperParams,
                     levels: QuantileLevels) -> SpnnModel:
    """Seeded random input layer, zero biases, least-squares output layer.

    The output weights solve H @ w2.T ~= Q where H = tanh(X @ w1.T) over the
    training rows and Q repeats the level vector on every row, as if the
    targets were uniformly distributed. Column m of the solution is tau_m
    times a shared vector, so every initial forecast is proportional to its
    level and the initial fan never crosses where that scalar is positive.
    """
    x = _feature_array(training_features)
    if x.shape[1] != n_x:
        raise ValueError(f"init_noncrossing: features width {x.shape[1]} != n_x {n_x}")
    rng = np.random.default_rng(hyper.seed)
    w1 = rng.uniform(-1.0, 1.0, size=(hyper.hidden_nodes, n_x))
    h = np.tanh(x @ w1.T)
    q = np.broadcast_to(levels.as_array(), (x.shape[0], len(levels)))
    w2 = (pinv(h) @ q).T
    m = len(levels)
    return SpnnModel(w1=w1, b1=np.zeros(hyper.hidden_nodes), w2=w2,
                     b2=np.zeros(m), levels=levels, hyper=hyper)


def init_random(n_x: int, hyper: HyperParams, levels: QuantileLevels) -> SpnnModel:
    """Both layers uniform on [-1, 1], zero biases: the ablation initializer.

    Draws w1 first from the same seeded stream as init_noncrossing, so the two
    schemes share their input layer for a paired comparison.
    """
    rng = np.random.default_rng(hyper.seed)
    w1 = rng.uniform(-1.0, 1.0, size=(hyper.hidden_nodes, n_x))
    w2 = rng.uniform(-1.0, 1.0, size=(len(levels), hyper.hidden_nodes))
    return SpnnModel(w1=w1, b1=np.zeros(hyper.hidden_nodes), w2=w2,
                     b2=np.zeros(len(levels)), levels=levels, hyper=hyper)


def objective_and_gradients(model: SpnnModel, x: np.ndarray, y: np.ndarray):
    """Objective value and its exact gradients for all four parameter tensors.

    Backpropagation of the stated objective: the output-layer error per
    sample and level is 1/(1 + exp((y - qhat)/alpha)) - tau, the hidden layer
    picks up the (1 - h**2) tanh derivative, and each L2 term contributes
    lambda/(N*M) times its weight matrix.
    """
    taus = model.levels.as_array()
    hp = model.hyper
    n, m = x.shape[0], taus.shape[0]
    scale = 1.0 / (n * m)

    z1 = x @ model.w1.T + model.b1
    h = np.tanh(z1)
    qhat = h @ model.w2.T + model.b2
    u = y[:, None] - qhat

    data = float(np.sum(taus * u + hp.alpha * np.logaddexp(0.0, -u / hp.alpha)))
    value = scale * (data
                     + 0.5 * hp.lambda1 * float(np.sum(model.w1 ** 2))
                     + 0.5 * hp.lambda2 * float(np.sum(model.w2 ** 2)))

    d = expit(-u / hp.alpha) - taus                      # dS/dqhat, (N, M)
    gw2 = scale * (d.T @ h + hp.lambda2 * model.w2)
    gb2 = scale * d.sum(axis=0)
    g_hidden = (d @ model.w2) * (1.0 - h ** 2)           # (N, n_h)
    gw1 = scale * (g_hidden.T @ x + hp.lambda1 * model.w1)
    gb1 = scale * g_hidden.sum(axis=0)
    return value, (gw1, gb1, gw2, gb2)


def train(model: SpnnModel, features, targets):
    """Fixed number of full-batch gradient-descent steps on the objective.

    Returns the trained model and the objective value recorded at the start
    of every iteration (descent is typical but not guaranteed; the trace is
    diagnostic). Aborts with the iteration index if the objective or any
    gradient goes non-finite.
    """
    x = _feature_array(features)
    y = np.asarray(targets, dtype=np.float64)
    if x.shape[1] != model.n_x:
        raise ValueError(f"train: features width {x.shape[1]} != n_x {model.n_x}")
    if y.shape != (x.shape[0],):
        raise ValueError(f"train: targets shape {y.shape}, expected ({x.shape[0]},)")
    if not np.all(np.isfinite(y)):
        raise ValueError("train: targets must be finite")

    hp = model.hyper
    current = model
    losses = np.empty(hp.iterations)
    for it in range(hp.iterations):
        value, grads = objective_and_gradients(current, x, y)
        if not np.isfinite(value):
            raise TrainingDivergedError(it, f"objective is not finite ({value})")
        if any(not np.all(np.isfinite(g)) for g in grads):
            raise TrainingDivergedError(it, "gradient is not finite")
        losses[it] = value
        gw1, gb1, gw2, gb2 = grads
        lr = hp.learning_rate
        current = replace(current,
                          w1=current.w1 - lr * gw1, b1=current.b1 - lr * gb1,
                          w2=current.w2 - lr * gw2, b2=current.b2 - lr * gb2)
    return current, losses


def save_model(model, path) -> None:
    """Serialize a model (network or linear) to its JSON document."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Load a model JSON document; n_h = 0 marks the linear (no hidden) form."""
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(
            f"unsupported model schema_version {version!r}, expected {SCHEMA_VERSION}")
    if d["n_h"] == 0:
        from .baselines import LinearQuantileModel
        return LinearQuantileModel.from_dict(d)
    return SpnnModel.from_dict(d)
