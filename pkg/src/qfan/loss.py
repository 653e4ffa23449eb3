"""Pinball loss, its logistic smoothing, derivatives, and the training objective.

The smooth surrogate replaces the kink of the pinball loss at the origin with
a softplus term scaled by ``alpha``; the gap to the exact loss is strictly
positive and bounded by ``alpha * ln 2``, so shrinking ``alpha`` recovers the
pinball loss uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class QuantileLevels:
    """Strictly increasing quantile levels, each in the open interval (0, 1)."""

    taus: tuple[float, ...]

    def __post_init__(self):
        taus = tuple(float(t) for t in self.taus)
        if len(taus) == 0:
            raise ValueError("QuantileLevels: need at least one level")
        for t in taus:
            if not (0.0 < t < 1.0):
                raise ValueError(f"QuantileLevels: level {t} outside open interval (0, 1)")
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValueError(f"QuantileLevels: levels must be strictly increasing, got {taus}")
        object.__setattr__(self, "taus", taus)

    def __len__(self) -> int:
        return len(self.taus)

    def __iter__(self):
        return iter(self.taus)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.taus, dtype=np.float64)

    def is_symmetric(self, atol: float = 1e-12) -> bool:
        """True when levels pair up around 0.5 (tau_i + tau_{M+1-i} == 1)."""
        t = self.as_array()
        return bool(np.all(np.abs(t + t[::-1] - 1.0) <= atol))


def _check_tau(tau) -> None:
    t = np.asarray(tau, dtype=np.float64)
    if np.any(t <= 0.0) or np.any(t >= 1.0):
        raise ValueError(f"tau must lie in (0, 1), got {tau}")


def _check_alpha(alpha: float) -> None:
    if not alpha > 0.0:
        raise ValueError(f"alpha must be > 0, got {alpha}")


def pinball(u, tau):
    """Tilted absolute loss: tau*u for u >= 0, (tau-1)*u for u < 0."""
    _check_tau(tau)
    u = np.asarray(u, dtype=np.float64)
    out = np.where(u >= 0.0, tau * u, (np.asarray(tau) - 1.0) * u)
    return out if out.ndim else float(out)


def smooth_pinball(u, tau, alpha):
    """Smooth surrogate tau*u + alpha*log(1 + exp(-u/alpha)).

    The softplus term is evaluated through ``logaddexp`` so large |u|/alpha
    never overflows; the literal formula already breaks for |u/alpha| > ~700.
    """
    _check_tau(tau)
    _check_alpha(alpha)
    u = np.asarray(u, dtype=np.float64)
    out = tau * u + alpha * np.logaddexp(0.0, -u / alpha)
    return out if out.ndim else float(out)


def smooth_pinball_grad(u, tau, alpha):
    """Derivative of the smooth loss with respect to the quantile estimate.

    Equals 1/(1 + exp(u/alpha)) - tau for u = y - qhat; bounded in
    (-tau, 1-tau) and monotone nondecreasing in qhat.
    """
    _check_tau(tau)
    _check_alpha(alpha)
    u = np.asarray(u, dtype=np.float64)
    out = expit(-u / alpha) - tau
    return out if out.ndim else float(out)


def objective(y, qhat, levels: QuantileLevels, alpha: float, lambda1: float,
              lambda2: float, w1, w2) -> float:
    """Full training objective: mean smooth pinball over (t, m) plus L2 terms.

    ``qhat`` may be an (N, M) array or any object with a ``.values`` array
    (a quantile fan). The L2 penalties are lambda/(2NM) times the squared
    Frobenius norms of the two weight matrices.
    """
    _check_alpha(alpha)
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("lambda1 and lambda2 must be >= 0")
    q = np.asarray(getattr(qhat, "values", qhat), dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    taus = levels.as_array()
    if q.ndim != 2:
        raise ValueError(f"objective: qhat must be 2-D, got shape {q.shape}")
    n, m = q.shape
    if y.shape != (n,):
        raise ValueError(f"objective: y has shape {y.shape}, expected ({n},)")
    if m != len(taus):
        raise ValueError(f"objective: qhat has {m} columns but {len(taus)} levels")
    u = y[:, None] - q
    data = float(np.sum(taus * u + alpha * np.logaddexp(0.0, -u / alpha))) / (n * m)
    penalty = (lambda1 * float(np.sum(np.square(w1)))
               + lambda2 * float(np.sum(np.square(w2)))) / (2.0 * n * m)
    return penalty + data
