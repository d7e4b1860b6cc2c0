"""Prediction-error metrics and the steady-state tracking law."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .datagen import RandomWalkConfig, random_walk_stream

NMSE_FLOOR_DB = -300.0


@dataclass
class MetricSeries:
    """Per-step records of one filter run (one repeat)."""

    prediction: np.ndarray
    observation: np.ndarray
    truth: np.ndarray
    center_count: np.ndarray
    step: np.ndarray = None

    def __post_init__(self):
        self.prediction = np.asarray(self.prediction, dtype=float)
        self.observation = np.asarray(self.observation, dtype=float)
        self.truth = np.asarray(self.truth, dtype=float)
        self.center_count = np.asarray(self.center_count, dtype=np.int64)
        if self.step is None:
            self.step = np.arange(self.prediction.shape[0])

    def __len__(self):
        return self.prediction.shape[0]

    @property
    def squared_error(self) -> np.ndarray:
        return (self.prediction - self.observation) ** 2

    @property
    def nmse_db(self) -> float:
        return nmse_db(self.prediction, self.observation)

    @property
    def asymptotic_nmse_db(self) -> float:
        return asymptotic_nmse(self)


@dataclass(frozen=True)
class SteadyStateParams:
    eta: float
    sigma_q2: float
    sigma_n2: float

    def __post_init__(self):
        if not self.eta * (2.0 - self.eta) > 0:
            raise ValueError(f"eta must lie in (0, 2), got {self.eta}")
        if self.sigma_q2 < 0 or self.sigma_n2 < 0:
            raise ValueError("variances must be non-negative")


def _to_db(ratio: float) -> float:
    if ratio <= 0:
        return NMSE_FLOOR_DB
    return max(10.0 * math.log10(ratio), NMSE_FLOOR_DB)


def _sums(pred, obs) -> tuple[float, float]:
    pred = np.asarray(pred, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if pred.shape != obs.shape or pred.ndim != 1 or pred.size == 0:
        raise ValueError("predictions and observations must be equal-length, non-empty")
    sse = float(np.sum((pred - obs) ** 2))
    sst = float(np.sum((obs - obs.mean()) ** 2))
    if sst == 0.0:
        raise ValueError("observations have zero variance; NMSE undefined")
    return sse, sst


def nmse_db(predictions, observations) -> float:
    """Squared error normalized by observation variance, in dB (floored at -300)."""
    sse, sst = _sums(predictions, observations)
    return _to_db(sse / sst)


def _window(series: MetricSeries, start_step: int, window: int) -> slice:
    if start_step < 0 or window < 1:
        raise ValueError("need start_step >= 0 and window >= 1")
    if len(series) < start_step + window:
        raise ValueError(
            f"series of length {len(series)} shorter than window end {start_step + window}"
        )
    return slice(start_step, start_step + window)


def asymptotic_nmse(series: MetricSeries, start_step: int = 200, window: int = 800) -> float:
    sl = _window(series, start_step, window)
    return nmse_db(series.prediction[sl], series.observation[sl])


def pooled_nmse_db(
    runs: Sequence[MetricSeries], start_step: int = 0, window: int | None = None
) -> float:
    """NMSE across repeats: per-repeat sums are averaged before taking the log."""
    if not runs:
        raise ValueError("no runs to pool")
    sse, sst = 0.0, 0.0
    for s in runs:
        w = len(s) - start_step if window is None else window
        sl = _window(s, start_step, w)
        a, b = _sums(s.prediction[sl], s.observation[sl])
        sse += a
        sst += b
    return _to_db(sse / sst)


def function_error(estimate, truth) -> float:
    """``sum (est - truth)^2 / sum truth^2`` over a shared grid."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError("estimate and truth must share a grid")
    denom = float(np.sum(truth**2))
    if denom == 0.0:
        raise ValueError("truth has zero norm")
    return float(np.sum((estimate - truth) ** 2)) / denom


def steady_state_theory(p: SteadyStateParams) -> float:
    """Steady-state model-mismatch variance of constant-step (K)LMS.

    ``(sigma_q2 + eta^2 sigma_n2) / (eta (2 - eta))`` for a random-walk
    target with total per-step perturbation variance ``sigma_q2`` and unit
    feature norm.
    """
    return (p.sigma_q2 + p.eta**2 * p.sigma_n2) / (p.eta * (2.0 - p.eta))


def linear_klms_batch(X: np.ndarray, y: np.ndarray, eta: float) -> np.ndarray:
    """Run independent linear KLMS filters side by side.

    ``X`` has shape (R, n, d) and ``y`` (R, n); filters start at zero weight.
    Returns the one-step-ahead predictions, shape (R, n).
    """
    R, n, d = X.shape
    w = np.zeros((R, d))
    pred = np.empty((R, n))
    for t in range(n):
        xt = X[:, t, :]
        p = np.einsum("ij,ij->i", w, xt)
        pred[:, t] = p
        w += (eta * (y[:, t] - p))[:, None] * xt
    return pred


@dataclass
class SteadyStateResult:
    theory: float
    empirical: float
    stderr: float
    per_repeat: np.ndarray = field(repr=False)

    @property
    def rel_error(self) -> float:
        if self.theory == 0.0:
            return math.inf if self.empirical else 0.0
        return abs(self.empirical - self.theory) / self.theory


def empirical_steady_state(
    eta: float,
    sigma_q2: float,
    sigma_n2: float = 0.01,
    dim: int = 8,
    n: int = 20000,
    repeats: int = 500,
    base_seed: int = 0,
    tail_fraction: float = 0.2,
    chunk: int = 50,
) -> SteadyStateResult:
    """Measure E[zeta^2] of linear KLMS on random-walk streams.

    ``zeta = truth - prediction`` is averaged over the last ``tail_fraction``
    of each run; the standard error is taken across repeats.
    """
    p = SteadyStateParams(eta, sigma_q2, sigma_n2)
    tail = int(round(n * tail_fraction))
    means = np.empty(repeats)
    for lo in range(0, repeats, chunk):
        idx = range(lo, min(lo + chunk, repeats))
        streams = [
            random_walk_stream(RandomWalkConfig(dim, sigma_q2, sigma_n2, n, base_seed + r))
            for r in idx
        ]
        X = np.stack([s.X for s in streams])
        y = np.stack([s.y for s in streams])
        truth = np.stack([s.truth for s in streams])
        pred = linear_klms_batch(X, y, eta)
        means[lo : lo + len(idx)] = np.mean((truth[:, -tail:] - pred[:, -tail:]) ** 2, axis=1)
    se = float(means.std(ddof=1) / math.sqrt(repeats)) if repeats > 1 else math.nan
    return SteadyStateResult(steady_state_theory(p), float(means.mean()), se, means)
