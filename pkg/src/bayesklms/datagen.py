"""Seeded synthetic streams for the tracking experiments.

All generators draw from ``numpy.random.default_rng(seed)`` (PCG64), so a
config with the same seed always yields a bit-identical stream. Repeat ``r``
of an experiment uses ``seed = base_seed + r``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .scalar_opt import NumericalFailure


class StreamSample(NamedTuple):
    t: int
    x: np.ndarray
    y: float
    truth: float | None = None


@dataclass
class Stream:
    """A whole stream stored column-wise.

    ``truth`` is for scoring only and must never reach a filter update.
    """

    X: np.ndarray  # (n, d)
    y: np.ndarray  # (n,)
    truth: np.ndarray | None = None

    def __len__(self):
        return self.y.shape[0]

    def __iter__(self) -> Iterator[StreamSample]:
        for t in range(len(self)):
            yield self[t]

    def __getitem__(self, t: int) -> StreamSample:
        tr = None if self.truth is None else float(self.truth[t])
        return StreamSample(t, self.X[t], float(self.y[t]), tr)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def to_csv(self, path) -> None:
        header = ["t", *(f"x_{j}" for j in range(self.dim)), "y", "truth"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for s in self:
                w.writerow([s.t, *map(repr, map(float, s.x)), repr(s.y),
                            "" if s.truth is None else repr(s.truth)])


@dataclass(frozen=True)
class GpStreamConfig:
    n: int = 1000
    temporal_ls: float = 10.0
    spatial_ls: float = 0.2
    snr_db: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.temporal_ls <= 0 or self.spatial_ls <= 0:
            raise ValueError("n and length-scales must be positive")


@dataclass(frozen=True)
class TuningStreamConfig:
    n: int = 1000
    gain: float = 4.0
    offset: float = -0.1
    total_drift_deg: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")


@dataclass(frozen=True)
class BoundaryStreamConfig:
    n: int = 1000
    radius: float = 0.5
    start: tuple[float, float] = (-1.0, -1.0)
    end: tuple[float, float] = (1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not self.radius > 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class RandomWalkConfig:
    dim: int = 8
    sigma_q2: float = 0.0
    sigma_n2: float = 0.01
    n: int = 20000
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.n < 1:
            raise ValueError("dim and n must be positive")
        if self.sigma_q2 < 0 or not self.sigma_n2 > 0:
            raise ValueError("need sigma_q2 >= 0 and sigma_n2 > 0")


def gp_covariance(t, x, s, z, temporal_ls=10.0, spatial_ls=0.2):
    """Separable squared-exponential covariance between sites (t, x) and (s, z)."""
    t, x, s, z = (np.asarray(v, dtype=float) for v in (t, x, s, z))
    return np.exp(-((t - s) ** 2) / (2 * temporal_ls**2)) * np.exp(
        -((x - z) ** 2) / (2 * spatial_ls**2)
    )


def _chol_with_jitter(K: np.ndarray) -> np.ndarray:
    jitter = 1e-10
    while jitter <= 1e-6 * (1 + 1e-9):
        try:
            return np.linalg.cholesky(K + jitter * np.eye(K.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10
    raise NumericalFailure("covariance not positive definite even with 1e-6 jitter")


def gp_sample_at(t, x, rng, temporal_ls=10.0, spatial_ls=0.2, size=None) -> np.ndarray:
    """Joint zero-mean GP draw(s) at the sites ``(t[i], x[i])``."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    K = gp_covariance(t[:, None], x[:, None], t[None, :], x[None, :],
                      temporal_ls, spatial_ls)
    L = _chol_with_jitter(K)
    shape = (t.size,) if size is None else (t.size, size)
    return L @ rng.standard_normal(shape)


def gp_stream(cfg: GpStreamConfig) -> Stream:
    """One sample per time step from a spatio-temporal GP plus Gaussian noise.

    Inputs are uniform on [0, 1]; the latent has unit marginal variance and
    the noise variance is ``10 ** (-snr_db / 10)``.
    """
    rng = np.random.default_rng(cfg.seed)
    t = np.arange(cfg.n, dtype=float)
    x = rng.uniform(0.0, 1.0, cfg.n)
    f = gp_sample_at(t, x, rng, cfg.temporal_ls, cfg.spatial_ls)
    noise_var = 10.0 ** (-cfg.snr_db / 10.0)
    y = f + np.sqrt(noise_var) * rng.standard_normal(cfg.n)
    return Stream(x[:, None], y, f)


def tuning_mean(cfg: TuningStreamConfig, t) -> np.ndarray:
    """Preferred stimulus (degrees) at step ``t``."""
    return np.asarray(t, dtype=float) / cfg.n * cfg.total_drift_deg


def tuning_rate(cfg: TuningStreamConfig, x_deg, mu_deg) -> np.ndarray:
    return np.exp(cfg.gain * np.cos(np.deg2rad(np.asarray(x_deg) - mu_deg)) + cfg.offset)


def tuning_stream(cfg: TuningStreamConfig) -> Stream:
    """Poisson counts from an exponentiated-cosine tuning curve drifting linearly."""
    rng = np.random.default_rng(cfg.seed)
    x = rng.uniform(0.0, 360.0, cfg.n)
    rate = tuning_rate(cfg, x, tuning_mean(cfg, np.arange(cfg.n)))
    y = rng.poisson(rate).astype(float)
    return Stream(x[:, None], y, rate)


def boundary_center(cfg: BoundaryStreamConfig, t) -> np.ndarray:
    """Circle center at step(s) ``t``; moves linearly from start to end."""
    frac = np.asarray(t, dtype=float) / max(cfg.n - 1, 1)
    start, end = np.asarray(cfg.start), np.asarray(cfg.end)
    return start + np.multiply.outer(frac, end - start)


def boundary_labels(cfg: BoundaryStreamConfig, X, center) -> np.ndarray:
    d = np.asarray(X) - center
    return (np.einsum("...j,...j->...", d, d) < cfg.radius**2).astype(float)


def boundary_stream(cfg: BoundaryStreamConfig) -> Stream:
    """Noise-free labels of a translating disc; inputs uniform on [-2, 2]^2."""
    rng = np.random.default_rng(cfg.seed)
    X = rng.uniform(-2.0, 2.0, (cfg.n, 2))
    y = boundary_labels(cfg, X, boundary_center(cfg, np.arange(cfg.n)))
    return Stream(X, y, y.copy())


def random_walk_weights(cfg: RandomWalkConfig, rng) -> np.ndarray:
    """True weights w*_0..w*_{n-1} with w*_0 = 0 and isotropic Gaussian steps."""
    q = np.sqrt(cfg.sigma_q2 / cfg.dim) * rng.standard_normal((cfg.n, cfg.dim))
    w = np.zeros_like(q)
    np.cumsum(q[:-1], axis=0, out=w[1:])
    return w


def random_walk_stream(cfg: RandomWalkConfig) -> Stream:
    """Linear regression on unit-norm inputs with a random-walk true weight."""
    rng = np.random.default_rng(cfg.seed)
    w = random_walk_weights(cfg, rng)
    X = rng.standard_normal((cfg.n, cfg.dim))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    truth = np.einsum("ij,ij->i", w, X)
    y = truth + np.sqrt(cfg.sigma_n2) * rng.standard_normal(cfg.n)
    return Stream(X, y, truth)
