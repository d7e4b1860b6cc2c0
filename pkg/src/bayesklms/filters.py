"""Online kernel filters: state, per-sample update rules and pruning.

A :class:`FilterState` holds the expansion ``f(x) = sum_i c_i k(x_i, x)``.
Coefficients are stored *effective*: forgetting multiplies them in place, so
``coeffs[i]`` is already ``lam**(k - i) * beta_i``.

Every update mutates the state it is given and returns it. Updates apply the
configured pruning (threshold, then budget) before returning.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .kernels import KernelSpec, as_point, kernel_eval, kernel_vector
from .scalar_opt import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    bernoulli_objective,
    logistic,
    maximize_concave,
    poisson_objective,
)

GAUSSIAN = "gaussian"
POISSON = "poisson"
BERNOULLI = "bernoulli"
MODELS = (GAUSSIAN, POISSON, BERNOULLI)

NLMS_EPS = 1e-8

# tolerance on k(x, x) = 1 for the GLM steps
_NORM_TOL = 1e-12


@dataclass(frozen=True)
class ObservationModel:
    tag: str = GAUSSIAN
    sigma_n2: float | None = None

    def __post_init__(self):
        if self.tag not in MODELS:
            raise ValueError(f"unknown observation model {self.tag!r}")
        if self.sigma_n2 is not None and not self.sigma_n2 > 0:
            raise ValueError("sigma_n2 must be positive")

    def check(self, y) -> float:
        """Validate an observation for this model and return it as float."""
        y = float(y)
        if not math.isfinite(y):
            raise ValueError(f"non-finite observation {y}")
        if self.tag == POISSON and (y < 0 or y != math.floor(y)):
            raise ValueError(f"Poisson observation must be a non-negative integer, got {y}")
        if self.tag == BERNOULLI and y not in (0.0, 1.0):
            raise ValueError(f"Bernoulli observation must be 0 or 1, got {y}")
        return y


class Center(NamedTuple):
    point: np.ndarray
    coeff: float
    step_added: int


@dataclass
class FilterState:
    """Kernel expansion plus the hyperparameters of its latent dynamics.

    Parameters
    ----------
    kernel : KernelSpec
    lam : float
        Forgetting factor in (0, 1]; 1 is the pure random-walk prior.
    sigma_d2 : float
        Diffusion variance of the latent weight.
    sigma_n2 : float
        Observation noise variance (Gaussian model only).
    budget : int, optional
        Maximum number of centers; the oldest are dropped beyond it.
    prune_threshold : float, optional
        Centers with ``|coeff| < prune_threshold`` are dropped after each update.
    model : str
        Observation model tag stored with snapshots.
    """

    kernel: KernelSpec
    lam: float = 1.0
    sigma_d2: float = 1.0
    sigma_n2: float = 1.0
    budget: int | None = None
    prune_threshold: float | None = None
    model: str = GAUSSIAN
    step: int = 0
    dim: int | None = None
    points: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    coeffs: np.ndarray = field(default_factory=lambda: np.empty(0))
    added: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    # instrumentation: total kernel evaluations performed through this state
    kernel_evals: int = 0

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lam must lie in (0, 1], got {self.lam}")
        if not self.sigma_d2 > 0 or not self.sigma_n2 > 0:
            raise ValueError("sigma_d2 and sigma_n2 must be positive")
        if self.budget is not None and self.budget < 1:
            raise ValueError("budget must be a positive integer")
        if self.prune_threshold is not None and self.prune_threshold < 0:
            raise ValueError("prune_threshold must be non-negative")
        if self.model not in MODELS:
            raise ValueError(f"unknown observation model {self.model!r}")

    @property
    def eta_prime(self) -> float:
        """Diffusion-to-noise ratio."""
        return self.sigma_d2 / self.sigma_n2

    @property
    def eta(self) -> float:
        """Effective learning rate of the MAP update on a normalized kernel."""
        r = self.eta_prime
        return r / (1.0 + r)

    @property
    def size(self) -> int:
        return self.coeffs.shape[0]

    def __len__(self):
        return self.size

    @property
    def centers(self) -> list[Center]:
        return [
            Center(p.copy(), float(c), int(s))
            for p, c, s in zip(self.points, self.coeffs, self.added)
        ]

    def copy(self) -> "FilterState":
        return copy.deepcopy(self)


@dataclass
class LinearFilterState:
    """Weight vector of a linear filter acting directly on the input space."""

    weights: np.ndarray
    step_size: float

    @classmethod
    def zeros(cls, dim: int, step_size: float) -> "LinearFilterState":
        return cls(np.zeros(dim), step_size)


def _point_for(state: FilterState, x) -> np.ndarray:
    x = as_point(x)
    if state.dim is not None and x.shape[0] != state.dim:
        raise ValueError(f"dimension mismatch: state has d={state.dim}, input has d={x.shape[0]}")
    return x


def _score(state: FilterState, x: np.ndarray) -> float:
    m = state.size
    if m == 0:
        return 0.0
    state.kernel_evals += m
    return float(state.coeffs @ kernel_vector(state.kernel, state.points, x))


def _self_kernel(state: FilterState, x: np.ndarray) -> float:
    state.kernel_evals += 1
    return kernel_eval(state.kernel, x, x)


def _observation(y) -> float:
    y = float(y)
    if not math.isfinite(y):
        raise ValueError(f"non-finite observation {y}")
    return y


def _decay(state: FilterState) -> None:
    if state.lam != 1.0 and state.size:
        state.coeffs *= state.lam


def _append(state: FilterState, x: np.ndarray, coeff: float) -> None:
    if state.dim is None:
        state.dim = x.shape[0]
        state.points = np.empty((0, state.dim))
    state.points = np.concatenate([state.points, x[None, :]])
    state.coeffs = np.append(state.coeffs, coeff)
    state.added = np.append(state.added, state.step)


def _finish(state: FilterState) -> FilterState:
    apply_pruning(state)
    state.step += 1
    return state


def predict_score(state: FilterState, x) -> float:
    """Expansion value ``sum_i c_i k(x_i, x)``; 0 for an empty expansion."""
    return _score(state, _point_for(state, x))


def link(model: ObservationModel | str, score: float) -> float:
    tag = model.tag if isinstance(model, ObservationModel) else model
    if tag == POISSON:
        return math.exp(score)
    if tag == BERNOULLI:
        return logistic(score)
    return score


def predict_mean(state: FilterState, model: ObservationModel | str, x) -> float:
    """Predicted observation mean through the model's canonical inverse link."""
    return link(model, predict_score(state, x))


def klms_step_sgd(state: FilterState, x, y, eta: float) -> FilterState:
    """Stochastic-gradient KLMS: append ``(x, eta * (y - y_hat))``. No decay."""
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    x = _point_for(state, x)
    y = _observation(y)
    e = y - _score(state, x)
    _append(state, x, eta * e)
    return _finish(state)


def klms_step_bayes(state: FilterState, x, y) -> FilterState:
    """MAP update under a random-walk weight prior and Gaussian noise.

    New coefficient ``eta' e / (1 + eta' k(x, x))`` with
    ``eta' = sigma_d2 / sigma_n2``. No decay.
    """
    x = _point_for(state, x)
    y = _observation(y)
    e = y - _score(state, x)
    r = state.eta_prime
    _append(state, x, r * e / (1.0 + r * _self_kernel(state, x)))
    return _finish(state)


def fklms_step(state: FilterState, x, y) -> FilterState:
    """Forgetful KLMS: decay by ``lam``, then the MAP update on the decayed weight."""
    x = _point_for(state, x)
    y = _observation(y)
    _decay(state)
    e = y - _score(state, x)
    r = state.eta_prime
    _append(state, x, r * e / (1.0 + r * _self_kernel(state, x)))
    return _finish(state)


def norma_step(state: FilterState, x, y, eta: float) -> FilterState:
    """NORMA-style update: error from the undecayed weight, then decay, then append."""
    x = _point_for(state, x)
    y = _observation(y)
    e = y - _score(state, x)
    _decay(state)
    _append(state, x, eta * e)
    return _finish(state)


def qklms_step(state: FilterState, x, y, eta: float, eps_q: float) -> FilterState:
    """Quantized KLMS.

    The update ``eta * e`` is merged into the nearest center when it lies
    within ``eps_q`` (Euclidean input distance; ties go to the oldest center),
    otherwise a new center is appended.
    """
    if not eps_q > 0:
        raise ValueError(f"eps_q must be positive, got {eps_q}")
    x = _point_for(state, x)
    y = _observation(y)
    e = y - _score(state, x)
    if state.size:
        d = state.points - x
        dist = np.sqrt(np.einsum("ij,ij->i", d, d))
        j = int(np.argmin(dist))
        if dist[j] <= eps_q:
            state.coeffs[j] += eta * e
            return _finish(state)
    _append(state, x, eta * e)
    return _finish(state)


def glm_map_step(
    state: FilterState,
    x,
    y,
    model: ObservationModel | str | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FilterState:
    """MAP update for a Poisson or Bernoulli observation.

    The weight is decayed by ``lam`` and a single new center is appended
    whose coefficient maximizes the (strictly concave) log-posterior along
    ``phi(x)``. Requires ``k(x, x) = 1``.

    Raises
    ------
    ValueError
        Invalid observation for the model, Gaussian model, or a kernel that
        is not normalized at ``x``.
    NumericalFailure
        From the scalar solver.
    """
    if model is None:
        model = state.model
    if isinstance(model, str):
        model = ObservationModel(model)
    if model.tag == GAUSSIAN:
        raise ValueError("glm_map_step handles Poisson and Bernoulli models; use fklms_step")
    x = _point_for(state, x)
    y = model.check(y)
    kxx = _self_kernel(state, x)
    if abs(kxx - 1.0) > _NORM_TOL:
        raise ValueError(f"GLM updates require a normalized kernel, k(x, x) = {kxx}")
    _decay(state)
    s = _score(state, x)
    if model.tag == POISSON:
        obj = poisson_objective(s, y, state.sigma_d2)
    else:
        obj = bernoulli_objective(s, y, state.sigma_d2)
    alpha = maximize_concave(obj, tol=tol, max_iter=max_iter)
    _append(state, x, alpha)
    return _finish(state)


def predict_linear(state: LinearFilterState, x) -> float:
    return float(state.weights @ as_point(x))


def _linear_input(state: LinearFilterState, x, y) -> tuple[np.ndarray, float]:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1 or x.size == 0:
        raise ValueError("input must be a non-empty vector")
    if x.shape != state.weights.shape:
        raise ValueError(f"dimension mismatch: {x.size} vs {state.weights.size}")
    return x, _observation(y)


def nlms_step(state: LinearFilterState, x, y) -> LinearFilterState:
    """eps-regularized normalized LMS with ``eps = 1e-8``."""
    x, y = _linear_input(state, x, y)
    e = y - state.weights @ x
    state.weights = state.weights + state.step_size * e * x / (NLMS_EPS + x @ x)
    return state


def lms_step(state: LinearFilterState, x, y) -> LinearFilterState:
    """KLMS with the input space as feature space, i.e. plain LMS."""
    x, y = _linear_input(state, x, y)
    e = y - state.weights @ x
    state.weights = state.weights + state.step_size * e * x
    return state


def prune_threshold(state: FilterState, threshold: float) -> FilterState:
    """Drop centers with ``|coeff| < threshold``; survivors keep their order."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    if threshold == 0 or not state.size:
        return state
    keep = np.abs(state.coeffs) >= threshold
    if not keep.all():
        state.points = state.points[keep]
        state.coeffs = state.coeffs[keep]
        state.added = state.added[keep]
    return state


def prune_budget(state: FilterState) -> FilterState:
    """Drop the oldest centers until at most ``state.budget`` remain."""
    if state.budget is None:
        raise ValueError("state has no budget configured")
    excess = state.size - state.budget
    if excess > 0:
        # centers are only ever appended, so age order is storage order
        state.points = state.points[excess:]
        state.coeffs = state.coeffs[excess:]
        state.added = state.added[excess:]
    return state


def apply_pruning(state: FilterState) -> FilterState:
    if state.prune_threshold:
        prune_threshold(state, state.prune_threshold)
    if state.budget is not None:
        prune_budget(state)
    return state
