"""One-dimensional maximization of strictly concave objectives."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

MAX_BRACKET = 1e6
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100

# exp() overflows past ~709; the gradient sign is all that matters out there
_EXP_CAP = 700.0


class NumericalFailure(ArithmeticError):
    """A numerical routine could not produce a result to the requested accuracy."""


@dataclass(frozen=True)
class ScalarObjective:
    value: Callable[[float], float]
    gradient: Callable[[float], float]
    curvature: Callable[[float], float]


def _exp(z: float) -> float:
    return math.exp(min(z, _EXP_CAP))


def logistic(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def softplus(z: float) -> float:
    """log(1 + e^z) without overflow."""
    if z > 0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


def poisson_objective(score: float, y: float, sigma_d2: float) -> ScalarObjective:
    """Log-posterior of the new coefficient under a Poisson observation.

    ``score`` is the decayed prediction in the natural-parameter domain, so
    the predicted rate before the update is ``exp(score)``.
    """

    def value(a):
        return y * (score + a) - _exp(score + a) - a * a / (2.0 * sigma_d2)

    def gradient(a):
        return y - _exp(score + a) - a / sigma_d2

    def curvature(a):
        return -_exp(score + a) - 1.0 / sigma_d2

    return ScalarObjective(value, gradient, curvature)


def bernoulli_objective(score: float, y: float, sigma_d2: float) -> ScalarObjective:
    """Log-posterior of the new coefficient under a Bernoulli observation."""

    def value(a):
        z = score + a
        return -y * softplus(-z) - (1.0 - y) * softplus(z) - a * a / (2.0 * sigma_d2)

    def gradient(a):
        return y - logistic(score + a) - a / sigma_d2

    def curvature(a):
        p = logistic(score + a)
        return -p * (1.0 - p) - 1.0 / sigma_d2

    return ScalarObjective(value, gradient, curvature)


def _bracket(gradient) -> tuple[float, float]:
    lo, hi = -1.0, 1.0
    while True:
        g_lo, g_hi = gradient(lo), gradient(hi)
        if g_lo >= 0.0 and g_hi <= 0.0:
            return lo, hi
        if hi >= MAX_BRACKET:
            raise NumericalFailure(
                f"gradient has no sign change on [{lo:g}, {hi:g}]"
            )
        if g_lo < 0.0:
            lo *= 2.0
        if g_hi > 0.0:
            hi *= 2.0


def maximize_concave(
    obj: ScalarObjective, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> float:
    """Return the maximizer of a strictly concave objective.

    Safeguarded Newton: Newton iterates are taken from the prior mode 0 and
    replaced by bisection whenever they leave the current sign-change
    bracket of the gradient. Converged when ``|gradient| <= tol``.

    Raises
    ------
    NumericalFailure
        If no bracket is found within ``|alpha| <= 1e6`` or the tolerance
        is not reached within ``max_iter`` iterations.
    """
    lo, hi = _bracket(obj.gradient)
    a = 0.0
    for _ in range(max_iter):
        g = obj.gradient(a)
        if abs(g) <= tol:
            return a
        if g > 0.0:
            lo = a
        else:
            hi = a
        c = obj.curvature(a)
        step = a - g / c if c < 0.0 else math.nan
        if lo < step < hi:
            a = step
        else:
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            a = mid
    raise NumericalFailure(
        f"no point with |gradient| <= {tol:g} after {max_iter} iterations "
        f"(bracket [{lo!r}, {hi!r}])"
    )
