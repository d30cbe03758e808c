"""Problem data and the two built-in model problems."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import ConfigError
from .levelset import Evaluator, Orientation, csg_union_intersect, negate, signed_distance_circle


@dataclass(frozen=True)
class ProblemDefinition:
    """Data of -Laplace(u) = f in Omega, u = g_D on the fixed boundary and
    du/dn = g_N on the free boundary.

    ``grad_f`` is needed by the shape gradient whenever f is not zero.
    """

    f: Callable
    g_D: Callable
    g_N: float
    grad_f: Callable | None = None
    exact: Callable | None = None
    exact_grad: Callable | None = None
    f_is_zero: bool = False

    def check_grad_f(self, points: np.ndarray, eps: float = 1e-6) -> float:
        """Max absolute mismatch between grad_f and central differences of f."""
        if self.grad_f is None:
            raise ConfigError("problem has no grad_f")
        g = self.grad_f(points)
        fd = np.empty_like(g)
        for k in range(2):
            e = np.zeros(2)
            e[k] = eps
            fd[:, k] = (self.f(points + e) - self.f(points - e)) / (2 * eps)
        return float(np.abs(g - fd).max())


@dataclass(frozen=True)
class Scenario:
    """Problem data plus the geometry of a complete optimization run."""

    name: str
    problem: ProblemDefinition
    initial: Evaluator
    fixed: Evaluator | None = None
    optimal: Evaluator | None = None  # known solution of the free-boundary problem


CENTER = np.array([0.5, 0.5])
RADIUS = 0.25


def _radius(x):
    return np.linalg.norm(np.asarray(x, dtype=float) - CENTER, axis=-1)


def mp1_problem() -> ProblemDefinition:
    """Exterior of a circle; exact solution u = 4 |x - c| - 1, g_N = -4."""

    def u(x):
        return 4.0 * _radius(x) - 1.0

    def grad_u(x):
        d = np.asarray(x, dtype=float) - CENTER
        return 4.0 * d / _radius(x)[..., None]

    def f(x):
        return -4.0 / _radius(x)

    def grad_f(x):
        d = np.asarray(x, dtype=float) - CENTER
        return 4.0 * d / _radius(x)[..., None] ** 3

    return ProblemDefinition(f=f, g_D=u, g_N=-4.0, grad_f=grad_f, exact=u, exact_grad=grad_u)


def flower(radius: float = RADIUS, amplitude: float = 0.1, petals: int = 5,
           orientation: Orientation = Orientation.EXTERIOR_NEGATIVE) -> Evaluator:
    """Level set of the star-shaped curve r = radius + amplitude cos(petals * angle)."""
    sign = 1.0 if orientation is Orientation.INTERIOR_NEGATIVE else -1.0

    def phi(x):
        d = np.asarray(x, dtype=float) - CENTER
        ang = np.arctan2(d[..., 1], d[..., 0])
        return sign * (np.hypot(d[..., 0], d[..., 1]) - (radius + amplitude * np.cos(petals * ang)))

    return phi


def ellipse(center, axes, orientation: Orientation = Orientation.INTERIOR_NEGATIVE) -> Evaluator:
    """Approximate signed distance of an axis-aligned ellipse (scaled implicit form)."""
    c = np.asarray(center, dtype=float)
    a, b = axes
    sign = 1.0 if orientation is Orientation.INTERIOR_NEGATIVE else -1.0

    def phi(x):
        d = np.asarray(x, dtype=float) - c
        return sign * min(a, b) * (np.sqrt((d[..., 0] / a) ** 2 + (d[..., 1] / b) ** 2) - 1.0)

    return phi


def model_problem_1(amplitude: float = 0.1) -> Scenario:
    return Scenario(
        name="MP1",
        problem=mp1_problem(),
        initial=flower(amplitude=amplitude),
        optimal=signed_distance_circle(CENTER, RADIUS, Orientation.EXTERIOR_NEGATIVE),
    )


def velocity_study_scenario() -> Scenario:
    """MP1 data on a mildly perturbed circle, used for velocity convergence studies."""
    return replace(model_problem_1(), name="MP1-velocity", initial=flower(amplitude=0.05, petals=3))


MP2_BALLS = ((1.0 / 3.0, 2.0 / 3.0), (2.0 / 3.0, 1.0 / 3.0))
MP2_BALL_RADIUS = 1.0 / 12.0


def mp2_problem() -> ProblemDefinition:
    zero = lambda x: np.zeros(np.shape(x)[:-1])
    return ProblemDefinition(
        f=zero,
        g_D=lambda x: np.ones(np.shape(x)[:-1]),
        g_N=-3.0,
        grad_f=lambda x: np.zeros(np.shape(x)),
        f_is_zero=True,
    )


def mp2_fixed() -> Evaluator:
    """Negative outside both balls: max(-d_1, -d_2)."""
    balls = [negate(signed_distance_circle(c, MP2_BALL_RADIUS)) for c in MP2_BALLS]
    return csg_union_intersect(balls, "max")


def model_problem_2(center=(0.51, 0.49), axes=(0.40, 0.38)) -> Scenario:
    return Scenario(
        name="MP2",
        problem=mp2_problem(),
        initial=ellipse(center, axes),
        fixed=mp2_fixed(),
    )


SCENARIOS = {"MP1": model_problem_1, "MP2": model_problem_2}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name.upper()]()
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}; expected one of {sorted(SCENARIOS)}") from None
