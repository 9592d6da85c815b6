"""Deterministic Robbins-Monro iteration

    theta_t = theta_{t-1} - delta_t f(theta_{t-1}) + delta_t gamma_t,   t > t0,

used as a reference for where the recursive estimator should end up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

OVERFLOW = 1e6


class RmDivergenceError(OverflowError):
    """Iterates left the region |theta| <= 1e6."""


def _zero(t):
    return 0.0


@dataclass(frozen=True)
class RmSchedule:
    """Step sizes and perturbations for :func:`rm_iterate`.

    Give either ``delta`` (a function of t) or ``normalizer``. With a
    normalizer N the step is

        delta_t = (t - t0)^(-power) / N(theta_{t-1}),

    which for power = 1 behaves like the step 1 / sum_s N(theta_s) of the
    approximating sequence once the iterates settle; N is usually the
    regressor second moment. Any power in (0, 1] keeps delta_t -> 0 and
    sum delta_t = inf.
    """

    delta: Optional[Callable[[int], float]] = None
    gamma: Callable[[int], float] = _zero
    theta0: float | np.ndarray = 0.0
    t0: int = 1
    normalizer: Optional[Callable] = None
    power: float = 1.0

    def __post_init__(self):
        if (self.delta is None) == (self.normalizer is None):
            raise ValueError("give exactly one of delta or normalizer")
        if not 0.0 < self.power <= 1.0:
            raise ValueError("power must lie in (0, 1]")


def harmonic(c: float = 1.0) -> Callable[[int], float]:
    """delta_t = c / t."""
    if c <= 0:
        raise ValueError("c must be positive")
    return lambda t: c / t


def rm_iterate(field: Callable, schedule: RmSchedule, steps: int) -> np.ndarray:
    """Run the recursion for ``steps`` steps.

    Returns an array whose element i is the iterate at time t0 + i (so
    element 0 is ``theta0``). ``theta0`` may be an array of starting points;
    ``field`` then has to accept arrays and all starts advance together.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    theta = np.array(schedule.theta0, dtype=float)
    out = np.empty((steps + 1,) + theta.shape)
    out[0] = theta
    for i in range(1, steps + 1):
        t = schedule.t0 + i
        if schedule.normalizer is not None:
            d = i ** -schedule.power / np.asarray(schedule.normalizer(theta), dtype=float)
        else:
            d = schedule.delta(t)
            if d < 0:
                raise ValueError(f"delta_{t} = {d} is negative")
        theta = theta - d * np.asarray(field(theta), dtype=float) + d * schedule.gamma(t)
        if not np.all(np.abs(theta) <= OVERFLOW):
            raise RmDivergenceError(f"iterate exceeded {OVERFLOW:g} in magnitude at t={t}")
        out[i] = theta
    return out


def oscillation(iterates: np.ndarray, fraction: float = 0.1) -> np.ndarray | float:
    """max - min of the iterates over the final ``fraction`` of the run."""
    n = max(1, int(math.ceil(len(iterates) * fraction)))
    tail = iterates[-n:]
    r = tail.max(axis=0) - tail.min(axis=0)
    return float(r) if np.ndim(r) == 0 else r


def mean_field_limits(model, beta: float, starts, steps: int = 2000, power: float = 0.6,
                      quad=None, gamma: Callable[[int], float] = _zero, bound: float = 0.96) -> np.ndarray:
    """Iterate on f(., beta) from each start with delta_t = t^-power / Phi(theta_{t-1}).

    Returns the full iterate array (steps + 1, len(starts)). Normalizing by
    the regressor second moment makes the linearized contraction rate at a
    zero equal to f'/Phi, which is at least one on the test corpus; the
    power below one then gives fast convergence from every start.
    """
    from .spectral import FixedLevelFunctional, QuadratureSpec

    quad = QuadratureSpec(256) if quad is None else quad
    field = FixedLevelFunctional(model, "f", beta, quad, bound)
    norm = FixedLevelFunctional(model, "phi2", beta, quad, bound)
    sched = RmSchedule(normalizer=norm, gamma=gamma, theta0=np.asarray(starts, dtype=float), power=power)
    return rm_iterate(field, sched, steps)
