"""Simulated data paths and the stationary reference filters.

Innovations are i.i.d., bounded and mean zero, so they form a martingale
difference sequence with constant conditional variance. Paths are built by
filtering a burn-in stretch plus T innovations and discarding the burn-in.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter
from scipy.stats import norm, truncnorm

from .spectral import THETA_LIMIT, Arma, Bloomfield, DomainError, SpectralModel, WhiteNoise

KAPPA_TAIL = 1e-12


@dataclass(frozen=True)
class Uniform:
    half_width: float

    @property
    def variance(self) -> float:
        return self.half_width ** 2 / 3.0

    @property
    def bound(self) -> float:
        return self.half_width

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(-self.half_width, self.half_width, n)


@dataclass(frozen=True)
class Rademacher:
    scale: float

    @property
    def variance(self) -> float:
        return self.scale ** 2

    @property
    def bound(self) -> float:
        return self.scale

    def draw(self, rng, n):
        return self.scale * (2.0 * rng.integers(0, 2, n) - 1.0)


@dataclass(frozen=True)
class TruncatedGaussian:
    sd: float
    bound: float

    @property
    def variance(self) -> float:
        b = self.bound / self.sd
        return self.sd ** 2 * (1.0 - 2.0 * b * norm.pdf(b) / (2.0 * norm.cdf(b) - 1.0))

    def draw(self, rng, n):
        b = self.bound / self.sd
        return truncnorm.rvs(-b, b, scale=self.sd, size=n, random_state=rng)


LAWS = {"uniform": Uniform, "rademacher": Rademacher, "truncated_gaussian": TruncatedGaussian}


@dataclass(frozen=True)
class InnovationSpec:
    law: Uniform | Rademacher | TruncatedGaussian
    seed: int = 0

    def __post_init__(self):
        for name, v in vars(self.law).items():
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"innovation parameter {name} must be positive, got {v}")

    @property
    def variance(self) -> float:
        return self.law.variance

    @property
    def bound(self) -> float:
        return self.law.bound

    @classmethod
    def matching(cls, sigma2: float, law: str = "uniform", seed: int = 0) -> "InnovationSpec":
        """Innovations of the given law scaled to variance ``sigma2``."""
        s = math.sqrt(sigma2)
        if law == "uniform":
            return cls(Uniform(math.sqrt(3.0) * s), seed)
        if law == "rademacher":
            return cls(Rademacher(s), seed)
        if law == "truncated_gaussian":
            # bound at 3 sd, then rescale sd so the truncated variance is sigma2
            unit = TruncatedGaussian(1.0, 3.0).variance
            sd = s / math.sqrt(unit)
            return cls(TruncatedGaussian(sd, 3.0 * sd), seed)
        raise ValueError(f"unknown innovation law {law!r}")

    def to_config(self) -> dict:
        name = {v: k for k, v in LAWS.items()}[type(self.law)]
        return {"law": name, **vars(self.law), "seed": self.seed}


def innovation_from_config(cfg: dict) -> InnovationSpec:
    law = str(cfg.get("law", "uniform")).strip().lower()
    seed = int(cfg.get("seed", 0))
    if law not in LAWS:
        raise ValueError(f"unknown innovation law {law!r}")
    params = {k: float(v) for k, v in cfg.items() if k not in ("law", "seed")}
    if law == "uniform" and "half_width" not in params and "sigma2" in params:
        return InnovationSpec.matching(params["sigma2"], law, seed)
    params.pop("sigma2", None)
    return InnovationSpec(LAWS[law](**params), seed)


@dataclass(frozen=True, eq=False)
class SamplePath:
    y: np.ndarray
    innovations: np.ndarray
    model: SpectralModel
    seed: int
    burn_in: int
    presample: np.ndarray = field(repr=False, default=None)
    innovation_bound: float = math.inf

    def __len__(self):
        return len(self.y)

    @property
    def kappa(self) -> np.ndarray:
        return self.model.kappa_until(KAPPA_TAIL)

    def to_csv(self, path) -> None:
        """Columns t, y, innovation for t = 1..T (burn-in innovations omitted)."""
        eps = self.innovations[self.burn_in :]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "y", "innovation"])
            for t, (yt, et) in enumerate(zip(self.y, eps), start=1):
                w.writerow([t, format(yt, ".17g"), format(et, ".17g")])


def read_path_csv(path) -> tuple:
    """Read (y, innovations) arrays written by :meth:`SamplePath.to_csv`."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1].copy(), data[:, 2].copy()


def _filter(model: SpectralModel, eps: np.ndarray) -> np.ndarray:
    if isinstance(model, WhiteNoise):
        return eps.copy()
    if isinstance(model, Arma):
        return lfilter(model.ma_poly, model.ar_poly, eps)
    return lfilter(model.kappa_until(KAPPA_TAIL), [1.0], eps)


def simulate(model: SpectralModel, innov: InnovationSpec, T: int, burn_in: int = 500) -> SamplePath:
    """Draw a path of length T whose population spectrum is the model's.

    The innovation variance must equal ``model.sigma2``. For Bloomfield
    models the burn-in is raised to the kappa truncation length if needed.
    """
    if T < 2:
        raise ValueError("T must be at least 2")
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    if not math.isclose(innov.variance, model.sigma2, rel_tol=1e-9):
        raise ValueError(
            f"innovation variance {innov.variance:.12g} does not match model sigma2 {model.sigma2:.12g}"
        )
    if isinstance(model, Bloomfield):
        burn_in = max(burn_in, len(model.kappa_until(KAPPA_TAIL)))
    rng = np.random.default_rng(innov.seed)
    eps = innov.law.draw(rng, T + burn_in)
    y_all = _filter(model, eps)
    # y_1 must be nonzero; redraw the time-1 innovation on the null event
    while y_all[burn_in] == 0.0:
        eps[burn_in] = innov.law.draw(rng, 1)[0]
        y_all = _filter(model, eps)
    return SamplePath(
        y=y_all[burn_in:].copy(),
        innovations=eps,
        model=model,
        seed=innov.seed,
        burn_in=burn_in,
        presample=y_all[:burn_in].copy(),
        innovation_bound=innov.bound,
    )


def path_from_series(y, model: SpectralModel | None = None) -> SamplePath:
    """Wrap an observed series (no innovations known) as a path."""
    y = np.asarray(y, dtype=float)
    if len(y) < 2:
        raise ValueError("T must be at least 2")
    return SamplePath(y, np.zeros(0), model, seed=-1, burn_in=0, presample=np.zeros(0))


def _check_theta(theta):
    if not abs(theta) <= THETA_LIMIT:
        raise DomainError(f"|theta| must be at most {THETA_LIMIT}")


def _series(path) -> np.ndarray:
    return path.y if isinstance(path, SamplePath) else np.asarray(path, dtype=float)


def prediction_errors(path, theta: float) -> np.ndarray:
    """e_t(theta) = y_t - theta e_{t-1}(theta) with e_0 = 0.

    This differs from the infinite-past prediction error by
    theta^t times the infinite-past value at t = 0 (see ``transient_bound``).
    """
    _check_theta(theta)
    return lfilter([1.0], [1.0, theta], _series(path))


def transient_bound(theta: float, t, y_max: float) -> np.ndarray:
    """Bound |theta|^t y_max / (1 - |theta|) on the start-up transient."""
    a = abs(theta)
    return a ** np.asarray(t, dtype=float) * y_max / (1.0 - a)


def stationary_filters(path, theta: float, beta: float):
    """Zero-initialized x_t(theta), phi_t(theta), z_t(theta).

    x_t = y_t - beta theta x_{t-1}, phi_t = x_t - theta phi_{t-1} and
    z_t = e_t + theta phi_{t-1}, evaluated as y_t - theta (e_{t-1} - phi_{t-1})
    so that z = y holds exactly when beta = 0.
    """
    _check_theta(theta)
    if not 0.0 <= beta <= 1.0:
        raise DomainError("beta must lie in [0, 1]")
    y = _series(path)
    e = lfilter([1.0], [1.0, theta], y)
    x = lfilter([1.0], [1.0, beta * theta], y)
    phi = lfilter([1.0], [1.0, theta], x)
    z = y.copy()
    z[1:] -= theta * (e[:-1] - phi[:-1])
    return x, phi, z
