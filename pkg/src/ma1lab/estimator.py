"""The general MA(1) recursion indexed by beta and its diagnostics.

beta = 0 gives pseudolinear regression (PLR), beta = 1 gives RML2. With
t = 2, 3, ... each step computes, in this order,

    P_t     = P_{t-1} + (phi_{t-1}^2 - P_{t-1}) / t
    e_t     = y_t - theta_{t-1} e_{t-1}
    theta_t = theta_{t-1} + phi_{t-1} e_t / (t P_t)
    x_t     = y_t - beta theta_{t-1} x_{t-1}
    phi_t   = x_t - theta_{t-1} phi_{t-1}

so x_t and phi_t use theta_{t-1}, not the freshly updated theta_t.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .spectral import THETA_LIMIT, DomainError, QuadratureSpec, SpectralModel

RECONSTRUCTION_TOL = 1e-10
KAPPA_TAIL = 1e-10
LONG_TAIL = 1e-13  # truncation of the reference kappa sequence


class ClippedTrajectoryError(ValueError):
    """The regression identity only holds for unclipped trajectories."""


class ReconstructionError(ArithmeticError):
    """The Robbins-Monro reconstruction of theta-hat failed to close."""


@dataclass(frozen=True)
class RecursionState:
    t: int
    theta: float
    p_bar: float
    e: float
    phi: float
    x: float
    z: float = float("nan")
    clipped: bool = False

    @classmethod
    def initial(cls, y1: float) -> "RecursionState":
        y1 = float(y1)
        return cls(1, 0.0, 0.0, y1, y1, y1, y1)


@dataclass(frozen=True)
class MonitorConfig:
    enabled: bool = False
    k_star_cap: float = 0.99

    def __post_init__(self):
        if not 0.0 < self.k_star_cap < 1.0:
            raise ValueError("k_star_cap must lie in (0, 1)")

    @classmethod
    def default_for(cls, beta: float) -> "MonitorConfig":
        """Clipping on for beta > 0, off for PLR."""
        return cls(enabled=beta > 0)


def _check_beta(beta):
    if not 0.0 <= beta <= 1.0:
        raise DomainError("beta must lie in [0, 1]")
    return float(beta)


def step(prev: RecursionState, y_t: float, beta: float, monitor: MonitorConfig = MonitorConfig()) -> RecursionState:
    """Advance the recursion one observation."""
    t = prev.t + 1
    th = prev.theta
    p = prev.p_bar + (prev.phi * prev.phi - prev.p_bar) / t
    if p == 0.0:
        raise ZeroDivisionError(f"P_bar is zero at t={t} (y_1 = 0?)")
    e = y_t - th * prev.e
    theta = th + prev.phi * e / (t * p)
    x = y_t - beta * th * prev.x
    phi = x - th * prev.phi
    # = e + th * prev.phi; this form gives z = y exactly when beta = 0 (e = phi)
    z = y_t - th * (prev.e - prev.phi)
    clipped = False
    if monitor.enabled and abs(theta) > monitor.k_star_cap:
        theta = math.copysign(monitor.k_star_cap, theta)
        clipped = True
    return RecursionState(t, theta, p, e, phi, x, z, clipped)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Stored recursion output; element i of each array belongs to t = i + 1."""

    theta: np.ndarray
    p_bar: np.ndarray
    e: np.ndarray
    phi: np.ndarray
    x: np.ndarray
    z: np.ndarray
    clip_events: tuple
    beta: float
    monitor: MonitorConfig
    y: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return len(self.theta)

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, len(self) + 1)

    @property
    def states(self) -> list:
        clipped = set(self.clip_events)
        return [
            RecursionState(i + 1, *map(float, (self.theta[i], self.p_bar[i], self.e[i], self.phi[i], self.x[i], self.z[i])),
                           clipped=(i + 1) in clipped)
            for i in range(len(self))
        ]

    @property
    def k_star(self) -> int:
        """Empirical k*: one past the last clip, and past any excursion outside the domain."""
        k = self.clip_events[-1] + 1 if self.clip_events else 0
        out = np.flatnonzero(~(np.abs(self.theta) <= THETA_LIMIT))
        if len(out):
            k = max(k, int(out[-1]) + 1)
        return k

    def to_csv(self, path, stride: int = 1) -> None:
        clipped = np.zeros(len(self), dtype=int)
        if self.clip_events:
            clipped[np.asarray(self.clip_events) - 1] = 1
        idx = _strided(len(self), stride)
        cols = (self.theta, self.p_bar, self.e, self.phi, self.x, self.z)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "theta", "p_bar", "e", "phi", "x", "z", "clipped"])
            for i in idx:
                w.writerow([i + 1, *(format(c[i], ".17g") for c in cols), clipped[i]])


def _strided(n: int, stride: int) -> np.ndarray:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    idx = np.arange(0, n, stride)
    return idx if idx[-1] == n - 1 else np.append(idx, n - 1)


def run(y, beta: float, monitor: MonitorConfig | None = None) -> Trajectory:
    """Fold :func:`step` over the series ``y``.

    The loop is inlined on plain floats for speed; it performs the same
    operations in the same order as ``step``.
    """
    y = np.asarray(getattr(y, "y", y), dtype=float)
    beta = _check_beta(beta)
    if monitor is None:
        monitor = MonitorConfig.default_for(beta)
    T = len(y)
    if T < 2:
        raise ValueError("T must be at least 2")
    if y[0] == 0.0:
        raise ValueError("y_1 must be nonzero")
    out = np.empty((6, T))
    th, p, e, phi, x = 0.0, 0.0, y[0], y[0], y[0]
    out[:, 0] = (th, p, e, phi, x, e)
    cap = monitor.k_star_cap if monitor.enabled else math.inf
    clips = []
    yl = y.tolist()
    for i in range(1, T):
        t = i + 1
        yt = yl[i]
        p = p + (phi * phi - p) / t
        if p == 0.0:
            raise ZeroDivisionError(f"P_bar is zero at t={t}")
        e_new = yt - th * e
        th_new = th + phi * e_new / (t * p)
        x = yt - beta * th * x
        z = yt - th * (e - phi)
        phi = x - th * phi
        e = e_new
        if abs(th_new) > cap:
            th_new = math.copysign(cap, th_new)
            clips.append(t)
        th = th_new
        out[:, i] = (th, p, e, phi, x, z)
    return Trajectory(*out, clip_events=tuple(clips), beta=beta, monitor=monitor, y=y)


def regression_form(traj: Trajectory) -> np.ndarray:
    """theta_t = sum_{s<=t} z_s phi_{s-1} / sum_{s<=t} phi_{s-1}^2, s from 2.

    Accumulated afresh from the stored phi and z series. Element 0 (t = 1)
    is NaN.
    """
    if traj.clip_events:
        raise ClippedTrajectoryError(f"trajectory has {len(traj.clip_events)} clip events")
    num = np.cumsum(traj.z[1:] * traj.phi[:-1])
    den = np.cumsum(traj.phi[:-1] ** 2)
    return np.concatenate(([np.nan], num / den))


# -- kernel coefficients ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelTables:
    """Coefficient tables of shape (T, J + 1); row i belongs to t = i + 1.

    ``tail`` maps each series name to an upper bound on sum_{j>J} |kappa_j(t)|
    that holds for all t (infinite if the trajectory leaves |theta| < 1).
    """

    e: np.ndarray
    x: np.ndarray
    phi: np.ndarray
    z: np.ndarray
    kappa: np.ndarray
    tail: dict

    @property
    def J(self) -> int:
        return self.e.shape[1] - 1

    def reconstruct(self, name: str, innovations: np.ndarray, burn_in: int) -> np.ndarray:
        """sum_{j<=J} kappa_j(t) eps_{t-j}, with zero innovations before the burn-in."""
        tab = getattr(self, name)
        T, n = tab.shape
        padded = np.concatenate((np.zeros(n), innovations))
        out = np.empty(T)
        for i in range(T):
            pos = n + burn_in + i  # index of eps_t in padded
            out[i] = tab[i] @ padded[pos - n + 1 : pos + 1][::-1]
        return out


def kernel_coefficients(traj: Trajectory, model: SpectralModel, J: int) -> KernelTables:
    """Coefficients of e_t, x_t, phi_t, z_t as linear filters of the innovations.

    Built by the recursions (row t from row t-1, shifted one lag)

        kappa^e(t)_j   = kappa_j - theta_{t-1} kappa^e(t-1)_{j-1}
        kappa^x(t)_j   = kappa_j - beta theta_{t-1} kappa^x(t-1)_{j-1}
        kappa^phi(t)_j = kappa^x(t)_j - theta_{t-1} kappa^phi(t-1)_{j-1}
        kappa^z(t)_j   = kappa^e(t)_j + theta_{t-1} kappa^phi(t-1)_{j-1}

    starting from kappa^e(1) = kappa^x(1) = kappa^phi(1) = kappa^z(1) = kappa.
    Unrolling the first gives the closed sum over products of past thetas.
    """
    if J < 0:
        raise ValueError("J must be nonnegative")
    kap_long = model.kappa_until(LONG_TAIL)
    tail_k = float(np.sum(np.abs(kap_long[J + 1 :]))) + LONG_TAIL
    if tail_k >= KAPPA_TAIL:
        raise ValueError(f"J = {J} too small: kappa tail {tail_k:.3g} >= {KAPPA_TAIL:g}")
    kappa = model.kappa(J + 1)
    T = len(traj)
    th = traj.theta
    b = traj.beta
    E = np.empty((T, J + 1))
    X = np.empty_like(E)
    P = np.empty_like(E)
    Z = np.empty_like(E)
    E[0] = X[0] = P[0] = Z[0] = kappa
    for i in range(1, T):
        a = th[i - 1]
        E[i] = kappa
        E[i, 1:] -= a * E[i - 1, :-1]
        X[i] = kappa
        X[i, 1:] -= b * a * X[i - 1, :-1]
        P[i] = X[i]
        P[i, 1:] -= a * P[i - 1, :-1]
        Z[i] = E[i]
        Z[i, 1:] += a * P[i - 1, :-1]
    return KernelTables(E, X, P, Z, kappa, _kernel_tails(kap_long, float(np.max(np.abs(th))), b, J))


def _kernel_tails(kap: np.ndarray, rho: float, beta: float, J: int) -> dict:
    """Tail bounds from dominating sequences |kappa| * (geometric in rho).

    ``kap`` omits a tail of mass below LONG_TAIL, which is added back
    multiplied by the l1 norm of the corresponding theta filter.
    """
    if rho >= 1.0:
        return dict.fromkeys(("e", "x", "phi", "z"), math.inf)
    # extend far enough for the geometric factors to die out
    n = max(len(kap), J + 2) + int(math.ceil(40.0 / max(1e-12, -math.log(max(rho, 1e-300)))))
    ak = np.zeros(n)
    ak[: len(kap)] = np.abs(kap)

    def conv_geo(a, r):
        out = np.empty_like(a)
        acc = 0.0
        for j in range(len(a)):
            acc = a[j] + r * acc
            out[j] = acc
        return out

    e = conv_geo(ak, rho)
    x = conv_geo(ak, beta * rho)
    phi = conv_geo(x, rho)
    z = e.copy()
    z[1:] += rho * phi[:-1]
    g_e, g_x = 1.0 / (1.0 - rho), 1.0 / (1.0 - beta * rho)
    slack = {"e": g_e, "x": g_x, "phi": g_e * g_x, "z": g_e + rho * g_e * g_x}
    res = {}
    for name, seq in (("e", e), ("x", x), ("phi", phi), ("z", z)):
        # sum beyond n bounded by the geometric remainder of the last entry
        rem = seq[-1] * rho / (1.0 - rho) if rho > 0 else 0.0
        res[name] = float(np.sum(seq[J + 1 :]) + rem + LONG_TAIL * slack[name])
    return res


# -- approximating sequence and Robbins-Monro decomposition -----------------


def _prepare(theta_series, k_star: int, beta: float):
    th = np.asarray(theta_series, dtype=float)
    if k_star < 0 or k_star >= len(th):
        raise ValueError("k_star must satisfy 0 <= k_star < len(theta_series)")
    beta = _check_beta(beta)
    tail = th[k_star:]
    if not np.all(np.abs(tail) <= THETA_LIMIT):
        bad = k_star + int(np.flatnonzero(~(np.abs(tail) <= THETA_LIMIT))[0]) + 1
        raise DomainError(f"|theta_{bad}| exceeds {THETA_LIMIT}; increase k_star")
    return tail, beta


def approximating_sequence(theta_series, k_star: int, model: SpectralModel, beta: float,
                           quad: QuadratureSpec = spectral.DEFAULT_QUADRATURE) -> np.ndarray:
    """theta-hat_t = sum_{s<=t} Z(theta_{s+k*}) / sum_{s<=t} Phi(theta_{s+k*}).

    ``theta_series[i]`` is theta_{i+1}; element t-1 of the result is
    theta-hat_t for t = 1 .. T - k*.
    """
    tail, beta = _prepare(theta_series, k_star, beta)
    phi2, zphi = spectral.moments(model, tail, beta, quad)
    return np.cumsum(zphi) / np.cumsum(phi2)


@dataclass(frozen=True, eq=False)
class RmDecomposition:
    """delta, gamma and theta-hat indexed like :func:`approximating_sequence`.

    gamma[0] is NaN (gamma_t starts at t = 2), as is any gamma_t whose
    theta-hat_{t-1} lies outside the domain of f.
    """

    delta: np.ndarray
    gamma: np.ndarray
    theta_hat: np.ndarray
    k_star: int
    k_bound: float
    residual: float

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, len(self.delta) + 1)

    def to_csv(self, path, theta_series=None, stride: int = 1) -> None:
        idx = _strided(len(self.delta), stride)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "theta_hat", "delta", "t_delta", "gamma"])
            for i in idx:
                t = i + 1
                w.writerow([t, *(format(v, ".17g") for v in
                                 (self.theta_hat[i], self.delta[i], t * self.delta[i], self.gamma[i]))])


def rm_decomposition(theta_series, k_star: int, model: SpectralModel, beta: float,
                     quad: QuadratureSpec = spectral.DEFAULT_QUADRATURE,
                     tol: float = RECONSTRUCTION_TOL) -> RmDecomposition:
    """Write theta-hat as a perturbed Robbins-Monro recursion.

    delta_t = 1 / sum_{s<=t} Phi(theta_{s+k*}) and
    gamma_t = f(theta-hat_{t-1}) - f(theta_{t+k*}) + (theta_{t+k*} - theta-hat_{t-1}) Phi(theta_{t+k*}),
    and checks theta-hat_t = theta-hat_{t-1} - delta_t f(theta-hat_{t-1}) + delta_t gamma_t
    at every step. The mean field is evaluated by its own quadrature, not by
    the identity Z = theta Phi - f, so the check is not tautological.
    """
    tail, beta = _prepare(theta_series, k_star, beta)
    phi2, zphi = spectral.moments(model, tail, beta, quad)
    P = np.cumsum(phi2)
    theta_hat = np.cumsum(zphi) / P
    delta = 1.0 / P
    f_theta = _f_batch(model, tail, beta, quad)
    prev = theta_hat[:-1]
    ok = np.abs(prev) <= THETA_LIMIT
    f_hat = np.full(len(prev), np.nan)
    if ok.any():
        f_hat[ok] = _f_batch(model, prev[ok], beta, quad)
    gamma = np.full(len(tail), np.nan)
    gamma[1:] = f_hat - f_theta[1:] + (tail[1:] - prev) * phi2[1:]
    recon = prev - delta[1:] * f_hat + delta[1:] * gamma[1:]
    err = np.abs(recon - theta_hat[1:])
    residual = float(np.nanmax(err)) if ok.any() else 0.0
    if residual > tol:
        t_bad = int(np.nanargmax(err)) + 2
        raise ReconstructionError(f"theta-hat reconstruction off by {residual:.3g} at t={t_bad}")
    return RmDecomposition(delta, gamma, theta_hat, k_star, float(np.max(np.abs(tail))), residual)


def _f_batch(model, thetas, beta, quad):
    key = np.round(thetas, 12)
    uniq, inv = np.unique(key, return_inverse=True)
    return np.asarray(spectral.f_value(model, uniq, beta, quad), dtype=float).reshape(-1)[inv]


def t_delta_bracket(model: SpectralModel, k_bound: float,
                    quad: QuadratureSpec = spectral.DEFAULT_QUADRATURE) -> tuple:
    """Bounds on t delta_t when every |theta_{s+k*}| <= k_bound.

    Since Phi lies in [2 pi m / (1+K)^4, 2 pi M / (1-K)^4] and t delta_t is
    the reciprocal of an average of Phi values, t delta_t lies in the
    reciprocal interval.
    """
    lo, hi = spectral.phi_moment_bracket(model, k_bound, quad)
    return 1.0 / hi, 1.0 / lo
