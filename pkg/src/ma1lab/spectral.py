"""Spectral densities of the data process and the population functionals
integrated against them.

Every functional is an integral over [-pi, pi] of a smooth 2*pi-periodic,
even integrand, evaluated with the equally spaced trapezoid rule on the
half range [0, pi] and node doubling until the change is below ``rel_tol``.

The MA(1) prediction filter enters through |1 + a e^{iw}|^2 with a = theta
and a = beta theta, evaluated in half-angle form (see ``_mod_sq``) so that the
integrands stay accurate as |theta| -> 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from . import polynomials as poly

THETA_LIMIT = 1.0 - 1e-6
_CHUNK = 1 << 21


class DomainError(ValueError):
    """An argument lies outside the domain of a functional."""


class QuadratureError(ArithmeticError):
    """Node doubling did not reach the requested tolerance."""


class ModelError(ValueError):
    """A spectral model violates its invariants."""


# ---------------------------------------------------------------------------
# models


class SpectralModel:
    """Base class for data-generating processes with a spectral density.

    Subclasses are frozen dataclasses, so instances are hashable and can be
    shared freely.
    """

    sigma2: float

    def transfer_sq(self, omega) -> np.ndarray:
        """|kappa(e^{iw})|^2 for the linear representation with kappa_0 = 1."""
        raise NotImplementedError

    def kappa(self, n: int) -> np.ndarray:
        """First ``n`` coefficients of kappa(z)."""
        raise NotImplementedError

    def density(self, omega) -> np.ndarray:
        return self.sigma2 / (2.0 * math.pi) * self.transfer_sq(omega)

    def kappa_until(self, tail_tol: float, max_terms: int = 1 << 16) -> np.ndarray:
        """kappa coefficients truncated so that sum_{j>J} |kappa_j| < tail_tol.

        The tail is estimated from a geometric fit to the last computed block,
        which is conservative for the exponentially decaying sequences of the
        supported models.
        """
        n = 64
        while True:
            k = self.kappa(n)
            a = np.abs(k)
            tail = _geometric_tail(a)
            if tail < tail_tol:
                suffix = np.cumsum(a[::-1])[::-1]
                # smallest J with sum_{j > J}|k_j| + tail < tol
                need = np.nonzero(np.append(suffix[1:], 0.0) + tail < tail_tol)[0]
                return k[: need[0] + 1]
            if n >= max_terms:
                raise ModelError("kappa coefficients decay too slowly to truncate")
            n *= 2

    def to_config(self) -> dict:
        raise NotImplementedError


def _geometric_tail(a: np.ndarray) -> float:
    """Bound on sum_{j >= len(a)} a_j from the decay of the last quarter of a."""
    m = len(a)
    blk = a[3 * m // 4 :]
    last = blk.max()
    if last == 0.0:
        return 0.0
    first = a[m // 2 : 3 * m // 4].max()
    if first == 0.0 or last >= first:
        return math.inf
    # per-step ratio over the block gap, pessimistically rounded up
    r = (last / first) ** (1.0 / (m // 4))
    r = min(1.0, r * 1.05)
    if r >= 1.0:
        return math.inf
    return last * r / (1.0 - r) + blk.sum()


def _check_sigma2(sigma2: float) -> None:
    if not (sigma2 > 0.0 and math.isfinite(sigma2)):
        raise ModelError(f"sigma2 must be positive and finite, got {sigma2}")


@dataclass(frozen=True)
class WhiteNoise(SpectralModel):
    sigma2: float = 1.0

    def __post_init__(self):
        _check_sigma2(self.sigma2)

    def transfer_sq(self, omega):
        return np.ones_like(np.asarray(omega, dtype=float))

    def kappa(self, n):
        k = np.zeros(n)
        k[0] = 1.0
        return k

    def to_config(self):
        return {"kind": "white_noise", "sigma2": self.sigma2}


@dataclass(frozen=True)
class Arma(SpectralModel):
    """ARMA(p, q) data: phi(B) y_t = eta(B) eps_t.

    ``ar`` holds a_1..a_p for phi(z) = 1 - a_1 z - ... - a_p z^p and ``ma``
    holds b_1..b_q for eta(z) = 1 + b_1 z + ... + b_q z^q.
    """

    ar: tuple = ()
    ma: tuple = ()
    sigma2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "ar", tuple(float(a) for a in self.ar))
        object.__setattr__(self, "ma", tuple(float(b) for b in self.ma))
        _check_sigma2(self.sigma2)
        ar_roots = poly.roots(self.ar_poly)
        ma_roots = poly.roots(self.ma_poly)
        if np.any(np.abs(ar_roots) <= 1.0):
            raise ModelError(f"AR polynomial has a root in the closed unit disk: {ar_roots}")
        if np.any(np.abs(ma_roots) <= 1.0):
            raise ModelError(f"MA polynomial has a root in the closed unit disk: {ma_roots}")
        for r in ar_roots:
            if ma_roots.size and np.min(np.abs(ma_roots - r)) < 1e-9:
                raise ModelError(f"AR and MA polynomials share the root {r}")

    @property
    def ar_poly(self) -> np.ndarray:
        return poly.trim(np.concatenate([[1.0], -np.asarray(self.ar, dtype=float)]))

    @property
    def ma_poly(self) -> np.ndarray:
        return poly.trim(np.concatenate([[1.0], np.asarray(self.ma, dtype=float)]))

    def transfer_sq(self, omega):
        z = np.exp(1j * np.asarray(omega, dtype=float))
        return np.abs(poly.polyval(self.ma_poly, z)) ** 2 / np.abs(poly.polyval(self.ar_poly, z)) ** 2

    def kappa(self, n):
        from scipy.signal import lfilter

        impulse = np.zeros(n)
        impulse[0] = 1.0
        return lfilter(self.ma_poly, self.ar_poly, impulse)

    def to_config(self):
        return {"kind": "arma", "ar": list(self.ar), "ma": list(self.ma), "sigma2": self.sigma2}


@dataclass(frozen=True)
class Bloomfield(SpectralModel):
    """Exponential (cepstral) model: g(w) = sigma2/(2 pi) exp(2 sum_m c_m cos(m w)).

    Equivalently kappa(z) = exp(sum_m c_m z^m), so kappa_0 = 1.
    """

    cepstral: tuple = ()
    sigma2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "cepstral", tuple(float(c) for c in self.cepstral))
        _check_sigma2(self.sigma2)
        if not all(math.isfinite(c) for c in self.cepstral):
            raise ModelError("cepstral coefficients must be finite")

    def transfer_sq(self, omega):
        w = np.asarray(omega, dtype=float)
        s = np.zeros_like(w)
        for m, c in enumerate(self.cepstral, start=1):
            s = s + c * np.cos(m * w)
        return np.exp(2.0 * s)

    def kappa(self, n):
        # exp of a power series: n k_n = sum_{j=1}^{n} j c_j k_{n-j}
        jc = [j * c for j, c in enumerate(self.cepstral, start=1)]
        k = np.zeros(n)
        k[0] = 1.0
        for i in range(1, n):
            s = 0.0
            for j in range(1, min(i, len(jc)) + 1):
                s += jc[j - 1] * k[i - j]
            k[i] = s / i
        return k

    def to_config(self):
        return {"kind": "bloomfield", "cepstral": list(self.cepstral), "sigma2": self.sigma2}


def model_from_config(cfg: dict) -> SpectralModel:
    """Build a model from a flat mapping (as produced by ``to_config``)."""
    kind = str(cfg.get("kind", "")).strip().lower().replace("-", "_")
    sigma2 = float(cfg.get("sigma2", 1.0))
    if kind in ("white_noise", "whitenoise", "white"):
        return WhiteNoise(sigma2)
    if kind == "arma":
        return Arma(tuple(_floats(cfg.get("ar", ()))), tuple(_floats(cfg.get("ma", ()))), sigma2)
    if kind == "bloomfield":
        return Bloomfield(tuple(_floats(cfg.get("cepstral", ()))), sigma2)
    raise ModelError(f"unknown model kind {cfg.get('kind')!r}")


def _floats(v) -> list:
    if isinstance(v, str):
        v = v.replace(",", " ").split()
    return [float(x) for x in v]


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureSpec:
    initial_nodes: int = 4096
    rel_tol: float = 1e-10
    max_doublings: int = 8

    def __post_init__(self):
        if self.initial_nodes < 16 or self.initial_nodes % 2:
            raise ValueError("initial_nodes must be an even integer >= 16")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_doublings < 1:
            raise ValueError("max_doublings must be >= 1")


DEFAULT_QUADRATURE = QuadratureSpec()


class SpectralIntegrator:
    """Trapezoid-rule integrals against the density of one model.

    Density values on each node level are cached, so repeated functionals of
    the same model only pay for the integrand.
    """

    def __init__(self, model: SpectralModel, quad: QuadratureSpec = DEFAULT_QUADRATURE):
        self.model = model
        self.quad = quad
        self._levels: dict = {}

    def _level(self, n: int, new_only: bool):
        """Half-range nodes and trapezoid weights for an n-point periodic grid.

        With ``new_only`` the nodes are those absent from the n/2 grid (odd
        multiples of 2 pi / n in (0, pi)), weighted for the n-point rule.
        """
        key = (n, new_only)
        lvl = self._levels.get(key)
        if lvl is None:
            h = 2.0 * math.pi / n
            if new_only:
                k = np.arange(1, n // 2, 2)
                w = np.full(k.shape, 2.0 * h)
            else:
                k = np.arange(0, n // 2 + 1)
                w = np.full(k.shape, 2.0 * h)
                w[0] = w[-1] = h
            omega = h * k
            g = self.model.density(omega)
            lvl = (_Nodes(omega), w * g)
            self._levels[key] = lvl
        return lvl

    def integrate(self, integrand: Callable, thetas, beta: float = 0.0, levels: np.ndarray | None = None) -> np.ndarray:
        """Integrate ``integrand(nodes, theta, beta) * g(w)`` for each theta.

        ``integrand`` receives a :class:`_Nodes` whose arrays have shape
        (1, n) and ``theta`` with shape (m, 1), and must broadcast. Returns an
        array of shape (m,). If ``levels`` is given it receives the node
        count at which each value converged.
        """
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        out = np.empty(thetas.shape)
        n0 = self.quad.initial_nodes
        s_prev = self._sum(integrand, thetas, beta, n0, new_only=False)
        active = np.arange(len(thetas))
        n = n0
        for _ in range(self.quad.max_doublings):
            n *= 2
            s_new, a_new = self._sum(integrand, thetas[active], beta, n, new_only=True, with_abs=True)
            s_cur = 0.5 * s_prev[0] + s_new
            a_cur = 0.5 * s_prev[1] + a_new
            done = np.abs(s_cur - s_prev[0]) <= self.quad.rel_tol * np.maximum(np.abs(s_cur), a_cur)
            out[active[done]] = s_cur[done]
            if levels is not None:
                levels[active[done]] = n
            keep = ~done
            active = active[keep]
            s_prev = (s_cur[keep], a_cur[keep])
            if active.size == 0:
                return out
        bad = thetas[active]
        raise QuadratureError(
            f"trapezoid rule did not converge after {self.quad.max_doublings} doublings "
            f"for theta in {bad[:5]}{'...' if bad.size > 5 else ''}"
        )

    def _sum(self, integrand, thetas, beta, n, new_only, with_abs=True):
        nodes, wg = self._level(n, new_only)
        m = len(thetas)
        s = np.empty(m)
        a = np.empty(m)
        step = max(1, _CHUNK // max(1, wg.size))
        for i in range(0, m, step):
            th = thetas[i : i + step, None]
            vals = integrand(nodes, th, beta) * wg[None, :]
            s[i : i + step] = vals.sum(axis=1)
            a[i : i + step] = np.abs(vals).sum(axis=1)
        return (s, a) if with_abs else s


class _Nodes:
    """Trigonometric node data, each as a (1, n) row."""

    def __init__(self, omega):
        self.omega = omega[None, :]
        self.cos = np.cos(self.omega)
        self.cos_half_sq = np.cos(0.5 * self.omega) ** 2
        self.sin_half_sq = np.sin(0.5 * self.omega) ** 2


def _mod_sq(nodes, a):
    """|1 + a e^{iw}|^2 without cancellation near |a| -> 1.

    Uses (1 - a)^2 + 4 a cos^2(w/2) for a >= 0 and
    (1 + a)^2 - 4 a sin^2(w/2) for a < 0; both are sums of nonnegative terms.
    """
    pos = (1.0 - a) ** 2 + 4.0 * a * nodes.cos_half_sq
    neg = (1.0 + a) ** 2 - 4.0 * a * nodes.sin_half_sq
    return np.where(a >= 0.0, pos, neg)


def _filter_sq(nodes, theta, beta):
    """|(1 + theta e^{iw})(1 + beta theta e^{iw})|^2."""
    if beta == 0.0:
        return _mod_sq(nodes, theta)
    if beta == 1.0:
        return _mod_sq(nodes, theta) ** 2
    return _mod_sq(nodes, theta) * _mod_sq(nodes, beta * theta)


def _loss_integrand(nodes, theta, beta):
    return 1.0 / _mod_sq(nodes, theta)


def _f_integrand(nodes, theta, beta):
    return -(nodes.cos + beta * theta) / _filter_sq(nodes, theta, beta)


def _phi2_integrand(nodes, theta, beta):
    return 1.0 / _filter_sq(nodes, theta, beta)


def _zphi_integrand(nodes, theta, beta):
    return (nodes.cos + (1.0 + beta) * theta) / _filter_sq(nodes, theta, beta)


@lru_cache(maxsize=64)
def integrator(model: SpectralModel, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> SpectralIntegrator:
    """Shared integrator per (model, quadrature spec)."""
    return SpectralIntegrator(model, quad)


# ---------------------------------------------------------------------------
# functionals


_INTEGRANDS = {
    "loss": _loss_integrand,
    "f": _f_integrand,
    "phi2": _phi2_integrand,
    "zphi": _zphi_integrand,
}


class FixedLevelFunctional:
    """A functional of theta evaluated on a node grid certified in advance.

    The trapezoid level is the largest one needed by the adaptive rule on a
    grid of theta values spanning [-bound, bound]; since the integrands get
    harder monotonically toward |theta| = 1, that level serves every
    |theta| <= bound. Values outside the bound go through the adaptive rule.
    Used where the same functional is called many times (Robbins-Monro runs).
    """

    def __init__(self, model: SpectralModel, kind: str, beta: float = 0.0,
                 quad: QuadratureSpec = DEFAULT_QUADRATURE, bound: float = 0.99):
        self.integrand = _INTEGRANDS[kind]
        self.beta = _check_beta(beta)
        self.bound = float(bound)
        self.integ = integrator(model, quad)
        probe = np.linspace(-self.bound, self.bound, 41)
        lv = np.zeros(probe.shape, dtype=int)
        self.integ.integrate(self.integrand, probe, self.beta, levels=lv)
        self.nodes_count = int(lv.max())

    def __call__(self, theta):
        th = _check_theta(theta)
        flat = np.atleast_1d(th).ravel()
        if np.all(np.abs(flat) <= self.bound):
            vals = self.integ._sum(self.integrand, flat, self.beta, self.nodes_count, new_only=False, with_abs=False)
        else:
            vals = self.integ.integrate(self.integrand, flat, self.beta)
        return _scalar_or_array(theta, vals)


def _check_omega(omega):
    w = np.asarray(omega, dtype=float)
    if np.any(np.abs(w) > math.pi):
        raise DomainError("omega must lie in [-pi, pi]")
    return w


def _check_theta(theta):
    th = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(th)):
        raise DomainError("theta must be finite")
    if np.any(np.abs(th) > THETA_LIMIT):
        raise DomainError(f"|theta| must be at most {THETA_LIMIT}")
    return th


def _check_beta(beta):
    if not 0.0 <= beta <= 1.0:
        raise DomainError("beta must lie in [0, 1]")
    return float(beta)


def _scalar_or_array(theta, values):
    return float(values[0]) if np.ndim(theta) == 0 else values.reshape(np.shape(theta))


def density(model: SpectralModel, omega):
    """Spectral density g_y(w) = sigma2/(2 pi) |kappa(e^{iw})|^2."""
    w = _check_omega(omega)
    # evaluate on |w| so the result is exactly even
    g = model.density(np.abs(w))
    return float(g) if np.ndim(omega) == 0 else g


def autocovariance(model: SpectralModel, lag: int, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """gamma_j = integral of cos(j w) g(w) over [-pi, pi]."""
    lag = int(lag)
    if lag < 0:
        raise DomainError("lag must be nonnegative")
    n0 = quad.initial_nodes
    while n0 < 8 * (lag + 1):
        n0 *= 2
    if n0 != quad.initial_nodes:
        quad = QuadratureSpec(n0, quad.rel_tol, quad.max_doublings)
    integ = integrator(model, quad)
    return float(integ.integrate(lambda nodes, th, b: np.cos(lag * nodes.omega) + 0.0 * th, [0.0])[0])


def loss(model: SpectralModel, theta, quad: QuadratureSpec = DEFAULT_QUADRATURE):
    """Mean squared one-step prediction error of the MA(1) predictor."""
    th = _check_theta(theta)
    vals = integrator(model, quad).integrate(_loss_integrand, th.ravel())
    return _scalar_or_array(theta, vals)


def f_value(model: SpectralModel, theta, beta: float, quad: QuadratureSpec = DEFAULT_QUADRATURE):
    """Mean field f(theta, beta) = -E[phi_{t-1}(theta) e_t(theta)]."""
    th = _check_theta(theta)
    beta = _check_beta(beta)
    vals = integrator(model, quad).integrate(_f_integrand, th.ravel(), beta)
    return _scalar_or_array(theta, vals)


def phi_second_moment(model: SpectralModel, theta, beta: float, quad: QuadratureSpec = DEFAULT_QUADRATURE):
    """E[phi_t(theta)^2] for the doubly filtered regressor."""
    th = _check_theta(theta)
    beta = _check_beta(beta)
    vals = integrator(model, quad).integrate(_phi2_integrand, th.ravel(), beta)
    return _scalar_or_array(theta, vals)


def z_phi_cross_moment(model: SpectralModel, theta, beta: float, quad: QuadratureSpec = DEFAULT_QUADRATURE):
    """E[z_t(theta) phi_{t-1}(theta)]."""
    th = _check_theta(theta)
    beta = _check_beta(beta)
    vals = integrator(model, quad).integrate(_zphi_integrand, th.ravel(), beta)
    return _scalar_or_array(theta, vals)


def loss_derivative(model: SpectralModel, theta, quad: QuadratureSpec = DEFAULT_QUADRATURE):
    """dL/dtheta, which equals 2 f(theta, 1)."""
    v = f_value(model, theta, 1.0, quad)
    return 2.0 * v


@dataclass(frozen=True)
class DensityBounds:
    lower: float
    upper: float
    raw_min: float
    raw_max: float


def density_bounds(model: SpectralModel, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> DensityBounds:
    """Grid-scanned m <= g <= M with 0.99 / 1.01 slack on the reported bounds."""
    n = 8 * quad.initial_nodes
    g = model.density(np.linspace(0.0, math.pi, n + 1))
    lo, hi = float(g.min()), float(g.max())
    if not lo > 0.0:
        raise ModelError("spectral density is not bounded away from zero")
    return DensityBounds(0.99 * lo, 1.01 * hi, lo, hi)


def phi_moment_bracket(model: SpectralModel, k_star: float, quad: QuadratureSpec = DEFAULT_QUADRATURE):
    """Bounds on E[phi_t(theta)^2] valid for all |theta| <= k_star."""
    b = density_bounds(model, quad)
    return (2.0 * math.pi * b.lower / (1.0 + k_star) ** 4, 2.0 * math.pi * b.upper / (1.0 - k_star) ** 4)


def moments(model: SpectralModel, thetas, beta: float, quad: QuadratureSpec = DEFAULT_QUADRATURE):
    """(E[phi^2], E[z phi_{-1}]) for a batch of theta values.

    Values are computed once per distinct theta rounded to 1e-12.
    """
    th = _check_theta(thetas).ravel()
    beta = _check_beta(beta)
    key = np.round(th, 12)
    uniq, inv = np.unique(key, return_inverse=True)
    integ = integrator(model, quad)
    phi2 = integ.integrate(_phi2_integrand, uniq, beta)
    zphi = integ.integrate(_zphi_integrand, uniq, beta)
    return phi2[inv], zphi[inv]
