"""Closed-form mean field for ARMA data via residues inside the unit circle.

With h(z) = (1 + theta z)(1 + beta theta z), the contour form of the mean
field is f(theta, beta) = -sum of residues of

    w(z) = sigma2 z^{1+dphi-deta} (z + beta theta) eta(z) [z^deta eta(1/z)]
           / ( h(z) [z^2 h(1/z)] phi(z) [z^dphi phi(1/z)] )

at its poles in |z| < 1: -theta, -beta theta, the reciprocals of the AR roots,
and 0 when 1 + dphi - deta < 0.

Residues are computed from truncated Taylor series at each pole: the
numerator polynomial is shifted exactly and every remaining denominator factor
is a linear form whose reciprocal has a closed-form series.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import polynomials as poly
from .spectral import THETA_LIMIT, Arma, DomainError, QuadratureSpec, DEFAULT_QUADRATURE, f_value

MERGE_TOL = 1e-9
NEAR_TOL = 1e-5
IMAG_TOL = 1e-10


class PoleCollisionError(ArithmeticError):
    """Two poles fall within the merge tolerance while merging is disabled."""


class ResidueFallbackWarning(UserWarning):
    """Poles were too close for stable residues; quadrature was used instead."""


@dataclass(frozen=True)
class Pole:
    location: complex
    order: int


@dataclass(frozen=True)
class PoleSet:
    poles: tuple

    def __len__(self):
        return len(self.poles)

    def __iter__(self):
        return iter(self.poles)

    @property
    def total_order(self) -> int:
        return sum(p.order for p in self.poles)

    def min_separation(self) -> float:
        locs = [p.location for p in self.poles]
        d = [abs(a - b) for i, a in enumerate(locs) for b in locs[i + 1 :]]
        return min(d) if d else math.inf


@dataclass(frozen=True)
class _Factor:
    """Linear denominator factor a + b z."""

    a: complex
    b: complex


def _check(model, theta, beta):
    if not isinstance(model, Arma):
        raise TypeError("residue evaluation needs an Arma model")
    if not abs(theta) <= THETA_LIMIT:
        raise DomainError(f"|theta| must be at most {THETA_LIMIT}")
    if not 0.0 <= beta <= 1.0:
        raise DomainError("beta must lie in [0, 1]")


def _inside_roots(model: Arma, theta: float, beta: float) -> list:
    """Unmerged interior zeros of the denominator of w, with multiplicity.

    Each entry is (location, exact): -theta, -beta theta and 0 are exact
    functions of the inputs, reciprocal AR roots carry rounding error.
    """
    phi = model.ar_poly
    eta = model.ma_poly
    d_phi = len(phi) - 1
    d_eta = len(eta) - 1
    locs = [(complex(-theta), True), (complex(-beta * theta), True)]
    # zeros of z^dphi phi(1/z) are the reciprocal AR roots
    locs.extend((complex(r), False) for r in poly.roots(poly.reflect(phi)))
    locs.extend([(0j, True)] * max(0, -(1 + d_phi - d_eta)))
    return locs


def _merge(locs: list, merge: bool, tol: float = MERGE_TOL) -> list:
    """Group coincident locations into poles of higher order.

    Identical locations always merge. Locations within ``tol`` merge only
    when one of them is a computed AR root (rounding noise); two distinct
    exact locations are kept apart, which sends the evaluation to the
    quadrature fallback. With ``merge`` off any pair within ``tol`` is an error.
    """
    poles: list = []
    exact: list = []
    for z, ex in locs:
        for i, p in enumerate(poles):
            if abs(p.location - z) <= tol:
                if not merge:
                    raise PoleCollisionError(f"poles {p.location} and {z} are within {tol}")
                if p.location == z or not (ex and exact[i]):
                    poles[i] = Pole(p.location, p.order + 1)
                    exact[i] = exact[i] and ex
                    break
        else:
            poles.append(Pole(z, 1))
            exact.append(ex)
    return poles


def enumerate_poles(model: Arma, theta: float, beta: float, merge: bool = True) -> PoleSet:
    """Candidate poles of w inside the unit circle, coincident ones merged.

    Numerator cancellations are not applied, so an entry may be removable
    (the factor z + beta theta of the numerator cancels the pole at
    -beta theta); the residue formula stays valid for any order at least
    the true one, and a removable point contributes zero.
    """
    _check(model, theta, beta)
    poles = _merge(_inside_roots(model, theta, beta), merge)
    for p in poles:
        if abs(p.location) >= 1.0 - 1e-9:
            raise DomainError(f"pole {p.location} is not inside the unit circle")
    poles.sort(key=lambda p: (p.location.real, p.location.imag))
    return PoleSet(tuple(poles))


def _series_inverse_linear(a: complex, b: complex, z0: complex, n: int) -> np.ndarray:
    """Taylor coefficients of 1/(a + b z) about z0, up to u^(n-1)."""
    c = a + b * z0
    k = np.arange(n)
    return (-b) ** k / c ** (k + 1)


def _conv(x, y, n):
    return np.convolve(x, y)[:n]


def _residue(numer: np.ndarray, factors: list, pole: Pole) -> complex:
    """Residue at ``pole`` of numer(z) / prod(factors), where factors
    include ``pole.order`` copies of (z - location)."""
    z0 = pole.location
    n = pole.order
    series = poly.shift(numer, z0)[:n]
    if len(series) < n:
        series = np.concatenate([series, np.zeros(n - len(series), dtype=complex)])
    skipped = 0
    for f in factors:
        if f.b != 0 and skipped < n and abs(f.a + f.b * z0) <= MERGE_TOL * max(1.0, abs(f.b)):
            # one of the (z - z0) factors absorbed into (z - z0)^J
            skipped += 1
            continue
        series = _conv(series, _series_inverse_linear(f.a, f.b, z0, n), n)
    if skipped != n:
        raise ArithmeticError(f"pole order bookkeeping failed at {z0}")
    # factors merged at a nearby (not identical) location
    return complex(series[n - 1])


def _build(model: Arma, theta: float, beta: float):
    phi = model.ar_poly.astype(float)
    eta = model.ma_poly.astype(float)
    d_phi = len(phi) - 1
    d_eta = len(eta) - 1
    power = 1 + d_phi - d_eta
    bt = beta * theta
    numer = model.sigma2 * np.convolve(np.convolve([bt, 1.0], eta), poly.reflect(eta))
    if power > 0:
        numer = np.concatenate([np.zeros(power), numer])
    numer = numer.astype(complex)

    factors = []
    # z^2 h(1/z) = (z + theta)(z + beta theta)
    factors.append(_Factor(theta, 1.0))
    factors.append(_Factor(bt, 1.0))
    # h(z)
    factors.append(_Factor(1.0, theta))
    factors.append(_Factor(1.0, bt))
    recip = poly.roots(poly.reflect(phi))
    for r in recip:
        factors.append(_Factor(-r, 1.0))  # z^dphi phi(1/z), monic
        factors.append(_Factor(1.0, -r))  # phi(z) = prod(1 - r z)
    factors.extend([_Factor(0.0, 1.0)] * max(0, -power))
    return numer, factors


def _relocate(factors, poles):
    """Snap factors (z - z') whose root was merged into a pole onto that pole."""
    out = []
    for f in factors:
        if f.b != 0:
            root = -f.a / f.b
            for p in poles:
                if root != p.location and abs(root - p.location) <= MERGE_TOL and abs(root) < 1:
                    f = _Factor(-p.location * f.b, f.b)
                    break
        out.append(f)
    return out


@dataclass(frozen=True)
class ResidueResult:
    value: float
    imag: float
    poles: PoleSet
    fallback: bool = False


def residue_sum(model: Arma, theta: float, beta: float, merge: bool = True,
                quad: QuadratureSpec = DEFAULT_QUADRATURE) -> ResidueResult:
    """Evaluate f(theta, beta) = -sum Res w, with diagnostics."""
    theta = float(theta)
    beta = float(beta)
    poles = enumerate_poles(model, theta, beta, merge=merge)
    sep = poles.min_separation()
    if sep < NEAR_TOL:
        warnings.warn(
            f"poles separated by {sep:.3g}; using quadrature for theta={theta}, beta={beta}",
            ResidueFallbackWarning,
            stacklevel=2,
        )
        return ResidueResult(float(f_value(model, theta, beta, quad)), 0.0, poles, fallback=True)
    numer, factors = _build(model, theta, beta)
    factors = _relocate(factors, poles.poles)
    total = sum(_residue(numer, factors, p) for p in poles)
    if abs(total.imag) >= IMAG_TOL:
        raise ArithmeticError(f"residue sum has imaginary part {total.imag:.3g}")
    return ResidueResult(-total.real, total.imag, poles)


def f_residue(model: Arma, theta: float, beta: float, merge: bool = True) -> float:
    """Mean field f(theta, beta) for ARMA data from the residue theorem."""
    return residue_sum(model, theta, beta, merge=merge).value
