"""Small polynomial helpers shared by the spectral and residue modules.

Coefficient sequences are stored in ascending order: ``c[0] + c[1] z + ...``.
"""

from __future__ import annotations

import numpy as np


def trim(coeffs, tol: float = 0.0) -> np.ndarray:
    """Drop trailing (highest-degree) coefficients whose magnitude is <= tol."""
    c = np.atleast_1d(np.asarray(coeffs))
    n = len(c)
    while n > 1 and abs(c[n - 1]) <= tol:
        n -= 1
    return c[:n].copy()


def degree(coeffs) -> int:
    return len(trim(coeffs)) - 1


def polyval(coeffs, z):
    """Evaluate an ascending-order polynomial by Horner's rule."""
    c = np.asarray(coeffs)
    z = np.asarray(z)
    out = np.zeros(np.broadcast(z).shape, dtype=np.result_type(c, z))
    for a in c[::-1]:
        out = out * z + a
    return out


def polyder(coeffs) -> np.ndarray:
    c = np.asarray(coeffs)
    if len(c) <= 1:
        return np.zeros(1, dtype=c.dtype)
    return c[1:] * np.arange(1, len(c))


def roots(coeffs, polish: bool = True) -> np.ndarray:
    """Roots of an ascending-order polynomial.

    Companion-matrix eigenvalues (via :func:`numpy.roots`), each refined by a
    single Newton step when that step lowers the residual.
    """
    c = trim(coeffs)
    if len(c) <= 1:
        return np.zeros(0, dtype=complex)
    # a subnormal leading coefficient sends a root to infinity; that is the
    # right answer for the magnitude checks callers make
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        r = np.roots(c[::-1]).astype(complex)
        if polish:
            dc = polyder(c)
            p = polyval(c, r)
            dp = polyval(dc, r)
            ok = (dp != 0) & np.isfinite(r)
            new = r.copy()
            new[ok] = r[ok] - p[ok] / dp[ok]
            # keep the step only where it helps (clustered roots can overshoot)
            better = ok & (np.abs(polyval(c, new)) < np.abs(p))
            r[better] = new[better]
    return r


def reflect(coeffs) -> np.ndarray:
    """Coefficients of ``z**d * p(1/z)`` where d is the degree of p."""
    return trim(coeffs)[::-1].copy()


def shift(coeffs, z0) -> np.ndarray:
    """Taylor coefficients of p about z0: p(z0 + u) = sum_k out[k] u**k."""
    c = np.asarray(coeffs, dtype=complex)
    n = len(c)
    out = c.copy()
    # repeated synthetic division
    for k in range(n):
        for j in range(n - 2, k - 1, -1):
            out[j] += z0 * out[j + 1]
    return out
