"""Zero sets of the mean field and minimizers of the prediction-error loss.

Both are found by scanning a uniform theta grid, bracketing sign changes and
refining each bracket with Brent's method. Because f(theta, beta) tends to
-inf at theta -> -1 and +inf at theta -> 1, the scan always sees at least
one sign change.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .spectral import DEFAULT_QUADRATURE, QuadratureSpec, SpectralModel, f_value, loss

EDGE = 1e-4


class NoSignChangeError(ArithmeticError):
    """The scan found no sign change of f; the model or quadrature is broken."""


@dataclass(frozen=True)
class Root:
    theta: float
    bracket: tuple
    residual: float


@dataclass(frozen=True)
class ZeroSet:
    roots: tuple
    beta: float
    grid_points: int
    suspected_tangential: tuple = ()

    @property
    def thetas(self) -> np.ndarray:
        return np.array([r.theta for r in self.roots])

    def __len__(self):
        return len(self.roots)

    def distance(self, theta) -> np.ndarray | float:
        """Distance from theta (scalar or array) to the set."""
        d = np.min(np.abs(np.subtract.outer(np.asarray(theta, dtype=float), self.thetas)), axis=-1)
        return float(d) if np.ndim(d) == 0 else d

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["beta", "theta", "bracket_lo", "bracket_hi", "residual"])
            for r in self.roots:
                w.writerow([_fmt(self.beta), _fmt(r.theta), _fmt(r.bracket[0]), _fmt(r.bracket[1]), _fmt(r.residual)])


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _grid(grid_points: int) -> np.ndarray:
    if grid_points < 3:
        raise ValueError("grid_points must be at least 3")
    return np.linspace(-1.0 + EDGE, 1.0 - EDGE, grid_points)


def find_zero_set(
    model: SpectralModel,
    beta: float,
    grid_points: int = 2001,
    root_tol: float = 1e-10,
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
) -> ZeroSet:
    """All sign-change zeros of f(., beta) on [-1 + 1e-4, 1 - 1e-4]."""
    grid = _grid(grid_points)
    vals = f_value(model, grid, beta, quad)

    def fun(th):
        return f_value(model, th, beta, quad)

    roots = []
    for i in range(len(grid) - 1):
        a, b = grid[i], grid[i + 1]
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            roots.append(Root(float(a), (float(a), float(a)), 0.0))
            continue
        if fa * fb < 0.0:
            r = brentq(fun, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            res = fun(r)
            if not abs(res) < root_tol:
                raise ArithmeticError(f"root at {r} has residual {res:.3g} >= {root_tol}")
            roots.append(Root(float(r), (float(a), float(b)), float(res)))
    if vals[-1] == 0.0:
        roots.append(Root(float(grid[-1]), (float(grid[-1]), float(grid[-1])), 0.0))
    if not roots:
        raise NoSignChangeError(f"f(., {beta}) has no sign change on the grid")

    # |f| tiny without a sign change on either side: possible even-order zero
    tangential = []
    small = np.abs(vals) < 100 * root_tol
    for i in np.nonzero(small)[0]:
        left = vals[i - 1] if i > 0 else vals[i]
        right = vals[i + 1] if i + 1 < len(vals) else vals[i]
        if left * vals[i] > 0 and right * vals[i] > 0:
            tangential.append(float(grid[i]))
    return ZeroSet(tuple(roots), float(beta), grid_points, tuple(tangential))


def find_minimizers(
    model: SpectralModel,
    grid_points: int = 2001,
    root_tol: float = 1e-10,
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
) -> ZeroSet:
    """Global minimizers of the loss, as a subset of the beta = 1 zero set."""
    zs = find_zero_set(model, 1.0, grid_points, root_tol, quad)
    h = 2.0 * (1.0 - EDGE) / (grid_points - 1)
    cands = []
    for r in zs.roots:
        lo = max(r.theta - h, -1.0 + EDGE)
        hi = min(r.theta + h, 1.0 - EDGE)
        l0, l_lo, l_hi = loss(model, np.array([r.theta, lo, hi]), quad)
        if l_lo > l0 and l_hi > l0:
            cands.append((l0, r))
    if not cands:
        raise ArithmeticError("no local minimum of the loss among the stationary points")
    best = min(c[0] for c in cands)
    keep = tuple(r for l0, r in cands if l0 <= best + root_tol)
    return ZeroSet(keep, 1.0, grid_points, zs.suspected_tangential)
