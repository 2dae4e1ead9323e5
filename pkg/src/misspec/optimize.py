"""One-dimensional scan-and-refine minimization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI2 = (3 - math.sqrt(5)) / 2


def golden_section(f, a: float, b: float, tol: float):
    """Minimize a unimodal ``f`` on ``[a, b]``.

    Returns ``(x, fx, lo, hi)`` where ``[lo, hi]`` is the final bracket
    (``hi - lo <= tol``) and ``x`` the best point evaluated.  Ties keep the
    left sub-interval, so flat stretches resolve toward the smaller argument.
    """
    a, b = min(a, b), max(a, b)
    fa, fb = f(a), f(b)
    best_x, best_f = (a, fa) if fa <= fb else (b, fb)
    h = b - a
    if h <= tol:
        return best_x, best_f, a, b
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    fc, fd = f(c), f(d)
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
    for _ in range(n):
        if fc <= fd:
            b, d, fd = d, c, fc
            h = INV_PHI * h
            c = a + INV_PHI2 * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            h = INV_PHI * h
            d = a + INV_PHI * h
            fd = f(d)
    for x, fx in ((c, fc), (d, fd)):
        if fx < best_f or (fx == best_f and x < best_x):
            best_x, best_f = x, fx
    return best_x, best_f, a, b


@dataclass(frozen=True)
class ScanResult:
    x: float
    fx: float
    index: int
    on_boundary: bool


def refine(f, grid: np.ndarray, values: np.ndarray, tol: float, dfun=None) -> ScanResult:
    """Refine the first argmin of a coarse scan.

    When ``dfun`` (the derivative of ``f``) changes sign across the
    neighbouring scan points, a bracketed root solve on it gives the
    minimizer directly: the objective alone cannot resolve it below about
    sqrt(machine eps).  Otherwise golden section runs on ``f``, with the same
    derivative polish on its final bracket when possible.
    """
    i = int(np.argmin(values))
    last = len(grid) - 1
    lo = float(grid[max(i - 1, 0)])
    hi = float(grid[min(i + 1, last)])
    x = None
    if dfun is not None and _brackets(dfun, lo, hi):
        x = _root(dfun, lo, hi)
        fx = f(x)
    if x is None:
        x, fx, a, b = golden_section(f, lo, hi, tol)
        if dfun is not None:
            a, b = max(lo, a - tol), min(hi, b + tol)
            if _brackets(dfun, a, b):
                x = _root(dfun, a, b)
                fx = f(x)
    if values[i] < fx or (values[i] == fx and grid[i] < x):
        x, fx = float(grid[i]), float(values[i])
    return ScanResult(float(x), float(fx), i, i in (0, last))


def _brackets(dfun, a: float, b: float) -> bool:
    return dfun(a) < 0 < dfun(b)


def _root(dfun, a: float, b: float) -> float:
    return float(brentq(dfun, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
