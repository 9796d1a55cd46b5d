"""Quadrature and root-finding helpers used by the density layer.

Integrands here live on bounded intervals (typically the unit interval,
after the quantile substitution), so composite Simpson with grid doubling
is accurate and predictable.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError, NumericError

__all__ = ["composite_simpson", "simpson_doubling", "bisect_root"]


def composite_simpson(f, a: float, b: float, panels: int) -> float:
    """Simpson rule with `panels` even subintervals; f must accept arrays."""
    if panels < 2 or panels % 2:
        raise InvalidInputError("panels must be a positive even integer")
    x = np.linspace(a, b, panels + 1)
    y = np.asarray(f(x), dtype=float)
    h = (b - a) / panels
    return float(h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-2:2].sum()))


def simpson_doubling(
    f, a: float, b: float, rel_tol: float = 1e-8, max_panels: int = 2**20
) -> float:
    """Double the Simpson grid until successive estimates stabilise."""
    panels = 64
    prev = composite_simpson(f, a, b, panels)
    while panels < max_panels:
        panels *= 2
        cur = composite_simpson(f, a, b, panels)
        if abs(cur - prev) <= rel_tol * max(1e-300, abs(cur)):
            return cur
        prev = cur
    return prev


def bisect_root(f, lo: float, hi: float, xtol: float = 1e-14, max_iter: int = 200) -> float:
    """Root of a continuous scalar function on a sign-changing bracket."""
    flo, fhi = float(f(lo)), float(f(hi))
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NumericError(f"bracket [{lo}, {hi}] does not change sign")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= xtol * max(1.0, abs(lo), abs(hi)):
            return mid
        fm = float(f(mid))
        if fm == 0.0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)
