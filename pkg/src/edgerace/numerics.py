"""Deterministic quadrature and root-bracketing helpers shared across modules."""

from __future__ import annotations

from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.optimize import brentq

_BRENTQ_RTOL = 8.9e-16  # slightly above the 4*eps minimum scipy accepts


@lru_cache(maxsize=None)
def _gauss_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return nodes, weights


def gauss_panels(fn: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
                 panels: int, order: int = 32) -> float:
    """Composite Gauss-Legendre quadrature of a vectorized integrand."""
    if hi <= lo:
        return 0.0
    nodes, weights = _gauss_rule(order)
    edges = np.linspace(lo, hi, panels + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    xs = (centers[:, None] + half * nodes[None, :]).ravel()
    ws = np.broadcast_to(half * weights, (panels, order)).ravel()
    vals = np.asarray(fn(xs), dtype=float)
    return float(np.dot(vals, ws))


def adaptive_gauss(fn: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
                   tol: float = 1e-10, panels: int = 8, max_panels: int = 8192,
                   order: int = 32) -> float:
    """Panel-doubling quadrature; raises ArithmeticError if it fails to settle."""
    prev = gauss_panels(fn, lo, hi, panels, order)
    n = 2 * panels
    while n <= max_panels:
        cur = gauss_panels(fn, lo, hi, n, order)
        if abs(cur - prev) <= tol:
            return cur
        prev = cur
        n *= 2
    raise ArithmeticError(f"quadrature did not reach tolerance {tol} on [{lo}, {hi}]")


def expand_bracket(fn: Callable[[float], float], lo: float, hi: float,
                   grow: float = 2.0, max_steps: int = 200) -> tuple[float, float]:
    """Widen [lo, hi] until fn changes sign; intended for monotone fn."""
    flo, fhi = fn(lo), fn(hi)
    step = max(hi - lo, 1e-6)
    for _ in range(max_steps):
        if flo == 0.0:
            return lo, lo
        if fhi == 0.0:
            return hi, hi
        if np.sign(flo) != np.sign(fhi):
            return lo, hi
        step *= grow
        # extend toward the endpoint already closer to the root
        if abs(fhi) < abs(flo):
            hi += step
            fhi = fn(hi)
        else:
            lo -= step
            flo = fn(lo)
    raise ValueError("no sign change found while expanding bracket")


def monotone_root(fn: Callable[[float], float], lo: float, hi: float,
                  xtol: float = 1e-13) -> float:
    """Bracketed root of a monotone function, expanding the bracket if needed."""
    lo, hi = expand_bracket(fn, lo, hi)
    if lo == hi:
        return float(lo)
    return float(brentq(fn, lo, hi, xtol=xtol, rtol=_BRENTQ_RTOL))


def fmt17(value: float) -> str:
    """Decimal text that round-trips a float64 (17 significant digits)."""
    return format(float(value), ".17g")
