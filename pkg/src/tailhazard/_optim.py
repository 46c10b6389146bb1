"""One-dimensional maximisers shared by the marginal and copula fits.

Objectives take a 1-D array of parameter values and return an array of
log-likelihoods, so the same function serves the scalar searches and the
vectorised exhaustive grid.
"""

from __future__ import annotations

import math

import numpy as np

GRID_STEP = 1e-6
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _scalar(f, x: float) -> float:
    val = float(f(np.array([x]))[0])
    return -math.inf if math.isnan(val) else val


def golden_max(f, lo: float, hi: float, *, coarse: int = 64, tol: float = 1e-10) -> float:
    """Maximise ``f`` on ``[lo, hi]``.

    A coarse scan picks the bracket, then golden-section narrows it to
    ``tol``. Ties move the bracket right, which walks out of ``-inf``
    plateaus sitting on the left edge.
    """
    xs = np.linspace(lo, hi, coarse + 1)
    vals = np.asarray(f(xs), dtype=float)
    vals = np.where(np.isnan(vals), -np.inf, vals)
    k = int(np.argmax(vals))
    a = xs[max(k - 1, 0)]
    b = xs[min(k + 1, coarse)]
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = _scalar(f, c), _scalar(f, d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = _scalar(f, c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = _scalar(f, d)
    best = 0.5 * (a + b)
    if _scalar(f, best) < vals[k]:
        best = float(xs[k])
    return float(best)


def lattice_bounds(lo: float, hi: float, step: float = GRID_STEP) -> tuple[int, int]:
    """First and last integer ``k`` with ``k*step`` strictly inside ``(lo, hi)``."""
    k_lo = math.floor(lo / step) + 1
    k_hi = math.ceil(hi / step) - 1
    while k_lo * step <= lo:
        k_lo += 1
    while k_hi * step >= hi:
        k_hi -= 1
    return k_lo, k_hi


def snap_to_lattice(f, x: float, lo: float, hi: float, *, step: float = GRID_STEP, radius: int = 3):
    """Best lattice point ``k*step`` within ``radius`` steps of ``x``."""
    k_lo, k_hi = lattice_bounds(lo, hi, step)
    k0 = int(round(x / step))
    ks = np.arange(max(k0 - radius, k_lo), min(k0 + radius, k_hi) + 1)
    if ks.size == 0:
        ks = np.array([min(max(k0, k_lo), k_hi)])
    xs = ks * step
    vals = np.asarray(f(xs), dtype=float)
    vals = np.where(np.isnan(vals), -np.inf, vals)
    i = int(np.argmax(vals))
    return float(xs[i]), float(vals[i])


def grid_max(f, lo: float, hi: float, *, step: float = GRID_STEP, chunk: int = 20000):
    """Exhaustive maximisation over every lattice point ``k*step`` in ``(lo, hi)``."""
    k_lo, k_hi = lattice_bounds(lo, hi, step)
    best_x, best_val = math.nan, -math.inf
    for start in range(k_lo, k_hi + 1, chunk):
        xs = np.arange(start, min(start + chunk, k_hi + 1)) * step
        vals = np.asarray(f(xs), dtype=float)
        vals = np.where(np.isnan(vals), -np.inf, vals)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_x, best_val = float(xs[i]), float(vals[i])
    return best_x, best_val
