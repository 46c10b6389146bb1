"""Hazard probabilities of the next extreme.

``hazard_ri`` uses only the recurrence-interval law:

    W(dt | t) = [P(t + dt) - P(t)] / [1 - P(t)]

``hazard_joint`` integrates the joint density ``p(tau) g(y) c(P(tau), G(y))``
over ``tau`` in ``[t, t+dt]`` and sizes up to the last exceeding size. The
double integral collapses to copula CDF differences:

    W_y(dt | t) = [C(u2, v) - C(u1, v)] / [v - C(u1, v)]

with ``u1 = P(t)``, ``u2 = P(t + dt)`` and ``v = G(y_last)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .copula import CopulaFit, copula_cdf
from .marginals import GPDFit, RIFit

SURVIVAL_EPS = 1e-12
V_EPS = 1e-12


class HazardWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class HazardModel:
    ri: RIFit
    gpd: GPDFit
    cop: CopulaFit


@dataclass(frozen=True)
class HazardQuery:
    t: float
    dt: float = 1.0
    y_last: float = 0.0

    def __post_init__(self):
        if not self.t >= 0:
            raise ValueError(f"t must be >= 0, got {self.t}")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.y_last >= 0:
            raise ValueError(f"y_last must be >= 0, got {self.y_last}")


def hazard_ri(ri: RIFit, q: HazardQuery) -> float:
    u1 = ri.cdf(q.t)
    u2 = ri.cdf(q.t + q.dt)
    surv = 1.0 - u1
    if surv < SURVIVAL_EPS:
        warnings.warn(
            f"survival 1-P(t) < {SURVIVAL_EPS:g} at t={q.t}: hazard set to 1",
            HazardWarning, stacklevel=2,
        )
        return 1.0
    return float(min(max((u2 - u1) / surv, 0.0), 1.0))


def size_cdf(gpd: GPDFit, y_last) -> np.ndarray:
    """``G(y_last)`` with sizes beyond a bounded GPD support mapped to 1."""
    y = np.minimum(np.asarray(y_last, dtype=float), gpd.upper_support)
    return gpd.cdf(y)


def hazard_joint(m: HazardModel, q: HazardQuery) -> float:
    if m.cop.theta == 0.0:
        return hazard_ri(m.ri, q)
    v = float(size_cdf(m.gpd, q.y_last))
    if v < V_EPS:
        warnings.warn(
            f"G(y_last) < {V_EPS:g}: falling back to the recurrence-interval hazard",
            HazardWarning, stacklevel=2,
        )
        return hazard_ri(m.ri, q)
    u1 = m.ri.cdf(q.t)
    u2 = m.ri.cdf(q.t + q.dt)
    c1 = copula_cdf(m.cop.family, m.cop.theta, u1, v)
    c2 = copula_cdf(m.cop.family, m.cop.theta, u2, v)
    denom = v - c1
    if denom < SURVIVAL_EPS:
        warnings.warn(
            f"joint survival < {SURVIVAL_EPS:g} at t={q.t}: hazard set to 1",
            HazardWarning, stacklevel=2,
        )
        return 1.0
    return float(min(max((c2 - c1) / denom, 0.0), 1.0))


def hazard_arrays(ri: RIFit, gpd: GPDFit, cop: CopulaFit | None, t, y_last, dt: float = 1.0):
    """Vectorised ``(W, W_y)`` over arrays of ``t`` and ``y_last``.

    Degenerate cases follow the scalar functions: exhausted survival gives
    1, a vanishing ``G(y_last)`` falls back to ``W``. The count of each is
    returned so callers can report them.
    """
    t = np.asarray(t, dtype=float)
    y_last = np.asarray(y_last, dtype=float)
    u1 = ri.cdf(t)
    u2 = ri.cdf(t + dt)
    surv = 1.0 - u1
    dead = surv < SURVIVAL_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(dead, 1.0, np.clip((u2 - u1) / np.where(dead, 1.0, surv), 0.0, 1.0))
    if cop is None or cop.theta == 0.0:
        # independence: the size carries no information and W_y is W exactly
        return w, w.copy(), {"survival": int(dead.sum()), "small_v": 0}
    v = size_cdf(gpd, y_last)
    small = v < V_EPS
    vs = np.where(small, 1.0, v)
    c1 = copula_cdf(cop.family, cop.theta, u1, vs)
    c2 = copula_cdf(cop.family, cop.theta, u2, vs)
    denom = vs - c1
    dead_y = denom < SURVIVAL_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        wy = np.clip((c2 - c1) / np.where(dead_y, 1.0, denom), 0.0, 1.0)
    wy = np.where(dead_y, 1.0, wy)
    wy = np.where(small, w, wy)
    return w, wy, {"survival": int((dead | (dead_y & ~small)).sum()), "small_v": int(small.sum())}
