"""Synthetic samples from every model component.

All samplers draw from ``numpy.random.Generator(PCG64(seed))``, so a seed
fully determines the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .copula import COPULA_FAMILIES, FRANK, check_theta, copula_hfunc
from .events import EventSeries
from .ingest import ReturnSeries
from .marginals import GPDFit, RIFit, ri_ppf, gpd_ppf

PRNG_NAME = "PCG64"


class SynthError(ValueError):
    pass


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class GeneratorSpec:
    ri_family: str = "q_exponential"
    ri_shape: float = 1.2
    tau_mean: float = 10.0
    xi: float = 0.15
    phi: float = 0.01
    copula: str = FRANK
    theta: float = -1.5
    n: int = 1000
    seed: int = 0
    pairing: str = "end"

    def __post_init__(self):
        if self.n < 1:
            raise SynthError("n must be >= 1")
        if self.copula not in COPULA_FAMILIES:
            raise SynthError(f"unknown copula {self.copula!r}")
        if self.pairing not in ("end", "start"):
            raise SynthError(f"pairing must be 'end' or 'start', got {self.pairing!r}")
        try:
            self.ri_fit
            self.gpd_fit
            check_theta(self.copula, self.theta)
        except ValueError as exc:
            raise SynthError(str(exc)) from exc

    @property
    def ri_fit(self) -> RIFit:
        return RIFit(self.ri_family, self.ri_shape, self.tau_mean)

    @property
    def gpd_fit(self) -> GPDFit:
        return GPDFit(self.xi, self.phi)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _uniform(rng: np.random.Generator, n: int) -> np.ndarray:
    # open interval keeps every inverse CDF finite
    u = rng.random(n)
    return np.where(u == 0.0, np.nextafter(0.0, 1.0), u)


def sample_ri(fit: RIFit, n: int, seed: int) -> np.ndarray:
    """Continuous recurrence intervals by inverse-CDF sampling."""
    if n < 1:
        raise SynthError("n must be >= 1")
    return np.asarray(ri_ppf(fit, _uniform(rng_for(seed), n)), dtype=float)


def sample_gpd(xi: float, phi: float, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise SynthError("n must be >= 1")
    try:
        fit = GPDFit(xi, phi)
    except ValueError as exc:
        raise SynthError(str(exc)) from exc
    return np.asarray(gpd_ppf(fit, _uniform(rng_for(seed), n)), dtype=float)


def invert_hfunc(family: str, theta: float, u, w, *, tol: float = 1e-10, max_iter: int = 200):
    """Solve ``dC/du (u, v) = w`` for ``v`` by bisection."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        below = copula_hfunc(family, theta, u, mid) < w
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) <= tol:
            break
    else:
        k = int(np.argmax(hi - lo))
        raise SynthError(
            f"conditional inversion did not converge: family={family} theta={theta} "
            f"u={u.flat[k]} quantile={w.flat[k]}"
        )
    return 0.5 * (lo + hi)


def sample_copula(family: str, theta: float, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """``(u, v)`` pairs by the conditional distribution method."""
    if n < 1:
        raise SynthError("n must be >= 1")
    try:
        check_theta(family, theta)
    except ValueError as exc:
        raise SynthError(str(exc)) from exc
    rng = rng_for(seed)
    u = _uniform(rng, n)
    w = _uniform(rng, n)
    return u, invert_hfunc(family, theta, u, w)


def sample_pairs(spec: GeneratorSpec) -> tuple[np.ndarray, np.ndarray]:
    """Coupled continuous ``(tau, y)`` pairs."""
    u, v = sample_copula(spec.copula, spec.theta, spec.n, spec.seed)
    return np.asarray(ri_ppf(spec.ri_fit, u)), np.asarray(gpd_ppf(spec.gpd_fit, v))


def sample_event_process(spec: GeneratorSpec) -> EventSeries:
    """An event sequence of ``spec.n`` intervals (``n + 1`` events).

    Intervals are rounded up to whole days. With ``pairing="end"`` each
    interval's coupled size goes to the event closing it, with ``"start"``
    to the event opening it; the one unpaired event gets an independent
    GPD draw.
    """
    tau_c, y_pair = sample_pairs(spec)
    tau = np.maximum(np.ceil(tau_c), 1.0).astype(np.int64)
    extra = sample_gpd(spec.xi, spec.phi, 1, spec.seed + 0x9E3779B9)
    if spec.pairing == "end":
        y = np.concatenate([extra, y_pair])
    else:
        y = np.concatenate([y_pair, extra])
    indices = np.concatenate([[0], np.cumsum(tau)])
    return EventSeries(0.0, indices, tau, y, "positive")


def sample_return_series(spec: GeneratorSpec, n_days: int, *, quiet_scale: float = 0.01) -> ReturnSeries:
    """Embed an event process in a daily return series of ``n_days``.

    Extreme days carry return ``y`` (> 0). Quiet days draw
    ``min(0, N(0, quiet_scale))``, so about half of them are flat. The
    atom at zero makes an upper quantile threshold land on 0 whenever
    extremes are rarer than the quantile tail, and strict exceedance then
    recovers exactly the embedded events.
    """
    if n_days < 2:
        raise SynthError("n_days must be >= 2")
    n = max(int(math.ceil(1.5 * n_days / spec.tau_mean)), 16)
    while True:
        ev = sample_event_process(GeneratorSpec(**{**spec.to_dict(), "n": n}))
        if ev.indices[-1] >= n_days:
            break
        n *= 2
    keep = ev.indices < n_days
    rng = rng_for(spec.seed + 104729)
    r = np.minimum(rng.normal(0.0, quiet_scale, n_days), 0.0)
    r[ev.indices[keep]] = ev.y[keep]
    return ReturnSeries.from_values(r)
