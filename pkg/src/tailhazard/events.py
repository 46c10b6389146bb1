"""Peaks-over-threshold extremes, recurrence intervals and exceeding sizes."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .ingest import ReturnSeries, atomic_write_text


class EventError(ValueError):
    pass


@dataclass(frozen=True)
class ExtremeSpec:
    """Which tail to watch and at what quantile level.

    Positive extremes are days with returns above the ``quantile`` level
    (e.g. 0.9), negative extremes days below it (e.g. 0.1).
    """

    quantile: float
    side: str = "positive"

    def __post_init__(self):
        if self.side not in ("positive", "negative"):
            raise EventError(f"side must be 'positive' or 'negative', got {self.side!r}")
        if not 0.0 < self.quantile < 1.0:
            raise EventError(f"quantile must lie in (0, 1), got {self.quantile}")
        if self.side == "positive" and self.quantile <= 0.5:
            raise EventError("positive extremes need a quantile above 0.5")
        if self.side == "negative" and self.quantile >= 0.5:
            raise EventError("negative extremes need a quantile below 0.5")

    @property
    def label(self) -> str:
        return f"{self.side}_{self.quantile:g}"


@dataclass(frozen=True)
class EventSeries:
    threshold: float
    indices: np.ndarray
    tau: np.ndarray
    y: np.ndarray
    side: str = "positive"

    def __post_init__(self):
        for name in ("indices", "tau", "y"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.tau.shape[0] != self.indices.shape[0] - 1:
            raise EventError("tau must have one element fewer than indices")
        if self.y.shape[0] != self.indices.shape[0]:
            raise EventError("y must have one element per event")

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def pairs(self, pairing: str = "end") -> tuple[np.ndarray, np.ndarray]:
        """Align each recurrence interval with an exceeding size.

        ``end`` pairs ``tau[k]`` with the size of the event that closes the
        interval (``y[k+1]``); ``start`` with the event that opens it
        (``y[k]``).
        """
        if pairing == "end":
            return self.tau, self.y[1:]
        if pairing == "start":
            return self.tau, self.y[:-1]
        raise EventError(f"pairing must be 'end' or 'start', got {pairing!r}")


def extract_events(r, spec: ExtremeSpec, threshold: float) -> EventSeries:
    """Find the days strictly beyond ``threshold`` on the side given by ``spec``."""
    x = r.returns if isinstance(r, ReturnSeries) else np.asarray(r, dtype=float)
    if spec.side == "positive":
        idx = np.flatnonzero(x > threshold)
        y = x[idx] - threshold
    else:
        idx = np.flatnonzero(x < threshold)
        y = threshold - x[idx]
    if idx.size < 2:
        raise EventError(f"fewer than 2 events beyond threshold {threshold!r}")
    return EventSeries(float(threshold), idx, np.diff(idx), y, spec.side)


@dataclass(frozen=True)
class DescriptiveStats:
    obsv: int
    mean: float
    max: float
    min: float
    median: float
    stdev: float
    skew: float
    kurt: float
    warnings: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "obsv": self.obsv,
            "mean": self.mean,
            "max": self.max,
            "min": self.min,
            "median": self.median,
            "stdev": self.stdev,
            "skew": self.skew,
            "kurt": self.kurt,
        }


def describe(x) -> DescriptiveStats:
    """Moment statistics; ``kurt`` is Pearson (non-excess) kurtosis.

    ``stdev`` uses the n-1 divisor, skew and kurtosis the plain (biased)
    standardized central moments.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise EventError("describe needs at least 2 observations")
    mean = float(x.mean())
    dev = x - mean
    m2 = float(np.mean(dev**2))
    warnings: tuple[str, ...] = ()
    if m2 == 0.0:
        skew = kurt = 0.0
        warnings = ("constant sample: skew and kurt reported as 0",)
    else:
        skew = float(np.mean(dev**3) / m2**1.5)
        kurt = float(np.mean(dev**4) / m2**2)
    return DescriptiveStats(
        obsv=int(x.size),
        mean=mean,
        max=float(x.max()),
        min=float(x.min()),
        median=float(np.median(x)),
        stdev=float(x.std(ddof=1)),
        skew=skew,
        kurt=kurt,
        warnings=warnings,
    )


def pearson_test(tau, y) -> tuple[float, float]:
    """Sample correlation and its two-sided t-test p-value (n-2 dof)."""
    tau = np.asarray(tau, dtype=float)
    y = np.asarray(y, dtype=float)
    if tau.shape != y.shape:
        raise EventError(f"length mismatch: {tau.shape[0]} vs {y.shape[0]}")
    n = tau.shape[0]
    if n < 3:
        raise EventError("pearson_test needs at least 3 pairs")
    a = tau - tau.mean()
    b = y - y.mean()
    saa = float(a @ a)
    sbb = float(b @ b)
    if saa == 0.0 or sbb == 0.0:
        raise EventError("zero variance in a correlated sample")
    rho = float(np.clip((a @ b) / math.sqrt(saa * sbb), -1.0, 1.0))
    if abs(rho) == 1.0:
        return rho, 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    p = float(2.0 * stats.t.sf(abs(t), n - 2))
    return rho, p


EVENTS_HEADER = ["index", "tau", "y"]


def write_events(ev: EventSeries, path) -> None:
    """``index,tau,y`` CSV, one row per event; the first event has no ``tau``."""
    lines = [",".join(EVENTS_HEADER)]
    taus = [""] + [str(int(t)) for t in ev.tau]
    for i, t, y in zip(ev.indices, taus, ev.y):
        lines.append(f"{int(i)},{t},{float(y):.17g}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_events(path, *, threshold: float = 0.0, side: str = "positive") -> EventSeries:
    """Read the CSV written by :func:`write_events`; ``tau`` is re-derived and checked."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise EventError(f"cannot read {path}: {exc}") from exc
    if not rows or [h.strip().lower() for h in rows[0]] != EVENTS_HEADER:
        raise EventError(f"{path}: expected header 'index,tau,y'")
    idx, taus, ys = [], [], []
    for rowno, row in enumerate(rows[1:], start=1):
        if len(row) != 3:
            raise EventError(f"{path}: malformed row {rowno}: {row!r}")
        try:
            idx.append(int(row[0]))
            taus.append(int(row[1]) if row[1].strip() else None)
            ys.append(float(row[2]))
        except ValueError as exc:
            raise EventError(f"{path}: malformed row {rowno}: {exc}") from exc
    if len(idx) < 2:
        raise EventError(f"{path}: fewer than 2 events")
    indices = np.array(idx, dtype=np.int64)
    tau = np.diff(indices)
    if np.any(tau < 1):
        raise EventError(f"{path}: event indices must be strictly increasing")
    given = taus[1:]
    for k, (t, d) in enumerate(zip(given, tau), start=2):
        if t is not None and t != d:
            raise EventError(f"{path}: tau {t} at row {k} disagrees with index difference {d}")
    return EventSeries(float(threshold), indices, tau, np.array(ys), side)
