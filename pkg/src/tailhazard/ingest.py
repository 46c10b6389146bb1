"""Price/return series loading, log returns and empirical quantiles."""

from __future__ import annotations

import csv
import datetime as dt
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class SeriesError(ValueError):
    """Raised for unreadable, malformed or invalid series input."""


@dataclass(frozen=True)
class PriceSeries:
    dates: tuple[dt.date, ...]
    prices: np.ndarray

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        if len(self.dates) != prices.shape[0]:
            raise SeriesError("dates and prices differ in length")
        _check_dates(self.dates)
        bad = np.flatnonzero(~(prices > 0))
        if bad.size:
            raise SeriesError(f"non-positive price at position {bad[0]}")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class ReturnSeries:
    dates: tuple[dt.date, ...]
    returns: np.ndarray

    def __post_init__(self):
        returns = np.asarray(self.returns, dtype=float)
        if len(self.dates) != returns.shape[0]:
            raise SeriesError("dates and returns differ in length")
        _check_dates(self.dates)
        bad = np.flatnonzero(~np.isfinite(returns))
        if bad.size:
            raise SeriesError(f"non-finite return at position {bad[0]}")
        returns.setflags(write=False)
        object.__setattr__(self, "returns", returns)

    def __len__(self) -> int:
        return len(self.dates)

    @classmethod
    def from_values(cls, returns, start: dt.date = dt.date(2000, 1, 1)) -> "ReturnSeries":
        """Wrap a bare array with consecutive synthetic dates."""
        returns = np.asarray(returns, dtype=float)
        dates = tuple(start + dt.timedelta(days=i) for i in range(returns.shape[0]))
        return cls(dates, returns)


def _check_dates(dates) -> None:
    for i in range(1, len(dates)):
        if not dates[i] > dates[i - 1]:
            raise SeriesError(
                f"dates not strictly increasing at position {i} ({dates[i - 1]} -> {dates[i]})"
            )


def load_series(path, format: str = "price") -> PriceSeries | ReturnSeries:
    """Load a ``date,value`` CSV file.

    Row numbers in error messages count data rows from 1 (the header is
    row 0).
    """
    if format not in ("price", "return"):
        raise SeriesError(f"unknown series format {format!r}")
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise SeriesError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise SeriesError(f"{path} is empty")
    header = [h.strip().lower() for h in rows[0]]
    if header != ["date", "value"]:
        raise SeriesError(f"{path}: expected header 'date,value', got {','.join(rows[0])!r}")

    dates: list[dt.date] = []
    values: list[float] = []
    for rowno, row in enumerate(rows[1:], start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise SeriesError(f"{path}: malformed row {rowno}: {row!r}")
        try:
            day = dt.date.fromisoformat(row[0].strip())
            value = float(row[1])
        except ValueError as exc:
            raise SeriesError(f"{path}: malformed row {rowno}: {exc}") from exc
        if not math.isfinite(value):
            raise SeriesError(f"{path}: non-finite value at row {rowno}")
        if format == "price" and value <= 0:
            raise SeriesError(f"{path}: non-positive price {value} at row {rowno}")
        if dates and day <= dates[-1]:
            raise SeriesError(f"{path}: duplicate or non-monotone date {day} at row {rowno}")
        dates.append(day)
        values.append(value)

    if format == "price":
        return PriceSeries(tuple(dates), np.array(values))
    return ReturnSeries(tuple(dates), np.array(values))


def write_series(series: PriceSeries | ReturnSeries, path) -> None:
    """Write a series with the same schema :func:`load_series` reads.

    ``repr`` of a float is the shortest string that round-trips exactly.
    """
    values = series.prices if isinstance(series, PriceSeries) else series.returns
    lines = ["date,value"]
    lines += [f"{d.isoformat()},{float(v)!r}" for d, v in zip(series.dates, values)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_returns(p: PriceSeries) -> ReturnSeries:
    """Daily log returns ``ln I(t) - ln I(t-1)``, dated at day ``t``."""
    if len(p) < 2:
        raise SeriesError("need at least 2 prices to form a return")
    logp = np.log(p.prices)
    return ReturnSeries(p.dates[1:], logp[1:] - logp[:-1])


def quantile(r, q: float) -> float:
    """Empirical quantile, linear interpolation at rank ``q(n-1)+1``."""
    x = r.returns if isinstance(r, ReturnSeries) else np.asarray(r, dtype=float)
    if x.size == 0:
        raise SeriesError("quantile of an empty series")
    if not 0.0 < q < 1.0:
        raise SeriesError(f"quantile level must lie in (0, 1), got {q}")
    x = np.sort(x)
    h = q * (x.size - 1)
    lo = int(math.floor(h))
    hi = min(lo + 1, x.size - 1)
    return float(x[lo] + (h - lo) * (x[hi] - x[lo]))
