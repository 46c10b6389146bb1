"""Expanding-window extreme forecasting with ROC / AUC_m scoring.

The first ``split`` share of the series trains the initial model. Every
later day ``d`` is forecast from models fitted on ``r[:d0]``, where ``d0``
is the latest refit day not after ``d``; the extreme threshold is the
quantile of that same window unless it is frozen at the initial split.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .copula import AMH, FRANK, CopulaError, CopulaFit, PseudoSample, fit_copula, select_copula
from .events import EventError, ExtremeSpec, extract_events
from .hazard import hazard_arrays
from .ingest import ReturnSeries, quantile
from .marginals import QE, RI_FAMILIES, FitError, GPDFit, RIFit, fit_gpd, fit_ri

AUC_RANGE = 0.3
COPULA_CHOICES = (FRANK, AMH, "auto")


class BacktestError(ValueError):
    pass


def default_qp_grid() -> tuple[float, ...]:
    return tuple(float(x) for x in np.linspace(0.0, 1.0, 201))


@dataclass(frozen=True)
class BacktestConfig:
    split: float = 0.70
    dt: float = 1.0
    quantiles: tuple[ExtremeSpec, ...] = (ExtremeSpec(0.9, "positive"),)
    refit_every: int = 1
    qp_grid: tuple[float, ...] = field(default_factory=default_qp_grid)
    copula_choice: str = FRANK
    ri_family: str = QE
    pairing: str = "end"
    fixed_threshold: bool = False
    exact_grid: bool = False
    fixed_theta: float | None = None
    min_intervals: int = 10

    def __post_init__(self):
        if not 0.0 < self.split < 1.0:
            raise BacktestError(f"split must lie in (0, 1), got {self.split}")
        if not self.dt >= 1:
            raise BacktestError(f"dt must be >= 1, got {self.dt}")
        if int(self.refit_every) != self.refit_every or self.refit_every < 1:
            raise BacktestError("refit_every must be a positive integer")
        grid = tuple(float(x) for x in self.qp_grid)
        if list(grid) != sorted(grid) or not grid or grid[0] != 0.0 or grid[-1] != 1.0:
            raise BacktestError("qp_grid must be sorted ascending and include 0 and 1")
        object.__setattr__(self, "qp_grid", grid)
        if self.copula_choice not in COPULA_CHOICES:
            raise BacktestError(f"copula_choice must be one of {COPULA_CHOICES}")
        if self.ri_family not in RI_FAMILIES + ("auto",):
            raise BacktestError(f"unknown ri_family {self.ri_family!r}")
        if self.pairing not in ("end", "start"):
            raise BacktestError("pairing must be 'end' or 'start'")
        specs = tuple(
            s if isinstance(s, ExtremeSpec) else ExtremeSpec(**s) for s in self.quantiles
        )
        if not specs:
            raise BacktestError("at least one extreme spec is required")
        object.__setattr__(self, "quantiles", specs)

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "dt": self.dt,
            "quantiles": [{"quantile": s.quantile, "side": s.side} for s in self.quantiles],
            "refit_every": self.refit_every,
            "qp_grid": list(self.qp_grid),
            "copula_choice": self.copula_choice,
            "ri_family": self.ri_family,
            "pairing": self.pairing,
            "fixed_threshold": self.fixed_threshold,
            "exact_grid": self.exact_grid,
            "fixed_theta": self.fixed_theta,
            "min_intervals": self.min_intervals,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BacktestConfig":
        d = dict(d)
        if "quantiles" in d:
            d["quantiles"] = tuple(ExtremeSpec(**q) if isinstance(q, dict) else q for q in d["quantiles"])
        if "qp_grid" in d and d["qp_grid"] is not None:
            d["qp_grid"] = tuple(d["qp_grid"])
        elif "qp_grid" in d:
            del d["qp_grid"]
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise BacktestError(f"unknown backtest config keys: {sorted(unknown)}")
        return cls(**d)


# --- confusion / ROC ------------------------------------------------------


@dataclass(frozen=True)
class ConfusionCounts:
    n00: int
    n01: int
    n10: int
    n11: int

    @property
    def total(self) -> int:
        return self.n00 + self.n01 + self.n10 + self.n11

    @property
    def false_alarm_rate(self) -> float:
        den = self.n00 + self.n10
        return self.n10 / den if den else math.nan

    @property
    def hit_rate(self) -> float:
        den = self.n01 + self.n11
        return self.n11 / den if den else math.nan

    A = false_alarm_rate
    D = hit_rate


def confusion(hazard, truth, qp: float) -> ConfusionCounts:
    """Alarm on a day iff its hazard is at least ``qp``."""
    hazard = np.asarray(hazard, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    if hazard.shape != truth.shape:
        raise BacktestError(f"length mismatch: {hazard.shape[0]} hazards vs {truth.shape[0]} flags")
    alarm = hazard >= qp
    return ConfusionCounts(
        n00=int(np.count_nonzero(~alarm & ~truth)),
        n01=int(np.count_nonzero(~alarm & truth)),
        n10=int(np.count_nonzero(alarm & ~truth)),
        n11=int(np.count_nonzero(alarm & truth)),
    )


def confusion_sweep(hazard, truth, qp_grid) -> list[tuple[float, ConfusionCounts]]:
    """Confusion counts over ``qp_grid`` plus every distinct hazard value."""
    hazard = np.asarray(hazard, dtype=float)
    qps = np.union1d(np.asarray(qp_grid, dtype=float), np.unique(hazard))
    return [(float(qp), confusion(hazard, truth, qp)) for qp in qps]


@dataclass(frozen=True)
class RocCurve:
    qp: np.ndarray
    A: np.ndarray
    D: np.ndarray
    auc_m: float

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.A.tolist(), self.D.tolist()))


def auc_m(A, D, upper: float = AUC_RANGE) -> float:
    """Area under the piecewise-linear ROC for false-alarm rates in ``[0, upper]``.

    Points are ordered by ``(A, D)``. Left of the smallest ``A`` the curve
    is held at that point's ``D``; right of the largest it is held at the
    last ``D``.
    """
    A = np.asarray(A, dtype=float)
    D = np.asarray(D, dtype=float)
    order = np.lexsort((D, A))
    xs, ys = A[order], D[order]
    if xs[0] > 0.0:
        xs = np.concatenate([[0.0], xs])
        ys = np.concatenate([[ys[0]], ys])
    if xs[-1] < upper:
        xs = np.concatenate([xs, [upper]])
        ys = np.concatenate([ys, [ys[-1]]])
    area = 0.0
    for x0, x1, y0, y1 in zip(xs[:-1], xs[1:], ys[:-1], ys[1:]):
        if x0 >= upper:
            break
        if x1 <= upper:
            area += (x1 - x0) * (y0 + y1) / 2.0
        else:
            y_cut = y0 + (upper - x0) / (x1 - x0) * (y1 - y0)
            area += (upper - x0) * (y0 + y_cut) / 2.0
    return float(area)


def roc(sweep: list[tuple[float, ConfusionCounts]]) -> RocCurve:
    """ROC points sorted by false-alarm rate, and their AUC_m."""
    if len(sweep) < 2:
        raise BacktestError("an ROC curve needs at least 2 points")
    qp = np.array([q for q, _ in sweep])
    A = np.array([c.false_alarm_rate for _, c in sweep])
    D = np.array([c.hit_rate for _, c in sweep])
    if np.all(np.isnan(D)) or np.all(np.isnan(A)):
        return RocCurve(qp, A, D, math.nan)
    order = np.lexsort((D, A))
    qp, A, D = qp[order], A[order], D[order]
    if len(set(zip(A.tolist(), D.tolist()))) < 2:
        raise BacktestError("an ROC curve needs at least 2 distinct points")
    return RocCurve(qp, A, D, auc_m(A, D))


# --- fitting windows ------------------------------------------------------


@dataclass(frozen=True)
class WindowFit:
    fit_day: int
    threshold: float
    ri: RIFit
    gpd: GPDFit
    cop: CopulaFit | None
    carried: bool = False

    def to_dict(self) -> dict:
        return {
            "fit_day": self.fit_day,
            "threshold": self.threshold,
            "ri": self.ri.to_dict(),
            "gpd": self.gpd.to_dict(),
            "copula": None if self.cop is None else self.cop.to_dict(),
            "carried_forward": self.carried,
        }


def window_threshold(r: np.ndarray, spec: ExtremeSpec, cfg: BacktestConfig, fit_day: int, split_day: int) -> float:
    end = split_day if cfg.fixed_threshold else fit_day
    return quantile(r[:end], spec.quantile)


def fit_window(r: np.ndarray, spec: ExtremeSpec, cfg: BacktestConfig, fit_day: int, threshold: float,
               cache: dict | None = None) -> WindowFit:
    """Fit the recurrence-interval law, GPD and copula on ``r[:fit_day]``.

    The fit depends on the window only through its events, so ``cache``
    (keyed by threshold and events) lets windows that gained no new extreme
    reuse the previous result; the numbers are the same as a fresh fit.
    """
    ev = extract_events(r[:fit_day], spec, threshold)
    if cache is None:
        ri, gpd, cop = _fit_events(ev, cfg, fit_day)
    else:
        key = (threshold, ev.indices.tobytes(), ev.y.tobytes())
        if key not in cache:
            try:
                cache[key] = _fit_events(ev, cfg, fit_day)
            except (FitError, CopulaError, EventError) as exc:
                cache[key] = exc
        hit = cache[key]
        if isinstance(hit, Exception):
            raise hit
        ri, gpd, cop = hit
    return WindowFit(fit_day, threshold, ri, gpd, cop)


def _fit_events(ev, cfg: BacktestConfig, fit_day: int):
    if ev.tau.shape[0] < cfg.min_intervals:
        raise EventError(
            f"only {ev.tau.shape[0]} recurrence intervals before day {fit_day}; "
            f"need {cfg.min_intervals}"
        )
    if cfg.ri_family == "auto":
        fits = [fit_ri(ev.tau, fam, exact_grid=cfg.exact_grid, min_size=cfg.min_intervals) for fam in RI_FAMILIES]
        ri = max(fits, key=lambda f: f.loglik)
    else:
        ri = fit_ri(ev.tau, cfg.ri_family, exact_grid=cfg.exact_grid, min_size=cfg.min_intervals)
    gpd = fit_gpd(ev.y, min_size=cfg.min_intervals)
    tau_p, y_p = ev.pairs(cfg.pairing)
    ps = PseudoSample.from_marginals(tau_p, y_p, ri, gpd)
    if cfg.fixed_theta is not None:
        fam = AMH if cfg.copula_choice == AMH else FRANK
        cop = CopulaFit(fam, float(cfg.fixed_theta), math.nan, n=len(ps))
    elif cfg.copula_choice == "auto":
        cop = select_copula(ps)
    else:
        cop = fit_copula(ps, cfg.copula_choice, min_size=cfg.min_intervals)
    return ri, gpd, cop


def _is_extreme(x, spec: ExtremeSpec, threshold: float):
    return x > threshold if spec.side == "positive" else x < threshold


def day_state(history: np.ndarray, spec: ExtremeSpec, threshold: float) -> tuple[int, float] | None:
    """``(t, y_last)`` for the day right after ``history``; None before any extreme.

    ``t`` is the time elapsed at the close of the last day of ``history``,
    so an extreme on the next day closes an interval of ``t + 1`` days.
    """
    d = history.shape[0]
    hits = np.flatnonzero(_is_extreme(history, spec, threshold))
    if hits.size == 0:
        return None
    last = int(hits[-1])
    y_last = history[last] - threshold if spec.side == "positive" else threshold - history[last]
    return d - 1 - last, float(y_last)


def day_hazard(wf: WindowFit, t: float, y_last: float, dt: float) -> tuple[float, float, dict]:
    w, wy, info = hazard_arrays(wf.ri, wf.gpd, wf.cop, np.array([float(t)]), np.array([y_last]), dt)
    return float(w[0]), float(wy[0]), info


def forecast_day(history, spec: ExtremeSpec, cfg: BacktestConfig, fit_day: int, split_day: int) -> dict | None:
    """Forecast the day that follows ``history`` from a fresh fit on ``history[:fit_day]``.

    Standalone entry point for auditing: it sees nothing beyond ``history``.
    """
    history = np.array(history, dtype=float)
    if not split_day <= fit_day <= history.shape[0]:
        raise BacktestError("need split_day <= fit_day <= len(history)")
    thr = window_threshold(history, spec, cfg, fit_day, split_day)
    wf = fit_window(history, spec, cfg, fit_day, thr)
    state = day_state(history, spec, thr)
    if state is None:
        return None
    t, y_last = state
    w, wy, _ = day_hazard(wf, t, y_last, cfg.dt)
    return {"t": t, "y_last": y_last, "W": w, "Wy": wy, "threshold": thr}


# --- report ---------------------------------------------------------------


@dataclass(frozen=True)
class SpecResult:
    spec: ExtremeSpec
    records: dict[str, np.ndarray]
    rocs: dict[tuple[str, str], RocCurve]
    fits: list[WindowFit]
    warnings: list[str]

    def auc_table(self) -> dict:
        return {
            period: {variant: self.rocs[(period, variant)].auc_m for variant in ("W", "Wy")}
            for period in ("in", "out")
        }


@dataclass(frozen=True)
class BacktestReport:
    config: BacktestConfig
    results: dict[str, SpecResult]
    warnings: list[str]


def _run_spec(r: np.ndarray, dates, spec: ExtremeSpec, cfg: BacktestConfig, workers: int) -> SpecResult:
    n = r.shape[0]
    split_day = int(math.floor(cfg.split * n))
    if split_day < 2 or split_day >= n:
        raise BacktestError(f"split {cfg.split} leaves no in-sample or no out-of-sample days")
    warn: list[str] = []

    fit_days = list(range(split_day, n, cfg.refit_every))
    cache: dict = {}

    def attempt(fd):
        thr = window_threshold(r, spec, cfg, fd, split_day)
        try:
            return fit_window(r, spec, cfg, fd, thr, cache), None
        except (FitError, CopulaError, EventError) as exc:
            return thr, exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(attempt, fit_days))
    else:
        raw = [attempt(fd) for fd in fit_days]

    fits: list[WindowFit] = []
    prev = None
    for fd, (res, exc) in zip(fit_days, raw):
        if exc is None:
            wf = res
        elif prev is None:
            raise BacktestError(f"initial fit failed on r[:{fd}] for {spec.label}: {exc}") from exc
        else:
            warn.append(f"{spec.label}: fit on r[:{fd}] failed ({exc}); carrying forward fit from day {prev.fit_day}")
            wf = WindowFit(fd, res, prev.ri, prev.gpd, prev.cop, carried=True)
        fits.append(wf)
        prev = wf
    for wf in fits:
        if wf.cop is not None:
            warn.extend(f"{spec.label} day {wf.fit_day}: {m}" for m in wf.cop.warnings)
        if wf.ri.boundary and not wf.carried:
            warn.append(f"{spec.label} day {wf.fit_day}: {wf.ri.family} shape {wf.ri.shape} at range boundary")

    rows = {k: [] for k in ("day", "t", "y_last", "W", "Wy", "extreme", "period")}
    degenerate = {"survival": 0, "small_v": 0}

    def emit(day, wf, period):
        state = day_state(r[:day], spec, wf.threshold)
        if state is None:
            return
        t, y_last = state
        w, wy, info = day_hazard(wf, t, y_last, cfg.dt)
        for k in degenerate:
            degenerate[k] += info[k]
        rows["day"].append(day)
        rows["t"].append(t)
        rows["y_last"].append(y_last)
        rows["W"].append(w)
        rows["Wy"].append(wy)
        rows["extreme"].append(bool(_is_extreme(r[day], spec, wf.threshold)))
        rows["period"].append(period)

    # in-sample days are scored with the final in-sample fit
    for day in range(1, split_day):
        emit(day, fits[0], "in")
    for i, wf in enumerate(fits):
        stop = fits[i + 1].fit_day if i + 1 < len(fits) else n
        for day in range(wf.fit_day, stop):
            emit(day, wf, "out")

    if degenerate["survival"]:
        warn.append(f"{spec.label}: {degenerate['survival']} days with exhausted survival; hazard set to 1")
    if degenerate["small_v"]:
        warn.append(f"{spec.label}: {degenerate['small_v']} days with G(y_last)~0; W_y fell back to W")

    records = {
        "day": np.array(rows["day"], dtype=np.int64),
        "date": [dates[d] for d in rows["day"]],
        "t": np.array(rows["t"], dtype=float),
        "y_last": np.array(rows["y_last"], dtype=float),
        "W": np.array(rows["W"], dtype=float),
        "Wy": np.array(rows["Wy"], dtype=float),
        "extreme": np.array(rows["extreme"], dtype=bool),
        "period": np.array(rows["period"]),
    }
    rocs = {}
    for period in ("in", "out"):
        mask = records["period"] == period
        truth = records["extreme"][mask]
        for variant in ("W", "Wy"):
            if mask.sum() == 0:
                rocs[(period, variant)] = RocCurve(np.array([]), np.array([]), np.array([]), math.nan)
                continue
            sweep = confusion_sweep(records[variant][mask], truth, cfg.qp_grid)
            curve = roc(sweep)
            rocs[(period, variant)] = curve
        if mask.sum() and not truth.any():
            warn.append(f"{spec.label}: no {period}-sample extremes; D undefined, AUC_m reported as NaN")
    return SpecResult(spec, records, rocs, fits, warn)


def run_backtest(r, cfg: BacktestConfig | None = None, *, workers: int = 1) -> BacktestReport:
    """Run the expanding-window forecast for every extreme spec in ``cfg``."""
    cfg = cfg or BacktestConfig()
    if isinstance(r, ReturnSeries):
        values, dates = np.array(r.returns), r.dates
    else:
        values = np.array(r, dtype=float)
        dates = ReturnSeries.from_values(values).dates
    results = {}
    all_warn: list[str] = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for spec in cfg.quantiles:
            res = _run_spec(values, dates, spec, cfg, workers)
            results[spec.label] = res
            all_warn.extend(res.warnings)
    return BacktestReport(cfg, results, all_warn)


def audit_days(r, cfg: BacktestConfig, report: BacktestReport, n_days: int = 20, seed: int = 0) -> list[dict]:
    """Recompute random out-of-sample days from truncated inputs.

    Returns one row per checked day with the stored and recomputed values
    and whether they match bit for bit.
    """
    values = np.array(r.returns if isinstance(r, ReturnSeries) else r, dtype=float)
    n = values.shape[0]
    split_day = int(math.floor(cfg.split * n))
    rng = np.random.default_rng(seed)
    out = []
    for label, res in report.results.items():
        rec = res.records
        pos = np.flatnonzero(rec["period"] == "out")
        pick = rng.choice(pos, size=min(n_days, pos.size), replace=False)
        for i in sorted(pick.tolist()):
            day = int(rec["day"][i])
            fit_day = split_day + ((day - split_day) // cfg.refit_every) * cfg.refit_every
            truncated = values[:day].copy()
            got = forecast_day(truncated, res.spec, cfg, fit_day, split_day)
            fit = next(f for f in res.fits if f.fit_day == fit_day)
            if fit.carried:
                continue
            same = (
                got is not None
                and got["W"] == rec["W"][i]
                and got["Wy"] == rec["Wy"][i]
                and got["t"] == rec["t"][i]
                and got["y_last"] == rec["y_last"][i]
            )
            out.append({"spec": label, "day": day, "stored_W": float(rec["W"][i]),
                        "stored_Wy": float(rec["Wy"][i]),
                        "W": None if got is None else got["W"],
                        "Wy": None if got is None else got["Wy"], "identical": bool(same)})
    return out
