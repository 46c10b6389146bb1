"""Extreme-event hazard forecasting from recurrence intervals and exceeding sizes.

Extremes are found by peaks over threshold; recurrence intervals follow a
stretched-exponential, q-exponential or Weibull law, exceeding sizes a
generalized Pareto law, and a Frank or Ali-Mikhail-Haq copula couples the
two. The coupled model gives the probability of an extreme within the next
``dt`` days given the time since, and the size of, the last one.
"""

__version__ = "0.1.0"

from .backtest import BacktestConfig, BacktestReport, run_backtest
from .copula import CopulaFit, PseudoSample, fit_copula, select_copula
from .events import EventSeries, ExtremeSpec, describe, extract_events
from .hazard import HazardModel, HazardQuery, hazard_arrays, hazard_joint, hazard_ri
from .ingest import PriceSeries, ReturnSeries, load_series, to_returns
from .marginals import GPDFit, RIFit, fit_gpd, fit_ri
from .synth import GeneratorSpec, sample_event_process, sample_return_series

__all__ = [
    "BacktestConfig", "BacktestReport", "run_backtest",
    "CopulaFit", "PseudoSample", "fit_copula", "select_copula",
    "EventSeries", "ExtremeSpec", "describe", "extract_events",
    "HazardModel", "HazardQuery", "hazard_arrays", "hazard_joint", "hazard_ri",
    "PriceSeries", "ReturnSeries", "load_series", "to_returns",
    "GPDFit", "RIFit", "fit_gpd", "fit_ri",
    "GeneratorSpec", "sample_event_process", "sample_return_series",
]
