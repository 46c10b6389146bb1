import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tailhazard import backtest as bt
from tailhazard.backtest import (
    BacktestConfig, BacktestError, auc_m, audit_days, confusion, confusion_sweep, day_state, roc, run_backtest,
)
from tailhazard.events import EventError, ExtremeSpec
from tailhazard.hazard import HazardQuery, hazard_ri
from tailhazard.synth import GeneratorSpec, sample_return_series


@pytest.fixture(scope="module")
def series():
    spec = GeneratorSpec(ri_shape=1.25, theta=-1.5, seed=8, pairing="start")
    return sample_return_series(spec, 900)


def test_confusion_examples():
    h = np.array([0.1, 0.9, 0.4, 0.6])
    truth = np.array([False, True, False, True])
    c = confusion(h, truth, 0.0)
    assert (c.A, c.D) == (1.0, 1.0)
    c = confusion(h, truth, 1.0 + 1e-12)
    assert (c.A, c.D) == (0.0, 0.0)
    c = confusion(truth.astype(float), truth, 0.5)
    assert (c.A, c.D) == (0.0, 1.0)
    c = confusion(h, truth, 0.5)
    assert (c.n00, c.n01, c.n10, c.n11) == (2, 0, 0, 2) and c.total == 4
    with pytest.raises(BacktestError):
        confusion(h, truth[:3], 0.5)


def test_undefined_rates_are_nan():
    c = confusion([0.2, 0.3], [False, False], 0.25)
    assert math.isnan(c.D) and c.A == 0.5


def test_auc_m_extremes():
    assert auc_m([0.0, 0.0, 1.0], [0.0, 1.0, 1.0]) == 0.3
    grid = np.linspace(0, 1, 201)
    assert auc_m(grid, grid) == pytest.approx(0.045, abs=1e-15)
    # single interior point held flat on both sides
    assert auc_m([0.1], [0.5]) == pytest.approx(0.15)
    # interpolation at the right edge
    assert auc_m([0.0, 0.5], [0.0, 1.0]) == pytest.approx(0.5 * 0.3 * 0.6)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=5, max_size=60), st.integers(0, 2**31))
def test_roc_monotone_and_bounded(h, seed):
    h = np.array(h)
    truth = np.random.default_rng(seed).random(h.size) < 0.3
    truth[0], truth[1] = True, False
    sweep = confusion_sweep(h, truth, bt.default_qp_grid())
    A = [c.A for _, c in sweep]
    D = [c.D for _, c in sweep]
    # qp ascending means A and D are non-increasing
    assert all(a >= b for a, b in zip(A, A[1:])) and all(a >= b for a, b in zip(D, D[1:]))
    curve = roc(sweep)
    assert np.all(np.diff(curve.A) >= 0)
    assert 0.0 <= curve.auc_m <= 0.3


def test_roc_needs_two_points():
    with pytest.raises(BacktestError):
        roc([(0.5, confusion([0.1], [True], 0.5))])


def test_day_state_convention():
    r = np.array([0.0, 2.0, 0.0, 0.0, 3.0, 0.0, 0.0])
    spec = ExtremeSpec(0.9)
    assert day_state(r[:1], spec, 1.0) is None
    # last extreme on day 4; after day 6 closes, 2 days have elapsed
    assert day_state(r, spec, 1.0) == (2, 2.0)
    assert day_state(r[:5], spec, 1.0) == (0, 2.0)


def test_near_periodic_series_hazard_peaks_near_period():
    rng = np.random.default_rng(0)
    gaps = 10 + rng.choice([-1, 0, 0, 0, 1], 200)
    idx = np.cumsum(gaps)
    r = np.full(idx[-1] + 1, -0.01)
    r[idx] = 0.02 + 0.01 * rng.random(idx.size)
    cfg = BacktestConfig(refit_every=10_000, copula_choice=bt.FRANK)
    rep = run_backtest(r, cfg)
    fit = rep.results["positive_0.9"].fits[0]
    assert fit.ri.tau_mean == pytest.approx(10.0, abs=0.2)
    assert hazard_ri(fit.ri, HazardQuery(9.0)) > hazard_ri(fit.ri, HazardQuery(1.0))


def test_report_shape_and_records(series):
    cfg = BacktestConfig(refit_every=50, pairing="start")
    rep = run_backtest(series, cfg)
    res = rep.results["positive_0.9"]
    rec = res.records
    split = int(0.7 * len(series))
    assert [f.fit_day for f in res.fits] == list(range(split, 900, 50))
    assert set(rec["period"]) == {"in", "out"}
    assert np.all(rec["day"][rec["period"] == "out"] >= split)
    assert np.all(np.diff(rec["day"]) > 0)
    assert np.all((rec["W"] >= 0) & (rec["W"] <= 1) & (rec["Wy"] >= 0) & (rec["Wy"] <= 1))
    table = res.auc_table()
    assert set(table) == {"in", "out"} and all(0 <= v <= 0.3 for p in table.values() for v in p.values())


def test_fixed_zero_theta_reduces_to_w(series):
    rep = run_backtest(series, BacktestConfig(refit_every=100, fixed_theta=0.0))
    rec = rep.results["positive_0.9"].records
    assert np.array_equal(rec["W"], rec["Wy"])


def test_fixed_threshold_freezes_threshold(series):
    r = np.array(series.returns) + np.linspace(0, 0.01, len(series))
    rep = run_backtest(r, BacktestConfig(refit_every=60, fixed_threshold=True, copula_choice="auto"))
    thr = {f.threshold for f in rep.results["positive_0.9"].fits}
    assert len(thr) == 1
    rep2 = run_backtest(r, BacktestConfig(refit_every=60))
    assert len({f.threshold for f in rep2.results["positive_0.9"].fits}) > 1


def test_no_out_of_sample_extremes_gives_nan_and_warning():
    rng = np.random.default_rng(1)
    r = np.full(1000, -0.01)
    r[rng.choice(650, 50, replace=False)] = 0.05 + 0.01 * rng.random(50)
    rep = run_backtest(r, BacktestConfig(refit_every=1000, fixed_threshold=True))
    res = rep.results["positive_0.9"]
    assert math.isnan(res.auc_table()["out"]["W"])
    assert any("no out-sample extremes" in w for w in rep.warnings)


def test_failed_refit_is_carried_forward(series, monkeypatch):
    real = bt.fit_window
    split = int(0.7 * len(series))

    def flaky(r, spec, cfg, fit_day, threshold, cache=None):
        if fit_day == split + 50:
            raise EventError("synthetic failure")
        return real(r, spec, cfg, fit_day, threshold, cache)

    monkeypatch.setattr(bt, "fit_window", flaky)
    rep = run_backtest(series, BacktestConfig(refit_every=50))
    fits = rep.results["positive_0.9"].fits
    assert fits[1].carried and fits[1].ri == fits[0].ri
    assert any("carrying forward" in w for w in rep.warnings)


def test_initial_fit_failure_is_an_error():
    with pytest.raises(BacktestError, match="initial fit"):
        run_backtest(np.r_[np.zeros(300), 1.0, np.zeros(5), 1.0, np.zeros(100)], BacktestConfig())


def test_threaded_run_is_identical(series):
    cfg = BacktestConfig(refit_every=40)
    a = run_backtest(series, cfg, workers=1).results["positive_0.9"].records
    b = run_backtest(series, cfg, workers=3).results["positive_0.9"].records
    for key in ("W", "Wy", "t", "y_last"):
        assert np.array_equal(a[key], b[key])


def test_audit_is_bit_identical(series):
    cfg = BacktestConfig(refit_every=7, pairing="start")
    rep = run_backtest(series, cfg)
    rows = audit_days(series, cfg, rep, n_days=8, seed=2)
    assert len(rows) == 8 and all(r["identical"] for r in rows)


def test_config_validation_and_roundtrip():
    cfg = BacktestConfig(split=0.6, quantiles=(ExtremeSpec(0.95), ExtremeSpec(0.05, "negative")),
                         refit_every=3, copula_choice="auto")
    assert BacktestConfig.from_dict(cfg.to_dict()) == cfg
    for bad in ({"split": 1.0}, {"dt": 0.5}, {"refit_every": 0}, {"qp_grid": (0.2, 1.0)},
                {"copula_choice": "clayton"}, {"pairing": "mid"}, {"quantiles": ()}):
        with pytest.raises(BacktestError):
            BacktestConfig(**bad)
    with pytest.raises(BacktestError, match="unknown"):
        BacktestConfig.from_dict({"splitt": 0.5})
