"""Acceptance gate: one recorded PASS/FAIL/SKIP line per criterion.

The lines are printed in the terminal summary (see conftest.py) and each
test also fails or skips in the usual way.
"""

import math
import os
import time

import numpy as np
import pytest
from scipy import integrate

from conftest import ACCEPTANCE
from tailhazard.backtest import BacktestConfig, audit_days, confusion_sweep, default_qp_grid, roc, run_backtest
from tailhazard.copula import AMH, FRANK, CopulaFit, PseudoSample, fit_copula, select_copula
from tailhazard.events import ExtremeSpec, extract_events
from tailhazard.hazard import HazardModel, HazardQuery, hazard_arrays, hazard_joint, hazard_ri
from tailhazard.ingest import load_series, quantile, to_returns
from tailhazard.marginals import QE, RI_FAMILIES, SE, WEIBULL, GPDFit, RIFit, fit_gpd, fit_ri
from tailhazard.synth import GeneratorSpec, sample_copula, sample_gpd, sample_return_series, sample_ri


def record(num: int, ok: bool, detail: str) -> None:
    ACCEPTANCE.append((num, "PASS" if ok else "FAIL", detail))
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def random_model(rng, family):
    fam = RI_FAMILIES[rng.integers(3)]
    shape = {SE: rng.uniform(0.4, 0.95), QE: rng.uniform(1.02, 1.45), WEIBULL: rng.uniform(0.5, 0.98)}[fam]
    ri = RIFit(fam, float(shape), float(rng.uniform(4, 20)))
    gpd = GPDFit(float(rng.uniform(-0.3, 0.5)), float(rng.uniform(0.005, 0.03)))
    if family == FRANK:
        theta = float(rng.choice([-1, 1]) * rng.uniform(0.2, 8.0))
    else:
        theta = float(rng.uniform(-1.0, 0.95))
    return HazardModel(ri, gpd, CopulaFit(family, theta, math.nan))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(400)


def wy_by_quadrature(m: HazardModel, q: HazardQuery) -> float:
    """Double integral of p(tau) g(y) c(P(tau), G(y)) over y <= y_last.

    The inner integral over y uses 400-node Gauss-Legendre on [0, y_last];
    the outer one over tau adaptive quadrature (to infinity for the
    denominator).
    """
    ys = 0.5 * q.y_last * (_GL_X + 1.0)
    wts = 0.5 * q.y_last * _GL_W
    gy = m.gpd.pdf(ys)
    vy = m.gpd.cdf(ys)

    def inner(tau):
        u = float(m.ri.cdf(tau))
        return float(m.ri.pdf(tau)) * float(np.sum(wts * gy * m.cop.pdf(np.full_like(vy, u), vy)))

    kw = {"epsabs": 1e-14, "epsrel": 1e-11, "limit": 400}
    num = integrate.quad(inner, q.t, q.t + q.dt, **kw)[0]
    den = num + integrate.quad(inner, q.t + q.dt, np.inf, **kw)[0]
    return num / den


def test_criterion_1_closed_form_hazard():
    rng = np.random.default_rng(101)
    t0 = time.time()
    worst = 0.0
    for family in (FRANK, AMH):
        for _ in range(50):
            m = random_model(rng, family)
            tau_q = m.ri.tau_mean
            q = HazardQuery(float(rng.uniform(0, 3 * tau_q)), float(rng.choice([1.0, 2.0, 5.0])),
                            float(m.gpd.ppf(rng.uniform(0.05, 0.99))))
            worst = max(worst, abs(hazard_joint(m, q) - wy_by_quadrature(m, q)))
    elapsed = time.time() - t0
    record(1, worst <= 1e-6 and elapsed < 60,
           f"max |W_y - quadrature| = {worst:.2e} over 100 tuples in {elapsed:.1f}s")


def test_criterion_2_reduction_identities():
    rng = np.random.default_rng(202)
    worst = 0.0
    for i in range(100):
        family = (FRANK, AMH)[i % 2]
        m = random_model(rng, family)
        q = HazardQuery(float(rng.uniform(0, 50)), float(rng.uniform(0.5, 5)), float(rng.uniform(1e-4, 0.1)))
        w = hazard_ri(m.ri, q)
        indep = HazardModel(m.ri, m.gpd, CopulaFit(family, 0.0, math.nan))
        worst = max(worst, abs(hazard_joint(indep, q) - w))
        # v = 1: sizes at or beyond a bounded GPD support
        bounded = HazardModel(m.ri, GPDFit(-0.5, 0.01), m.cop)
        q1 = HazardQuery(q.t, q.dt, 0.02)
        worst = max(worst, abs(hazard_joint(bounded, q1) - hazard_ri(m.ri, q1)))
        _, wy, _ = hazard_arrays(bounded.ri, bounded.gpd, bounded.cop, [q1.t], [0.5], q1.dt)
        worst = max(worst, abs(wy[0] - hazard_ri(m.ri, q1)))
    record(2, worst <= 1e-10, f"max |W_y - W| = {worst:.2e} on 100 queries (theta=0 and v=1)")


RECOVERY = {
    "stretched_exponential mu=0.72": 0.05,
    "q_exponential q=1.2": 0.03,
    "weibull alpha=0.89": 0.05,
    "gpd xi=0.2 (relative)": 0.10,
    "gpd phi=0.015 (relative)": 0.10,
    "frank theta=-1.5": 0.15,
    "amh theta=-0.712": 0.10,
}


def recovery_errors(seed: int) -> dict:
    n = 5000
    g = fit_gpd(sample_gpd(0.2, 0.015, n, seed))
    return {
        "stretched_exponential mu=0.72": abs(fit_ri(sample_ri(RIFit(SE, 0.72, 9.606), n, seed), SE).shape - 0.72),
        "q_exponential q=1.2": abs(fit_ri(sample_ri(RIFit(QE, 1.2, 10.0), n, seed), QE).shape - 1.2),
        "weibull alpha=0.89": abs(fit_ri(sample_ri(RIFit(WEIBULL, 0.89, 10.0), n, seed), WEIBULL).shape - 0.89),
        "gpd xi=0.2 (relative)": abs(g.xi / 0.2 - 1.0),
        "gpd phi=0.015 (relative)": abs(g.phi / 0.015 - 1.0),
        "frank theta=-1.5": abs(fit_copula(PseudoSample(*sample_copula(FRANK, -1.5, n, seed)), FRANK).theta + 1.5),
        "amh theta=-0.712": abs(fit_copula(PseudoSample(*sample_copula(AMH, -0.712, n, seed)), AMH).theta + 0.712),
    }


def test_criterion_3_parameter_recovery():
    t0 = time.time()
    hits = dict.fromkeys(RECOVERY, 0)
    for seed in range(20):
        for key, err in recovery_errors(seed).items():
            hits[key] += err <= RECOVERY[key]
    elapsed = time.time() - t0
    ok = all(h >= 18 for h in hits.values()) and elapsed < 300
    detail = ", ".join(f"{k}: {h}/20" for k, h in hits.items())
    record(3, ok, f"{detail}; {elapsed:.0f}s")


def test_criterion_4_golden_matches_exhaustive_grid():
    worst = 0.0
    gen = {SE: RIFit(SE, 0.72, 9.606), QE: RIFit(QE, 1.25, 10.0), WEIBULL: RIFit(WEIBULL, 0.89, 10.0)}
    for fam, law in gen.items():
        for seed in range(5):
            tau = np.maximum(np.ceil(sample_ri(law, 1500, 40 + seed)), 1.0)
            fast = fit_ri(tau, fam)
            exact = fit_ri(tau, fam, exact_grid=True)
            worst = max(worst, abs(fast.shape - exact.shape))
    record(4, worst <= 1e-6, f"max |golden - grid| shape difference {worst:.1e} over 15 samples")


def test_criterion_5_cdf_pdf_consistency():
    rng = np.random.default_rng(505)
    worst_fd = 0.0
    worst_mass = 0.0
    for fam, law in ((SE, RIFit(SE, 0.72, 9.606)), (QE, RIFit(QE, 1.25, 10.0)), (WEIBULL, RIFit(WEIBULL, 0.89, 10.0))):
        fit = fit_ri(np.ceil(sample_ri(law, 3000, 5)), fam)
        t = rng.uniform(0.2, 60.0, 20)
        h = 1e-5 * t
        fd = (fit.cdf(t + h) - fit.cdf(t - h)) / (2 * h)
        worst_fd = max(worst_fd, float(np.max(np.abs(fd / fit.pdf(t) - 1))))
        worst_mass = max(worst_mass, abs(integrate.quad(fit.pdf, 0, np.inf, limit=400, epsabs=1e-12)[0] - 1))
    gpd = fit_gpd(sample_gpd(0.2, 0.015, 3000, 5))
    y = rng.uniform(1e-4, 0.2, 20)
    h = 1e-6 * y
    fd = (gpd.cdf(y + h) - gpd.cdf(y - h)) / (2 * h)
    worst_fd = max(worst_fd, float(np.max(np.abs(fd / gpd.pdf(y) - 1))))
    worst_mass = max(worst_mass, abs(integrate.quad(gpd.pdf, 0, np.inf, limit=400, epsabs=1e-12)[0] - 1))
    for family, theta in ((FRANK, -1.5), (AMH, -0.712)):
        cop = fit_copula(PseudoSample(*sample_copula(family, theta, 3000, 5)), family)
        u, v = rng.uniform(0.05, 0.95, (2, 20))
        h = 1e-4
        c = cop.cdf
        fd = (c(u + h, v + h) - c(u + h, v - h) - c(u - h, v + h) + c(u - h, v - h)) / (4 * h * h)
        worst_fd = max(worst_fd, float(np.max(np.abs(fd / cop.pdf(u, v) - 1))))
        mass = integrate.dblquad(lambda b, a: cop.pdf(a, b), 0, 1, 0, 1, epsabs=1e-11, epsrel=1e-11)[0]
        worst_mass = max(worst_mass, abs(mass - 1))
    record(5, worst_fd <= 1e-5 and worst_mass <= 1e-6,
           f"max relative cdf'/pdf gap {worst_fd:.1e}, max |mass - 1| {worst_mass:.1e} over 6 fitted models")


def test_criterion_6_roc_machinery():
    rng = np.random.default_rng(606)
    truth = rng.random(2000) < 0.1
    perfect = roc(confusion_sweep(truth.astype(float), truth, default_qp_grid())).auc_m
    constant = roc(confusion_sweep(np.full(truth.size, 0.37), truth, default_qp_grid())).auc_m
    record(6, perfect == 0.3 and abs(constant - 0.045) <= 0.005,
           f"perfect AUC_m = {perfect!r}, constant AUC_m = {constant:.6f}")


_BACKTESTS: dict = {}


def synthetic_backtest(seed: int):
    if seed not in _BACKTESTS:
        spec = GeneratorSpec(ri_family=QE, ri_shape=1.25, tau_mean=10.0, xi=0.15, phi=0.01,
                             copula=FRANK, theta=-1.5, seed=seed, pairing="start")
        r = sample_return_series(spec, 5000)
        cfg = BacktestConfig(pairing="start")
        _BACKTESTS[seed] = (r, cfg, run_backtest(r, cfg))
    return _BACKTESTS[seed]


def test_criterion_7_end_to_end_backtest():
    t0 = time.time()
    wins = []
    for seed in range(10):
        _, _, rep = synthetic_backtest(seed)
        auc = rep.results["positive_0.9"].auc_table()["out"]
        wins.append(auc["Wy"] > auc["W"])
    elapsed = time.time() - t0
    record(7, sum(wins) >= 7 and elapsed < 600,
           f"W_y beats W out of sample in {sum(wins)}/10 seeds; {elapsed:.0f}s")


def test_criterion_8_djia_reproduction():
    path = os.environ.get("TAILHAZARD_DJIA")
    if not path or not os.path.exists(path):
        ACCEPTANCE.append((8, "SKIP", "set TAILHAZARD_DJIA to a date,value DJIA price CSV (1885-2019)"))
        pytest.skip("no DJIA data supplied")
    from tailhazard.cli import fit_report
    r = to_returns(load_series(path, "price"))
    pos = fit_report(r, ExtremeSpec(0.9, "positive"))
    neg = fit_report(r, ExtremeSpec(0.1, "negative"))
    checks = [
        abs(pos["table"]["q"] - 1.25) <= 0.02,
        abs(pos["table"]["xi"] - 0.26) <= 0.05,
        pos["table"]["copula"] == FRANK,
        neg["table"]["copula"] == AMH,
    ]
    published = {  # reported out-of-sample DJIA AUC_m: RI, Frank, AMH
        (0.01, "negative"): (0.178, 0.180, 0.180), (0.05, "negative"): (0.095, 0.105, 0.104),
        (0.1, "negative"): (0.082, 0.091, 0.091), (0.9, "positive"): (0.059, 0.067, 0.068),
        (0.95, "positive"): (0.082, 0.100, 0.095), (0.99, "positive"): (0.171, 0.172, 0.174),
    }
    refit = int(os.environ.get("TAILHAZARD_DJIA_REFIT", "1"))
    worst = 0.0
    for (q, side), ref in published.items():
        spec = ExtremeSpec(q, side)
        for family, want_w, want_wy in ((FRANK, ref[0], ref[1]), (AMH, ref[0], ref[2])):
            rep = run_backtest(r, BacktestConfig(quantiles=(spec,), copula_choice=family, refit_every=refit))
            auc = rep.results[spec.label].auc_table()["out"]
            worst = max(worst, abs(auc["W"] - want_w), abs(auc["Wy"] - want_wy))
    checks.append(worst <= 0.03)
    record(8, all(checks), f"q={pos['table']['q']:.3f}, xi={pos['table']['xi']:.3f}, "
           f"copulas {pos['table']['copula']}/{neg['table']['copula']}, max AUC_m gap {worst:.3f}")


def test_criterion_9_anti_lookahead_audit():
    r, cfg, rep = synthetic_backtest(0)
    rows = audit_days(r, cfg, rep, n_days=20, seed=9)
    same = sum(row["identical"] for row in rows)
    record(9, len(rows) == 20 and same == 20, f"{same}/{len(rows)} recomputed days bit-identical")
