import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, special, stats

from tailhazard.marginals import (
    QE, RI_FAMILIES, SE, WEIBULL, FitError, GPDFit, RIFit, best_ri_fit, fit_gpd, fit_ri, gpd_loglik,
)

SHAPES = {SE: [0.3, 0.7, 0.95], QE: [0.6, 1.0, 1.2, 1.45], WEIBULL: [0.4, 0.8, 0.99]}
CASES = [(fam, s) for fam, ss in SHAPES.items() for s in ss]


def scipy_law(fam, shape, tau_mean):
    """Independent parameterisations of the three laws through scipy.stats."""
    if fam == WEIBULL:
        beta = tau_mean / special.gamma(1.0 + 1.0 / shape)
        return stats.weibull_min(shape, scale=beta)
    if fam == SE:
        # generalized gamma with c*a = 1; pick b so that the mean is tau_mean
        a = 1.0 / shape
        scale = tau_mean * special.gamma(a) / special.gamma(2.0 * a)
        return stats.gengamma(a, shape, scale=scale)
    if shape > 1.0:
        # q-exponential with 1 < q < 2 is a Lomax law; mean = 1/(lam(3-2q))
        lam = 1.0 / (tau_mean * (3.0 - 2.0 * shape))
        return stats.lomax((2.0 - shape) / (shape - 1.0), scale=1.0 / ((shape - 1.0) * lam))
    return None


@pytest.mark.parametrize("fam, shape", CASES)
def test_density_normalised_with_pinned_mean(fam, shape):
    fit = RIFit(fam, shape, 7.0)
    top = fit.upper_support
    mass = integrate.quad(fit.pdf, 0, top, limit=400)[0] if math.isfinite(top) else \
        integrate.quad(fit.pdf, 0, np.inf, limit=400)[0]
    mean = integrate.quad(lambda t: t * fit.pdf(t), 0, top if math.isfinite(top) else np.inf, limit=400)[0]
    assert mass == pytest.approx(1.0, abs=1e-7)
    assert mean == pytest.approx(7.0, rel=1e-6)


@pytest.mark.parametrize("fam, shape", CASES)
def test_against_scipy_reference(fam, shape):
    ref = scipy_law(fam, shape, 7.0)
    if ref is None:
        pytest.skip("no scipy counterpart for bounded q-exponential")
    fit = RIFit(fam, shape, 7.0)
    t = np.array([0.05, 0.5, 1.0, 3.0, 7.0, 20.0, 80.0])
    np.testing.assert_allclose(fit.pdf(t), ref.pdf(t), rtol=1e-9)
    np.testing.assert_allclose(fit.cdf(t), ref.cdf(t), rtol=1e-9, atol=1e-15)
    p = np.array([0.01, 0.3, 0.5, 0.9, 0.999])
    np.testing.assert_allclose(fit.ppf(p), ref.ppf(p), rtol=1e-8)


def test_qe_exponential_limit():
    t = np.linspace(0.1, 30, 20)
    a = RIFit(QE, 1.0, 5.0)
    b = RIFit(QE, 1.0 + 1e-7, 5.0)
    np.testing.assert_allclose(a.pdf(t), stats.expon(scale=5.0).pdf(t), rtol=1e-12)
    np.testing.assert_allclose(b.cdf(t), a.cdf(t), rtol=1e-5)


def test_qe_bounded_support():
    fit = RIFit(QE, 0.5, 4.0)
    top = fit.upper_support
    assert math.isfinite(top)
    assert fit.pdf(top * 1.01) == 0.0
    assert fit.cdf(top * 1.01) == 1.0


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(CASES), st.floats(0.001, 0.999))
def test_ppf_roundtrip(case, p):
    fit = RIFit(case[0], case[1], 9.0)
    assert fit.cdf(fit.ppf(p)) == pytest.approx(p, abs=1e-9)


def test_shape_validation():
    with pytest.raises(FitError):
        RIFit(SE, 1.0, 5.0)
    with pytest.raises(FitError):
        RIFit(QE, 1.5, 5.0)
    with pytest.raises(FitError):
        RIFit("gamma", 0.5, 5.0)


@pytest.mark.parametrize("fam", [SE, WEIBULL, QE])
def test_fit_matches_independent_maximiser(fam, rng):
    tau = np.ceil(RIFit(fam, {SE: 0.6, WEIBULL: 0.8, QE: 1.2}[fam], 10.0).ppf(rng.random(400)))
    fit = fit_ri(tau, fam)
    m = tau.mean()

    def nll(s):
        if fam == QE and s > 1.0:
            return -scipy_law(fam, s, m).logpdf(tau).sum()
        if fam == QE:
            lam = 1.0 / (m * (3.0 - 2.0 * s))
            z = 1.0 + (s - 1.0) * lam * tau
            if np.any(z <= 0):
                return np.inf
            return -np.sum(np.log((2.0 - s) * lam) - np.log(z) / (s - 1.0))
        return -scipy_law(fam, s, m).logpdf(tau).sum()

    lo, hi = {SE: (0.01, 0.999), WEIBULL: (0.01, 0.999), QE: (1.0001, 1.4999)}[fam]
    ref = optimize.minimize_scalar(nll, bounds=(lo, hi), method="bounded", options={"xatol": 1e-9})
    assert fit.shape == pytest.approx(ref.x, abs=2e-6)
    assert fit.loglik >= -ref.fun - 1e-6
    assert round(fit.shape * 1e6) == pytest.approx(fit.shape * 1e6, abs=1e-6)


def test_fit_errors():
    with pytest.raises(FitError, match="at least"):
        fit_ri(np.arange(1, 6), QE)
    with pytest.raises(FitError, match="equal"):
        fit_ri(np.full(20, 4.0), QE)
    with pytest.raises(FitError):
        fit_ri(np.r_[np.arange(1, 20), 0.0], QE)


def test_best_fit_picks_largest_likelihood(rng):
    tau = np.ceil(RIFit(QE, 1.25, 10.0).ppf(rng.random(800)))
    best, fits = best_ri_fit(tau)
    assert set(fits) == set(RI_FAMILIES)
    assert best.loglik == max(f.loglik for f in fits.values())
    assert best.family == QE


# --- GPD --------------------------------------------------------------------


@pytest.mark.parametrize("xi", [-0.4, -1e-12, 0.0, 0.2, 0.8])
def test_gpd_against_scipy(xi):
    fit = GPDFit(xi, 0.02)
    ref = stats.genpareto(xi, scale=0.02)
    y = np.array([0.0, 0.001, 0.01, 0.03, 0.045])
    np.testing.assert_allclose(fit.pdf(y), ref.pdf(y), rtol=1e-9)
    np.testing.assert_allclose(fit.cdf(y), ref.cdf(y), rtol=1e-9, atol=1e-16)
    p = np.array([0.0, 0.2, 0.7, 0.99])
    np.testing.assert_allclose(fit.ppf(p), ref.ppf(p), rtol=1e-9, atol=1e-16)


def test_gpd_bounded_support():
    fit = GPDFit(-0.5, 0.02)
    assert fit.upper_support == pytest.approx(0.04)
    assert fit.cdf(0.04) == 1.0
    with pytest.raises(FitError, match="support"):
        fit.cdf(0.05)


def test_gpd_loglik_matches_scipy(rng):
    y = stats.genpareto(0.2, scale=0.01).rvs(300, random_state=1)
    assert gpd_loglik(0.2, 0.01, y) == pytest.approx(stats.genpareto(0.2, scale=0.01).logpdf(y).sum(), rel=1e-12)
    assert gpd_loglik(-0.5, 0.001, y) == -np.inf


@pytest.mark.parametrize("xi", [-0.2, 0.15, 0.4])
def test_gpd_fit_at_least_as_good_as_scipy(xi):
    y = stats.genpareto(xi, scale=0.01).rvs(2000, random_state=7)
    fit = fit_gpd(y)
    c, _, scale = stats.genpareto.fit(y, floc=0)
    assert fit.loglik >= gpd_loglik(c, scale, y) - 1e-6
    assert fit.xi == pytest.approx(c, abs=2e-3)
    assert fit.phi == pytest.approx(scale, rel=2e-3)


def test_gpd_fit_errors():
    with pytest.raises(FitError):
        fit_gpd([0.1] * 5)
    with pytest.raises(FitError):
        fit_gpd(np.r_[np.full(20, 0.1), -0.1])
