"""Recurrence-interval distributions and the generalized Pareto distribution.

The three recurrence-interval families each carry a single free shape
parameter; the scale is pinned by requiring the model mean to equal the
sample mean ``tau_mean``:

* stretched exponential ``p(t) = a exp(-(b t)**mu)``, ``mu`` in (0, 1)
* q-exponential ``p(t) = (2-q) lam [1 + (q-1) lam t]**(-1/(q-1))``, ``q`` in (0, 1.5)
* Weibull with shape ``alpha`` in (0, 1) and scale ``beta``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from ._optim import golden_max, grid_max, snap_to_lattice

SE = "stretched_exponential"
QE = "q_exponential"
WEIBULL = "weibull"
RI_FAMILIES = (SE, QE, WEIBULL)
SHAPE_BOUNDS = {SE: (0.0, 1.0), QE: (0.0, 1.5), WEIBULL: (0.0, 1.0)}
SHAPE_SYMBOL = {SE: "mu", QE: "q", WEIBULL: "alpha"}

SINGULAR_EPS = 1e-9
BOUNDARY_EPS = 1e-4


class FitError(ValueError):
    pass


def _check_family(family: str) -> None:
    if family not in RI_FAMILIES:
        raise FitError(f"unknown recurrence-interval family {family!r}")


# --- parameter maps -------------------------------------------------------


def se_log_ab(mu, tau_mean):
    mu = np.asarray(mu, dtype=float)
    lg1 = special.gammaln(1.0 / mu)
    lg2 = special.gammaln(2.0 / mu)
    log_a = np.log(mu) + lg2 - 2.0 * lg1 - math.log(tau_mean)
    log_b = lg2 - lg1 - math.log(tau_mean)
    return log_a, log_b


def qe_lambda(q, tau_mean):
    return 1.0 / (tau_mean * (3.0 - 2.0 * np.asarray(q, dtype=float)))


def weibull_log_beta(alpha, tau_mean):
    return math.log(tau_mean) - special.gammaln(1.0 + 1.0 / np.asarray(alpha, dtype=float))


# --- RI fits --------------------------------------------------------------


@dataclass(frozen=True)
class RIFit:
    family: str
    shape: float
    tau_mean: float
    loglik: float = math.nan
    n: int = 0
    boundary: bool = False

    def __post_init__(self):
        _check_family(self.family)
        lo, hi = SHAPE_BOUNDS[self.family]
        if not lo < self.shape < hi:
            raise FitError(f"{self.family} shape {self.shape} outside ({lo}, {hi})")
        if not self.tau_mean > 0:
            raise FitError("tau_mean must be positive")

    @property
    def derived(self) -> dict:
        if self.family == SE:
            log_a, log_b = se_log_ab(self.shape, self.tau_mean)
            return {"a": float(np.exp(log_a)), "b": float(np.exp(log_b))}
        if self.family == QE:
            return {"lambda": float(qe_lambda(self.shape, self.tau_mean))}
        return {"beta": float(np.exp(weibull_log_beta(self.shape, self.tau_mean)))}

    @property
    def upper_support(self) -> float:
        if self.family == QE and self.shape < 1.0 - SINGULAR_EPS:
            return 1.0 / ((1.0 - self.shape) * float(qe_lambda(self.shape, self.tau_mean)))
        return math.inf

    def pdf(self, tau):
        return ri_pdf(self, tau)

    def cdf(self, tau):
        return ri_cdf(self, tau)

    def ppf(self, p):
        return ri_ppf(self, p)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            SHAPE_SYMBOL[self.family]: self.shape,
            **self.derived,
            "tau_mean": self.tau_mean,
            "loglik": self.loglik,
            "n": self.n,
            "boundary": self.boundary,
        }


def _as_tau(tau, *, strict: bool):
    arr = np.asarray(tau, dtype=float)
    bad = ~(arr > 0) if strict else ~(arr >= 0)
    if np.any(bad):
        raise FitError(f"recurrence interval must be {'> 0' if strict else '>= 0'}")
    return arr


def ri_pdf(fit: RIFit, tau):
    """Density of the fitted recurrence-interval law at ``tau > 0``."""
    t = _as_tau(tau, strict=True)
    s = fit.shape
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        if fit.family == SE:
            log_a, log_b = se_log_ab(s, fit.tau_mean)
            out = np.exp(log_a - np.exp(s * (log_b + np.log(t))))
        elif fit.family == QE:
            lam = float(qe_lambda(s, fit.tau_mean))
            if abs(s - 1.0) < SINGULAR_EPS:
                out = lam * np.exp(-lam * t)
            else:
                z = 1.0 + (s - 1.0) * lam * t
                out = np.where(
                    z > 0, (2.0 - s) * lam * np.exp(-np.log(np.where(z > 0, z, 1.0)) / (s - 1.0)), 0.0
                )
        else:
            log_beta = float(weibull_log_beta(s, fit.tau_mean))
            x = np.log(t) - log_beta
            out = np.exp(math.log(s) - log_beta + (s - 1.0) * x - np.exp(s * x))
    return out if out.ndim else float(out)


def ri_cdf(fit: RIFit, tau):
    """Closed-form distribution function ``P(tau)``."""
    t = _as_tau(tau, strict=False)
    s = fit.shape
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        if fit.family == SE:
            _, log_b = se_log_ab(s, fit.tau_mean)
            x = np.where(t > 0, np.exp(s * (log_b + np.log(np.where(t > 0, t, 1.0)))), 0.0)
            out = special.gammainc(1.0 / s, x)
        elif fit.family == QE:
            lam = float(qe_lambda(s, fit.tau_mean))
            if abs(s - 1.0) < SINGULAR_EPS:
                out = -np.expm1(-lam * t)
            else:
                w = (s - 1.0) * lam * t
                inside = w > -1.0
                log_z = np.log1p(np.where(inside, w, 0.0))
                out = np.where(inside, -np.expm1((s - 2.0) / (s - 1.0) * log_z), 1.0)
        else:
            log_beta = float(weibull_log_beta(s, fit.tau_mean))
            x = np.where(t > 0, np.exp(s * (np.log(np.where(t > 0, t, 1.0)) - log_beta)), 0.0)
            out = -np.expm1(-x)
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def ri_ppf(fit: RIFit, p):
    """Inverse of :func:`ri_cdf` for ``p`` in [0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p >= 1)):
        raise FitError("probability must lie in [0, 1)")
    s = fit.shape
    if fit.family == SE:
        _, log_b = se_log_ab(s, fit.tau_mean)
        x = special.gammaincinv(1.0 / s, p)
        out = np.exp(np.log(x) / s - log_b)
    elif fit.family == QE:
        lam = float(qe_lambda(s, fit.tau_mean))
        if abs(s - 1.0) < SINGULAR_EPS:
            out = -np.log1p(-p) / lam
        else:
            out = np.expm1((s - 1.0) / (s - 2.0) * np.log1p(-p)) / ((s - 1.0) * lam)
    else:
        log_beta = float(weibull_log_beta(s, fit.tau_mean))
        out = np.exp(log_beta) * (-np.log1p(-p)) ** (1.0 / s)
    return out if out.ndim else float(out)


# --- likelihoods ----------------------------------------------------------


def _compress(sample):
    vals, counts = np.unique(np.asarray(sample, dtype=float), return_counts=True)
    return vals, counts.astype(float)


def ri_loglik(family: str, shape, vals, counts, tau_mean: float):
    """Constrained log-likelihood, vectorised over ``shape``.

    ``vals``/``counts`` hold the distinct sample values and multiplicities.
    """
    s = np.atleast_1d(np.asarray(shape, dtype=float))[:, None]
    n = counts.sum()
    logv = np.log(vals)[None, :]
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        if family == SE:
            log_a, log_b = se_log_ab(s[:, 0], tau_mean)
            tail = np.exp(s * (log_b[:, None] + logv)) @ counts
            ll = n * log_a - tail
        elif family == QE:
            lam = qe_lambda(s[:, 0], tau_mean)
            dq = s[:, 0] - 1.0
            singular = np.abs(dq) < SINGULAR_EPS
            safe_dq = np.where(singular, 1.0, dq)
            w = safe_dq[:, None] * lam[:, None] * vals[None, :]
            terms = np.where(w > -1.0, np.log1p(np.maximum(w, -1.0)), -np.inf)
            ll = n * np.log(lam * (2.0 - s[:, 0])) - (terms @ counts) / safe_dq
            ll_exp = n * np.log(lam) - lam * float(vals @ counts)
            ll = np.where(singular, ll_exp, ll)
            # a sample point on or beyond the bounded support has zero density
            ll = np.where(np.any(w <= -1.0, axis=1) & ~singular, -np.inf, ll)
        elif family == WEIBULL:
            a = s[:, 0]
            log_beta = weibull_log_beta(a, tau_mean)
            sum_log = float(np.log(vals) @ counts)
            powsum = np.exp(s * logv) @ counts
            ll = (
                n * (np.log(a) - log_beta)
                + (a - 1.0) * (sum_log - n * log_beta)
                - powsum * np.exp(-a * log_beta)
            )
        else:
            raise FitError(f"unknown recurrence-interval family {family!r}")
    return np.where(np.isnan(ll), -np.inf, ll)


def _search_bounds(family: str, vals, tau_mean: float) -> tuple[float, float]:
    lo, hi = SHAPE_BOUNDS[family]
    if family == QE:
        tmax = float(vals[-1])
        if tmax > 2.0 * tau_mean:
            # below this q the bounded support excludes the largest interval
            lo = max(lo, (tmax - 3.0 * tau_mean) / (tmax - 2.0 * tau_mean))
    return lo, hi


def fit_ri(tau_sample, family: str, *, exact_grid: bool = False, min_size: int = 10) -> RIFit:
    """Maximum-likelihood shape for one recurrence-interval family.

    The default search is a golden-section maximisation snapped to the
    1e-6 lattice; ``exact_grid=True`` evaluates every lattice point
    instead. Both return a lattice value.
    """
    _check_family(family)
    tau = np.asarray(tau_sample, dtype=float)
    if tau.size < min_size:
        raise FitError(f"need at least {min_size} recurrence intervals, got {tau.size}")
    if np.any(~(tau > 0)) or not np.all(np.isfinite(tau)):
        raise FitError("recurrence intervals must be positive and finite")
    if np.all(tau == tau[0]):
        raise FitError("all recurrence intervals are equal; likelihood is degenerate")
    tau_mean = float(tau.mean())
    vals, counts = _compress(tau)

    def f(x):
        return ri_loglik(family, x, vals, counts, tau_mean)

    lo, hi = SHAPE_BOUNDS[family]
    if exact_grid:
        shape, ll = grid_max(f, lo, hi)
    else:
        slo, shi = _search_bounds(family, vals, tau_mean)
        x = golden_max(f, slo, shi)
        shape, ll = snap_to_lattice(f, x, lo, hi)
    if not math.isfinite(ll):
        raise FitError(f"{family} likelihood is not finite anywhere on the search interval")
    boundary = shape - lo < BOUNDARY_EPS or hi - shape < BOUNDARY_EPS
    return RIFit(family, shape, tau_mean, ll, int(tau.size), boundary)


def best_ri_fit(tau_sample, **kw) -> tuple[RIFit, dict[str, RIFit]]:
    fits = {fam: fit_ri(tau_sample, fam, **kw) for fam in RI_FAMILIES}
    best = max(fits.values(), key=lambda ft: ft.loglik)
    return best, fits


# --- GPD ------------------------------------------------------------------


@dataclass(frozen=True)
class GPDFit:
    xi: float
    phi: float
    loglik: float = math.nan
    n: int = 0
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.phi > 0:
            raise FitError("GPD scale phi must be positive")

    @property
    def upper_support(self) -> float:
        if self.xi < -SINGULAR_EPS:
            return -self.phi / self.xi
        return math.inf

    def pdf(self, y):
        return gpd_pdf(self, y)

    def cdf(self, y):
        return gpd_cdf(self, y)

    def ppf(self, p):
        return gpd_ppf(self, p)

    def to_dict(self) -> dict:
        return {"phi": self.phi, "xi": self.xi, "loglik": self.loglik, "n": self.n}


def _as_y(fit: GPDFit, y):
    arr = np.asarray(y, dtype=float)
    if np.any(~(arr >= 0)):
        raise FitError("exceeding size must be >= 0")
    if np.any(arr > fit.upper_support):
        raise FitError(f"exceeding size beyond GPD support {fit.upper_support}")
    return arr


def gpd_pdf(fit: GPDFit, y):
    y = _as_y(fit, y)
    if abs(fit.xi) < SINGULAR_EPS:
        out = np.exp(-y / fit.phi) / fit.phi
    else:
        with np.errstate(divide="ignore"):
            out = np.exp((-1.0 / fit.xi - 1.0) * np.log1p(fit.xi * y / fit.phi)) / fit.phi
    return out if out.ndim else float(out)


def gpd_cdf(fit: GPDFit, y):
    y = _as_y(fit, y)
    if abs(fit.xi) < SINGULAR_EPS:
        out = -np.expm1(-y / fit.phi)
    else:
        with np.errstate(divide="ignore"):
            out = -np.expm1(-np.log1p(fit.xi * y / fit.phi) / fit.xi)
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def gpd_ppf(fit: GPDFit, p):
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p >= 1)):
        raise FitError("probability must lie in [0, 1)")
    if abs(fit.xi) < SINGULAR_EPS:
        out = -fit.phi * np.log1p(-p)
    else:
        out = fit.phi * np.expm1(-fit.xi * np.log1p(-p)) / fit.xi
    return out if out.ndim else float(out)


def gpd_loglik(xi: float, phi: float, y) -> float:
    if not phi > 0:
        return -math.inf
    n = y.shape[0]
    if abs(xi) < SINGULAR_EPS:
        return float(-n * math.log(phi) - y.sum() / phi)
    w = xi * y / phi
    if w.min() <= -1.0:
        return -math.inf
    return float(-n * math.log(phi) - (1.0 / xi + 1.0) * np.log1p(w).sum())


XI_BOUNDS = (-1.0, 5.0)


def fit_gpd(y_sample, *, min_size: int = 10, maxiter: int = 2000) -> GPDFit:
    """Maximum-likelihood ``(xi, phi)`` by multi-start Nelder-Mead.

    The search runs on ``(xi, log phi)``. Two starts (moment estimate and
    exponential) always run; two more run only if those disagree. After
    convergence a 3x3
    neighbourhood is probed; a better neighbour restarts the search there.
    """
    y = np.asarray(y_sample, dtype=float)
    if y.size < min_size:
        raise FitError(f"need at least {min_size} exceeding sizes, got {y.size}")
    if np.any(~(y >= 0)) or not np.all(np.isfinite(y)):
        raise FitError("exceeding sizes must be finite and >= 0")
    m = float(y.mean())
    if m <= 0:
        raise FitError("all exceeding sizes are zero")
    var = float(y.var())
    ratio = m * m / var if var > 0 else 1.0
    xi_mom = float(np.clip(0.5 * (1.0 - ratio), -0.45, 0.9))
    phi_mom = 0.5 * m * (ratio + 1.0)
    starts = [(xi_mom, phi_mom), (0.0, m), (0.3, 0.7 * m), (-0.2, 1.2 * m)]

    def nll(p):
        xi, log_phi = p
        if not XI_BOUNDS[0] < xi < XI_BOUNDS[1]:
            return math.inf
        ll = gpd_loglik(xi, math.exp(log_phi), y)
        return -ll if math.isfinite(ll) else math.inf

    def run(x0):
        with np.errstate(invalid="ignore"):
            return optimize.minimize(
                nll, x0, method="Nelder-Mead",
                options={"xatol": 1e-9, "fatol": 1e-10, "maxiter": maxiter, "maxfev": 2 * maxiter},
            )

    best = None
    found = []
    for i, (xi0, phi0) in enumerate(starts):
        if i == 2 and len(found) == 2 and abs(found[0] - found[1]) < 1e-7:
            break
        x0 = np.array([xi0, math.log(phi0)])
        if not math.isfinite(nll(x0)):
            continue
        res = run(x0)
        if math.isfinite(res.fun):
            found.append(res.fun)
            if best is None or res.fun < best.fun:
                best = res
    if best is None:
        raise FitError("GPD likelihood is not finite at any starting point")

    restarts = 0
    while restarts < 5:
        x = best.x
        probes = [
            x + np.array([dx, dl])
            for dx in (-1e-3, 0.0, 1e-3)
            for dl in (-1e-3, 0.0, 1e-3)
            if dx or dl
        ]
        better = min(probes, key=nll)
        if nll(better) < best.fun - 1e-12:
            res = run(better)
            if res.fun < best.fun:
                best = res
            restarts += 1
        else:
            break

    if not best.success:
        raise FitError(
            f"GPD fit did not converge: {best.message} "
            f"(nit={best.nit}, xi={best.x[0]:.6g}, phi={math.exp(best.x[1]):.6g})"
        )
    xi, phi = float(best.x[0]), float(math.exp(best.x[1]))
    if abs(xi) < SINGULAR_EPS:
        xi = 0.0
    return GPDFit(xi, phi, -float(best.fun), int(y.size),
                  {"nit": int(best.nit), "nfev": int(best.nfev), "restarts": restarts})
