"""Frank and Ali-Mikhail-Haq copulas: CDFs, densities, IFM fitting, goodness of fit."""

from __future__ import annotations

import math
import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ._optim import golden_max, snap_to_lattice

FRANK = "frank"
AMH = "amh"
COPULA_FAMILIES = (FRANK, AMH)

FRANK_RANGE = (-50.0, 50.0)
FRANK_GAP = 1e-4
AMH_RANGE = (-1.0 + 1e-9, 1.0 - 1e-6)
CLAMP = 1e-9
AIC_SENTINEL = -1e300


class CopulaError(ValueError):
    pass


def check_theta(family: str, theta: float) -> None:
    """Validate a dependence parameter.

    Frank accepts ``theta == 0`` as the independence limit even though a
    fitted Frank parameter is never zero.
    """
    if family == FRANK:
        if not math.isfinite(theta):
            raise CopulaError(f"Frank theta must be finite, got {theta}")
    elif family == AMH:
        if not -1.0 <= theta < 1.0:
            raise CopulaError(f"AMH theta must lie in [-1, 1), got {theta}")
    else:
        raise CopulaError(f"unknown copula family {family!r}")


def _uv(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any((u < 0) | (u > 1)) or np.any((v < 0) | (v > 1)):
        raise CopulaError("copula arguments must lie in [0, 1]")
    return np.broadcast_arrays(u, v)


def _out(x):
    return x if np.ndim(x) else float(x)


def _frank_logparts(theta: float, u, v):
    # 1 - e^-t - (1 - e^-tu)(1 - e^-tv) = X + Y with X, Y of equal sign;
    # the split avoids cancellation when theta is large and positive
    lx = -theta * u + np.log(np.abs(np.expm1(-theta * v)))
    ly = -theta * v + np.log(np.abs(np.expm1(-theta * (1.0 - v))))
    return lx, ly


def copula_cdf(family: str, theta: float, u, v):
    """``C(u, v; theta)``; the margins ``C(u,1)=u``, ``C(1,v)=v`` are exact."""
    check_theta(family, theta)
    u, v = _uv(u, v)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if family == FRANK:
            if theta == 0.0:
                c = u * v
            elif abs(theta) < 1.0:
                ratio = np.expm1(-theta * u) * np.expm1(-theta * v) / np.expm1(-theta)
                c = -np.log1p(ratio) / theta
            else:
                lx, ly = _frank_logparts(theta, u, v)
                c = -(np.logaddexp(lx, ly) - math.log(abs(math.expm1(-theta)))) / theta
        else:
            c = u * v / (1.0 - theta * (1.0 - u) * (1.0 - v))
    c = np.clip(c, np.maximum(u + v - 1.0, 0.0), np.minimum(u, v))
    c = np.where(v == 1.0, u, np.where(u == 1.0, v, c))
    c = np.where((u == 0.0) | (v == 0.0), 0.0, c)
    return _out(c)


def _logpdf_raw(family: str, theta: float, u, v):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if family == FRANK:
            if theta == 0.0:
                return np.zeros(np.broadcast(u, v).shape)
            lx, ly = _frank_logparts(theta, u, v)
            return math.log(theta * -math.expm1(-theta)) - theta * (u + v) - 2.0 * np.logaddexp(lx, ly)
        w = (1.0 - u) * (1.0 - v)
        num = 1.0 + theta * ((1.0 + u) * (1.0 + v) - 3.0) + theta * theta * w
        return np.log(num) - 3.0 * np.log1p(-theta * w)


def copula_logpdf(family: str, theta: float, u, v):
    check_theta(family, theta)
    u, v = _uv(u, v)
    return _out(_logpdf_raw(family, theta, u, v))


def copula_pdf(family: str, theta: float, u, v):
    """Copula density ``c(u, v; theta)``."""
    return _out(np.exp(copula_logpdf(family, theta, u, v)))


def copula_hfunc(family: str, theta: float, u, v):
    """Conditional CDF ``P(V <= v | U = u) = dC/du``."""
    check_theta(family, theta)
    u, v = _uv(u, v)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if family == FRANK:
            if theta == 0.0:
                h = v.copy()
            else:
                lx, ly = _frank_logparts(theta, u, v)
                h = special.expit(lx - ly)
        else:
            d = 1.0 - theta * (1.0 - u) * (1.0 - v)
            h = v * (1.0 - theta * (1.0 - v)) / (d * d)
    return _out(np.clip(h, 0.0, 1.0))


def copula_loglik(family: str, theta, u, v):
    """Log-likelihood summed over the sample, vectorised over ``theta``."""
    thetas = np.atleast_1d(np.asarray(theta, dtype=float))
    u, v = _uv(u, v)
    if family == FRANK:
        ok = np.isfinite(thetas)
    elif family == AMH:
        ok = (thetas >= -1.0) & (thetas < 1.0)
    else:
        raise CopulaError(f"unknown copula family {family!r}")
    th = np.where(ok, thetas, 0.0)[:, None]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if family == FRANK:
            zero = th == 0.0
            ths = np.where(zero, 1.0, th)
            lx, ly = _frank_logparts(ths, u[None, :], v[None, :])
            lp = np.log(ths * -np.expm1(-ths)) - ths * (u + v)[None, :] - 2.0 * np.logaddexp(lx, ly)
            lp = np.where(zero, 0.0, lp)
        else:
            w = ((1.0 - u) * (1.0 - v))[None, :]
            num = 1.0 + th * ((1.0 + u) * (1.0 + v) - 3.0)[None, :] + th * th * w
            lp = np.log(num) - 3.0 * np.log1p(-th * w)
        out = lp.sum(axis=1)
    out = np.where(ok, out, -np.inf)
    return np.where(np.isnan(out), -np.inf, out)


# --- fitting --------------------------------------------------------------


@dataclass(frozen=True)
class PseudoSample:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.clip(np.asarray(self.u, dtype=float), CLAMP, 1.0 - CLAMP)
        v = np.clip(np.asarray(self.v, dtype=float), CLAMP, 1.0 - CLAMP)
        if u.shape != v.shape or u.ndim != 1:
            raise CopulaError("u and v must be 1-D arrays of equal length")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    def __len__(self) -> int:
        return int(self.u.shape[0])

    @classmethod
    def from_marginals(cls, tau, y, ri_fit, gpd_fit) -> "PseudoSample":
        """Pseudo-observations through the fitted marginal CDFs (IFM)."""
        y = np.minimum(np.asarray(y, dtype=float), gpd_fit.upper_support)
        return cls(ri_fit.cdf(tau), gpd_fit.cdf(y))


@dataclass(frozen=True)
class CopulaFit:
    family: str
    theta: float
    loglik: float
    rmse: float = math.nan
    aic: float = math.nan
    n: int = 0
    boundary: bool = False
    warnings: tuple[str, ...] = field(default=())

    def cdf(self, u, v):
        return copula_cdf(self.family, self.theta, u, v)

    def pdf(self, u, v):
        return copula_pdf(self.family, self.theta, u, v)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "theta": self.theta,
            "loglik": self.loglik,
            "rmse": self.rmse,
            "aic": self.aic,
            "n": self.n,
            "boundary": self.boundary,
        }


def _maximise(family: str, u, v) -> tuple[float, float, bool]:
    def f(x):
        return copula_loglik(family, x, u, v)

    if family == FRANK:
        # the likelihood is unimodal in theta, so the half holding the best
        # coarse point holds the maximum
        halves = ((FRANK_RANGE[0], -FRANK_GAP), (FRANK_GAP, FRANK_RANGE[1]))
        peaks = [float(np.max(f(np.linspace(lo, hi, 65)))) for lo, hi in halves]
        lo, hi = halves[int(np.argmax(peaks))]
        x = golden_max(f, lo, hi)
        theta, ll = snap_to_lattice(f, x, lo, hi)
        boundary = abs(theta) > FRANK_RANGE[1] - 1e-3 or abs(theta) < FRANK_GAP + 1e-5
    elif family == AMH:
        lo, hi = AMH_RANGE
        x = golden_max(f, lo, hi)
        theta, ll = snap_to_lattice(f, x, lo, hi)
        boundary = theta - lo < 1e-4 or hi - theta < 1e-4
    else:
        raise CopulaError(f"unknown copula family {family!r}")
    return theta, ll, boundary


def fit_copula(ps: PseudoSample, family: str, *, min_size: int = 10) -> CopulaFit:
    """Maximum-likelihood dependence parameter, with RMSE/AIC attached."""
    if family not in COPULA_FAMILIES:
        raise CopulaError(f"unknown copula family {family!r}")
    n = len(ps)
    if n < min_size:
        raise CopulaError(f"need at least {min_size} pairs to fit a copula, got {n}")
    if np.all(ps.u == ps.u[0]) or np.all(ps.v == ps.v[0]):
        raise CopulaError("degenerate pseudo-sample: constant u or v")
    theta, ll, boundary = _maximise(family, ps.u, ps.v)
    if not math.isfinite(ll):
        raise CopulaError(f"{family} likelihood not finite at the optimum")
    msgs = []
    if boundary:
        msgs.append(f"{family} theta={theta:g} at the edge of its search range")
    fit = CopulaFit(family, theta, ll, n=n, boundary=boundary)
    rmse, aic, gof_msgs = _gof(ps, fit)
    return CopulaFit(family, theta, ll, rmse, aic, n, boundary, tuple(msgs + gof_msgs))


def empirical_joint_cdf(u, v, *, chunk: int = 2048) -> np.ndarray:
    """``F_i = (1/n) #{j : u_j <= u_i and v_j <= v_i}``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = u.shape[0]
    out = np.empty(n)
    for s in range(0, n, chunk):
        ui = u[s:s + chunk, None]
        vi = v[s:s + chunk, None]
        out[s:s + chunk] = np.count_nonzero((u[None, :] <= ui) & (v[None, :] <= vi), axis=1)
    return out / n


def _gof(ps: PseudoSample, fit: CopulaFit) -> tuple[float, float, list[str]]:
    n = len(ps)
    if n < 2:
        raise CopulaError("goodness of fit needs at least 2 pairs")
    fe = empirical_joint_cdf(ps.u, ps.v)
    ft = copula_cdf(fit.family, fit.theta, ps.u, ps.v)
    mse = float(np.sum((fe - ft) ** 2) / (n - 1))
    rmse = math.sqrt(mse)
    m = 1
    if mse == 0.0:
        return rmse, AIC_SENTINEL, ["perfect empirical fit: AIC reported as sentinel"]
    return rmse, n * math.log(mse) + 2 * m, []


def goodness_of_fit(ps: PseudoSample, fit: CopulaFit) -> tuple[float, float]:
    """RMSE and AIC of the fitted copula against the empirical joint CDF."""
    rmse, aic, msgs = _gof(ps, fit)
    for msg in msgs:
        _warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return rmse, aic


def select_copula(ps: PseudoSample, fits: dict[str, CopulaFit] | None = None) -> CopulaFit:
    """Pick the family with the smaller AIC; ties go to smaller RMSE, then Frank."""
    if fits is None:
        fits = {}
        for fam in COPULA_FAMILIES:
            try:
                fits[fam] = fit_copula(ps, fam)
            except CopulaError:
                continue
    if not fits:
        raise CopulaError("both copula fits failed")
    order = {FRANK: 0, AMH: 1}
    return min(fits.values(), key=lambda f: (f.aic, f.rmse, order[f.family]))
