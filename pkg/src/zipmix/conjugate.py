"""Conjugate phi-family on theta, its credible intervals, and empirical Bayes.

With A = Kt * r and B = Kt * (1 - r) + 1 the density

    phi_{a,b;Kt,r}(theta) = c * theta^(a-1) / (A theta + B)^(a+b)

is a scaled beta-prime law: A theta / B ~ BetaPrime(a, b).  CDF and quantiles
therefore reduce to the regularized incomplete beta function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, betaincinv, gammaln

from ._stats import IntervalEstimate
from .errors import DegenerateRatio, DomainError, ImproperPosterior, MeanUndefined
from .model import DataSet, ExposureGrid, PriorSpec

__all__ = [
    "PosteriorPhi",
    "phi_logdensity",
    "phi_credible_interval",
    "EBResult",
    "empirical_bayes_mixture",
    "empirical_bayes_zipm",
]


@dataclass(frozen=True)
class PosteriorPhi:
    a: float
    b: float
    scale_Kt: float
    r: float

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError("a", f"shape a={self.a} must be positive")
        if not self.b > 0:
            raise DomainError("b", f"shape b={self.b} must be positive")
        if not self.scale_Kt > 0:
            raise DomainError("scale_Kt")
        if not (0.0 < self.r < 1.0):
            raise DomainError("r", f"r={self.r} must lie in (0, 1)")

    @property
    def A(self) -> float:
        return self.scale_Kt * self.r

    @property
    def B(self) -> float:
        return self.scale_Kt * (1.0 - self.r) + 1.0

    @property
    def log_norm(self) -> float:
        a, b = self.a, self.b
        return gammaln(a + b) - gammaln(a) - gammaln(b) + a * np.log(self.A) + b * np.log(self.B)

    def logpdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        with np.errstate(divide="ignore"):
            out = (self.log_norm + (self.a - 1.0) * np.log(theta)
                   - (self.a + self.b) * np.log(self.A * theta + self.B))
        return np.where(theta > 0, out, -np.inf)

    def pdf(self, theta):
        return np.exp(self.logpdf(theta))

    def cdf(self, theta):
        theta = np.maximum(np.asarray(theta, dtype=float), 0.0)
        x = self.A * theta / (self.A * theta + self.B)
        return betainc(self.a, self.b, x)

    def ppf(self, q):
        x = betaincinv(self.a, self.b, np.asarray(q, dtype=float))
        with np.errstate(divide="ignore"):
            return self.B * x / (self.A * (1.0 - x))

    @property
    def has_mean(self) -> bool:
        return self.b > 1.0

    def mean(self) -> float:
        if not self.has_mean:
            raise MeanUndefined(f"posterior mean needs b > 1, got b={self.b}")
        return self.B * self.a / (self.A * (self.b - 1.0))

    def median(self) -> float:
        return float(self.ppf(0.5))

    def variance(self) -> float:
        if not self.b > 2.0:
            raise MeanUndefined(f"posterior variance needs b > 2, got b={self.b}")
        a, b = self.a, self.b
        return (self.B / self.A) ** 2 * a * (a + b - 1.0) / ((b - 2.0) * (b - 1.0) ** 2)


def phi_logdensity(theta, p: PosteriorPhi):
    return p.logpdf(theta)


def phi_credible_interval(p: PosteriorPhi, level: float) -> IntervalEstimate:
    """Equal-tailed interval.  The point is the mean when it exists and falls
    inside the interval, otherwise the median."""
    if not (0.0 <= level < 1.0):
        raise DomainError("level")
    lo = float(p.ppf(0.5 - 0.5 * level))
    hi = float(p.ppf(0.5 + 0.5 * level))
    point = p.median()
    if p.has_mean:
        mean = p.mean()
        if lo <= mean <= hi:
            point = mean
    point = min(max(point, lo), hi)
    return IntervalEstimate(point, lo, hi, level)


@dataclass(frozen=True)
class EBResult:
    posterior: PosteriorPhi
    estimate: float
    stats: dict

    def __iter__(self):
        yield self.posterior
        yield self.estimate


def _check_hyper(prior: PriorSpec, improper: bool):
    if improper:
        if prior.alpha != 0 or prior.beta != 0:
            raise DomainError("alpha", "the improper path requires alpha = beta = 0")
    elif not (prior.alpha > 0 and prior.beta > 0):
        raise DomainError("alpha", "alpha, beta must be positive unless improper=True")


def _eb_posterior(k_ny, k_n1y, scale, r, prior, improper):
    if improper and not k_ny > 0:
        raise ImproperPosterior("improper prior needs a positive imputed rare-component count")
    a = k_ny + prior.alpha
    b = k_n1y + prior.beta + prior.delta
    if not a > 0:
        raise ImproperPosterior("posterior shape a is not positive")
    post = PosteriorPhi(a=a, b=b, scale_Kt=scale, r=r)
    return post, post.mean()


def empirical_bayes_mixture(m: DataSet, g: ExposureGrid, fit, prior: PriorSpec,
                            improper: bool = False) -> EBResult:
    """Plug EM responsibilities yhat into the conjugate posterior.

    ``fit`` is an :class:`~zipmix.em_mixture.EMFit` for the plain mixture.
    """
    _check_hyper(prior, improper)
    m.check_grid(g)
    yhat = np.asarray(fit.yhat, dtype=float)
    mj = m.mixture_counts.sum(axis=0)
    total = float(mj.sum())
    k_my = float(mj @ yhat)
    k_m1y = total - k_my
    ybar = float(yhat.mean())
    if not (0.0 < ybar < 1.0):
        if improper and not k_my > 0:
            raise ImproperPosterior("all imputed labels are zero")
        raise DegenerateRatio(f"imputed fraction {ybar} is not inside (0, 1)")
    post, est = _eb_posterior(k_my, k_m1y, g.K * g.tbar, ybar, prior, improper)
    stats = {"ybar": ybar, "K_my": k_my, "K_m1y": k_m1y, "K_tbar": g.K * g.tbar}
    return EBResult(post, est, stats)


def empirical_bayes_zipm(n: DataSet, g: ExposureGrid, fit, resp=None, prior: PriorSpec = None,
                         improper: bool = False) -> EBResult:
    """ZIPM version: imputed K*ny, K*n(1-y), K*tz, K*tyz and rbar = tyz / tz."""
    if prior is None:
        raise TypeError("prior is required")
    _check_hyper(prior, improper)
    n.check_grid(g)
    resp = fit.responsibilities if resp is None else resp
    nj = n.n_j.astype(float)
    k_ny = float(nj @ resp.yhat)
    k_n1y = float(n.n_total) - k_ny
    k_tz = float(g.t @ resp.zhat.sum(axis=1))
    k_tyz = float(g.t @ resp.yzhat.sum(axis=1))
    if not k_tz > 0:
        raise DegenerateRatio("imputed K*tz is zero")
    rbar = k_tyz / k_tz
    if not (0.0 < rbar < 1.0):
        if improper and not k_ny > 0:
            raise ImproperPosterior("imputed rare-component count is zero")
        raise DegenerateRatio(f"imputed ratio rbar={rbar} is not inside (0, 1)")
    post, est = _eb_posterior(k_ny, k_n1y, k_tz, rbar, prior, improper)
    stats = {"K_ny": k_ny, "K_n1y": k_n1y, "K_tz": k_tz, "K_tyz": k_tyz, "rbar": rbar}
    return EBResult(post, est, stats)
