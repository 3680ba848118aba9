"""Inference for theta when both site labels y and counts m are observed."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

from ._stats import IntervalEstimate, z_quantile
from .conjugate import PosteriorPhi
from .errors import (DegenerateSplit, DimensionMismatch, DomainError, EmptyCell,
                     MeanUndefined, ZeroDenominator)
from .model import DataSet, ExposureGrid, PriorSpec

__all__ = [
    "ObservedSplit",
    "split_from_data",
    "mle_observed",
    "ci_theta_lognormal",
    "ci_theta_arcsine",
    "integrated_pmf_split",
    "conjugate_posterior_observed",
    "mile",
    "mile_information",
    "mile_information_inverse",
    "posterior_mean_observed",
]


@dataclass(frozen=True)
class ObservedSplit:
    """Sufficient statistic (M_S, M_T) with r = |S| / J and K * tbar."""

    r: float
    m_S: int
    m_T: int
    K_tbar: float

    def __post_init__(self):
        if not (0.0 <= self.r <= 1.0):
            raise DomainError("r", "r must lie in [0, 1]")
        if self.m_S < 0 or self.m_T < 0:
            raise DomainError("m_S" if self.m_S < 0 else "m_T", "counts must be nonnegative")
        if not self.K_tbar > 0:
            raise DomainError("K_tbar")

    @property
    def m_total(self) -> int:
        return self.m_S + self.m_T

    def _require_interior(self):
        if not (0.0 < self.r < 1.0):
            raise DegenerateSplit(f"split has r={self.r}; need 0 < r < 1")


def split_from_data(d: DataSet, g: ExposureGrid) -> ObservedSplit:
    if d.y is None:
        raise DimensionMismatch("split_from_data needs the site labels y")
    d.check_grid(g)
    mj = d.mixture_counts.sum(axis=0)
    y = d.y.astype(bool)
    return ObservedSplit(r=float(y.mean()), m_S=int(mj[y].sum()), m_T=int(mj[~y].sum()),
                         K_tbar=g.K * g.tbar)


def mle_observed(s: ObservedSplit):
    """Closed-form (mu_hat, nu_hat, theta_hat)."""
    s._require_interior()
    mu = s.m_S / (s.K_tbar * s.r)
    nu = s.m_T / (s.K_tbar * (1.0 - s.r))
    if s.m_T == 0:
        raise ZeroDenominator("theta_hat needs m_T > 0")
    theta = (1.0 - s.r) * s.m_S / (s.r * s.m_T)
    return mu, nu, theta


def ci_theta_lognormal(s: ObservedSplit, level: float = 0.95) -> IntervalEstimate:
    """Delta-method interval on log theta.  Q / K reduces to 1/m_S + 1/m_T."""
    s._require_interior()
    if s.m_S == 0 or s.m_T == 0:
        raise EmptyCell("lognormal interval needs m_S > 0 and m_T > 0")
    _, _, theta = mle_observed(s)
    half = np.sqrt(1.0 / s.m_S + 1.0 / s.m_T) * z_quantile(level)
    return IntervalEstimate(theta, theta * np.exp(-half), theta * np.exp(half), level)


def _eta_to_theta(eta, r):
    if eta >= 1.0:
        return np.inf
    return (1.0 - r) / r * eta / (1.0 - eta)


def ci_theta_arcsine(s: ObservedSplit, level: float = 0.95) -> IntervalEstimate:
    """Arcsine-binomial interval for eta = m_S / m, mapped to theta.

    The transformed endpoints are clipped to [0, pi/2] before squaring.
    """
    s._require_interior()
    if s.m_total == 0:
        raise EmptyCell("arcsine interval needs m_S + m_T > 0")
    eta = s.m_S / s.m_total
    a = np.arcsin(np.sqrt(eta))
    half = z_quantile(level) / (2.0 * np.sqrt(s.m_total))
    lo = np.sin(np.clip(a - half, 0.0, np.pi / 2)) ** 2
    hi = np.sin(np.clip(a + half, 0.0, np.pi / 2)) ** 2
    return IntervalEstimate(_eta_to_theta(eta, s.r), _eta_to_theta(lo, s.r),
                            _eta_to_theta(hi, s.r), level)


def integrated_pmf_split(s: ObservedSplit, delta: float, theta: float, form: str = "mst") -> float:
    """log P[M_S = m_S, M_T = m_T | y; theta] with lambda ~ Gamma(delta, 1) integrated out.

    ``form="mst3"`` evaluates the same value as a bivariate negative binomial.
    """
    if not theta > 0:
        raise DomainError("theta", "theta must be positive")
    if not delta > 0:
        raise DomainError("delta")
    mS, mT, r, Kt = s.m_S, s.m_T, s.r, s.K_tbar
    m = mS + mT
    head = gammaln(m + delta) - gammaln(delta) - gammaln(mS + 1.0) - gammaln(mT + 1.0)
    if form == "mst":
        return float(head + m * np.log(Kt) + xlogy(mS, r) + xlogy(mT, 1.0 - r)
                     + xlogy(mS, theta) - (m + delta) * np.log(Kt * (r * theta + 1.0 - r) + 1.0))
    if form == "mst3":
        den = Kt * r * theta + Kt * (1.0 - r) + 1.0
        a = Kt * r * theta / den
        b = Kt * (1.0 - r) / den
        return float(head + xlogy(mS, a) + xlogy(mT, b) + delta * np.log(1.0 / den))
    raise ValueError(f"unknown form {form!r}")


def conjugate_posterior_observed(s: ObservedSplit, prior: PriorSpec) -> PosteriorPhi:
    """Posterior phi_{m_S + alpha, m_T + beta + delta; K tbar, r}."""
    s._require_interior()
    if not (prior.alpha > 0 and prior.beta > 0):
        raise DomainError("alpha", "alpha and beta must be positive")
    return PosteriorPhi(a=s.m_S + prior.alpha, b=s.m_T + prior.beta + prior.delta,
                        scale_Kt=s.K_tbar, r=s.r)


def mile_information(theta, r, delta, K_tbar):
    """Expected conditional information number for theta given y."""
    B = K_tbar * (1.0 - r) + 1.0
    return delta * K_tbar * r * B / (theta * (K_tbar * r * theta + B))


def mile_information_inverse(theta, r, delta, K_tbar):
    return theta / delta * (theta / (K_tbar * (1.0 - r) + 1.0) + 1.0 / (K_tbar * r))


def mile(s: ObservedSplit, delta: float = 1.0, level: float = 0.95) -> IntervalEstimate:
    """Maximum integrated likelihood estimator with its information-number interval."""
    s._require_interior()
    if not delta > 0:
        raise DomainError("delta")
    Kt, r = s.K_tbar, s.r
    point = (Kt * (1.0 - r) + 1.0) * s.m_S / (Kt * r * (s.m_T + delta))
    half = np.sqrt(mile_information_inverse(point, r, delta, Kt)) * z_quantile(level)
    return IntervalEstimate(point, point - half, point + half, level)


def posterior_mean_observed(s: ObservedSplit, prior: PriorSpec) -> float:
    post = conjugate_posterior_observed(s, prior)
    if not post.has_mean:
        raise MeanUndefined("m_T + beta + delta must exceed 1")
    return post.mean()
