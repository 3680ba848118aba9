"""EM for the zero-inflated Poisson mixture and its 4 x 4 observed information.

Parameter order everywhere is (pi, eps, mu, nu).  Sites are independent given
the parameters, so all E-step quantities are built from per-site sums over the
zero cells (n_ij = 0) and the nonzero cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, xlogy

from ._em import (EMFit, ci_theta_from_info, multi_start, run_em, site_split_starts, swapped,
                  two_means_1d)
from ._stats import IntervalEstimate
from .errors import AllZeros, BoundaryParams, DegenerateData, DomainError, EmptyComponent
from .model import DataSet, ExposureGrid, ModelParams, observed_loglik

__all__ = [
    "ZipmResponsibilities",
    "ZipmInfoIntermediates",
    "estep_zipm",
    "mstep_zipm",
    "fit_em_zipm",
    "init_histogram_zipm",
    "zipm_info_intermediates",
    "observed_info_zipm",
    "ci_theta_zipm",
]


@dataclass(frozen=True)
class ZipmResponsibilities:
    yhat: np.ndarray
    zhat: np.ndarray
    yzhat: np.ndarray

    @property
    def one_minus_yzhat(self) -> np.ndarray:
        """E[(1 - Y_j) Z_ij | n]."""
        return self.zhat - self.yzhat


@dataclass(frozen=True)
class _SiteTerms:
    log_a: np.ndarray      # log pi + log P[n_.j | Y_j = 1], shared constants dropped
    log_b: np.ndarray      # log(1 - pi) + log P[n_.j | Y_j = 0]
    log_psi: np.ndarray
    r1: np.ndarray         # P[Z_ij = 1 | n_ij = 0, Y_j = 1], length I
    r0: np.ndarray
    d_mu: np.ndarray       # 1 - eps + eps exp(-t_i mu)
    d_nu: np.ndarray

    @property
    def q(self) -> np.ndarray:
        return np.exp(self.log_a - self.log_psi)

    @property
    def q1q(self) -> np.ndarray:
        return np.exp(self.log_a + self.log_b - 2.0 * self.log_psi)


def _site_terms(n: DataSet, g: ExposureGrid, p: ModelParams) -> _SiteTerms:
    t = g.t
    eq = n.ones_eq.astype(float)
    nj = n.n_j.astype(float)
    t_ne = n.t_ne_j(g)
    d_mu = 1.0 + p.eps * np.expm1(-t * p.mu)
    d_nu = 1.0 + p.eps * np.expm1(-t * p.nu)
    # log(1 - eps + eps e^{-t rate}) stays finite at eps = 1
    with np.errstate(divide="ignore"):
        log_spike = np.log1p(-p.eps)
        log_eps = np.log(p.eps)
    ld_mu = np.logaddexp(log_spike, log_eps - t * p.mu)
    ld_nu = np.logaddexp(log_spike, log_eps - t * p.nu)
    log_a = np.log(p.pi) - t_ne * p.mu + xlogy(nj, p.mu) + ld_mu @ eq
    log_b = np.log1p(-p.pi) - t_ne * p.nu + xlogy(nj, p.nu) + ld_nu @ eq
    return _SiteTerms(log_a=log_a, log_b=log_b, log_psi=np.logaddexp(log_a, log_b),
                      r1=np.exp(log_eps - t * p.mu - ld_mu), r0=np.exp(log_eps - t * p.nu - ld_nu),
                      d_mu=d_mu, d_nu=d_nu)


def _check_interior(p: ModelParams, allow_eps_one: bool = True):
    if not (0.0 < p.pi < 1.0):
        raise DomainError("pi", f"pi={p.pi} must lie in (0, 1)")
    if not (0.0 < p.eps < 1.0 or (allow_eps_one and p.eps == 1.0)):
        raise DomainError("eps", f"eps={p.eps} must lie in (0, 1)")
    # a zero rate is reachable by EM when a whole component is observed as zeros
    if not (p.mu >= 0 and p.nu >= 0) or p.mu == p.nu == 0:
        raise DomainError("mu" if not p.mu > 0 else "nu", "rates must be nonnegative, not both 0")


def estep_zipm(n: DataSet, g: ExposureGrid, cur: ModelParams) -> ZipmResponsibilities:
    """E[Y_j | n], E[Z_ij | n] and E[Y_j Z_ij | n] at ``cur``.

    Cells with n_ij > 0 have Z_ij = 1 with certainty.  For a zero cell, Z_ij is
    conditionally independent of the other cells given Y_j, with
    P[Z_ij = 1 | n_ij = 0, Y_j = 1] = eps e^{-t mu} / (1 - eps + eps e^{-t mu}).
    """
    n.check_grid(g)
    _check_interior(cur)
    s = _site_terms(n, g, cur)
    yhat = expit(s.log_a - s.log_b)
    nz = n.n != 0
    y = yhat[None, :]
    zero_z = y * s.r1[:, None] + (1.0 - y) * s.r0[:, None]
    zero_yz = y * s.r1[:, None]
    zhat = np.where(nz, 1.0, zero_z)
    yzhat = np.where(nz, y, zero_yz)
    return ZipmResponsibilities(yhat=yhat, zhat=zhat, yzhat=yzhat)


def mstep_zipm(n: DataSet, g: ExposureGrid, resp: ZipmResponsibilities, *,
               clamp_eps: bool = False, fixed_eps: float | None = None,
               return_clamp: bool = False):
    """Closed-form update of (pi, eps, mu, nu).

    pi above 1/2 is replaced by 1/2.  ``clamp_eps`` applies the same rule to eps;
    ``fixed_eps`` holds eps at a given value.
    """
    t = g.t[:, None]
    nj = n.n_j.astype(float)
    y = resp.yhat
    den_mu = float((t * resp.yzhat).sum())
    den_nu = float((t * resp.one_minus_yzhat).sum())
    if not (den_mu > 0 and den_nu > 0) or y.sum() <= 0 or (1.0 - y).sum() <= 0:
        raise EmptyComponent("one mixture component has no weight")
    pi = float(y.mean())
    eps = float(resp.zhat.mean()) if fixed_eps is None else float(fixed_eps)
    mu = float(nj @ y) / den_mu
    nu = float(nj @ (1.0 - y)) / den_nu
    clamped = pi > 0.5
    pi = min(pi, 0.5)
    if clamp_eps and eps > 0.5:
        eps = 0.5
        clamped = True
    out = ModelParams(pi, eps, mu, nu)
    return (out, clamped) if return_clamp else out


def init_histogram_zipm(n: DataSet, g: ExposureGrid) -> ModelParams:
    """Starting values: spike weight from excess zeros, then two-means on nonzero rates."""
    n.check_grid(g)
    nz = n.n != 0
    if not nz.any():
        raise AllZeros("every count is zero")
    rates = (n.n / g.t[:, None])[nz]
    lam = float(rates.mean())
    f0 = 1.0 - nz.mean()
    p0 = float(np.mean(np.exp(-g.t * lam)))
    spike = max(0.0, (f0 - p0) / (1.0 - p0)) if p0 < 1.0 else 0.0
    eps0 = float(np.clip(1.0 - spike, 0.01, 0.99))
    try:
        rare, common, w = two_means_1d(rates)
    except DegenerateData:
        rare, common, w = 0.5 * lam, 1.5 * lam, 0.25
    return ModelParams(pi=min(w, 0.5), eps=eps0, mu=rare, nu=common)


def fit_em_zipm(n: DataSet, g: ExposureGrid, init="auto", tol: float = 1e-8,
                max_iter: int = 5000, param_tol: float = 1e-7, *, clamp_eps: bool = False,
                fixed_eps: float | None = None) -> EMFit:
    """EM from ``init``.

    ``init="auto"`` screens a deterministic set of starts (the histogram start,
    its label swap and several site-split starts) and finishes the best ones.
    """
    n.check_grid(g)
    if n.n_total == 0:
        raise AllZeros("every count is zero")
    if isinstance(init, str):
        start = init_histogram_zipm(n, g)
        rates = n.n_j / (g.I * g.tbar * start.eps)
        starts = [start, swapped(start)] + site_split_starts(rates, start.eps,
                                                              1e-3 * max(rates.mean(), 1e-12))

        def run(s, it):
            return fit_em_zipm(n, g, s, tol, max_iter if it is None else it, param_tol,
                               clamp_eps=clamp_eps, fixed_eps=fixed_eps)

        return multi_start(run, starts)
    start = init
    if fixed_eps is not None:
        start = ModelParams(start.pi, float(fixed_eps), start.mu, start.nu)

    def estep(p):
        return estep_zipm(n, g, p)

    def mstep(resp):
        return mstep_zipm(n, g, resp, clamp_eps=clamp_eps, fixed_eps=fixed_eps, return_clamp=True)

    def loglik(p):
        return observed_loglik(n, g, p, zero_inflated=True)

    def at_boundary(p, clamped):
        return (fixed_eps is None and p.eps > 1.0 - 1e-6) or min(p.mu, p.nu) <= 0.0

    return run_em(start, estep, mstep, loglik, zero_inflated=True, K=g.K, tol=tol,
                  param_tol=param_tol, max_iter=max_iter, at_boundary=at_boundary)


@dataclass(frozen=True)
class ZipmInfoIntermediates:
    q: np.ndarray
    rho: float
    log_psi: np.ndarray
    phi_vecs: np.ndarray    # J x 4
    chi1: np.ndarray        # I x 4
    chi0: np.ndarray        # I x 4

    @property
    def psi(self) -> np.ndarray:
        return np.exp(self.log_psi)


def zipm_info_intermediates(n: DataSet, g: ExposureGrid, at: ModelParams):
    """Everything the information matrix is assembled from, plus the site terms."""
    p = at
    t = g.t
    s = _site_terms(n, g, p)
    q = s.q
    eq = n.ones_eq.astype(float)
    nj = n.n_j.astype(float)
    t_ne = n.t_ne_j(g)
    e_mu, e_nu = np.exp(-t * p.mu), np.exp(-t * p.nu)
    # each phi_j is E[S_j | Y_j = 1] - E[S_j | Y_j = 0] for the complete-data score S_j
    phi = np.column_stack([
        np.full(n.J, 1.0 / (p.pi * (1.0 - p.pi))),
        ((e_mu - e_nu) / (s.d_mu * s.d_nu)) @ eq,
        nj / p.mu - t_ne - (t * s.r1) @ eq,
        -(nj / p.nu - t_ne - (t * s.r0) @ eq),
    ])
    c = 1.0 / (p.eps * (1.0 - p.eps))
    zero = np.zeros_like(t)
    chi1 = np.column_stack([zero, np.full_like(t, c), -t, zero])
    chi0 = np.column_stack([zero, np.full_like(t, c), zero, -t])
    ez_zero = (q[None, :] * s.r1[:, None] + (1.0 - q)[None, :] * s.r0[:, None]) * eq
    rho = float((n.ones_ne.sum() + ez_zero.sum()) / n.K)
    return ZipmInfoIntermediates(q=q, rho=rho, log_psi=s.log_psi, phi_vecs=phi,
                                 chi1=chi1, chi0=chi0), s


def observed_info_zipm(n: DataSet, g: ExposureGrid, at: ModelParams) -> np.ndarray:
    """Negative Hessian of the ZIPM observed-data log-likelihood at ``at``.

    Complete-data information with E[Z-bar | n] = rho and q_j = E[Y_j | n],
    minus the conditional covariance of the complete-data score:
    sum_j q_j(1-q_j) phi_j phi_j' over sites, and for each zero cell
    q_j r1(1-r1) chi1 chi1' + (1-q_j) r0(1-r0) chi0 chi0'.
    """
    p = at
    if not (0.0 < p.pi < 1.0) or not (0.0 < p.eps < 1.0):
        raise BoundaryParams("pi and eps must lie strictly inside (0, 1)")
    if not (p.mu > 0 and p.nu > 0):
        raise BoundaryParams("mu and nu must be positive")
    n.check_grid(g)
    w, s = zipm_info_intermediates(n, g, p)
    q = w.q
    J, K = n.J, n.K
    pi, eps = p.pi, p.eps
    nj = n.n_j.astype(float)
    d = np.array([
        J * ((1.0 - 2.0 * pi) * q.mean() + pi**2) / (pi**2 * (1.0 - pi) ** 2),
        K * ((1.0 - 2.0 * eps) * w.rho + eps**2) / (eps**2 * (1.0 - eps) ** 2),
        float(nj @ q) / p.mu**2,
        float(nj @ (1.0 - q)) / p.nu**2,
    ])
    info = np.diag(d)
    info -= (w.phi_vecs * s.q1q[:, None]).T @ w.phi_vecs
    eq = n.ones_eq.astype(float)
    # per-day weights: sum over the zero cells of that day
    w1 = (eq @ q) * s.r1 * (1.0 - s.r1)
    w0 = (eq @ (1.0 - q)) * s.r0 * (1.0 - s.r0)
    info -= (w.chi1 * w1[:, None]).T @ w.chi1
    info -= (w.chi0 * w0[:, None]).T @ w.chi0
    return 0.5 * (info + info.T)


def ci_theta_zipm(fit: EMFit, info: np.ndarray, level: float = 0.95) -> IntervalEstimate:
    """Delta-method interval using the Schur complement of the (pi, eps) block."""
    return ci_theta_from_info(fit, info, level, n_nuisance=2)
