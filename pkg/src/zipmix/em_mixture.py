"""EM for the two-component Poisson mixture (no zero inflation) and its observed information."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, xlogy

from ._em import (EMFit, ci_theta_from_info, multi_start, run_em, site_split_starts, swapped,
                  two_means_1d)
from ._stats import IntervalEstimate
from .errors import BoundaryParams, DomainError, EmptyComponent
from .model import DataSet, ExposureGrid, ModelParams, observed_loglik

__all__ = [
    "EMFit",
    "MixtureInfoIntermediates",
    "estep_mixture",
    "mstep_mixture",
    "fit_em_mixture",
    "init_histogram_mixture",
    "observed_info_mixture",
    "mixture_info_intermediates",
    "ci_theta_mixture",
    "theta_from_responsibilities",
]


def _triple(p) -> ModelParams:
    if isinstance(p, ModelParams):
        return ModelParams(p.pi, 1.0, p.mu, p.nu)
    pi, mu, nu = (float(v) for v in p)
    return ModelParams(pi, 1.0, mu, nu)


def _site_log_masses(m: DataSet, g: ExposureGrid, p: ModelParams):
    """log pi + log f(m_j | Y=1) and log(1-pi) + log f(m_j | Y=0), up to a shared constant."""
    mj = m.mixture_counts.sum(axis=0).astype(float)
    Itb = g.I * g.tbar
    la = np.log(p.pi) - Itb * p.mu + xlogy(mj, p.mu)
    lb = np.log1p(-p.pi) - Itb * p.nu + xlogy(mj, p.nu)
    return la, lb


def estep_mixture(m: DataSet, g: ExposureGrid, cur) -> np.ndarray:
    """Posterior P[Y_j = 1 | m] for every site."""
    p = _triple(cur)
    m.check_grid(g)
    la, lb = _site_log_masses(m, g, p)
    return expit(la - lb)


def mstep_mixture(m: DataSet, g: ExposureGrid, yhat, *, return_clamp: bool = False):
    """Closed-form (pi, mu, nu) update; pi above 1/2 is replaced by 1/2."""
    yhat = np.asarray(yhat, dtype=float)
    if np.any((yhat < 0) | (yhat > 1)):
        raise DomainError("yhat", "responsibilities must lie in [0, 1]")
    mj = m.mixture_counts.sum(axis=0).astype(float)
    s1 = yhat.sum()
    s0 = (1.0 - yhat).sum()
    if s1 <= 0 or s0 <= 0:
        raise EmptyComponent("one mixture component has no weight")
    Itb = g.I * g.tbar
    pi = float(s1 / yhat.size)
    mu = float(mj @ yhat) / float(Itb * s1)
    nu = float(mj @ (1.0 - yhat)) / float(Itb * s0)
    clamped = pi > 0.5
    out = (min(pi, 0.5), float(mu), float(nu))
    return (out, clamped) if return_clamp else out


def theta_from_responsibilities(m: DataSet, yhat) -> float:
    """theta = [sum m_j y_j * sum (1 - y_j)] / [sum m_j (1 - y_j) * sum y_j]; free of t."""
    yhat = np.asarray(yhat, dtype=float)
    mj = m.mixture_counts.sum(axis=0).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(np.divide((mj @ yhat) * (1.0 - yhat).sum(), (mj @ (1.0 - yhat)) * yhat.sum()))


def init_histogram_mixture(m: DataSet, g: ExposureGrid):
    """Deterministic starting values from a two-means split of the cell rates m_ij / t_i."""
    m.check_grid(g)
    rates = m.mixture_counts / g.t[:, None]
    rare, common, w = two_means_1d(rates)
    floor = 1e-3 * float(rates.mean())
    return (min(w, 0.5), max(rare, floor), max(common, floor))


def fit_em_mixture(m: DataSet, g: ExposureGrid, init="auto", tol: float = 1e-8,
                   max_iter: int = 5000, param_tol: float = 1e-7) -> EMFit:
    """EM from ``init``.

    ``init="auto"`` screens a deterministic set of starts (the histogram start,
    its label swap and several site-split starts) and finishes the best ones.
    """
    m.check_grid(g)
    if isinstance(init, str):
        start = _triple(init_histogram_mixture(m, g))
        rates = m.mixture_counts.sum(axis=0) / (g.I * g.tbar)
        starts = [start, swapped(start)] + site_split_starts(rates, 1.0, 1e-3 * max(rates.mean(), 1e-12))

        def run(s, it):
            return fit_em_mixture(m, g, s, tol, max_iter if it is None else it, param_tol)

        return multi_start(run, starts)
    start = _triple(init)

    def estep(p):
        return estep_mixture(m, g, p)

    def mstep(yhat):
        (pi, mu, nu), clamped = mstep_mixture(m, g, yhat, return_clamp=True)
        return ModelParams(pi, 1.0, mu, nu), clamped

    def loglik(p):
        return observed_loglik(m, g, p, zero_inflated=False)

    fit = run_em(start, estep, mstep, loglik, zero_inflated=False, K=g.K, tol=tol,
                 param_tol=param_tol, max_iter=max_iter,
                 at_boundary=lambda p, c: min(p.mu, p.nu) <= 0.0)
    # the final iterate came from the E-step at the previous one
    fit.notes["theta_formula"] = theta_from_responsibilities(m, estep(fit.param_trace[-2]))
    return fit


@dataclass(frozen=True)
class MixtureInfoIntermediates:
    p: np.ndarray
    log_gamma: np.ndarray
    delta_vecs: np.ndarray

    @property
    def gamma(self) -> np.ndarray:
        return np.exp(self.log_gamma)


def mixture_info_intermediates(m: DataSet, g: ExposureGrid, at) -> MixtureInfoIntermediates:
    p = _triple(at)
    la, lb = _site_log_masses(m, g, p)
    log_gamma = np.logaddexp(la, lb)
    mj = m.mixture_counts.sum(axis=0).astype(float)
    Itb = g.I * g.tbar
    deltas = np.column_stack([
        np.full(mj.size, 1.0 / (p.pi * (1.0 - p.pi))),
        mj / p.mu - Itb,
        -(mj / p.nu - Itb),
    ])
    return MixtureInfoIntermediates(p=np.exp(la - log_gamma), log_gamma=log_gamma,
                                    delta_vecs=deltas)


def observed_info_mixture(m: DataSet, g: ExposureGrid, at) -> np.ndarray:
    """Observed information in the order (pi, mu, nu).

    Complete-data information minus the conditional covariance of the
    complete-data score; the covariance is sum_j p_j (1 - p_j) delta_j delta_j'.
    """
    p = _triple(at)
    if not (0.0 < p.pi < 1.0):
        raise BoundaryParams(f"pi={p.pi} is on the boundary")
    if not (p.mu > 0 and p.nu > 0):
        raise BoundaryParams("mu and nu must be positive")
    m.check_grid(g)
    la, lb = _site_log_masses(m, g, p)
    lg = np.logaddexp(la, lb)
    pj = np.exp(la - lg)
    w = np.exp(la + lb - 2.0 * lg)  # p_j (1 - p_j) without cancellation
    mj = m.mixture_counts.sum(axis=0).astype(float)
    J = mj.size
    pi = p.pi
    d = np.array([
        J * ((1.0 - 2.0 * pi) * pj.mean() + pi**2) / (pi**2 * (1.0 - pi) ** 2),
        float(mj @ pj) / p.mu**2,
        float(mj @ (1.0 - pj)) / p.nu**2,
    ])
    Itb = g.I * g.tbar
    u = np.column_stack([np.full(J, 1.0 / (pi * (1.0 - pi))), mj / p.mu - Itb, -(mj / p.nu - Itb)])
    info = np.diag(d) - (u * w[:, None]).T @ u
    return 0.5 * (info + info.T)


def ci_theta_mixture(fit: EMFit, info: np.ndarray, level: float = 0.95) -> IntervalEstimate:
    """theta_hat +/- z * sqrt(g' S^-1 g), S the Schur complement of the pi block."""
    return ci_theta_from_info(fit, info, level, n_nuisance=1)
