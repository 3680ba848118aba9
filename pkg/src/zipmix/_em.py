"""Shared EM driver, fit container, 1-d two-means and the Schur-complement variance."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from ._stats import IntervalEstimate, z_quantile
from .errors import BoundaryFit, DegenerateData, NotConvergedWarning, SingularInfo
from .model import ModelParams


@dataclass(frozen=True)
class EMFit:
    """Result of an EM run.

    ``loglik_trace[0]`` is the log-likelihood at the starting point, and
    ``param_trace[k]`` is the iterate that produced ``loglik_trace[k]``.
    """

    params: ModelParams
    loglik_trace: np.ndarray
    param_trace: list
    responsibilities: Any
    iterations: int
    converged: bool
    boundary: bool
    zero_inflated: bool
    K: int
    notes: dict = field(default_factory=dict)

    @property
    def theta(self) -> float:
        return self.params.theta

    @property
    def loglik(self) -> float:
        return float(self.loglik_trace[-1])

    @property
    def yhat(self) -> np.ndarray:
        r = self.responsibilities
        return r.yhat if hasattr(r, "yhat") else np.asarray(r)


def _vec(p: ModelParams, zi: bool) -> np.ndarray:
    return p.as_array(zi)


def run_em(init: ModelParams, estep: Callable, mstep: Callable, loglik: Callable, *,
           zero_inflated: bool, K: int, tol: float, param_tol: float, max_iter: int,
           at_boundary: Callable[[ModelParams, bool], bool]) -> EMFit:
    params = init
    ll = loglik(params)
    trace = [ll]
    ptrace = [params]
    converged = False
    clamped = False
    it = 0
    for it in range(1, max_iter + 1):
        resp = estep(params)
        new, clamped = mstep(resp)
        ll_new = loglik(new)
        step = float(np.max(np.abs(_vec(new, zero_inflated) - _vec(params, zero_inflated))))
        trace.append(ll_new)
        ptrace.append(new)
        params = new
        if abs(ll_new - ll) < tol and step < param_tol:
            converged = True
            break
        ll = ll_new
    if not converged:
        warnings.warn(f"EM stopped after {max_iter} iterations without meeting the "
                      "stopping rule", NotConvergedWarning, stacklevel=3)
    resp = estep(params)
    return EMFit(params=params, loglik_trace=np.asarray(trace), param_trace=ptrace,
                 responsibilities=resp, iterations=it, converged=converged,
                 boundary=bool(clamped or at_boundary(params, clamped)),
                 zero_inflated=zero_inflated, K=K)


def best_of_starts(fits: list) -> EMFit:
    """Highest final log-likelihood; ties favour the earlier start."""
    best = fits[0]
    for f in fits[1:]:
        if f.loglik > best.loglik + 1e-12:
            best = f
    return best


def site_split_starts(site_rates: np.ndarray, eps: float, floor: float) -> list:
    """Starts that label the k lowest (or k highest) site rates as the rare component."""
    rates = np.asarray(site_rates, dtype=float)
    J = rates.size
    if J < 2:
        return []
    order = np.argsort(rates, kind="stable")
    ks = sorted({int(np.clip(round(J * f), 1, J // 2)) for f in (0.1, 0.25, 0.4, 0.5)})
    out = []
    for k in ks:
        for rare in (order[:k], order[J - k:]):
            mask = np.zeros(J, dtype=bool)
            mask[rare] = True
            out.append(ModelParams(k / J, eps, max(float(rates[mask].mean()), floor),
                                   max(float(rates[~mask].mean()), floor)))
    return out


def multi_start(run: Callable, starts: list, screen_iter: int = 25, keep: int = 2) -> EMFit:
    """Short EM runs from every start, then full runs from the ``keep`` best.

    ``run(start, max_iter)`` returns an EMFit, or raises ZipmixError for a start
    that empties a component.  The returned trace covers both stages.
    """
    from .errors import ZipmixError

    screened = []
    for s in starts:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", NotConvergedWarning)
                screened.append(run(s, screen_iter))
        except ZipmixError:
            continue
    if not screened:
        raise DegenerateData("no starting point produced a usable fit")
    screened.sort(key=lambda f: -f.loglik)
    finals = []
    for f in screened[:keep]:
        g = f if f.converged else run(f.params, None)
        if g is not f:
            g = replace(g, loglik_trace=np.concatenate([f.loglik_trace, g.loglik_trace[1:]]),
                        param_trace=f.param_trace + g.param_trace[1:],
                        iterations=f.iterations + g.iterations)
        finals.append(g)
    return best_of_starts(finals)


def swapped(p: ModelParams) -> ModelParams:
    """The label-swapped start (1 - pi, nu, mu), with pi capped at 1/2."""
    return ModelParams(min(1.0 - p.pi, 0.5), p.eps, p.nu, p.mu)


def two_means_1d(x: np.ndarray):
    """Exact 2-cluster k-means on a line.

    Returns (rare_mean, common_mean, rare_weight).  Ties in weight make the
    lower-mean cluster the rare one.
    """
    x = np.sort(np.asarray(x, dtype=float).ravel())
    if x.size < 2 or x[0] == x[-1]:
        raise DegenerateData("need at least two distinct values to split")
    n = x.size
    cs = np.cumsum(x)
    cs2 = np.cumsum(x * x)
    k = np.arange(1, n)  # size of the left cluster
    left_ss = cs2[k - 1] - cs[k - 1] ** 2 / k
    right_sum = cs[-1] - cs[k - 1]
    right_ss = (cs2[-1] - cs2[k - 1]) - right_sum ** 2 / (n - k)
    cost = left_ss + right_ss
    # splits inside a run of equal values are not real partitions
    cost[x[k] == x[k - 1]] = np.inf
    best = int(k[np.argmin(cost)])
    lo_mean = cs[best - 1] / best
    hi_mean = (cs[-1] - cs[best - 1]) / (n - best)
    w_lo = best / n
    if w_lo <= 0.5:
        return lo_mean, hi_mean, w_lo
    return hi_mean, lo_mean, 1.0 - w_lo


def schur_theta_variance(info: np.ndarray, n_nuisance: int, mu: float, nu: float) -> float:
    """g' (I22 - I21 I11^-1 I12)^-1 g with g = (1/nu, -mu/nu^2) for the (mu, nu) block."""
    info = np.asarray(info, dtype=float)
    a = info[:n_nuisance, :n_nuisance]
    b = info[:n_nuisance, n_nuisance:]
    d = info[n_nuisance:, n_nuisance:]
    try:
        np.linalg.cholesky(a)
        schur = d - b.T @ np.linalg.solve(a, b)
        chol = np.linalg.cholesky(schur)
    except np.linalg.LinAlgError as exc:
        raise SingularInfo("information matrix is not positive definite") from exc
    grad = np.array([1.0 / nu, -mu / nu**2])
    w = np.linalg.solve(chol, grad)
    return float(w @ w)


def ci_theta_from_info(fit: EMFit, info: np.ndarray, level: float, n_nuisance: int) -> IntervalEstimate:
    if fit.boundary:
        raise BoundaryFit("fit ended on a boundary; information-based interval refused")
    p = fit.params
    var = schur_theta_variance(info, n_nuisance, p.mu, p.nu)
    half = np.sqrt(var) * z_quantile(level)
    th = p.theta
    return IntervalEstimate(th, th - half, th + half, level)


def standard_errors(info: np.ndarray) -> np.ndarray:
    try:
        cov = np.linalg.inv(np.asarray(info, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise SingularInfo("information matrix is singular") from exc
    d = np.diag(cov)
    if np.any(d <= 0):
        raise SingularInfo("information matrix is not positive definite")
    return np.sqrt(d)
