"""Integrated likelihoods for theta with the nuisance parameters integrated out.

lambda ~ Gamma(delta, 1), pi ~ the tabulated density on (0, 1/2], eps ~ Beta(eta, kappa).
All values are on the log scale.  Subset sums over sites are enumerated with
bitmask matrices; the 2^J x 2^Z double sum over (sites, zero cells) is chunked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DomainError, SizeLimit, SupportViolation
from .model import DataSet, ExposureGrid, PriorSpec

__all__ = [
    "ElemSymmTable",
    "elem_symm_log",
    "integrated_loglik_given_y",
    "integrated_loglik_mixture",
    "integrated_loglik_zn",
    "integrated_loglik_n",
    "McmcChain",
    "mcmc_posterior_theta",
    "sufficiency_check",
    "J_MAX",
    "EXACT_J_MAX",
    "EXACT_K_MAX",
]

J_MAX = 15
EXACT_J_MAX = 10
EXACT_K_MAX = 16


@dataclass(frozen=True)
class ElemSymmTable:
    logs: np.ndarray
    theta: float
    exponents: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.logs)


def elem_symm_log(mjs, theta: float) -> ElemSymmTable:
    """log s_j of {theta^{m_k}}, j = 0..J, by the one-variable-at-a-time recurrence
    s_j <- s_j + theta^{m_k} s_{j-1}, carried out with log-sum-exp."""
    if not theta > 0:
        raise DomainError("theta", "theta must be positive")
    m = np.asarray(mjs, dtype=float).ravel()
    J = m.size
    logs = np.full(J + 1, -np.inf)
    logs[0] = 0.0
    lt = np.log(theta)
    for k in range(J):
        x = m[k] * lt if m[k] != 0 else 0.0
        logs[1:k + 2] = np.logaddexp(logs[1:k + 2], x + logs[0:k + 1])
    logs.setflags(write=False)
    return ElemSymmTable(logs=logs, theta=float(theta), exponents=m.astype(np.int64))


def _log_const(counts: np.ndarray, t: np.ndarray, delta: float) -> float:
    """log Gamma(m + delta) / Gamma(delta) + sum_i m_i log t_i - sum log m_ij!"""
    total = float(counts.sum())
    return float(gammaln(total + delta) - gammaln(delta) + counts.sum(axis=1) @ np.log(t)
                 - gammaln(counts + 1.0).sum())


def _check_theta(theta):
    if not theta > 0:
        raise DomainError("theta", "theta must be positive")


def integrated_loglik_given_y(m: DataSet, g: ExposureGrid, y, delta: float, theta: float) -> float:
    """log f_delta(m | y; theta), lambda integrated against Gamma(delta, 1)."""
    _check_theta(theta)
    m.check_grid(g)
    counts = m.mixture_counts
    y = np.asarray(y).astype(bool).ravel()
    mj = counts.sum(axis=0)
    r = y.mean()
    m_S = float(mj[y].sum())
    total = float(mj.sum())
    tail = -(total + delta) * np.log(g.K * g.tbar * (r * theta + 1.0 - r) + 1.0)
    head = m_S * np.log(theta) if m_S > 0 else 0.0
    return _log_const(counts, g.t, delta) + head + float(tail)


def integrated_loglik_mixture(m: DataSet, g: ExposureGrid, prior: PriorSpec, theta: float) -> float:
    """log f(m | theta) with (pi, lambda) integrated out, via elementary symmetric functions."""
    _check_theta(theta)
    m.check_grid(g)
    counts = m.mixture_counts
    J = g.J
    mj = counts.sum(axis=0)
    total = float(mj.sum())
    s = elem_symm_log(mj, theta).logs
    frac = np.arange(J + 1) / J
    den = np.log(g.K * g.tbar * (frac * theta + 1.0 - frac) + 1.0)
    terms = prior.log_g(J) + s - (total + prior.delta) * den
    return _log_const(counts, g.t, prior.delta) + float(logsumexp(terms))


def _subset_matrix(J: int) -> np.ndarray:
    idx = np.arange(2 ** J)[:, None]
    return ((idx >> np.arange(J)[None, :]) & 1).astype(float)


_SUBSETS: dict = {}


def _subsets(J: int) -> np.ndarray:
    hit = _SUBSETS.get(J)
    if hit is None:
        hit = _subset_matrix(J)
        hit.setflags(write=False)
        _SUBSETS[J] = hit
    return hit


def _sigma_logsum(bits, log_g, nj, tz_j, tz_total, theta, power):
    """log sum over sigma of g(|sigma|) theta^{n_sigma} / {(tz)_sigma (theta-1) + tz + 1}^power.

    ``tz_j`` may be a (P, J) batch of per-site exposure sums; the result then has length P.
    """
    size = bits.sum(axis=1).astype(int)
    n_sig = bits @ nj
    lt = np.log(theta)
    tz_j = np.atleast_2d(tz_j)
    tz_total = np.atleast_1d(tz_total)
    tz_sig = tz_j @ bits.T                                   # (P, 2^J)
    den = tz_sig * (theta - 1.0) + tz_total[:, None] + 1.0
    base = log_g[size] + np.where(n_sig > 0, n_sig * lt, 0.0)
    return logsumexp(base[None, :] - power * np.log(den), axis=1)


def integrated_loglik_zn(n: DataSet, z, g: ExposureGrid, prior: PriorSpec, theta: float,
                         j_max: int = J_MAX) -> float:
    """log f(z, n | theta) with (pi, eps, lambda) integrated out; exact sum over site subsets."""
    _check_theta(theta)
    n.check_grid(g)
    z = np.asarray(z)
    if z.shape != n.shape:
        raise SupportViolation("z and n shapes differ")
    if np.any((n.n > 0) & (z == 0)):
        raise SupportViolation("n_ij > 0 with z_ij = 0")
    J = g.J
    if J > j_max:
        raise SizeLimit(f"J={J} exceeds the exact-enumeration cap {j_max}")
    counts = n.n
    nj = counts.sum(axis=0).astype(float)
    total = float(nj.sum())
    tz_j = g.t @ z
    ell = int(z.sum())
    val = _sigma_logsum(_subsets(J), prior.log_g(J), nj, tz_j, tz_j.sum(), theta,
                        total + prior.delta)[0]
    return _log_const(counts, g.t, prior.delta) + float(prior.log_h(g.K)[ell]) + float(val)


def _z_patterns(zero_cells, shape, start, stop):
    """z matrices for patterns start..stop-1 over the zero cells; nonzero cells fixed at 1."""
    codes = np.arange(start, stop)[:, None]
    bits = (codes >> np.arange(len(zero_cells))[None, :]) & 1
    z = np.ones((stop - start,) + shape)
    if len(zero_cells):
        z[:, zero_cells[:, 0], zero_cells[:, 1]] = bits
    return z


def integrated_loglik_n(n: DataSet, g: ExposureGrid, prior: PriorSpec, theta: float,
                        mode: str = "exact", samples: int = 2000, seed: int = 0,
                        proposal_prob: float = 0.5, chunk: int = 4096):
    """log f(n | theta) with (pi, eps, lambda) integrated out.

    ``mode="exact"`` sums over every site subset and every inclusion pattern on the
    zero cells (J <= 10, K <= 16) and returns ``(value, 0.0)``.
    ``mode="monte_carlo"`` draws inclusion patterns on the zero cells from
    independent Bernoulli(``proposal_prob``) and returns ``(log estimate, se)``
    where ``se`` is the delta-method standard error of the log estimate.  When
    J exceeds the site-enumeration cap, site labels are drawn uniformly as well.
    """
    _check_theta(theta)
    n.check_grid(g)
    counts = n.n
    J, K = g.J, g.K
    nj = counts.sum(axis=0).astype(float)
    power = float(nj.sum()) + prior.delta
    log_g = prior.log_g(J)
    log_h = prior.log_h(K)
    const = _log_const(counts, g.t, prior.delta)
    zero_cells = np.argwhere(counts == 0)
    nzero = len(zero_cells)
    n_forced = K - nzero

    if mode == "exact":
        if J > EXACT_J_MAX or K > EXACT_K_MAX:
            raise SizeLimit(f"exact mode needs J <= {EXACT_J_MAX} and K <= {EXACT_K_MAX}")
        bits = _subsets(J)
        parts = []
        for start in range(0, 2 ** nzero, chunk):
            z = _z_patterns(zero_cells, counts.shape, start, min(start + chunk, 2 ** nzero))
            tz_j = np.einsum("i,pij->pj", g.t, z)
            ell = z.reshape(len(z), -1).sum(axis=1).astype(int)
            vals = _sigma_logsum(bits, log_g, nj, tz_j, tz_j.sum(axis=1), theta, power)
            parts.append(vals + log_h[ell])
        return const + float(logsumexp(np.concatenate(parts))), 0.0

    if mode != "monte_carlo":
        raise ValueError(f"unknown mode {mode!r}")
    if not (0.0 < proposal_prob < 1.0):
        raise DomainError("proposal_prob", "proposal_prob must lie in (0, 1)")
    if samples < 2:
        raise DomainError("samples", "need at least two samples")
    rng = np.random.default_rng(seed)
    lp, lq = np.log(proposal_prob), np.log1p(-proposal_prob)
    exact_sites = J <= J_MAX
    bits = _subsets(J) if exact_sites else None
    logw = np.empty(samples)
    for start in range(0, samples, chunk):
        size = min(chunk, samples - start)
        zb = rng.random((size, nzero)) < proposal_prob
        z = np.ones((size,) + counts.shape)
        if nzero:
            z[:, zero_cells[:, 0], zero_cells[:, 1]] = zb
        k1 = zb.sum(axis=1)
        log_q = k1 * lp + (nzero - k1) * lq
        ell = n_forced + k1
        tz_j = np.einsum("i,pij->pj", g.t, z)
        if exact_sites:
            vals = _sigma_logsum(bits, log_g, nj, tz_j, tz_j.sum(axis=1), theta, power)
        else:
            y = rng.random((size, J)) < 0.5
            sz = y.sum(axis=1)
            n_sig = y @ nj
            tz_sig = np.einsum("pj,pj->p", tz_j, y)
            den = tz_sig * (theta - 1.0) + tz_j.sum(axis=1) + 1.0
            vals = (log_g[sz] + n_sig * np.log(theta) - power * np.log(den) + J * np.log(2.0))
        logw[start:start + size] = vals + log_h[ell] - log_q
    top = logw.max()
    w = np.exp(logw - top)
    mean = w.mean()
    se = float(w.std(ddof=1) / (np.sqrt(samples) * mean))
    return const + top + float(np.log(mean)), se


@dataclass(frozen=True)
class McmcChain:
    samples: np.ndarray
    acceptance_rate: float
    burn_in: int
    seed: int

    def __post_init__(self):
        if self.samples.size < 1:
            raise ValueError("chain must hold at least one draw")
        if not (0.0 <= self.acceptance_rate <= 1.0):
            raise ValueError("acceptance rate must lie in [0, 1]")


def mcmc_posterior_theta(loglik: Callable[[float], float], log_prior: Callable[[float], float],
                         n_samples: int, proposal_sd: float = 0.5, seed: int = 0,
                         init: float = 1.0, burn_in: int | None = None) -> McmcChain:
    """Random-walk Metropolis on log theta for the density prop. to exp(loglik + log_prior).

    ``log_prior`` is a density in theta; the log-Jacobian of theta = e^u is added.
    ``burn_in`` defaults to a fifth of the whole chain; only later draws are kept.
    """
    if n_samples < 1:
        raise DomainError("n_samples", "n_samples must be >= 1")
    if not proposal_sd > 0:
        raise DomainError("proposal_sd")
    if burn_in is None:
        burn_in = n_samples // 4
    rng = np.random.default_rng(seed)

    def target(u):
        th = float(np.exp(u))
        lp = log_prior(th)
        if not np.isfinite(lp):
            return -np.inf
        return loglik(th) + lp + u

    u = float(np.log(init))
    cur = target(u)
    if not np.isfinite(cur):
        raise DomainError("init", "starting point has zero posterior density")
    total = n_samples + burn_in
    steps = rng.normal(0.0, proposal_sd, total)
    logu = np.log(rng.random(total))
    out = np.empty(n_samples)
    accepted = 0
    for k in range(total):
        prop = u + steps[k]
        val = target(prop)
        if logu[k] < val - cur:
            u, cur = prop, val
            accepted += 1
        if k >= burn_in:
            out[k - burn_in] = np.exp(u)
    return McmcChain(samples=out, acceptance_rate=accepted / total, burn_in=burn_in, seed=seed)


def sufficiency_check(d1: DataSet, d2: DataSet, g: ExposureGrid, prior: PriorSpec, thetas,
                      tol: float = 1e-9, loglik: Callable | None = None) -> dict:
    """Compare two integrated log-likelihood curves over ``thetas``.

    The curves agree up to a theta-free constant when the datasets share the
    site totals and the zero pattern.  ``loglik(d, theta)`` defaults to the
    exact integrated likelihood of n.
    """
    if loglik is None:
        def loglik(d, th):
            return integrated_loglik_n(d, g, prior, th, mode="exact")[0]
    thetas = np.asarray(thetas, dtype=float)
    a = np.array([loglik(d1, th) for th in thetas])
    b = np.array([loglik(d2, th) for th in thetas])
    off = a - b
    spread = float(off.max() - off.min())
    return {
        "thetas": thetas.tolist(),
        "offsets": off.tolist(),
        "offset_mean": float(off.mean()),
        "offset_variance": float(off.var()),
        "offset_range": spread,
        "constant": spread <= tol,
        "same_site_totals": bool(np.array_equal(d1.n_j, d2.n_j)),
        "same_zero_pattern": bool(np.array_equal(d1.n == 0, d2.n == 0)),
    }
