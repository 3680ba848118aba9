"""Domain types and log-probability functions for the zero-inflated Poisson mixture.

Counts live on an I x J grid (days x sites).  Site j carries a latent label
Y_j ~ Bernoulli(pi); cell (i, j) has a latent inclusion flag Z_ij ~ Bernoulli(eps)
and an underlying count M_ij ~ Poisson(t_i * mu) when Y_j = 1, else
Poisson(t_i * nu).  The observed count is N_ij = Z_ij * M_ij.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from .errors import DimensionMismatch, DomainError, SupportViolation

__all__ = [
    "ModelParams",
    "ExposureGrid",
    "DataSet",
    "TabulatedDensity",
    "PriorSpec",
    "validate_params",
    "poisson_logpmf",
    "mixture_cell_logpmf",
    "zipm_cell_logpmf",
    "observed_loglik",
    "site_component_logliks",
    "complete_loglik_mixture",
    "complete_loglik_zipm",
]


@dataclass(frozen=True)
class ModelParams:
    """Parameter point (pi, eps, mu, nu).  Construction does not validate."""

    pi: float
    eps: float
    mu: float
    nu: float

    @property
    def theta(self) -> float:
        return self.mu / self.nu

    @property
    def lam(self) -> float:
        return self.nu

    def as_array(self, zero_inflated: bool = True) -> np.ndarray:
        if zero_inflated:
            return np.array([self.pi, self.eps, self.mu, self.nu], dtype=float)
        return np.array([self.pi, self.mu, self.nu], dtype=float)

    @classmethod
    def from_array(cls, x, zero_inflated: bool = True) -> "ModelParams":
        x = [float(v) for v in x]
        if zero_inflated:
            return cls(*x)
        return cls(pi=x[0], eps=1.0, mu=x[1], nu=x[2])

    @classmethod
    def from_theta(cls, pi, eps, theta, lam) -> "ModelParams":
        return cls(pi=pi, eps=eps, mu=theta * lam, nu=lam)


def validate_params(p: ModelParams, *, allow_eps_one: bool = False) -> None:
    """Raise DomainError unless 0 < pi <= 1/2, 0 < eps < 1, mu > 0, nu > 0.

    ``allow_eps_one`` admits eps = 1, the no-inflation model.
    """
    if not (0.0 < p.pi <= 0.5):
        raise DomainError("pi", f"pi={p.pi!r} must satisfy 0 < pi <= 1/2")
    eps_ok = 0.0 < p.eps < 1.0 or (allow_eps_one and p.eps == 1.0)
    if not eps_ok:
        raise DomainError("eps", f"eps={p.eps!r} must satisfy 0 < eps < 1")
    if not (p.mu > 0.0 and np.isfinite(p.mu)):
        raise DomainError("mu", f"mu={p.mu!r} must be positive")
    if not (p.nu > 0.0 and np.isfinite(p.nu)):
        raise DomainError("nu", f"nu={p.nu!r} must be positive")


@dataclass(frozen=True)
class ExposureGrid:
    """Known exposures t_1..t_I for an I x J grid."""

    t: np.ndarray
    J: int

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        if t.size < 1:
            raise DomainError("t", "need at least one day")
        if np.any(~np.isfinite(t)) or np.any(t <= 0):
            raise DomainError("t", "every t_i must be positive and finite")
        if int(self.J) < 1:
            raise DomainError("J", "need at least one site")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "J", int(self.J))

    @property
    def I(self) -> int:  # noqa: E743
        return self.t.size

    @property
    def K(self) -> int:
        return self.I * self.J

    @property
    def tbar(self) -> float:
        return float(self.t.mean())

    @classmethod
    def uniform(cls, I: int, J: int, t: float = 1.0) -> "ExposureGrid":
        return cls(np.full(I, float(t)), J)


def _as_counts(a, name):
    arr = np.asarray(a)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-d I x J array")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr != np.floor(arr)):
        raise DomainError(name, f"{name} must hold nonnegative integers")
    out = arr.astype(np.int64)
    out.setflags(write=False)
    return out


def _as_bits(a, name, ndim):
    arr = np.asarray(a)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-d")
    if not np.all((arr == 0) | (arr == 1)):
        raise DomainError(name, f"{name} must be 0/1")
    out = arr.astype(np.int64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DataSet:
    """Observed counts ``n`` plus whichever latent arrays are known.

    ``m`` defaults to nothing; estimators for the plain mixture read
    :attr:`mixture_counts`, which falls back to ``n`` when ``m`` is absent.
    """

    n: np.ndarray
    y: np.ndarray | None = None
    z: np.ndarray | None = None
    m: np.ndarray | None = None

    def __post_init__(self):
        n = _as_counts(self.n, "n")
        object.__setattr__(self, "n", n)
        I, J = n.shape
        if self.y is not None:
            y = _as_bits(np.asarray(self.y).reshape(-1), "y", 1)
            if y.size != J:
                raise DimensionMismatch(f"y has length {y.size}, expected J={J}")
            object.__setattr__(self, "y", y)
        if self.z is not None:
            z = _as_bits(self.z, "z", 2)
            if z.shape != n.shape:
                raise DimensionMismatch("z and n shapes differ")
            object.__setattr__(self, "z", z)
        if self.m is not None:
            m = _as_counts(self.m, "m")
            if m.shape != n.shape:
                raise DimensionMismatch("m and n shapes differ")
            object.__setattr__(self, "m", m)
        if self.z is not None and self.m is not None:
            if np.any(self.n != self.z * self.m):
                raise SupportViolation("n must equal z * m elementwise")
        if self.z is not None and np.any(self.n * (1 - self.z) != 0):
            raise SupportViolation("n_ij > 0 with z_ij = 0")

    @classmethod
    def from_mixture_counts(cls, m, y=None) -> "DataSet":
        """Dataset for the no-inflation regime: m observed directly (n = m)."""
        m = np.asarray(m)
        return cls(n=m, y=y, z=None if m is None else np.ones_like(m), m=m)

    @property
    def shape(self):
        return self.n.shape

    @property
    def I(self) -> int:  # noqa: E743
        return self.n.shape[0]

    @property
    def J(self) -> int:
        return self.n.shape[1]

    @property
    def K(self) -> int:
        return self.n.size

    @property
    def mixture_counts(self) -> np.ndarray:
        return self.m if self.m is not None else self.n

    # index-dropping convention: n_j sums over days, n_i over sites
    @property
    def n_j(self) -> np.ndarray:
        return self.n.sum(axis=0)

    @property
    def n_i(self) -> np.ndarray:
        return self.n.sum(axis=1)

    @property
    def n_total(self) -> int:
        return int(self.n.sum())

    @property
    def ones_ne(self) -> np.ndarray:
        return (self.n != 0).astype(np.int64)

    @property
    def ones_eq(self) -> np.ndarray:
        return (self.n == 0).astype(np.int64)

    @property
    def ones_ne_j(self) -> np.ndarray:
        return self.ones_ne.sum(axis=0)

    @property
    def ones_eq_j(self) -> np.ndarray:
        return self.ones_eq.sum(axis=0)

    def t_ne_j(self, grid: ExposureGrid) -> np.ndarray:
        return grid.t @ self.ones_ne

    def t_eq_j(self, grid: ExposureGrid) -> np.ndarray:
        return grid.t @ self.ones_eq

    def check_grid(self, grid: ExposureGrid) -> None:
        if self.n.shape != (grid.I, grid.J):
            raise DimensionMismatch(
                f"data shape {self.n.shape} does not match grid {(grid.I, grid.J)}"
            )


@dataclass(frozen=True, eq=False)
class TabulatedDensity:
    """Piecewise-linear density on (0, upper], given by nodes and values."""

    x: np.ndarray
    pdf_values: np.ndarray
    upper: float = 0.5
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.pdf_values, dtype=float)
        if x.ndim != 1 or x.shape != v.shape or x.size < 2:
            raise DimensionMismatch("x and pdf_values must be matching 1-d arrays")
        if np.any(np.diff(x) <= 0) or x[0] < 0 or x[-1] > self.upper + 1e-15:
            raise DomainError("theta_pi_prior", "nodes must increase within [0, upper]")
        if np.any(v < 0):
            raise DomainError("theta_pi_prior", "density values must be nonnegative")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "pdf_values", v)

    @classmethod
    def uniform(cls, upper: float = 0.5) -> "TabulatedDensity":
        return cls(np.array([0.0, upper]), np.full(2, 1.0 / upper), upper)

    @classmethod
    def from_function(cls, f, nodes: int = 401, upper: float = 0.5) -> "TabulatedDensity":
        """Tabulate ``f`` and rescale so the piecewise-linear interpolant integrates to 1."""
        x = np.linspace(0.0, upper, nodes)
        v = np.asarray([f(xi) for xi in x], dtype=float)
        total = float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(x)))
        return cls(x, v / total, upper)

    def pdf(self, p):
        return np.interp(p, self.x, self.pdf_values, left=0.0, right=0.0)

    def total_mass(self) -> float:
        # trapezoid rule is exact for the piecewise-linear interpolant
        return float(np.sum(0.5 * (self.pdf_values[1:] + self.pdf_values[:-1]) * np.diff(self.x)))

    def log_binomial_moments(self, J: int) -> np.ndarray:
        """log g(j) = log int pi^j (1-pi)^(J-j) density(pi) dpi for j = 0..J.

        Each panel integrand is a polynomial of degree J + 1, so Gauss-Legendre
        with ceil((J + 2) / 2) nodes per panel is exact up to rounding.
        """
        key = ("g", int(J))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        order = max(16, J // 2 + 2)
        u, w = np.polynomial.legendre.leggauss(order)
        a, b = self.x[:-1], self.x[1:]
        half = 0.5 * (b - a)
        nodes = (0.5 * (a + b))[:, None] + half[:, None] * u[None, :]
        weights = half[:, None] * w[None, :]
        dens = self.pdf(nodes)
        keep = (dens > 0) & (nodes > 0) & (nodes < 1)
        nodes, logw = nodes[keep], np.log(weights[keep] * dens[keep])
        j = np.arange(J + 1)[:, None]
        terms = logw[None, :] + j * np.log(nodes)[None, :] + (J - j) * np.log1p(-nodes)[None, :]
        out = logsumexp(terms, axis=1)
        out.setflags(write=False)
        self._cache[key] = out
        return out


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters: gamma(delta) on lambda, phi_{alpha,beta} on theta,
    beta(eta, kappa) on eps, and a density on pi over (0, 1/2]."""

    delta: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    eta: float = 1.0
    kappa: float = 1.0
    theta_pi_prior: TabulatedDensity = field(default_factory=TabulatedDensity.uniform)

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError("delta", "delta must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise DomainError("alpha" if self.alpha < 0 else "beta", "alpha, beta must be >= 0")
        if not (self.eta > 0 and self.kappa > 0):
            raise DomainError("eta" if not self.eta > 0 else "kappa", "eta, kappa must be positive")
        mass = self.theta_pi_prior.total_mass()
        if abs(mass - 1.0) > 1e-8:
            raise DomainError("theta_pi_prior", f"pi prior integrates to {mass}, not 1")

    def log_g(self, J: int) -> np.ndarray:
        return self.theta_pi_prior.log_binomial_moments(J)

    def log_h(self, K: int) -> np.ndarray:
        """log h(l) for l = 0..K under the beta(eta, kappa) prior on eps."""
        ell = np.arange(K + 1)
        e, k = self.eta, self.kappa
        return (gammaln(e + k) + gammaln(e + ell) + gammaln(k + K - ell)
                - gammaln(e) - gammaln(k) - gammaln(e + k + K))


def poisson_logpmf(k, mean):
    """log Poisson(k; mean) with mean > 0; broadcasts."""
    k = np.asarray(k, dtype=float)
    mean = np.asarray(mean, dtype=float)
    return xlogy(k, mean) - mean - gammaln(k + 1.0)


def mixture_cell_logpmf(mval, t, p: ModelParams):
    """log P[M = mval] for the two-component Poisson mixture at exposure t."""
    a = np.log(p.pi) + poisson_logpmf(mval, t * p.mu) if p.pi > 0 else -np.inf
    b = np.log1p(-p.pi) + poisson_logpmf(mval, t * p.nu) if p.pi < 1 else -np.inf
    return np.logaddexp(a, b)


def zipm_cell_logpmf(nval, t, p: ModelParams):
    """log P[N = nval] for the zero-inflated mixture; 0^0 = 1 for the spike."""
    nval = np.asarray(nval)
    base = np.log(p.eps) + mixture_cell_logpmf(nval, t, p) if p.eps > 0 else np.full(np.shape(nval), -np.inf)
    if p.eps >= 1.0:
        return base
    spike = np.where(nval == 0, np.log1p(-p.eps), -np.inf)
    return np.logaddexp(base, spike)


def _component_cell_logpmf(nval, t, rate, eps):
    """log P[N = nval | Y] for one component: eps * Poisson(t * rate) plus a spike at 0."""
    base = poisson_logpmf(nval, t * rate)
    if eps >= 1.0:
        return base
    spike = np.where(np.asarray(nval) == 0, np.log1p(-eps), -np.inf)
    return np.logaddexp(np.log(eps) + base, spike)


def site_component_logliks(d: DataSet, g: ExposureGrid, p: ModelParams, zero_inflated: bool):
    """Per-site log f(column j | Y_j = 1) and log f(column j | Y_j = 0)."""
    d.check_grid(g)
    t = g.t[:, None]
    x = d.n if zero_inflated else d.mixture_counts
    eps = p.eps if zero_inflated else 1.0
    return (_component_cell_logpmf(x, t, p.mu, eps).sum(axis=0),
            _component_cell_logpmf(x, t, p.nu, eps).sum(axis=0))


def observed_loglik(d: DataSet, g: ExposureGrid, p: ModelParams, zero_inflated: bool) -> float:
    """log f(n) (or log f(m) for the plain mixture).

    A site's label is shared by all its days, so the two components are mixed
    per site, not per cell.
    """
    la, lb = site_component_logliks(d, g, p, zero_inflated)
    a = np.log(p.pi) + la if p.pi > 0 else np.full_like(la, -np.inf)
    b = np.log1p(-p.pi) + lb if p.pi < 1 else np.full_like(lb, -np.inf)
    return float(np.sum(np.logaddexp(a, b)))


def complete_loglik_mixture(d: DataSet, g: ExposureGrid, p: ModelParams) -> float:
    """log f(y, m) for the plain mixture with y observed."""
    d.check_grid(g)
    if d.y is None:
        raise DimensionMismatch("complete-data loglik needs y")
    m = d.mixture_counts
    y = d.y
    t = g.t[:, None]
    ll = xlogy(y, p.pi).sum() + xlogy(1 - y, 1 - p.pi).sum()
    lam = np.where(y[None, :] == 1, p.mu, p.nu) * t
    return float(ll + poisson_logpmf(m, lam).sum())


def complete_loglik_zipm(d: DataSet, g: ExposureGrid, p: ModelParams) -> float:
    """log f(y, z, n) through the exponential-family sufficient statistics."""
    d.check_grid(g)
    if d.y is None or d.z is None:
        raise DimensionMismatch("complete-data loglik needs y and z")
    y, z, n = d.y, d.z, d.n
    if np.any(n * (1 - z) != 0):
        raise SupportViolation("n_ij > 0 with z_ij = 0")
    t = g.t
    J, K = d.J, d.K
    ybar = y.mean()
    zbar = z.mean()
    tyz = float(t @ (z * y[None, :]).sum(axis=1)) / K
    t1yz = float(t @ (z * (1 - y)[None, :]).sum(axis=1)) / K
    ny = float(d.n_j @ y) / K
    n1y = float(d.n_j @ (1 - y)) / K
    ll = J * (xlogy(ybar, p.pi) + xlogy(1 - ybar, 1 - p.pi))
    ll += K * (xlogy(zbar, p.eps) + xlogy(1 - zbar, 1 - p.eps))
    ll += K * (xlogy(ny, p.mu) - tyz * p.mu + xlogy(n1y, p.nu) - t1yz * p.nu)
    ll += float(xlogy(d.n_i, t).sum() - gammaln(n + 1.0).sum())
    return float(ll)
