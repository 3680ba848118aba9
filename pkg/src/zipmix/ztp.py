"""Zero-truncated Poisson and the nonzero part of the zero-inflated mixture.

Given N != 0 the inflation weight eps cancels, leaving the Poisson mixture
renormalized by its own nonzero mass.  A mixture of two zero-truncated Poissons
renormalizes each component separately instead; the two agree only when mu = nu.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .errors import DomainError
from .model import ModelParams, poisson_logpmf

__all__ = [
    "ztp_logpmf",
    "conditional_zipm_logpmf",
    "ztp_mixture_logpmf",
    "ztp_discrepancy_report",
]


def _log_expm1(lam):
    lam = np.asarray(lam, dtype=float)
    # log(e^lam - 1) = lam + log1p(-e^-lam) avoids overflow for large lam
    small = np.minimum(lam, 1.0)
    return np.where(lam > 1.0, lam + np.log1p(-np.exp(-lam)), np.log(np.expm1(small)))


def _check_x(x):
    x = np.asarray(x)
    if np.any(x < 1):
        raise DomainError("x", "zero-truncated support starts at x = 1")
    return x.astype(float)


def ztp_logpmf(x, lam):
    """log lam^x / ((e^lam - 1) x!)."""
    x = _check_x(x)
    if not np.all(np.asarray(lam) > 0):
        raise DomainError("lambda", "lambda must be positive")
    return x * np.log(lam) - _log_expm1(lam) - gammaln(x + 1.0)


def conditional_zipm_logpmf(x, p: ModelParams, t: float = 1.0):
    """log P[N = x | N != 0] under the zero-inflated mixture."""
    x = _check_x(x)
    a = np.log(p.pi) + poisson_logpmf(x, t * p.mu) if p.pi > 0 else -np.inf
    b = np.log1p(-p.pi) + poisson_logpmf(x, t * p.nu) if p.pi < 1 else -np.inf
    # 1 - pi e^{-t mu} - (1 - pi) e^{-t nu}, written to avoid cancellation
    nonzero = -(p.pi * np.expm1(-t * p.mu) + (1.0 - p.pi) * np.expm1(-t * p.nu))
    return np.logaddexp(a, b) - np.log(nonzero)


def ztp_mixture_logpmf(x, p: ModelParams, t: float = 1.0):
    """log of pi ZTP(t mu) + (1 - pi) ZTP(t nu)."""
    x = _check_x(x)
    a = np.log(p.pi) + ztp_logpmf(x, t * p.mu) if p.pi > 0 else -np.inf
    b = np.log1p(-p.pi) + ztp_logpmf(x, t * p.nu) if p.pi < 1 else -np.inf
    return np.logaddexp(a, b)


def ztp_discrepancy_report(p: ModelParams, t: float = 1.0, x_max: int = 10) -> dict:
    """Tabulate both pmfs on x = 1..x_max and locate solutions of the reduced identity

        x log(mu / nu) = log[(e^{t mu} - 1) / (e^{t nu} - 1)],

    which has at most one solution when mu != nu.
    """
    if x_max < 2:
        raise DomainError("x_max", "x_max must be >= 2")
    x = np.arange(1, x_max + 1)
    cond = np.exp(conditional_zipm_logpmf(x, p, t))
    mix = np.exp(ztp_mixture_logpmf(x, p, t))
    diff = cond - mix
    L = x * np.log(p.mu / p.nu) - (_log_expm1(t * p.mu) - _log_expm1(t * p.nu))
    sign = np.sign(L)
    changes = int(np.sum(sign[1:] * sign[:-1] < 0))
    root = None
    if p.mu != p.nu:
        root = float((_log_expm1(t * p.mu) - _log_expm1(t * p.nu)) / np.log(p.mu / p.nu))
    return {
        "x": x.tolist(),
        "conditional_zipm": cond.tolist(),
        "ztp_mixture": mix.tolist(),
        "difference": diff.tolist(),
        "max_abs_difference": float(np.max(np.abs(diff))),
        "log_ratio": L.tolist(),
        "exact_zeros": int(np.sum(L == 0.0)),
        "sign_changes": changes,
        "identity_root": root,
        "equal_rates": bool(p.mu == p.nu),
    }
