"""Seeded sampler for complete (y, z, m, n) datasets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import DomainError
from .model import DataSet, ExposureGrid, ModelParams


@dataclass(frozen=True)
class SimConfig:
    grid: ExposureGrid
    params: ModelParams
    seed: int = 0
    replicates: int = 1

    def __post_init__(self):
        if int(self.replicates) < 1:
            raise DomainError("replicates", "replicates must be >= 1")
        if not (0 <= int(self.seed) < 2**64):
            raise DomainError("seed", "seed must be an unsigned 64-bit integer")
        p = self.params
        # pi = 0 and eps = 1 are legal here: they switch a mechanism off
        if not (0.0 <= p.pi <= 1.0):
            raise DomainError("pi")
        if not (0.0 <= p.eps <= 1.0):
            raise DomainError("eps")
        if not (p.mu > 0 and p.nu > 0):
            raise DomainError("mu" if not p.mu > 0 else "nu")


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Generator for replicate ``r``; depends only on (seed, r)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replicate),))
    return np.random.Generator(np.random.PCG64(ss))


def simulate_dataset(c: SimConfig, replicate: int = 0) -> DataSet:
    """Draw Y, Z, M and form N = Z * M.  ``replicate`` selects the child stream."""
    rng = replicate_rng(c.seed, replicate)
    g, p = c.grid, c.params
    y = (rng.random(g.J) < p.pi).astype(np.int64)
    z = (rng.random((g.I, g.J)) < p.eps).astype(np.int64)
    rate = np.where(y[None, :] == 1, p.mu, p.nu)
    m = rng.poisson(g.t[:, None] * rate).astype(np.int64)
    return DataSet(n=z * m, y=y, z=z, m=m)


def replicate_stream(c: SimConfig) -> Iterator[DataSet]:
    for r in range(c.replicates):
        yield simulate_dataset(c, r)
