from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import DomainError


@dataclass(frozen=True)
class IntervalEstimate:
    point: float
    lower: float
    upper: float
    level: float

    def __post_init__(self):
        for name in ("point", "lower", "upper", "level"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.lower <= self.point <= self.upper):
            raise ValueError(f"interval [{self.lower}, {self.upper}] does not contain {self.point}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def as_dict(self) -> dict:
        return {"point": self.point, "lower": self.lower, "upper": self.upper, "level": self.level}


def z_quantile(level: float) -> float:
    """Upper (1 - level)/2 standard normal quantile for a two-sided interval."""
    if not (0.0 <= level < 1.0):
        raise DomainError("level", "level must lie in [0, 1)")
    return float(norm.ppf(0.5 + 0.5 * level))
