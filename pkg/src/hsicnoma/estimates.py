from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class Method(str, Enum):
    MONTE_CARLO = "MONTE_CARLO"
    CLOSED_FORM = "CLOSED_FORM"
    QUADRATURE = "QUADRATURE"
    ASYMPTOTIC = "ASYMPTOTIC"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("-", "_")
        aliases = {"MC": "MONTE_CARLO", "CLOSED": "CLOSED_FORM", "CF": "CLOSED_FORM",
                   "QUAD": "QUADRATURE", "ASYM": "ASYMPTOTIC"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class ProbabilityEstimate:
    """A probability with its uncertainty and the route that produced it.

    For Monte Carlo ``stderr`` is the standard error of the mean; for
    quadrature it is the integrator's error bound; closed forms carry 0.
    """

    value: float
    stderr: float
    n_samples: int
    method: Method
    flags: tuple = ()

    def __post_init__(self):
        if not (0.0 <= self.value <= 1.0) or math.isnan(self.value):
            raise ValueError(f"probability outside [0, 1]: {self.value!r}")
        if not self.stderr >= 0.0:
            raise ValueError(f"negative stderr: {self.stderr!r}")
        if self.method is Method.MONTE_CARLO and (self.stderr == 0.0 or self.n_samples < 1):
            raise ValueError("Monte Carlo estimates need n_samples >= 1 and stderr > 0")

    def __float__(self):
        return float(self.value)

    def within(self, other, k=3.0):
        """Whether ``other`` (float or estimate) lies within ``k`` of our stderr."""
        return abs(self.value - float(other)) <= k * self.stderr
