"""User-type and query-signal distributions over [0, 1].

A population is four independent marginals: gamma (ad sensitivity) and theta
(reliance) for user types, r (ad profitability) and psi (AI-quality) for
query signals. Each marginal is Uniform[0,1] or Beta(a, b). Sampling is via
the inverse CDF applied to counter-based uniforms, so a sample is a pure
function of its stream key.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


class PopulationError(ValueError):
    """Invalid distribution specification."""


@dataclass(frozen=True)
class Dist:
    """A distribution over [0, 1]: kind is 'uniform' or 'beta'."""

    kind: str = "uniform"
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "beta"):
            raise PopulationError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "beta" and (self.a <= 0 or self.b <= 0):
            raise PopulationError(
                f"beta parameters must be strictly positive, got a={self.a}, b={self.b}"
            )

    def ppf(self, u: np.ndarray | float) -> np.ndarray | float:
        """Inverse CDF; maps uniforms into [0, 1] samples."""
        if self.kind == "uniform":
            return u
        return stats.beta.ppf(u, self.a, self.b)

    @property
    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5
        return self.a / (self.a + self.b)


@dataclass(frozen=True)
class PopulationSpec:
    """Marginals for user types (gamma, theta) and query signals (r, psi)."""

    gamma: Dist = Dist()
    theta: Dist = Dist()
    r: Dist = Dist()
    psi: Dist = Dist()


def sample_types(spec: PopulationSpec, gamma_u, theta_u):
    """Map type uniforms to (gamma, theta) samples in [0, 1]."""
    return spec.gamma.ppf(gamma_u), spec.theta.ppf(theta_u)


def sample_query(spec: PopulationSpec, r_u, psi_u):
    """Map query uniforms to (r, psi) samples in [0, 1]."""
    return spec.r.ppf(r_u), spec.psi.ppf(psi_u)
