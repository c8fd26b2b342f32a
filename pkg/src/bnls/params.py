"""Model parameters for the biharmonic NLS and regime classification.

The evolution equation is  i dpsi/dt = gamma Lap^2 psi - mu Lap psi - |psi|^(2 sigma) psi
and standing-wave profiles solve  gamma Lap^2 u - mu Lap u + omega u = |u|^(2 sigma) u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

CRITICAL_POWER = 4.0  # sigma * dim at the mass-critical balance

#: classification tags returned by PhysicalParams.regime()
MASS_SUBCRITICAL = "mass-subcritical"
MASS_CRITICAL = "mass-critical"
MASS_SUPERCRITICAL = "mass-supercritical"

_EQ_TOL = 1e-12


class ParameterError(ValueError):
    """A physical parameter violates the model hypotheses."""


def sobolev_limit(dim: int) -> float:
    """Upper bound for sigma*dim: 4N/(N-4) for N >= 5, infinite otherwise."""
    if dim >= 5:
        return 4.0 * dim / (dim - 4)
    return math.inf


@dataclass(frozen=True)
class PhysicalParams:
    """The model quintuple (gamma, mu, omega, sigma, dim).

    gamma  coefficient of the fourth-order dispersion, > 0
    mu     coefficient of the second-order dispersion, >= 0
    omega  standing-wave frequency, > 0
    sigma  half the nonlinearity power (the power is 2*sigma), > 0
    dim    spatial dimension N of the modeled problem, >= 1
    """

    gamma: float
    mu: float
    omega: float
    sigma: float
    dim: int

    def __post_init__(self):
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be > 0 (got {self.gamma})")
        if not self.omega > 0:
            raise ParameterError(f"omega must be > 0 (standing-wave frequency hypothesis, got {self.omega})")
        if self.mu < 0:
            raise ParameterError(f"mu must be >= 0 (got {self.mu})")
        if not self.sigma > 0:
            raise ParameterError(f"sigma must be > 0 (got {self.sigma})")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ParameterError(f"dim must be a positive integer (got {self.dim})")
        limit = sobolev_limit(self.dim)
        if self.power() >= limit:
            raise ParameterError(
                f"sigma*dim = {self.power():g} violates the fourth-order Sobolev bound "
                f"4N/(N-4) = {limit:g} for N = {self.dim}"
            )

    def power(self) -> float:
        """sigma * dim, the quantity that decides the criticality regime."""
        return self.sigma * self.dim

    def is_mass_critical(self) -> bool:
        return abs(self.power() - CRITICAL_POWER) <= _EQ_TOL

    def regime(self) -> str:
        """Exactly one of mass-subcritical, mass-critical, mass-supercritical."""
        if self.is_mass_critical():
            return MASS_CRITICAL
        if self.power() < CRITICAL_POWER:
            return MASS_SUBCRITICAL
        return MASS_SUPERCRITICAL

    def linear_symbol(self, k_sq):
        """gamma |k|^4 + mu |k|^2 + omega, the (strictly positive) stationary symbol."""
        return self.gamma * k_sq * k_sq + self.mu * k_sq + self.omega

    def guarantees_radial_symmetry(self) -> bool:
        """True when mu >= 2 sqrt(gamma omega); then every ground state is radial."""
        return self.mu >= 2.0 * math.sqrt(self.gamma * self.omega)


def applicable_instability_theorem(p: PhysicalParams) -> str | None:
    """Which blow-up instability statement covers these parameters.

    Returns "finite-time" (any radial ground state blows up in finite time),
    "finite-or-infinite" (blow-up in finite or infinite time), or None when
    no hypothesis set applies.
    """
    power = p.power()
    if p.dim >= 2 and p.sigma <= 4:
        if p.mu > 0 and power >= CRITICAL_POWER - _EQ_TOL:
            return "finite-time"
        if p.mu == 0 and power > CRITICAL_POWER + _EQ_TOL:
            return "finite-time"
    if p.mu == 0 and abs(power - CRITICAL_POWER) <= _EQ_TOL and p.dim >= 2:
        return "finite-or-infinite"
    if p.dim in (2, 3, 4) and p.sigma > 4:
        return "finite-or-infinite"
    return None
