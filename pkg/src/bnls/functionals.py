"""Variational functionals of the stationary problem and the scaling family.

Computes mass, action, the Nehari / Pohozaev / virial functionals, the
mass-preserving scaling u_lambda(x) = lambda^(N/4) u(sqrt(lambda) x), the
closed-form expansion of the action along that family, and the projection
onto the zero-virial constraint set.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .grid import Field, GridError, integrate_values, radial_field, spectral_moment
from .params import PhysicalParams


class ScalingDomainError(ValueError):
    """Invalid scale factor or unmet scaling precondition."""


@dataclass(frozen=True)
class FunctionalReport:
    """One evaluation of all functionals of a state.

    mass          |u|_2^2
    grad_norm_sq  |grad u|_2^2
    lap_norm_sq   |Lap u|_2^2
    potential     |u|_{2s+2}^{2s+2} with s = sigma
    action        E_omega
    energy0       the omega-free part of the action
    nehari        I_omega, vanishes on solutions
    pohozaev      P_omega, the dilation identity functional
    virial        Q, the scaling derivative of the action
    """

    mass: float
    grad_norm_sq: float
    lap_norm_sq: float
    potential: float
    action: float
    energy0: float
    nehari: float
    pohozaev: float
    virial: float

    FIELDS = (
        "mass", "grad_norm_sq", "lap_norm_sq", "potential",
        "action", "energy0", "nehari", "pohozaev", "virial",
    )

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.FIELDS}


def assemble_report(p: PhysicalParams, mass: float, grad_sq: float,
                    lap_sq: float, potential: float) -> FunctionalReport:
    """Assemble every functional from the four base quadratic/potential norms."""
    n = p.dim
    two_s2 = 2.0 * p.sigma + 2.0
    energy0 = 0.5 * p.gamma * lap_sq + 0.5 * p.mu * grad_sq - potential / two_s2
    action = energy0 + 0.5 * p.omega * mass
    nehari = p.gamma * lap_sq + p.mu * grad_sq + p.omega * mass - potential
    pohozaev = (
        0.5 * (n - 4) * p.gamma * lap_sq
        + 0.5 * (n - 2) * p.mu * grad_sq
        + 0.5 * n * p.omega * mass
        - (n / two_s2) * potential
    )
    virial = (
        p.gamma * lap_sq
        + 0.5 * p.mu * grad_sq
        - (p.power() / (2.0 * two_s2)) * potential
    )
    return FunctionalReport(
        mass=mass, grad_norm_sq=grad_sq, lap_norm_sq=lap_sq, potential=potential,
        action=action, energy0=energy0, nehari=nehari, pohozaev=pohozaev, virial=virial,
    )


def evaluate_all(u: Field, p: PhysicalParams) -> FunctionalReport:
    """Evaluate every functional of u; gradient norms are computed spectrally."""
    u.require_finite()
    if u.grid.dim != p.dim:
        raise GridError(f"params dim {p.dim} does not match grid dim {u.grid.dim}")
    spectrum = np.fft.fftn(u.values)
    abs_sq = np.abs(u.values) ** 2
    mass = integrate_values(u.grid, abs_sq)
    grad_sq = spectral_moment(u, u.grid.k_sq, spectrum)
    lap_sq = spectral_moment(u, u.grid.k_fourth, spectrum)
    potential = integrate_values(u.grid, abs_sq ** (p.sigma + 1.0))
    return assemble_report(p, mass, grad_sq, lap_sq, potential)


def tolerance_scale(report: FunctionalReport, p: PhysicalParams) -> float:
    """Amplitude-invariant magnitude gamma |Lap u|^2 + omega |u|^2 used for all sign tests."""
    return p.gamma * report.lap_norm_sq + p.omega * report.mass


# ---------------------------------------------------------------------------
# The scaling family u_lambda


def rescale(u: Field, lam: float) -> Field:
    """Return x -> lam^(N/4) u(sqrt(lam) x) sampled on the same grid.

    Fields carrying an analytic radial profile are resampled exactly;
    general grid fields use band-limited (Fourier) interpolation. Warns
    when lam > 1 pulls samples from outside the numerical support of u.
    """
    if not lam > 0:
        raise ScalingDomainError(f"scale factor must be > 0 (got {lam})")
    grid = u.grid
    if lam == 1.0:
        return Field(grid, u.values.copy(), profile=u.profile)
    amp = lam ** (grid.dim / 4.0)
    root = math.sqrt(lam)

    if u.profile is not None:
        old = u.profile
        new_profile = lambda r: amp * np.asarray(old(root * r))  # noqa: E731
        return radial_field(grid, new_profile)

    if lam > 1.0:
        _warn_if_support_leaks(u, root)
    # band-limited interpolant evaluated at sqrt(lam) * x, one axis at a time
    spectrum = np.fft.fftn(u.values)
    exps = np.exp(
        1j * np.outer(root * grid.axis_coords, grid.axis_wavenumbers)
    ) / grid.points_per_axis
    if grid.dim == 1:
        vals = exps @ spectrum
    elif grid.dim == 2:
        vals = np.einsum("am,bn,mn->ab", exps, exps, spectrum, optimize=True)
    else:
        vals = np.einsum("am,bn,co,mno->abc", exps, exps, exps, spectrum, optimize=True)
    return Field(grid, amp * vals)


def _warn_if_support_leaks(u: Field, root: float):
    grid = u.grid
    inner = grid.half_width / root
    mags = np.abs(u.values)
    peak = mags.max()
    if peak == 0.0:
        return
    outside = mags[grid.radius >= inner]
    if outside.size and outside.max() > 1e-10 * peak:
        warnings.warn(
            f"rescale: support of the field extends past |x| = {inner:.3g}, "
            "periodic wrap-around will contaminate the resampling",
            RuntimeWarning,
            stacklevel=3,
        )


@dataclass(frozen=True)
class ScalingExpansion:
    """Closed-form functionals along u_lambda, built from the norms of u.

    Change of variables gives |Lap u_lam|^2 = lam^2 |Lap u|^2,
    |grad u_lam|^2 = lam |grad u|^2, mass invariant, and the potential
    scales as lam^(sigma N / 2); every functional follows.
    """

    params: PhysicalParams
    mass: float
    grad_norm_sq: float
    lap_norm_sq: float
    potential: float

    @classmethod
    def of(cls, u: Field, p: PhysicalParams) -> "ScalingExpansion":
        r = evaluate_all(u, p)
        return cls(p, r.mass, r.grad_norm_sq, r.lap_norm_sq, r.potential)

    @classmethod
    def from_report(cls, r: FunctionalReport, p: PhysicalParams) -> "ScalingExpansion":
        return cls(p, r.mass, r.grad_norm_sq, r.lap_norm_sq, r.potential)

    def report_at(self, lam: float) -> FunctionalReport:
        if not lam > 0:
            raise ScalingDomainError(f"scale factor must be > 0 (got {lam})")
        half_power = 0.5 * self.params.power()
        return assemble_report(
            self.params,
            self.mass,
            lam * self.grad_norm_sq,
            lam * lam * self.lap_norm_sq,
            lam**half_power * self.potential,
        )

    def action(self, lam: float) -> float:
        return self.report_at(lam).action

    def action_derivative(self, lam: float) -> float:
        """d/dlam of the action, equal to virial(u_lam)/lam."""
        if not lam > 0:
            raise ScalingDomainError(f"scale factor must be > 0 (got {lam})")
        p = self.params
        half_power = 0.5 * p.power()
        return (
            p.gamma * lam * self.lap_norm_sq
            + 0.5 * p.mu * self.grad_norm_sq
            - (half_power / (2.0 * p.sigma + 2.0)) * lam ** (half_power - 1.0) * self.potential
        )

    def action_second_derivative(self, lam: float) -> float:
        p = self.params
        half_power = 0.5 * p.power()
        out = p.gamma * self.lap_norm_sq
        if half_power != 1.0:
            out -= (
                (half_power * (half_power - 1.0) / (2.0 * p.sigma + 2.0))
                * lam ** (half_power - 2.0)
                * self.potential
            )
        return out

    def virial(self, lam: float) -> float:
        return self.report_at(lam).virial

    def nehari(self, lam: float) -> float:
        return self.report_at(lam).nehari


def action_along_scaling(u: Field, p: PhysicalParams, lam: float) -> tuple[float, float]:
    """(E_omega(u_lambda), d/dlambda E_omega(u_lambda)) from the closed-form expansion."""
    exp = ScalingExpansion.of(u, p)
    return exp.action(lam), exp.action_derivative(lam)


# ---------------------------------------------------------------------------
# Zero-virial projection


def find_lambda0(u: Field, p: PhysicalParams, zero_tol: float = 1e-12) -> float:
    """The unique lambda0 in (0, 1] with virial(u_lambda0) = 0, given virial(u) <= 0.

    Requires sigma N >= 4. Root-found by bisection on the closed-form
    expansion; lambda0 = 1 exactly when virial(u) vanishes to tolerance.
    """
    exp = ScalingExpansion.of(u, p)
    return find_lambda0_from_expansion(exp, zero_tol=zero_tol)


def find_lambda0_from_expansion(exp: ScalingExpansion, zero_tol: float = 1e-12) -> float:
    p = exp.params
    if p.power() < 4.0 - 1e-12:
        raise ScalingDomainError(
            f"zero-virial projection requires sigma*dim >= 4 (got {p.power():g})"
        )
    scale = p.gamma * exp.lap_norm_sq + p.omega * exp.mass
    q1 = exp.virial(1.0)
    if abs(q1) <= zero_tol * scale:
        return 1.0
    if q1 > 0:
        raise ScalingDomainError(
            f"virial(u) = {q1:.3e} > 0: the projection precondition virial <= 0 fails"
        )
    if p.mu == 0.0 and p.is_mass_critical():
        # virial(u_lam) = lam^2 virial(u): strictly negative for every lam, no root
        raise ScalingDomainError(
            "degenerate scaling: with mu = 0 at the mass-critical power the virial "
            "of u_lambda never changes sign"
        )
    lo, hi = 1e-8, 1.0
    for _ in range(40):
        if exp.virial(lo) > 0:
            break
        lo *= 0.1
    else:
        raise ScalingDomainError("no sign change of the virial found on (0, 1]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        q = exp.virial(mid)
        if abs(q) <= zero_tol * p.gamma * mid * mid * exp.lap_norm_sq:
            return mid
        if q > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def in_M_omega(u: Field, p: PhysicalParams, tol: float) -> bool:
    """Membership in {virial = 0, nehari <= 0}, up to tol times the quadratic scale."""
    r = evaluate_all(u, p)
    scale = tolerance_scale(r, p)
    if scale == 0.0:
        raise ScalingDomainError("the zero field is excluded from the constraint set")
    return abs(r.virial) <= tol * scale and r.nehari <= tol * scale


# ---------------------------------------------------------------------------
# Sampling verification of the constrained-minimum characterization


@dataclass
class PropositionSampleReport:
    """Outcome of sampling the constraint set against a ground-state action level.

    reference_action is E_omega of the converged solver output; it is only
    an upper estimate (proxy) for the true ground-state energy level, which
    is a global minimum we cannot certify numerically.
    """

    n_samples: int
    n_kept: int
    reference_action: float
    tol: float
    min_action: float | None = None
    violations: list = dc_field(default_factory=list)
    inconclusive: bool = False
    reference_is_proxy: bool = True

    @property
    def n_violations(self) -> int:
        return len(self.violations)

    def as_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "n_kept": self.n_kept,
            "reference_action": self.reference_action,
            "reference_is_proxy": self.reference_is_proxy,
            "tol": self.tol,
            "min_action": self.min_action,
            "n_violations": self.n_violations,
            "violations": self.violations,
            "inconclusive": self.inconclusive,
        }


def _random_radial_profile(rng):
    c0 = rng.uniform(0.5, 2.0)
    c1 = rng.uniform(-1.0, 1.0)
    c2 = rng.uniform(-0.5, 0.5)
    w = rng.uniform(0.7, 2.0)
    def profile(r):
        s = (r / w) ** 2
        return (c0 + c1 * s + c2 * s * s) * np.exp(-0.5 * s)
    return profile


def project_to_zero_virial(exp: ScalingExpansion, zero_tol: float = 1e-9):
    """Amplitude-scale until virial <= 0, then lambda-project onto {virial = 0}.

    Returns (lam0, projected expansion). Amplitude scaling multiplies the
    quadratic norms by A^2 and the potential by A^(2 sigma + 2).
    """
    p = exp.params
    scale = p.gamma * exp.lap_norm_sq + p.omega * exp.mass
    q = exp.virial(1.0)
    if abs(q) <= zero_tol * scale:
        return 1.0, exp
    if q > 0:
        quad = p.gamma * exp.lap_norm_sq + 0.5 * p.mu * exp.grad_norm_sq
        coeff = (p.power() / (2.0 * (2.0 * p.sigma + 2.0))) * exp.potential
        amp_sq = (2.0 * quad / coeff) ** (1.0 / (2.0 * p.sigma))
        exp = ScalingExpansion(
            p,
            amp_sq * exp.mass,
            amp_sq * exp.grad_norm_sq,
            amp_sq * exp.lap_norm_sq,
            amp_sq ** (p.sigma + 1.0) * exp.potential,
        )
    lam0 = find_lambda0_from_expansion(exp)
    projected = ScalingExpansion.from_report(exp.report_at(lam0), p)
    return lam0, projected


def sample_check_proposition(
    u_star: Field,
    p: PhysicalParams,
    n_samples: int,
    seed: int,
    tol: float = 1e-6,
) -> PropositionSampleReport:
    """Sample random radial profiles projected into {virial = 0, nehari <= 0}
    and verify none undercuts the ground-state action estimate.

    Each sample uses a deterministic rng seeded by (seed, index), so the
    loop may run in any order or in parallel.
    """
    ref = evaluate_all(u_star, p)
    report = PropositionSampleReport(
        n_samples=n_samples, n_kept=0,
        reference_action=ref.action, tol=tol,
    )
    grid = u_star.grid
    floor = ref.action - tol * abs(ref.action)
    for i in range(n_samples):
        rng = np.random.default_rng((seed, i))
        sample = radial_field(grid, _random_radial_profile(rng))
        exp = ScalingExpansion.of(sample, p)
        try:
            _, projected = project_to_zero_virial(exp)
        except ScalingDomainError:
            continue
        rep = projected.report_at(1.0)
        scale = tolerance_scale(rep, p)
        if rep.nehari > tol * scale:
            continue
        report.n_kept += 1
        if report.min_action is None or rep.action < report.min_action:
            report.min_action = rep.action
        if rep.action < floor:
            report.violations.append({"index": i, "action": rep.action})
    report.inconclusive = report.n_kept == 0
    return report
