"""Localized virial: flattened-quadratic cutoff, the virial functional, the
rate-vs-virial comparison, and the full instability-by-blow-up experiment.

The cutoff weight is quadratic (r^2/2) inside radius R, constant beyond
10R, with a C^6 polynomial taper in between whose second derivative never
exceeds 1; the construction is audited numerically at build time.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from numpy.polynomial import Polynomial

from .grid import Field, GridError, gradient, integrate_values
from .functionals import ScalingExpansion, evaluate_all, rescale, tolerance_scale
from .evolution import EvolveConfig, TrajectoryOutcome, Verdict, evolve
from .groundstate import GroundStateResult, SolverConfig, solve
from .params import PhysicalParams, applicable_instability_theorem

AUDIT_POINTS = 100_000
TRANSITION_START = 1.0
TRANSITION_END = 10.0
_SPAN = TRANSITION_END - TRANSITION_START

# value 0 -> 1 with the first five derivatives vanishing at both ends,
# so the taper joins the quadratic core and the flat exterior in C^6
SMOOTHSTEP = Polynomial([0, 0, 0, 0, 0, 0, 462, -1980, 3465, -3080, 1386, -252])
SMOOTHSTEP_PRIME = SMOOTHSTEP.deriv()

# the taper argument s = (r - 1) / 9 as a polynomial in r
_S_OF_R = Polynomial([-TRANSITION_START / _SPAN, 1.0 / _SPAN])


def _compose(outer: Polynomial, inner: Polynomial) -> Polynomial:
    out = Polynomial([0.0])
    for c in reversed(outer.coef):
        out = out * inner + c
    return out


# phi'(r) = r (1 - S((r-1)/9)) on the transition, as an exact polynomial in r
_PHI_PRIME_TRANSITION = Polynomial([0.0, 1.0]) * (1.0 - _compose(SMOOTHSTEP, _S_OF_R))
_PHI_TRANSITION = _PHI_PRIME_TRANSITION.integ()
_PHI_TRANSITION = _PHI_TRANSITION - _PHI_TRANSITION(TRANSITION_START) + 0.5
PLATEAU_VALUE = float(_PHI_TRANSITION(TRANSITION_END))


def shape_value(rho):
    """The unscaled cutoff profile: rho^2/2 inside, constant outside."""
    rho = np.asarray(rho, dtype=float)
    return np.where(
        rho <= TRANSITION_START, 0.5 * rho * rho,
        np.where(rho >= TRANSITION_END, PLATEAU_VALUE, _PHI_TRANSITION(rho)),
    )


def shape_prime(rho):
    rho = np.asarray(rho, dtype=float)
    return np.where(
        rho <= TRANSITION_START, rho,
        np.where(rho >= TRANSITION_END, 0.0, _PHI_PRIME_TRANSITION(rho)),
    )


def shape_second(rho):
    rho = np.asarray(rho, dtype=float)
    s = np.clip((rho - TRANSITION_START) / _SPAN, 0.0, 1.0)
    inside = (1.0 - SMOOTHSTEP(s)) - (rho / _SPAN) * SMOOTHSTEP_PRIME(s)
    return np.where(rho <= TRANSITION_START, 1.0, np.where(rho >= TRANSITION_END, 0.0, inside))


def taper_weight(rho):
    """phi'(rho)/rho: 1 inside, 0 outside, 1 - S((rho-1)/9) in between."""
    rho = np.asarray(rho, dtype=float)
    s = np.clip((rho - TRANSITION_START) / _SPAN, 0.0, 1.0)
    return 1.0 - SMOOTHSTEP(s)


@dataclass
class VirialCutoff:
    """Scaled cutoff phi_R(r) = R^2 phi(r/R) with its audit certificate.

    audit_max_second_derivative is the max of phi'' over a fine radial
    grid; the construction guarantees it is <= 1.
    """

    R: float
    audit_rho: np.ndarray
    phi_values: np.ndarray
    phi_prime: np.ndarray
    audit_max_second_derivative: float
    smoothness_order: int = 6
    _weights: dict = dc_field(default_factory=dict, repr=False, compare=False)

    def weight_on(self, grid) -> np.ndarray:
        """phi_R'(|x|)/|x| on the grid lattice (1 in the quadratic core)."""
        got = self._weights.get(grid)
        if got is None:
            got = taper_weight(grid.radius / self.R)
            self._weights[grid] = got
        return got

    def virial(self, u: Field) -> float:
        return virial(u, self)

    def certificate(self) -> dict:
        return {
            "R": self.R,
            "audit_max_second_derivative": self.audit_max_second_derivative,
            "smoothness_order": self.smoothness_order,
            "audit_points": int(self.audit_rho.size),
        }


def build_cutoff(R: float, grid=None) -> VirialCutoff:
    """Build and audit the cutoff for radius R; warns when the taper region
    does not fit inside the grid box."""
    if not R > 0:
        raise ValueError(f"cutoff radius must be > 0 (got {R})")
    if grid is not None and 10.0 * R > 0.9 * grid.half_width:
        warnings.warn(
            f"cutoff taper extends to {10 * R:g} but the box half-width is "
            f"{grid.half_width:g}; the exterior plateau is truncated",
            RuntimeWarning,
            stacklevel=2,
        )
    rho = np.linspace(0.0, 1.2 * TRANSITION_END, AUDIT_POINTS)
    second = shape_second(rho)
    max_second = float(second.max())
    if max_second > 1.0 + 1e-12:
        raise AssertionError(f"cutoff audit failed: max phi'' = {max_second!r} > 1")
    return VirialCutoff(
        R=float(R),
        audit_rho=rho,
        phi_values=R * R * shape_value(rho),
        phi_prime=R * shape_prime(rho),
        audit_max_second_derivative=max_second,
    )


def virial(u: Field, cutoff: VirialCutoff, grads=None) -> float:
    """2 Im integral of conj(u) grad(phi_R) . grad(u); derivatives spectral."""
    u.require_finite()
    grid = u.grid
    w = cutoff.weight_on(grid)
    if w.shape != u.values.shape:
        raise GridError("cutoff weight does not match the field grid")
    if grads is None:
        grads = gradient(u)
    radial_dv = sum(grid.coord_mesh(a) * grads[a] for a in range(grid.dim))
    return 2.0 * integrate_values(grid, np.imag(np.conj(u.values) * w * radial_dv))


# ---------------------------------------------------------------------------
# Rate comparison against the virial functional


class SamplingError(ValueError):
    """Trajectory samples are too sparse for finite-difference rates."""


@dataclass
class VirialComparison:
    """Per-cutoff comparison of the measured d/dt M against 8 Q(u(t))."""

    R: float
    n_points: int
    max_abs_residual: float
    max_signed_residual: float
    slack_constant: float
    slack_kind: str              # "general" or "critical-eta"
    min_margin: float            # min over samples of 8Q + slack - dM/dt
    inequality_ok: bool
    best_eta: float | None = None

    def as_dict(self) -> dict:
        return {
            "R": self.R,
            "n_points": self.n_points,
            "max_abs_residual": self.max_abs_residual,
            "max_signed_residual": self.max_signed_residual,
            "slack_constant": self.slack_constant,
            "slack_kind": self.slack_kind,
            "min_margin": self.min_margin,
            "inequality_ok": self.inequality_ok,
            "best_eta": self.best_eta,
        }


def _interior_samples(traj: TrajectoryOutcome, R: float):
    recs = [r for r in traj.samples if math.isfinite(r.report.mass) and R in r.virial_m]
    return [r for r in recs if R in r.virial_rate_fd and math.isfinite(r.virial_rate_fd[R])]


def _check_sampling_density(traj: TrajectoryOutcome, recs):
    if len(recs) < 3:
        raise SamplingError("need at least three finite samples for central differences")
    times = [r.t for r in recs]
    spacings = np.diff(times)
    r_key = next(iter(recs[0].virial_rate_fd))
    m_scale = max(abs(r.virial_m[r_key]) for r in recs)
    rate_scale = max(abs(r.virial_rate_fd[r_key]) for r in recs)
    if rate_scale > 0 and m_scale > 0:
        t_char = m_scale / rate_scale
        if float(np.median(spacings)) > 0.01 * t_char:
            raise SamplingError(
                f"sample spacing {float(np.median(spacings)):.3g} exceeds 1% of the "
                f"characteristic time {t_char:.3g}"
            )


def slack_terms(R: float, grad_norm_sq: float, p: PhysicalParams) -> float:
    """The R-controlled error budget of the general rate bound."""
    grad = math.sqrt(max(grad_norm_sq, 0.0))
    return (
        R**-4.0
        + grad_norm_sq * R**-2.0
        + grad**p.sigma * R ** (-p.sigma * (p.dim - 1))
        + p.mu * R**-2.0
    )


def slack_terms_critical(R: float, eta: float) -> float:
    """Error budget of the mass-critical mu = 0 variant, for one eta in (0, 1)."""
    return 1.0 / (eta * R * R) + math.sqrt(eta)


DEFAULT_ETA_SWEEP = (1e-2, 1e-4)


def virial_rate_check(
    traj: TrajectoryOutcome,
    cutoff: VirialCutoff,
    p: PhysicalParams,
    slack_constant: float = 1.0,
    eta_values=DEFAULT_ETA_SWEEP,
) -> VirialComparison:
    """Compare the finite-difference rate of the localized virial against
    8 Q(u(t)) sample by sample, with the R-dependent slack budget."""
    R = cutoff.R
    recs = _interior_samples(traj, R)
    _check_sampling_density(traj, recs)
    critical_variant = p.mu == 0.0 and p.is_mass_critical()
    best_eta = None
    if critical_variant:
        best_eta = min(eta_values, key=lambda e: slack_terms_critical(R, e))
    max_abs = 0.0
    max_signed = -math.inf
    min_margin = math.inf
    for rec in recs:
        rate = rec.virial_rate_fd[R]
        residual = rate - 8.0 * rec.report.virial
        max_abs = max(max_abs, abs(residual))
        max_signed = max(max_signed, residual)
        if critical_variant:
            slack = slack_constant * slack_terms_critical(R, best_eta)
        else:
            slack = slack_constant * slack_terms(R, rec.report.grad_norm_sq, p)
        min_margin = min(min_margin, slack - residual)
    return VirialComparison(
        R=R,
        n_points=len(recs),
        max_abs_residual=max_abs,
        max_signed_residual=max_signed,
        slack_constant=slack_constant,
        slack_kind="critical-eta" if critical_variant else "general",
        min_margin=min_margin,
        inequality_ok=min_margin >= 0.0,
        best_eta=best_eta,
    )


def calibrate_slack_constant(
    traj: TrajectoryOutcome,
    cutoffs,
    p: PhysicalParams,
    eta_values=DEFAULT_ETA_SWEEP,
    safety: float = 2.0,
) -> float:
    """Fit the slack constant on a standing-wave trajectory, where the true
    rate vanishes and any residual is numerical noise.

    The fit never goes below 1: the bound's hidden constant is at least
    order one, and a noise floor smaller than that must not tighten it.
    """
    worst = 0.0
    critical_variant = p.mu == 0.0 and p.is_mass_critical()
    for cutoff in cutoffs:
        recs = _interior_samples(traj, cutoff.R)
        if len(recs) < 3:
            continue
        for rec in recs:
            residual = abs(rec.virial_rate_fd[cutoff.R] - 8.0 * rec.report.virial)
            if critical_variant:
                terms = min(slack_terms_critical(cutoff.R, e) for e in eta_values)
            else:
                terms = slack_terms(cutoff.R, rec.report.grad_norm_sq, p)
            if terms > 0:
                worst = max(worst, residual / terms)
    return max(1.0, safety * worst)


# ---------------------------------------------------------------------------
# The instability experiment


@dataclass
class InstabilityConfig:
    solver: SolverConfig
    evolve: EvolveConfig
    lam: float = 1.05
    radii: tuple = (8.0, 16.0, 32.0)
    sign_tol: float = 1e-8
    gap_tol: float = 1e-6
    eta_values: tuple = DEFAULT_ETA_SWEEP
    calibration_t_end: float = 1.0

    def __post_init__(self):
        if not self.lam > 1.0:
            raise ValueError(
                f"the perturbation scale must exceed 1 (got {self.lam}); "
                "lambda = 1 is the unperturbed standing wave"
            )


@dataclass
class InstabilityExperiment:
    params: PhysicalParams
    lam: float
    radii: tuple
    theorem: str
    ground_state: GroundStateResult
    initial_signs: dict
    trajectory: TrajectoryOutcome
    q_gap_measured: float
    gap_bound: float
    gap_ok: bool
    sign_persistence_ok: bool
    sign_violations: list
    virial_comparison: list
    slack_constant: float
    case_split_fraction: float | None
    verdict_expected: tuple
    verdict_ok: bool
    falsifying: bool
    notes: list = dc_field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "params": {
                "gamma": self.params.gamma, "mu": self.params.mu,
                "omega": self.params.omega, "sigma": self.params.sigma,
                "dim": self.params.dim,
            },
            "lambda": self.lam,
            "radii": list(self.radii),
            "theorem": self.theorem,
            "initial_signs": self.initial_signs,
            "verdict": self.trajectory.verdict.value,
            "t_final": self.trajectory.t_final,
            "q_gap_measured": self.q_gap_measured,
            "gap_bound": self.gap_bound,
            "gap_bound_uses_action_proxy": True,
            "gap_ok": self.gap_ok,
            "sign_persistence_ok": self.sign_persistence_ok,
            "n_sign_violations": len(self.sign_violations),
            "virial_comparison": [c.as_dict() for c in self.virial_comparison],
            "slack_constant": self.slack_constant,
            "case_split_fraction": self.case_split_fraction,
            "verdict_expected": [v for v in self.verdict_expected],
            "verdict_ok": self.verdict_ok,
            "falsifying": self.falsifying,
            "conservation_defects": list(self.trajectory.conservation_defects),
            "notes": self.notes,
        }


class RegimeError(ValueError):
    """Parameters outside every instability hypothesis set."""


def run_instability(
    p: PhysicalParams,
    cfg: InstabilityConfig,
    ground_state: GroundStateResult | None = None,
) -> InstabilityExperiment:
    """Solve, perturb by the mass-preserving scaling, evolve, and test every
    prediction of the blow-up instability argument.

    Steps: (a) ground state; (b) v = u_lambda with the predicted initial
    signs (action drops, virial and Nehari go negative); (c) evolution of
    v; (d) sign persistence along the trajectory; (e) the measured virial
    gap against the action-gap bound (ground-state action is only a proxy
    for the true minimal level); (f) the rate comparison per cutoff radius
    with the slack constant frozen on a standing-wave calibration run;
    (g) verdict classified under the applicable theorem. A sign-persistence
    violation marks the whole experiment FALSIFYING.
    """
    theorem = applicable_instability_theorem(p)
    if theorem is None:
        raise RegimeError(
            "no instability hypothesis set applies to "
            f"gamma={p.gamma} mu={p.mu} omega={p.omega} sigma={p.sigma} N={p.dim}"
        )
    if p.power() < 4.0 - 1e-12:
        raise RegimeError("instability experiments require sigma * dim >= 4")

    gs = ground_state if ground_state is not None else solve(p, cfg.solver)
    if not gs.converged:
        raise RuntimeError(f"ground-state solve failed: {gs.message}")

    notes = []
    if p.guarantees_radial_symmetry():
        notes.append("mu >= 2 sqrt(gamma omega): every ground state is radial")

    cutoffs = [build_cutoff(R, gs.profile.grid) for R in cfg.radii]

    # standing-wave calibration of the slack constant
    calib_cfg = EvolveConfig(
        dt=cfg.evolve.dt, t_end=cfg.calibration_t_end,
        sample_every=cfg.evolve.sample_every,
        blowup_threshold=cfg.evolve.blowup_threshold,
        dealias=cfg.evolve.dealias, adapt=False,
        local_error_tol=cfg.evolve.local_error_tol,
    )
    calib_traj = evolve(gs.profile, p, calib_cfg, cutoffs=cutoffs)
    slack_constant = calibrate_slack_constant(calib_traj, cutoffs, p, cfg.eta_values)

    v = rescale(gs.profile, cfg.lam)
    v_report = evaluate_all(v, p)
    v_scale = tolerance_scale(v_report, p)
    initial_signs = {
        "action_ground": gs.report.action,
        "action_perturbed": v_report.action,
        "action_drops": v_report.action < gs.report.action,
        "virial": v_report.virial,
        "virial_negative": v_report.virial < -cfg.sign_tol * v_scale,
        "nehari": v_report.nehari,
        "nehari_negative": v_report.nehari < -cfg.sign_tol * v_scale,
    }

    traj = evolve(v, p, cfg.evolve, cutoffs=cutoffs)

    finite = [r for r in traj.samples if math.isfinite(r.report.mass)]
    violations = []
    for rec in finite:
        scale = tolerance_scale(rec.report, p)
        if rec.report.virial > cfg.sign_tol * scale:
            violations.append({"t": rec.t, "functional": "virial", "value": rec.report.virial})
        if rec.report.nehari > cfg.sign_tol * scale:
            violations.append({"t": rec.t, "functional": "nehari", "value": rec.report.nehari})
    sign_ok = not violations

    q_gap = -max(rec.report.virial for rec in finite)
    gap_bound = gs.report.action - v_report.action
    gap_ok = q_gap + cfg.gap_tol * abs(gs.report.action) >= gap_bound

    comparisons = []
    for cutoff in cutoffs:
        try:
            comparisons.append(
                virial_rate_check(traj, cutoff, p, slack_constant, cfg.eta_values)
            )
        except SamplingError as exc:
            notes.append(f"rate check skipped for R={cutoff.R:g}: {exc}")

    if p.mu > 0:
        threshold = 4.0 * p.power() * v_report.energy0 / (p.mu * (p.power() - 2.0))
        below = sum(1 for rec in finite if rec.report.grad_norm_sq <= threshold)
        case_fraction = below / len(finite)
    elif p.power() > 4.0 + 1e-12:
        threshold = 4.0 * p.power() * v_report.action / ((p.power() - 4.0) * p.gamma)
        below = sum(1 for rec in finite if rec.report.lap_norm_sq <= threshold)
        case_fraction = below / len(finite)
    else:
        case_fraction = None

    if theorem == "finite-time":
        expected = (Verdict.BLOWUP_DETECTED,)
    else:
        expected = (Verdict.BLOWUP_DETECTED, Verdict.GROWTH_UNBOUNDED)

    return InstabilityExperiment(
        params=p, lam=cfg.lam, radii=tuple(cfg.radii), theorem=theorem,
        ground_state=gs, initial_signs=initial_signs, trajectory=traj,
        q_gap_measured=q_gap, gap_bound=gap_bound, gap_ok=gap_ok,
        sign_persistence_ok=sign_ok, sign_violations=violations,
        virial_comparison=comparisons, slack_constant=slack_constant,
        case_split_fraction=case_fraction,
        verdict_expected=expected,
        verdict_ok=traj.verdict in expected,
        falsifying=not sign_ok,
        notes=notes,
    )
