"""Stabilized spectral fixed-point solver for the stationary profile equation.

Solves gamma Lap^2 u - mu Lap u + omega u = |u|^(2 sigma) u for real radial
profiles by renormalized fixed-point iteration in Fourier space, and
certifies the output against the stationary identities (Nehari, Pohozaev,
virial all zero) and the positive decomposition of the omega-free energy.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .grid import Field, Grid, warn_if_boundary_loaded
from .functionals import FunctionalReport, evaluate_all, tolerance_scale
from .params import PhysicalParams

STAGNATION_WINDOW = 50
COLLAPSE_FACTOR = 1e-12


class DegenerateFixedPointError(RuntimeError):
    """The iteration collapsed to the zero fixed point."""


@dataclass
class SolverConfig:
    grid: Grid
    residual_tol: float = 1e-10
    max_iters: int = 2000
    stabilizer_exponent: float | None = None  # default (2 sigma + 1) / (2 sigma)
    guess_width: float = 1.0
    guess_amplitude: float = 1.0
    initial_field: Field | None = None

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class GroundStateResult:
    profile: Field
    residual: float
    report: FunctionalReport
    identity_defects: dict
    iterations: int
    converged: bool
    params: PhysicalParams
    message: str = ""

    @property
    def action(self) -> float:
        """E_omega of the profile; only an upper estimate of the ground-state level."""
        return self.report.action


def default_stabilizer_exponent(sigma: float) -> float:
    """(2 sigma + 1) / (2 sigma), the classical convergent choice for power 2 sigma + 1."""
    return (2.0 * sigma + 1.0) / (2.0 * sigma)


def _nonlinearity(u: np.ndarray, sigma: float) -> np.ndarray:
    return np.abs(u) ** (2.0 * sigma) * u


def petviashvili_map(u: np.ndarray, p: PhysicalParams, grid: Grid,
                     theta: float) -> tuple[np.ndarray, float]:
    """One renormalized fixed-point step; returns (next iterate, residual of u)."""
    symbol = p.linear_symbol(grid.k_sq)
    u_hat = np.fft.fftn(u)
    nl_hat = np.fft.fftn(_nonlinearity(u, p.sigma))
    lin_hat = symbol * u_hat
    res_num = np.linalg.norm(lin_hat - nl_hat)
    res_den = np.linalg.norm(lin_hat)
    residual = float(res_num / res_den) if res_den > 0 else math.inf
    quad = np.sum(symbol * np.abs(u_hat) ** 2).real
    pairing = np.sum(np.conj(nl_hat) * u_hat).real
    if pairing <= 0:
        raise DegenerateFixedPointError("nonlinearity pairing <= 0; iterate degenerated")
    stabilizer = quad / pairing
    nxt = np.fft.ifftn(stabilizer**theta * nl_hat / symbol).real
    return nxt, residual


def solve(p: PhysicalParams, cfg: SolverConfig) -> GroundStateResult:
    """Iterate to the stationary profile; certification data comes from evaluate_all.

    The solver cannot distinguish the ground state from an excited radial
    state, so the action of the output is reported as an estimate only;
    solve_multistart keeps the minimum-action converged output.
    """
    grid = cfg.grid
    if grid.dim != p.dim:
        raise ValueError(f"params dim {p.dim} does not match grid dim {grid.dim}")
    if cfg.initial_field is not None:
        u = np.real(cfg.initial_field.values).astype(float)
    else:
        r = grid.radius
        u = cfg.guess_amplitude * np.exp(-(r**2) / (2.0 * cfg.guess_width**2))
    theta = cfg.stabilizer_exponent
    if theta is None:
        theta = default_stabilizer_exponent(p.sigma)

    initial_norm = np.linalg.norm(u)
    if initial_norm < COLLAPSE_FACTOR:
        raise DegenerateFixedPointError("initial guess is (numerically) the zero field")

    residual = math.inf
    best = math.inf
    stale = 0
    iterations = 0
    message = "max_iters reached"
    for iterations in range(1, cfg.max_iters + 1):
        u_next, residual = petviashvili_map(u, p, grid, theta)
        if not np.isfinite(residual) or not np.isfinite(u_next).all():
            raise DegenerateFixedPointError("iteration produced non-finite values")
        if residual <= cfg.residual_tol:
            message = "converged"
            break
        if np.linalg.norm(u_next) < COLLAPSE_FACTOR * initial_norm:
            raise DegenerateFixedPointError("iterate collapsed to zero")
        if residual < 0.999 * best:
            best = residual
            stale = 0
        else:
            stale += 1
            if stale >= STAGNATION_WINDOW:
                message = f"stagnated at residual {residual:.3e}"
                break
        u = u_next

    converged = residual <= cfg.residual_tol
    if u[np.unravel_index(np.argmax(np.abs(u)), u.shape)] < 0:
        u = -u
    profile = Field(grid, u.astype(complex))
    if converged:
        warn_if_boundary_loaded(profile, "ground state")
    report = evaluate_all(profile, p)
    scale = tolerance_scale(report, p)
    defects = {
        "nehari": abs(report.nehari) / scale,
        "pohozaev": abs(report.pohozaev) / scale,
        "virial": abs(report.virial) / scale,
    }
    return GroundStateResult(
        profile=profile, residual=residual, report=report,
        identity_defects=defects, iterations=iterations,
        converged=converged, params=p, message=message,
    )


def solve_multistart(p: PhysicalParams, cfg: SolverConfig,
                     starts: list[tuple[float, float]]) -> GroundStateResult:
    """Run solve from several (width, amplitude) Gaussian guesses and keep the
    minimum-action converged result (the ground-state energy proxy)."""
    best = None
    for width, amplitude in starts:
        trial_cfg = SolverConfig(
            grid=cfg.grid, residual_tol=cfg.residual_tol, max_iters=cfg.max_iters,
            stabilizer_exponent=cfg.stabilizer_exponent,
            guess_width=width, guess_amplitude=amplitude,
        )
        try:
            result = solve(p, trial_cfg)
        except DegenerateFixedPointError:
            continue
        if not result.converged:
            continue
        if best is None or result.action < best.action:
            best = result
    if best is None:
        raise DegenerateFixedPointError("no start converged")
    return best


# ---------------------------------------------------------------------------
# Certification


@dataclass
class Certificate:
    identity_defects: dict
    residual: float
    energy0: float
    energy0_decomposition: float
    energy0_decomposition_defect: float
    energy0_sign_ok: bool
    exceptional_zero_energy: bool
    radial_defect: float
    action_estimate: float
    accepted: bool
    notes: list = dc_field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "identity_defects": self.identity_defects,
            "residual": self.residual,
            "energy0": self.energy0,
            "energy0_decomposition": self.energy0_decomposition,
            "energy0_decomposition_defect": self.energy0_decomposition_defect,
            "energy0_sign_ok": self.energy0_sign_ok,
            "exceptional_zero_energy": self.exceptional_zero_energy,
            "radial_defect": self.radial_defect,
            "action_estimate_is_proxy": True,
            "action_estimate": self.action_estimate,
            "accepted": self.accepted,
            "notes": self.notes,
        }


def energy0_decomposition(report: FunctionalReport, p: PhysicalParams) -> float:
    """((sN-4) gamma / 2sN) |Lap u|^2 + ((sN-2) mu / 2sN) |grad u|^2, equal to
    the omega-free energy on any solution (strictly positive unless sN = 4, mu = 0)."""
    power = p.power()
    return (
        (power - 4.0) * p.gamma / (2.0 * power) * report.lap_norm_sq
        + (power - 2.0) * p.mu / (2.0 * power) * report.grad_norm_sq
    )


def radial_defect(f: Field) -> float:
    """Max relative deviation of the field over the dihedral symmetry orbit of the grid."""
    vals = f.values
    peak = float(np.abs(vals).max())
    if peak == 0.0:
        return 0.0
    dim = f.grid.dim
    worst = 0.0
    for perm in itertools.permutations(range(dim)):
        base = np.transpose(vals, perm)
        for flips in itertools.product((False, True), repeat=dim):
            t = base
            for axis, do in enumerate(flips):
                if do:
                    t = np.roll(np.flip(t, axis=axis), 1, axis=axis)
            worst = max(worst, float(np.abs(t - vals).max()) / peak)
    return worst


def certify(result: GroundStateResult, p: PhysicalParams,
            identity_tol: float = 1e-6,
            decomposition_tol: float = 1e-7,
            zero_energy_tol: float = 1e-6,
            radial_tol: float = 1e-8) -> Certificate:
    """Check the stationary identities, the energy decomposition and sign,
    and the radial symmetry of a converged result."""
    if not result.converged:
        raise ValueError("certify requires a converged result")
    report = result.report
    decomp = energy0_decomposition(report, p)
    lap_scale = p.gamma * report.lap_norm_sq
    decomp_defect = abs(report.energy0 - decomp) / lap_scale
    exceptional = p.is_mass_critical() and p.mu == 0.0
    if exceptional:
        sign_ok = abs(report.energy0) <= zero_energy_tol * lap_scale
    else:
        sign_ok = report.energy0 > 0.0
    rdefect = radial_defect(result.profile)
    notes = []
    if p.guarantees_radial_symmetry():
        notes.append(
            "mu >= 2 sqrt(gamma omega): every ground state is radially symmetric, "
            "so the radial ansatz loses no generality"
        )
    if exceptional:
        notes.append("mass-critical with mu = 0: the omega-free energy vanishes on solutions")
    accepted = (
        max(result.identity_defects.values()) <= identity_tol
        and decomp_defect <= decomposition_tol
        and sign_ok
        and rdefect <= radial_tol
    )
    return Certificate(
        identity_defects=dict(result.identity_defects),
        residual=result.residual,
        energy0=report.energy0,
        energy0_decomposition=decomp,
        energy0_decomposition_defect=decomp_defect,
        energy0_sign_ok=sign_ok,
        exceptional_zero_energy=exceptional,
        radial_defect=rdefect,
        action_estimate=report.action,
        accepted=accepted,
        notes=notes,
    )
