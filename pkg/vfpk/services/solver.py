"""
Strang-split time integration of the 1D-x Hermite-v Vlasov-Fokker-Planck system.

Each step: half transport, half force, exact Fokker-Planck decay, source,
half force, half transport. Transport diagonalizes the velocity ladder once
(Gauss-Hermite characteristics) and advects every characteristic with a
flux-limited second-order scheme and zero inflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import solve_ivp

from vfpk.core.errors import CFLViolation, NonFiniteStateError, SteadyStateError
from vfpk.core.grid import SpatialGrid
from vfpk.core.logging import get_logger, log_fields
from vfpk.models import kernels
from vfpk.models.kernels import InteractionKernel
from vfpk.services import diagnostics, hermite
from vfpk.services.hermite import HermiteBasis, PhaseSpaceState
from vfpk.services.steady import SteadyState

logger = get_logger(__name__)

Limiter = Literal["vanleer", "minmod", "none"]
EvolveMode = Literal["nonlinear", "linearized"]

GHOST_CELLS = 2


@dataclass(frozen=True)
class SourceTerm:
    """phi(t, x) coefficients (N_v, N_x) in f-variables; the step adds dt * d_v^* phi."""

    phi: Callable[[float, PhaseSpaceState], np.ndarray]
    label: str = "source"

    def increment(self, t: float, state: PhaseSpaceState, dt: float) -> np.ndarray:
        coeffs = np.asarray(self.phi(t, state), dtype=float)
        if coeffs.shape != state.coeffs.shape:
            raise NonFiniteStateError("source has the wrong shape", last_good=state)
        return dt * (state.basis.creation @ coeffs)


@dataclass(frozen=True)
class EvolveConfig:
    nu: float
    dt: float
    t_end: float
    cfl_guard: float = 0.9
    filter_on: bool = False
    mode: EvolveMode = "nonlinear"
    output_stride: int = 1
    limiter: Limiter = "vanleer"
    source: Optional[SourceTerm] = None

    def __post_init__(self) -> None:
        if self.nu <= 0 or self.dt <= 0 or self.t_end < 0:
            raise CFLViolation("nu and dt must be positive, t_end nonnegative", nu=self.nu, dt=self.dt)
        if self.output_stride < 1:
            raise CFLViolation("output_stride must be at least 1", output_stride=self.output_stride)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


def check_cfl(dt: float, grid: SpatialGrid, basis: HermiteBasis, cfl_guard: float = 0.9) -> None:
    limit = cfl_guard * grid.h / basis.max_speed
    if dt > limit:
        raise CFLViolation("time step violates the transport CFL bound", dt=dt, limit=limit)


def _slope(a: np.ndarray, b: np.ndarray, limiter: Limiter) -> np.ndarray:
    if limiter == "none":
        return b
    product = a * b
    if limiter == "minmod":
        return np.where(product > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(product > 0, 2.0 * product / (a + b), 0.0)


def _fluxes(W: np.ndarray, speeds: np.ndarray, h: float, dt: float, limiter: Limiter) -> np.ndarray:
    """Face fluxes for rows W_k advected at speed lambda_k; shape (N_v, N_x + 1)."""
    padded = np.pad(W, ((0, 0), (GHOST_CELLS, GHOST_CELLS)))
    jumps = np.diff(padded, axis=1)
    lam = speeds[:, None]
    courant = np.abs(lam) * dt / h
    n_faces = W.shape[1] + 1
    # face f sits between padded cells f+1 and f+2
    left = padded[:, 1:n_faces + 1] + 0.5 * (1.0 - courant) * _slope(
        jumps[:, 0:n_faces], jumps[:, 1:n_faces + 1], limiter
    )
    right = padded[:, 2:n_faces + 2] - 0.5 * (1.0 - courant) * _slope(
        jumps[:, 2:n_faces + 2], jumps[:, 1:n_faces + 1], limiter
    )
    return lam * np.where(lam > 0, left, right)


def transport_increment(coeffs: np.ndarray, basis: HermiteBasis, h: float, dt: float, limiter: Limiter) -> np.ndarray:
    """Rate -(Q dF)/h; the fluxes see dt only through the Courant number, so dt = 0 is the semi-discrete rate."""
    speeds, Q = basis.characteristics
    flux = _fluxes(Q.T @ coeffs, speeds, h, dt, limiter)
    return -(Q @ np.diff(flux, axis=1)) / h


def step_transport(state: PhaseSpaceState, dt: float, limiter: Limiter = "vanleer", cfl_guard: float = 0.9) -> PhaseSpaceState:
    basis = state.basis
    check_cfl(dt, state.grid, basis, cfl_guard)
    coeffs = state.coeffs + dt * transport_increment(state.coeffs, basis, state.grid.h, dt, limiter)
    return state.with_coeffs(coeffs)


def _taylor(coeffs: np.ndarray, basis: HermiteBasis, s: np.ndarray, order: int) -> np.ndarray:
    """sum_{j<=order} (s G)^j / j! applied column-wise, G the creation ladder."""
    term = coeffs
    total = coeffs.copy()
    for j in range(1, order + 1):
        term = (basis.creation @ term) * (s / j)
        total = total + term
    return total


def step_force(state: PhaseSpaceState, force_field: np.ndarray, dt: float) -> PhaseSpaceState:
    """exp(dt E(x) G) on every column through its 4th-order Taylor polynomial."""
    force_field = np.asarray(force_field, dtype=float)
    if not np.all(np.isfinite(force_field)):
        raise NonFiniteStateError("force field is not finite", last_good=state)
    return state.with_coeffs(_taylor(state.coeffs, state.basis, dt * force_field, 4))


def step_force_linearized(
    state: PhaseSpaceState,
    background: np.ndarray,
    force_star: np.ndarray,
    force_pert: np.ndarray,
    dt: float,
) -> PhaseSpaceState:
    """Frechet derivative of the force step: P4(sG) C_h + dt E_h G P3(sG) C_star."""
    basis = state.basis
    s = dt * force_star
    moved = _taylor(state.coeffs, basis, s, 4)
    moved = moved + (basis.creation @ _taylor(background, basis, s, 3)) * (dt * force_pert)
    return state.with_coeffs(moved)


def force_field(v_field: np.ndarray, kernel: InteractionKernel, density: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """E = -d_x (V + K rho)."""
    potential = v_field + kernels.convolve_values(kernel, density, grid)
    return -np.gradient(potential, grid.h, edge_order=2)


def semi_discrete_rhs(
    state: PhaseSpaceState,
    v_field: np.ndarray,
    kernel: InteractionKernel,
    nu: float = 1.0,
    limiter: Limiter = "vanleer",
) -> np.ndarray:
    """dC/dt of the nonlinear system at dt -> 0: transport, force and Fokker-Planck terms."""
    basis = state.basis
    coeffs = state.coeffs
    transport = transport_increment(coeffs, basis, state.grid.h, 0.0, limiter)
    E = force_field(v_field, kernel, coeffs[0], state.grid)
    force = (basis.creation @ coeffs) * E
    collision = -nu * basis.mode_index[:, None] * coeffs
    return transport + force + collision


def _require_steady(background: Union[SteadyState, np.ndarray], mode: EvolveMode) -> Tuple[np.ndarray, Optional[SteadyState]]:
    if isinstance(background, SteadyState):
        return background.v_field, background
    if mode == "linearized":
        raise SteadyStateError("linearized evolution needs a steady state")
    return np.asarray(background, dtype=float), None


def to_perturbation(state: PhaseSpaceState, steady: SteadyState) -> np.ndarray:
    """C_h = sqrt(rho_star) g for a state stored in F_star-weighted variables."""
    return state.coeffs * np.sqrt(steady.rho_star.values)[None, :]


def from_perturbation(coeffs: np.ndarray, steady: SteadyState) -> np.ndarray:
    return coeffs / np.sqrt(steady.rho_star.values)[None, :]


def evolve(
    initial: PhaseSpaceState,
    background: Union[SteadyState, np.ndarray],
    k: InteractionKernel,
    cfg: EvolveConfig,
    context: Optional["diagnostics.DiagnosticContext"] = None,
) -> Tuple["diagnostics.DiagnosticSeries", PhaseSpaceState]:
    """
    Run the Strang scheme to cfg.t_end.

    In linearized mode the state holds g = C_h / sqrt(rho_star) (representation
    "fstar"); each step converts to C_h, applies the linearized substeps around
    C_star = rho_star e_0 and converts back.
    """
    v_field, steady = _require_steady(background, cfg.mode)
    grid = initial.grid
    basis = initial.basis
    check_cfl(cfg.dt, grid, basis, cfg.cfl_guard)
    linear = cfg.mode == "linearized"
    if linear and initial.representation != "fstar":
        raise SteadyStateError("linearized evolution expects an F_star-weighted state")

    context = context or diagnostics.DiagnosticContext(steady=steady, kernel=k, v_field=v_field, mode=cfg.mode, nu=cfg.nu)
    series = diagnostics.DiagnosticSeries(columns=context.columns)
    background_coeffs = None
    force_star = None
    if linear:
        background_coeffs = np.zeros_like(initial.coeffs)
        background_coeffs[0] = steady.rho_star.values
        force_star = force_field(v_field, k, steady.rho_star.values, grid)

    half = 0.5 * cfg.dt
    state = initial
    initial_mass = context.mass(state)
    series.append(context.sample(state))

    for step in range(1, cfg.n_steps + 1):
        t = state.time
        work = state.with_coeffs(to_perturbation(state, steady)) if linear else state

        work = step_transport(work, half, cfg.limiter, cfg.cfl_guard)
        work = _force_stage(work, v_field, k, half, background_coeffs, force_star)
        work = hermite.fokker_planck_decay(work, cfg.nu, cfg.dt)
        if cfg.filter_on:
            work = hermite.spectral_filter(work)
        if cfg.source is not None:
            increment = cfg.source.increment(t + half, state, cfg.dt)
            if linear:
                increment = increment * steady.rho_star.values[None, :]
            work = work.with_coeffs(work.coeffs + increment)
        work = _force_stage(work, v_field, k, half, background_coeffs, force_star)
        work = step_transport(work, half, cfg.limiter, cfg.cfl_guard)

        coeffs = from_perturbation(work.coeffs, steady) if linear else work.coeffs
        candidate = state.with_coeffs(coeffs, time=t + cfg.dt)
        if not candidate.is_finite:
            raise NonFiniteStateError("state became non-finite", last_good=state, step=step, t=t)
        state = candidate

        if step % cfg.output_stride == 0 or step == cfg.n_steps:
            record = context.sample(state)
            series.append(record)
            logger.info("evolve sample", extra=log_fields(step=step, **record.as_row()))

    leakage = abs(context.mass(state) - initial_mass)
    logger.info("evolve finished", extra=log_fields(steps=cfg.n_steps, t=state.time, mass_change=leakage))
    return series, state


def _force_stage(
    work: PhaseSpaceState,
    v_field: np.ndarray,
    k: InteractionKernel,
    dt: float,
    background_coeffs: Optional[np.ndarray],
    force_star: Optional[np.ndarray],
) -> PhaseSpaceState:
    grid = work.grid
    if background_coeffs is None:
        return step_force(work, force_field(v_field, k, work.coeffs[0], grid), dt)
    force_pert = -np.gradient(kernels.convolve_values(k, work.coeffs[0], grid), grid.h, edge_order=2)
    return step_force_linearized(work, background_coeffs, force_star, force_pert, dt)


def ou_moment_oracle(t: Sequence[float], m0: Sequence[float], nu: float) -> np.ndarray:
    """
    Moments of the kinetic Ornstein-Uhlenbeck process with V = x^2/2 and no interaction.

    m0 = (mean_x, mean_v, E[x^2], E[xv], E[v^2]); returns shape (len(t), 5).
    """
    times = np.atleast_1d(np.asarray(t, dtype=float))

    def rates(_, m):
        mx, mv, xx, xv, vv = m
        return [
            mv,
            -mx - nu * mv,
            2.0 * xv,
            vv - xx - nu * xv,
            -2.0 * xv - 2.0 * nu * vv + 2.0 * nu,
        ]

    solution = solve_ivp(
        rates, (0.0, float(times.max())), list(m0), method="DOP853", t_eval=times, rtol=1e-10, atol=1e-12
    )
    return solution.y.T


def manufactured_source(
    profile: Union[np.ndarray, Callable[[np.ndarray], np.ndarray]],
    amplitude: float,
    omega: float,
    mode: int = 0,
) -> SourceTerm:
    """phi(t, x) = amplitude sin(omega t) profile(x) in Hermite row `mode`; d_v^* moves it above row 0."""

    def phi(t: float, state: PhaseSpaceState) -> np.ndarray:
        values = profile(state.grid.axis()) if callable(profile) else np.asarray(profile, dtype=float)
        coeffs = np.zeros_like(state.coeffs)
        coeffs[mode] = amplitude * np.sin(omega * t) * values
        return coeffs

    return SourceTerm(phi=phi, label=f"manufactured(mode={mode}, omega={omega})")
