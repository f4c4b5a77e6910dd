"""
Steady states rho_star = T(rho_star) with T(rho) = S(rho)/|S(rho)|_1, S(rho) = e^{-V - K rho}.

The fixed point is found by damped Picard iteration from e^{-V}, measuring the
L1 residual between iterates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from vfpk.core.errors import ConvergenceError, SteadyStateError
from vfpk.core.grid import DensityField, SpatialGrid
from vfpk.core.logging import get_logger, log_fields
from vfpk.models import kernels
from vfpk.models.kernels import InteractionKernel, KernelSplit
from vfpk.models.potentials import ConfinementPotential, confinement_norm

logger = get_logger(__name__)

OVERFLOW_EXPONENT = 700.0
DIVERGENCE_FACTOR = 10.0
CONTRACTIVE_THRESHOLD = 0.9

PotentialInput = Union[ConfinementPotential, np.ndarray]


@dataclass(frozen=True, eq=False)
class SteadyState:
    rho_star: DensityField
    v_star: np.ndarray
    v_field: np.ndarray
    zeta: float
    residuals: List[float]
    converged: bool
    kernel: InteractionKernel
    omega: float = 1.0
    contraction_factors: List[float] = field(default_factory=list)
    free_energies: List[float] = field(default_factory=list)

    @property
    def grid(self) -> SpatialGrid:
        return self.rho_star.grid

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "final_residual": self.residuals[-1] if self.residuals else None,
            "zeta": self.zeta,
            "omega": self.omega,
            "mass": self.rho_star.mass,
            "max_rho_star": float(self.rho_star.values.max()),
        }


def potential_field(V: PotentialInput, grid: SpatialGrid) -> np.ndarray:
    if isinstance(V, ConfinementPotential):
        return V.field(grid)
    values = np.asarray(V, dtype=float)
    if values.shape != grid.shape:
        raise SteadyStateError("potential field does not match grid", expected=grid.shape, got=values.shape)
    return values


def s_map(rho: DensityField, V: PotentialInput, k: InteractionKernel) -> DensityField:
    """Pointwise e^{-V - K rho}."""
    exponent = -potential_field(V, rho.grid) - kernels.convolve(k, rho).values
    peak = float(exponent.max())
    if peak > OVERFLOW_EXPONENT:
        raise SteadyStateError("exponent of S overflows", max_exponent=peak, limit=OVERFLOW_EXPONENT)
    return DensityField(np.exp(exponent), rho.grid)


def t_map(rho: DensityField, V: PotentialInput, k: InteractionKernel) -> DensityField:
    return s_map(rho, V, k).normalized()


def estimate_zeta(V: PotentialInput, k: InteractionKernel, grid: SpatialGrid) -> float:
    """max |K^*(e^{-V})| on the grid."""
    base = DensityField(np.exp(-potential_field(V, grid)), grid)
    return float(np.abs(kernels.convolve(k, base, adjoint=True).values).max())


def default_omega(zeta: float) -> float:
    return 1.0 if 2.0 * zeta * np.exp(zeta) < CONTRACTIVE_THRESHOLD else 0.5


def macro_free_energy(rho: DensityField, V: PotentialInput, k_split: Optional[KernelSplit]) -> float:
    """integral (V + K^e rho / 2) rho + rho log rho."""
    values = rho.values
    if np.any(values <= 0.0):
        raise SteadyStateError("free energy needs a strictly positive density", min=float(values.min()))
    integrand = potential_field(V, rho.grid) * values + values * np.log(values)
    if k_split is not None:
        integrand = integrand + 0.5 * kernels.convolve(k_split.even, rho).values * values
    return rho.grid.integrate(integrand)


def _require_positivity(k: InteractionKernel, grid: SpatialGrid) -> None:
    if k.family == "zero" or (k.family != "lipschitz_table" and k.strength == 0.0):
        return
    report = kernels.verify_positivity(k, grid, trials=4)
    if not report.passed:
        raise SteadyStateError(
            "kernel does not preserve positivity; set steady.allow_nonpositive to override",
            family=k.family,
            min_value=report.min_value,
        )


def solve_fixed_point(
    V: PotentialInput,
    k: InteractionKernel,
    grid: SpatialGrid,
    omega: Optional[float] = None,
    tol: float = 1e-10,
    max_iter: int = 500,
    allow_nonpositive: bool = False,
    initial: Optional[DensityField] = None,
) -> SteadyState:
    v_field = potential_field(V, grid)
    if not allow_nonpositive:
        _require_positivity(k, grid)
    zeta = estimate_zeta(v_field, k, grid)
    omega = default_omega(zeta) if omega is None else float(omega)
    if not 0.0 < omega <= 1.0:
        raise SteadyStateError("damping must lie in (0, 1]", omega=omega)
    split = kernels.even_odd_split(k, grid) if grid.is_symmetric else None

    rho = initial if initial is not None else DensityField(np.exp(-v_field), grid)
    best, best_residual = rho, np.inf
    residuals: List[float] = []
    factors: List[float] = []
    energies: List[float] = []
    converged = False
    for iteration in range(1, max_iter + 1):
        mapped = t_map(rho, v_field, k)
        updated = DensityField((1.0 - omega) * rho.values + omega * mapped.values, grid)
        residual = updated.l1_distance(rho)
        residuals.append(residual)
        if len(residuals) > 1 and residuals[-2] > 0:
            factors.append(residual / residuals[-2])
            if residual > residuals[-2]:
                logger.warning("non-monotone Picard residual", extra=log_fields(iteration=iteration, residual=residual))
        rho = updated
        if residual < best_residual:
            best, best_residual = rho, residual

        energy = macro_free_energy(rho, v_field, split) if np.all(rho.values > 0) else float("nan")
        if energies and energy > energies[-1] and iteration > 2:
            logger.warning("free energy increased along Picard iterates", extra=log_fields(iteration=iteration))
        energies.append(energy)
        logger.debug(
            "picard iteration",
            extra=log_fields(
                iteration=iteration,
                residual=residual,
                contraction=factors[-1] if factors else None,
                free_energy=energy,
            ),
        )
        if residual < tol:
            converged = True
            break
        if residuals[0] > 0 and residual > DIVERGENCE_FACTOR * residuals[0]:
            raise ConvergenceError(
                "Picard iteration diverged", iteration=iteration, residual=residual, initial=residuals[0]
            )

    if not converged:
        logger.warning("Picard iteration hit max_iter", extra=log_fields(max_iter=max_iter, residual=best_residual))
        rho = best
    rho_star = rho.normalized()
    s_value = s_map(rho_star, v_field, k)
    v_star = v_field + kernels.convolve(k, rho_star).values + np.log(s_value.mass)
    state = SteadyState(
        rho_star=rho_star,
        v_star=v_star,
        v_field=v_field,
        zeta=zeta,
        residuals=residuals,
        converged=converged,
        kernel=k,
        omega=omega,
        contraction_factors=factors,
        free_energies=energies,
    )
    logger.info("steady state", extra=log_fields(family=k.family, **state.summary()))
    return state


@dataclass
class TBoundsReport:
    trials: int
    zeta: float
    r_v: float
    violations: dict = field(default_factory=dict)
    worst_ratios: dict = field(default_factory=dict)

    def record(self, name: str, ratio: float, tolerance: float = 1e-8) -> None:
        self.worst_ratios[name] = max(self.worst_ratios.get(name, 0.0), float(ratio))
        self.violations.setdefault(name, 0)
        if ratio > 1.0 + tolerance:
            self.violations[name] += 1

    @property
    def passed(self) -> bool:
        return not any(self.violations.values())

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "zeta": self.zeta,
            "r_v": self.r_v,
            "violations": dict(self.violations),
            "worst_ratios": dict(self.worst_ratios),
            "passed": self.passed,
        }


def _lp_norm(values: np.ndarray, grid: SpatialGrid, s: float) -> float:
    if np.isinf(s):
        return float(np.abs(values).max())
    return grid.integrate(np.abs(values) ** s) ** (1.0 / s)


def verify_t_bounds(
    V: ConfinementPotential,
    k: InteractionKernel,
    grid: SpatialGrid,
    trials: int = 10,
    rng: Optional[np.random.Generator] = None,
) -> TBoundsReport:
    """Check the mass, sup, concentration, Lipschitz and Holder bounds of T on random densities."""
    rng = rng or np.random.default_rng(0)
    v_field = V.field(grid)
    zeta = estimate_zeta(v_field, k, grid)
    r_v = confinement_norm(v_field, V.gradient_field(grid), grid)
    report = TBoundsReport(trials=trials, zeta=zeta, r_v=r_v)
    lipschitz = 2.0 * zeta * np.exp(zeta)

    for _ in range(trials):
        rho = DensityField(kernels.random_density(grid, rng), grid)
        sigma = DensityField(kernels.random_density(grid, rng), grid)
        s_rho = s_map(rho, v_field, k)
        t_rho, t_sigma = s_rho.normalized(), t_map(sigma, v_field, k)

        report.record("mass", 1.0 + abs(t_rho.mass - 1.0), tolerance=1e-10)
        report.record("mass_lower_s", np.exp(-zeta) / s_rho.mass)
        report.record("sup", float(t_rho.values.max()) / (np.exp(zeta) * r_v))
        # |e^{V/s'} T|_{L^s} <= e^{zeta/s'} for s = 1, 2, inf
        report.record("concentration_1", _lp_norm(t_rho.values, grid, 1.0))
        report.record(
            "concentration_2", _lp_norm(np.exp(0.5 * v_field) * t_rho.values, grid, 2.0) / np.exp(0.5 * zeta)
        )
        report.record("concentration_inf", float((np.exp(v_field) * t_rho.values).max()) / np.exp(zeta))

        distance = rho.l1_distance(sigma)
        if distance > 0 and zeta > 0:
            report.record("lipschitz_l1", t_rho.l1_distance(t_sigma) / (lipschitz * distance))
            holder = 2.0 * np.exp(zeta) * np.sqrt(zeta * r_v * distance)
            report.record("holder_l2", _lp_norm(t_rho.values - t_sigma.values, grid, 2.0) / holder)

    logger.info("T-map bounds", extra=log_fields(**report.to_dict()))
    return report


@dataclass(frozen=True)
class UniquenessReport:
    starts: int
    converged: int
    max_distance: float
    coincide: bool

    def to_dict(self) -> dict:
        return {
            "starts": self.starts,
            "converged": self.converged,
            "max_distance": self.max_distance,
            "coincide": self.coincide,
        }


def check_uniqueness(
    V: PotentialInput,
    k: InteractionKernel,
    grid: SpatialGrid,
    starts: int = 10,
    rng: Optional[np.random.Generator] = None,
    tol: float = 1e-10,
    omega: Optional[float] = None,
    max_iter: int = 500,
    allow_nonpositive: bool = False,
) -> UniquenessReport:
    """Damped Picard from random admissible starts; evidence of uniqueness, not a certificate."""
    rng = rng or np.random.default_rng(0)
    solutions = []
    for _ in range(starts):
        initial = DensityField(kernels.random_density(grid, rng), grid)
        state = solve_fixed_point(
            V, k, grid, omega=omega, tol=tol, max_iter=max_iter,
            allow_nonpositive=allow_nonpositive, initial=initial,
        )
        solutions.append(state)
    distances = [
        a.rho_star.l1_distance(b.rho_star)
        for i, a in enumerate(solutions)
        for b in solutions[i + 1:]
    ]
    max_distance = float(max(distances)) if distances else 0.0
    report = UniquenessReport(
        starts=starts,
        converged=sum(s.converged for s in solutions),
        max_distance=max_distance,
        coincide=max_distance <= 10.0 * tol,
    )
    logger.info("uniqueness check", extra=log_fields(family=k.family, **report.to_dict()))
    return report


@dataclass(frozen=True)
class KineticResidual:
    l2_residual: float
    relative_residual: float
    h: float
    limiter: str

    def to_dict(self) -> dict:
        return {
            "l2_residual": self.l2_residual,
            "relative_residual": self.relative_residual,
            "h": self.h,
            "limiter": self.limiter,
        }


def verify_steady_kinetic(
    ss: SteadyState,
    n_modes: int = 8,
    nu: float = 1.0,
    limiter: str = "vanleer",
) -> KineticResidual:
    """L2 norm of the semi-discrete right-hand side at F_star = rho_star M."""
    from vfpk.services import hermite, solver

    state = hermite.PhaseSpaceState.maxwellian(ss.rho_star, n_modes)
    rhs = solver.semi_discrete_rhs(state, ss.v_field, ss.kernel, nu=nu, limiter=limiter)
    grid = ss.grid
    l2 = float(np.sqrt(sum(grid.integrate(row**2) for row in rhs)))
    scale = float(np.sqrt(grid.integrate(ss.rho_star.values**2)))
    result = KineticResidual(l2_residual=l2, relative_residual=l2 / scale, h=grid.h, limiter=limiter)
    logger.info("steady kinetic residual", extra=log_fields(**result.to_dict()))
    return result
