"""
Confinement potentials V.

Closed-form families use analytic derivatives; tabulated potentials are
interpolated with cubic splines. Normalization fixes the additive constant so
that e^{-V} has unit trapezoid mass on the working grid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Literal, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from vfpk.core.errors import PotentialError
from vfpk.core.grid import SpatialGrid
from vfpk.core.logging import get_logger, log_fields
from vfpk.services import spectral

logger = get_logger(__name__)

PotentialFamily = Literal["quadratic", "power_growth", "log_power", "tabulated"]

# e^{-V} must fall below this on the box faces
BOUNDARY_DECAY = 1e-14
BOX_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class ConfinementPotential:
    family: PotentialFamily
    dim: int = 1
    alpha: float = 1.0
    additive_constant: float = 0.0
    table: Optional[np.ndarray] = None
    table_grid: Optional[SpatialGrid] = None

    def __post_init__(self) -> None:
        if self.family in ("power_growth", "log_power") and self.alpha <= 0:
            raise PotentialError("alpha must be positive", family=self.family, alpha=self.alpha)
        if self.family == "tabulated":
            if self.table is None or self.table_grid is None:
                raise PotentialError("tabulated potential needs samples and their grid")
            if np.asarray(self.table).shape != self.table_grid.shape:
                raise PotentialError("table shape does not match its grid")
            if not np.all(np.isfinite(self.table)):
                raise PotentialError("tabulated potential must be finite at every node")
            object.__setattr__(self, "dim", self.table_grid.dim)

    @classmethod
    def quadratic(cls, dim: int = 1) -> "ConfinementPotential":
        # |x|^2/2 + (d/2) log 2pi is already normalized on R^d
        return cls("quadratic", dim=dim, additive_constant=0.5 * dim * np.log(2.0 * np.pi))

    @classmethod
    def power_growth(cls, alpha: float, dim: int = 1) -> "ConfinementPotential":
        return cls("power_growth", dim=dim, alpha=alpha)

    @classmethod
    def log_power(cls, alpha: float, dim: int = 1) -> "ConfinementPotential":
        return cls("log_power", dim=dim, alpha=alpha)

    @classmethod
    def tabulated(cls, samples: np.ndarray, grid: SpatialGrid) -> "ConfinementPotential":
        return cls("tabulated", dim=grid.dim, table=np.array(samples, dtype=float), table_grid=grid)

    def field(self, grid: SpatialGrid) -> np.ndarray:
        """V at every node of `grid`."""
        values, _, _ = self.evaluate(grid.points().reshape(-1, grid.dim))
        return values.reshape(grid.shape)

    def gradient_field(self, grid: SpatialGrid) -> np.ndarray:
        """grad V at every node, shape (*nodes, d)."""
        _, grads, _ = self.evaluate(grid.points().reshape(-1, grid.dim))
        return grads.reshape(grid.shape + (grid.dim,))

    def evaluate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Values, gradients and Hessian Frobenius norms at an (M, d) array of points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dim:
            raise PotentialError("point dimension does not match potential", dim=self.dim)
        if self.family == "tabulated":
            values, grads, hess = self._tabulated(points)
        else:
            r = np.sqrt(np.sum(points**2, axis=1))
            f0, f1, f2 = _radial_profile(self.family, self.alpha, r)
            values = f0
            with np.errstate(divide="ignore", invalid="ignore"):
                f1_over_r = np.where(r > 0, f1 / np.where(r > 0, r, 1.0), f2)
                grads = np.where((r > 0)[:, None], f1_over_r[:, None] * points, 0.0)
            # radial eigenvalue f'' once, tangential f'/r (d-1) times
            hess = np.sqrt(f2**2 + (self.dim - 1) * f1_over_r**2)
        return values + self.additive_constant, grads, hess

    def _tabulated(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        grid = self.table_grid
        lower = np.array([c - L for c, L in zip(grid.center, grid.half_widths)])
        upper = np.array([c + L for c, L in zip(grid.center, grid.half_widths)])
        if np.any(points < lower - BOX_TOLERANCE) or np.any(points > upper + BOX_TOLERANCE):
            raise PotentialError("tabulated potential evaluated outside its box")
        points = np.clip(points, lower, upper)
        table = np.asarray(self.table)
        if grid.dim == 1:
            spline = CubicSpline(grid.axis(), table)
            x = points[:, 0]
            return spline(x), spline(x, 1)[:, None], np.abs(spline(x, 2))
        axes = grid.axes()
        interp = lambda data: RegularGridInterpolator(axes, data, method="cubic")(points)
        grads_table = np.gradient(table, *grid.spacing, edge_order=2)
        grads = np.stack([interp(g) for g in grads_table], axis=-1)
        hess_sq = np.zeros(points.shape[0])
        for g in grads_table:
            for second in np.gradient(g, *grid.spacing, edge_order=2):
                hess_sq += interp(second) ** 2
        return interp(table), grads, np.sqrt(hess_sq)

    def describe(self) -> dict:
        return {
            "family": self.family,
            "dim": self.dim,
            "alpha": self.alpha,
            "additive_constant": self.additive_constant,
        }


def _radial_profile(family: str, alpha: float, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """f(r), f'(r), f''(r) for the radial closed-form families (without constant)."""
    if family == "quadratic":
        return 0.5 * r**2, r, np.ones_like(r)
    u = np.sqrt(1.0 + r**2)
    du = r / u
    d2u = 1.0 / u**3
    if family == "power_growth":
        beta = 1.0 + alpha
        f0 = u**beta
        f1 = beta * u ** (beta - 1.0) * du
        f2 = beta * (beta - 1.0) * u ** (beta - 2.0) * du**2 + beta * u ** (beta - 1.0) * d2u
        return f0, f1, f2
    if family == "log_power":
        ell = np.log1p(r**2)
        dl = 2.0 * r / u**2
        d2l = 2.0 * (1.0 - r**2) / u**4
        f0 = u * ell**alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            p1 = np.where(ell > 0, alpha * ell ** (alpha - 1.0), 0.0)
            p2 = np.where(ell > 0, alpha * (alpha - 1.0) * ell ** (alpha - 2.0), 0.0)
        f1 = du * ell**alpha + u * p1 * dl
        f2 = d2u * ell**alpha + 2.0 * du * p1 * dl + u * (p2 * dl**2 + p1 * d2l)
        # origin: f'(0) = 0 and f''(0) = lim (4a^2 - 2a) r^(2a-2)
        at_origin = r == 0
        if np.any(at_origin):
            if alpha > 1.0 or alpha == 0.5:
                limit = 0.0
            elif alpha == 1.0:
                limit = 2.0
            else:
                limit = np.inf
            f1 = np.where(at_origin, 0.0, f1)
            f2 = np.where(at_origin, limit, f2)
        return f0, f1, f2
    raise PotentialError(f"unknown potential family '{family}'")


def eval_potential(p: ConfinementPotential, x) -> Tuple[float, np.ndarray, float]:
    """V(x), grad V(x) and |grad^2 V(x)| (Frobenius) at a single point."""
    point = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    values, grads, hess = p.evaluate(point)
    return float(values[0]), grads[0], float(hess[0])


def normalize(p: ConfinementPotential, grid: SpatialGrid) -> ConfinementPotential:
    """Shift the additive constant so the trapezoid mass of e^{-V} on `grid` is 1."""
    values = p.field(grid)
    density = np.exp(-values)
    edge = grid.boundary_max(density)
    if edge >= BOUNDARY_DECAY:
        raise PotentialError(
            "e^{-V} does not decay at the box boundary; enlarge the grid",
            boundary_value=edge,
            threshold=BOUNDARY_DECAY,
        )
    mass = grid.integrate(density)
    normalized = replace(p, additive_constant=p.additive_constant + float(np.log(mass)))
    logger.debug("potential normalized", extra=log_fields(family=p.family, mass=mass))
    return normalized


@dataclass(frozen=True)
class AssumptionReportV:
    r_v: float
    smoothness_pairs: List[Tuple[float, float]]
    poincare_constant: Optional[float]
    mass_defect: float

    def smoothness_holds(self, threshold: float) -> bool:
        """Acceptance is left to the experiment: every fitted C_eps at most `threshold`."""
        return all(c <= threshold for _, c in self.smoothness_pairs)

    def to_dict(self) -> dict:
        return {
            "r_v": self.r_v,
            "smoothness_pairs": [list(pair) for pair in self.smoothness_pairs],
            "poincare_constant": self.poincare_constant,
            "mass_defect": self.mass_defect,
        }


def confinement_norm(values: np.ndarray, grads: np.ndarray, grid: SpatialGrid) -> float:
    """R_V = ||(1 + |grad V|^2) e^{-V}||_{L^1 cap L^inf}, taken as the larger of both norms."""
    integrand = (1.0 + np.sum(grads**2, axis=-1)) * np.exp(-values)
    return max(grid.integrate(integrand), float(integrand.max()))


def verify_assumption_confinement(
    p: ConfinementPotential,
    grid: SpatialGrid,
    eps_list: List[float],
    with_poincare: bool = True,
) -> AssumptionReportV:
    points = grid.points().reshape(-1, grid.dim)
    values, grads, hess = p.evaluate(points)
    values = values.reshape(grid.shape)
    grads = grads.reshape(grid.shape + (grid.dim,))
    grad_norm = np.sqrt(np.sum(grads**2, axis=-1)).reshape(-1)

    pairs = []
    for eps in eps_list:
        excess = np.maximum(hess - eps * grad_norm, 0.0)
        pairs.append((float(eps), float(excess.max())))

    poincare_constant = None
    if with_poincare:
        poincare_constant = spectral.witten_gap(values, grid).poincare_constant

    report = AssumptionReportV(
        r_v=confinement_norm(values, grads, grid),
        smoothness_pairs=pairs,
        poincare_constant=poincare_constant,
        mass_defect=abs(1.0 - grid.integrate(np.exp(-values))),
    )
    logger.info("confinement assumption report", extra=log_fields(**report.to_dict()))
    return report
