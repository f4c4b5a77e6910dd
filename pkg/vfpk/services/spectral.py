"""
Spectral gap of the Witten Laplacian and Poincare constants.

The Witten operator -Delta + |grad V|^2/4 - Delta V/2 is discretized as the
conjugation e^{V/2} (grad^* grad) e^{-V/2} of the weighted Laplacian, with
midpoint weights sqrt(rho_i rho_{i+1}). Off-diagonal entries are then exactly
-1/h^2 and e^{-V/2} is annihilated at every interior node; outside the box the
operator is truncated (Dirichlet), using a linearly extrapolated ghost value of V.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, eigh, eigh_tridiagonal
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from vfpk.core.errors import ConvergenceError, GridError
from vfpk.core.grid import SpatialGrid
from vfpk.core.logging import get_logger, log_fields

logger = get_logger(__name__)

MeasureType = Literal["bare_potential", "steady_state"]


@dataclass(frozen=True)
class GapReport:
    gap: float
    poincare_constant: float
    ground_state_defect: float
    measure: MeasureType
    holley_stroock: Optional[Tuple[float, float]] = None
    weighted_constant: Optional[float] = None

    def within_envelope(self) -> bool:
        if self.holley_stroock is None:
            return True
        low, high = self.holley_stroock
        return low <= self.gap <= high

    def to_dict(self) -> dict:
        return {
            "gap": self.gap,
            "poincare_constant": self.poincare_constant,
            "ground_state_defect": self.ground_state_defect,
            "measure": self.measure,
            "holley_stroock": list(self.holley_stroock) if self.holley_stroock else None,
            "weighted_constant": self.weighted_constant,
        }


def _axis_terms(V: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Diagonal contribution (e^{-(V_+ - V)/2} + e^{-(V_- - V)/2}) / h^2 along one axis."""
    V = np.moveaxis(V, axis, -1)
    ghost_lo = 2.0 * V[..., :1] - V[..., 1:2]
    ghost_hi = 2.0 * V[..., -1:] - V[..., -2:-1]
    padded = np.concatenate([ghost_lo, V, ghost_hi], axis=-1)
    plus = np.exp(-0.5 * (padded[..., 2:] - V))
    minus = np.exp(-0.5 * (padded[..., :-2] - V))
    return np.moveaxis((plus + minus) / h**2, -1, axis)


def witten_tridiagonal(V: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of the 1D Witten operator."""
    V = np.asarray(V, dtype=float)
    return _axis_terms(V, 0, h), np.full(V.size - 1, -1.0 / h**2)


def witten_operator(V: np.ndarray, grid: SpatialGrid) -> sp.csr_matrix:
    V = np.asarray(V, dtype=float)
    if V.shape != grid.shape:
        raise GridError("potential field does not match grid")
    diagonal = np.zeros(grid.shape)
    blocks = []
    for axis, h in enumerate(grid.spacing):
        diagonal += _axis_terms(V, axis, h)
        # -1/h^2 couplings along this axis, as a Kronecker product of 1D stencils
        eyes = [sp.identity(n, format="csr") for n in grid.nodes]
        n = grid.nodes[axis]
        eyes[axis] = sp.diags([np.ones(n - 1), np.ones(n - 1)], [-1, 1], format="csr") * (-1.0 / h**2)
        block = eyes[0]
        for factor in eyes[1:]:
            block = sp.kron(block, factor, format="csr")
        blocks.append(block)
    return (sp.diags(diagonal.reshape(-1)) + sum(blocks)).tocsr()


def ground_state_defect(V: np.ndarray, grid: SpatialGrid) -> float:
    """Relative residual of e^{-V/2} under the discrete Witten operator."""
    V = np.asarray(V, dtype=float)
    psi = np.exp(-0.5 * (V - V.min())).reshape(-1)
    residual = witten_operator(V, grid) @ psi
    return float(np.linalg.norm(residual) / np.linalg.norm(psi))


def _lowest_pair(V: np.ndarray, grid: SpatialGrid) -> Tuple[float, float]:
    try:
        if grid.dim == 1:
            diagonal, off = witten_tridiagonal(V, grid.h)
            values = eigh_tridiagonal(diagonal, off, eigvals_only=True, select="i", select_range=(0, 1))
        else:
            values = eigsh(witten_operator(V, grid), k=2, sigma=-1.0, which="LM", return_eigenvectors=False)
    except (ArpackNoConvergence, LinAlgError) as e:
        raise ConvergenceError(f"Witten eigensolve failed: {e}") from e
    values = np.sort(np.asarray(values, dtype=float))
    return float(values[0]), float(values[1])


def witten_gap(V_field: np.ndarray, grid: SpatialGrid, measure: MeasureType = "bare_potential") -> GapReport:
    """Second eigenvalue gap of the Witten operator; C_P = 1/gap."""
    ground, second = _lowest_pair(V_field, grid)
    gap = second - ground
    if gap <= 0:
        raise ConvergenceError("Witten operator has no positive gap on this grid", gap=gap)
    report = GapReport(
        gap=gap,
        poincare_constant=1.0 / gap,
        ground_state_defect=ground_state_defect(V_field, grid),
        measure=measure,
    )
    logger.debug("witten gap", extra=log_fields(gap=gap, ground=ground, measure=measure))
    return report


def steady_measure_gap(steady, grid: Optional[SpatialGrid] = None) -> GapReport:
    """Gap for V_star = V + K rho_star with the Holley-Stroock envelope around the bare gap."""
    grid = grid or steady.rho_star.grid
    bare = witten_gap(steady.v_field, grid)
    report = witten_gap(steady.v_star, grid, measure="steady_state")
    oscillation = float(np.ptp(steady.v_star - steady.v_field))
    envelope = (bare.gap * np.exp(-oscillation), bare.gap * np.exp(oscillation))
    weighted = weighted_poincare_constant(steady.v_star, grid) if grid.dim == 1 else None
    result = GapReport(
        gap=report.gap,
        poincare_constant=report.poincare_constant,
        ground_state_defect=report.ground_state_defect,
        measure="steady_state",
        holley_stroock=envelope,
        weighted_constant=weighted,
    )
    if not result.within_envelope():
        logger.warning("steady gap outside Holley-Stroock envelope", extra=log_fields(**result.to_dict()))
    return result


def _weights_1d(V: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    shifted = V - V.min()
    rho = np.exp(-shifted)
    rho_mid = np.exp(-0.5 * (shifted[1:] + shifted[:-1]))
    return rho, rho_mid


def _mean_zero(u: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return u - np.sum(rho * u) / np.sum(rho)


def dirichlet_energy(u: np.ndarray, V: np.ndarray, h: float) -> float:
    """h * sum rho_{i+1/2} ((u_{i+1} - u_i)/h)^2."""
    _, rho_mid = _weights_1d(np.asarray(V, dtype=float))
    return float(np.sum(rho_mid * np.diff(u) ** 2) / h)


def poincare_ratio(u: np.ndarray, V: np.ndarray, grid: SpatialGrid) -> float:
    """||u - mean||^2 / ||grad u||^2 in L^2(e^{-V}); bounded by the Poincare constant."""
    V = np.asarray(V, dtype=float)
    rho, _ = _weights_1d(V)
    centered = _mean_zero(np.asarray(u, dtype=float), rho)
    return float(grid.h * np.sum(rho * centered**2) / dirichlet_energy(centered, V, grid.h))


def weighted_poincare_ratio(u: np.ndarray, V: np.ndarray, grid: SpatialGrid) -> float:
    """||(u - mean)|grad V||| / ||grad u|| in L^2(e^{-V})."""
    V = np.asarray(V, dtype=float)
    rho, _ = _weights_1d(V)
    centered = _mean_zero(np.asarray(u, dtype=float), rho)
    slope = np.gradient(V, grid.h, edge_order=2)
    numerator = grid.h * np.sum(rho * slope**2 * centered**2)
    return float(np.sqrt(numerator / dirichlet_energy(centered, V, grid.h)))


def weighted_poincare_constant(V: np.ndarray, grid: SpatialGrid) -> float:
    """
    Upper bound for C_star in ||u |grad V_star||| <= C_star ||grad u|| over mean-zero u.

    Works in the ground-state frame phi = sqrt(rho) u, where the Dirichlet form becomes
    the Witten form; the ground direction is lifted so the pencil is definite.
    """
    if grid.dim != 1:
        raise GridError("weighted Poincare constant is computed in one dimension only")
    V = np.asarray(V, dtype=float)
    diagonal, off = witten_tridiagonal(V, grid.h)
    form = np.diag(diagonal) + np.diag(off, 1) + np.diag(off, -1)
    psi = np.exp(-0.5 * (V - V.min()))
    psi /= np.linalg.norm(psi)
    form += np.outer(psi, psi) * max(1.0, float(diagonal.max()))
    slope = np.gradient(V, grid.h, edge_order=2)
    try:
        top = eigh(np.diag(slope**2), form, eigvals_only=True, subset_by_index=[V.size - 1, V.size - 1])
    except LinAlgError as e:
        raise ConvergenceError(f"weighted Poincare eigensolve failed: {e}") from e
    return float(np.sqrt(top[0]) * (1.0 + 1e-6))
