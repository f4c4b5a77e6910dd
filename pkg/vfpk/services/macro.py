"""
Macroscopic operators around a steady state, on a staggered 1D layout.

Even Hermite rows live on the nodes with weight w_i rho_i (trapezoid w), odd
rows on the midpoints with weight h rho_{i+1/2}, rho_{i+1/2} = sqrt(rho_i rho_{i+1}).

    D     node -> mid   d_x                 forward difference
    D*    mid  -> node  adjoint of D
    E*    mid  -> node  d_x
    E     node -> mid   adjoint of E*, i.e. d_x^* = -d_x + V_star'

All four are exact adjoint pairs in the weighted inner products above.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np

from vfpk.core.errors import ConvergenceError, GridError
from vfpk.core.grid import SpatialGrid
from vfpk.core.logging import get_logger, log_fields
from vfpk.models import kernels
from vfpk.models.kernels import KernelSplit
from vfpk.services.steady import SteadyState

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class MacroGeometry:
    grid: SpatialGrid
    rho: np.ndarray
    k_split: Optional[KernelSplit] = None

    @classmethod
    def from_steady(cls, steady: SteadyState, k_split: Optional[KernelSplit] = None) -> "MacroGeometry":
        if steady.grid.dim != 1:
            raise GridError("macroscopic operators are one-dimensional", dim=steady.grid.dim)
        return cls(steady.grid, np.array(steady.rho_star.values), k_split)

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def size(self) -> int:
        return self.grid.size

    @cached_property
    def weights(self) -> np.ndarray:
        return self.grid.weights()

    @cached_property
    def rho_mid(self) -> np.ndarray:
        return np.sqrt(self.rho[1:] * self.rho[:-1])

    @cached_property
    def node_measure(self) -> np.ndarray:
        return self.weights * self.rho

    @cached_property
    def mid_measure(self) -> np.ndarray:
        return self.h * self.rho_mid

    @cached_property
    def v_star_slope(self) -> np.ndarray:
        return -np.gradient(np.log(self.rho), self.h, edge_order=2)

    def d(self, z: np.ndarray) -> np.ndarray:
        return np.diff(z) / self.h

    def d_star(self, u: np.ndarray) -> np.ndarray:
        flux = self.rho_mid * u
        return (np.concatenate(([0.0], flux)) - np.concatenate((flux, [0.0]))) / self.node_measure

    def e_star(self, u: np.ndarray) -> np.ndarray:
        return (np.concatenate((u, [0.0])) - np.concatenate(([0.0], u))) / self.weights

    def e(self, z: np.ndarray) -> np.ndarray:
        return -np.diff(self.rho * z) / (self.h * self.rho_mid)

    def k_tilde(self, z: np.ndarray) -> np.ndarray:
        """K^e(rho_star z) at the nodes."""
        if self.k_split is None or self.k_split.source.family == "zero":
            return np.zeros_like(z)
        return kernels.convolve_values(self.k_split.even, self.rho * z, self.grid)

    def node_inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(self.node_measure * a * b))

    def mid_inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(self.mid_measure * a * b))

    def twisted_inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """<a + K~a, b>_{rho_star}: the twisted product restricted to the density row."""
        return self.node_inner(a + self.k_tilde(a), b)

    def to_mid(self, values: np.ndarray) -> np.ndarray:
        return 0.5 * (values[1:] + values[:-1])

    def mean_zero(self, z: np.ndarray) -> np.ndarray:
        return z - self.node_inner(z, np.ones_like(z)) / float(np.sum(self.node_measure))

    def elliptic_operator(self, z: np.ndarray) -> np.ndarray:
        """z + D*D(z + K~z)."""
        return z + self.d_star(self.d(z + self.k_tilde(z)))


class ConjugateGradient:
    """Conjugate gradients for an operator self-adjoint in the inner product `inner`."""

    def __init__(
        self,
        operator: Callable[[np.ndarray], np.ndarray],
        inner: Callable[[np.ndarray, np.ndarray], float],
        n: int,
    ):
        self.operator = operator
        self.inner = inner
        self.n = n
        self.iterations = 0

    def solve(self, b: np.ndarray, x0: Optional[np.ndarray] = None, tol: float = 1e-10, max_iter: Optional[int] = None) -> np.ndarray:
        max_iter = max_iter or 10 * self.n
        xk = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
        rk = b - self.operator(xk)
        dk = rk.copy()
        b_norm = np.sqrt(max(self.inner(b, b), 0.0))
        if b_norm == 0.0:
            return xk
        rr = self.inner(rk, rk)
        k = 0
        while np.sqrt(max(rr, 0.0)) > tol * b_norm:
            if k >= max_iter:
                raise ConvergenceError(
                    "conjugate gradients did not converge", iterations=k, residual=float(np.sqrt(rr)) / b_norm
                )
            Adk = self.operator(dk)
            curvature = self.inner(dk, Adk)
            if curvature <= 0.0:
                raise ConvergenceError("elliptic operator lost positivity", iterations=k, curvature=curvature)
            alpha = rr / curvature
            xk = xk + alpha * dk
            rk = rk - alpha * Adk
            rr_next = self.inner(rk, rk)
            dk = rk + (rr_next / rr) * dk
            rr = rr_next
            k += 1
        self.iterations = k
        return xk


def solve_dms_elliptic(f_macro: np.ndarray, geometry: MacroGeometry, tol: float = 1e-10) -> np.ndarray:
    """Solve z + D*D(z + K~z) = f_macro by CG in <., (1 + K~) .>_{rho_star}."""
    f_macro = np.asarray(f_macro, dtype=float)
    if f_macro.shape != (geometry.size,):
        raise GridError("macroscopic field does not match the grid", got=f_macro.shape)
    solver = ConjugateGradient(geometry.elliptic_operator, geometry.twisted_inner, geometry.size)
    z = solver.solve(f_macro, tol=tol)
    logger.debug("dms elliptic solve", extra=log_fields(iterations=solver.iterations))
    return z


def current_at_midpoints(g1: np.ndarray, geometry: MacroGeometry) -> np.ndarray:
    """w_1 = avg(g_1)/sqrt(rho_mid); its midpoint norm never exceeds the nodal norm of g_1."""
    return geometry.to_mid(g1) / np.sqrt(geometry.rho_mid)


def apply_auxiliary(g: np.ndarray, geometry: MacroGeometry, tol: float = 1e-10) -> np.ndarray:
    """Density row z of A f for a state given by F_star-weighted rows g."""
    if g.shape[0] < 2:
        return np.zeros(geometry.size)
    rhs = geometry.d_star(current_at_midpoints(g[1], geometry))
    return solve_dms_elliptic(rhs, geometry, tol=tol)


def auxiliary_pairing(g: np.ndarray, geometry: MacroGeometry, tol: float = 1e-10) -> Tuple[float, np.ndarray]:
    """<<A f, f>> = <z + K~z, a_0>_{rho_star}, with a_0 = g_0/sqrt(rho_star)."""
    z = apply_auxiliary(g, geometry, tol=tol)
    a0 = g[0] / np.sqrt(geometry.rho)
    return geometry.twisted_inner(z, a0), z
