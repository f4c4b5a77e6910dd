"""
Hermite velocity basis.

F(x, v) = sum_n C_n(x) phi_n(v) with phi_n = H_n M, H_n the orthonormal Hermite
polynomials under M(v) dv. In the variable f = F/M the ladder actions are

    v H_n       = sqrt(n+1) H_{n+1} + sqrt(n) H_{n-1}
    d_v H_n     = sqrt(n) H_{n-1}
    d_v^* H_n   = sqrt(n+1) H_{n+1}          (d_v^* = -d_v + v)

so d_v^* d_v is diagonal with entries n and the Fokker-Planck operator acts as
-nu n on row n. The top mode is truncated: C_{N_v} = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Literal, Tuple

import numpy as np
from scipy.linalg import eigh_tridiagonal

from vfpk.core.errors import GridError
from vfpk.core.grid import DensityField, SpatialGrid, signed_field

Representation = Literal["maxwellian", "fstar"]

FILTER_STRENGTH = 36.0
DENSITY_FLOOR = 1e-300


@dataclass(frozen=True)
class HermiteBasis:
    n_modes: int
    d_v: int = 1

    def __post_init__(self) -> None:
        if self.n_modes < 2:
            raise GridError("at least two Hermite modes are required", n_modes=self.n_modes)
        if self.d_v != 1:
            raise GridError("only one velocity dimension is supported", d_v=self.d_v)

    @cached_property
    def ladder_up(self) -> np.ndarray:
        """sqrt(n+1), n = 0..N-2: coefficient of H_{n+1} in d_v^* H_n."""
        return np.sqrt(np.arange(1, self.n_modes, dtype=float))

    @cached_property
    def ladder_down(self) -> np.ndarray:
        """sqrt(n), n = 1..N-1: coefficient of H_{n-1} in d_v H_n."""
        return np.sqrt(np.arange(1, self.n_modes, dtype=float))

    @cached_property
    def v_matrix(self) -> np.ndarray:
        """Jacobi matrix of v-multiplication acting on coefficient columns."""
        return np.diag(self.ladder_up, -1) + np.diag(self.ladder_down, 1)

    @cached_property
    def creation(self) -> np.ndarray:
        """d_v^* on coefficients, G[m, m-1] = sqrt(m)."""
        return np.diag(self.ladder_up, -1)

    @cached_property
    def annihilation(self) -> np.ndarray:
        return np.diag(self.ladder_down, 1)

    @cached_property
    def mode_index(self) -> np.ndarray:
        return np.arange(self.n_modes, dtype=float)

    @cached_property
    def characteristics(self) -> Tuple[np.ndarray, np.ndarray]:
        """Eigenpairs of the Jacobi matrix: Gauss-Hermite nodes as transport speeds."""
        speeds, vectors = eigh_tridiagonal(np.zeros(self.n_modes), self.ladder_up)
        return speeds, vectors

    @property
    def max_speed(self) -> float:
        """Largest |Gauss-Hermite node|, the spectral radius of v-multiplication (about sqrt(4 N_v))."""
        return float(np.abs(self.characteristics[0]).max())

    @cached_property
    def filter_factors(self) -> np.ndarray:
        return np.exp(-FILTER_STRENGTH * (self.mode_index / self.n_modes) ** FILTER_STRENGTH)


@dataclass(frozen=True, eq=False)
class PhaseSpaceState:
    """Hermite coefficients C[n, i] on a 1D spatial grid at a given time."""

    coeffs: np.ndarray
    grid: SpatialGrid
    time: float = 0.0
    representation: Representation = "maxwellian"

    def __post_init__(self) -> None:
        coeffs = np.array(self.coeffs, dtype=float)
        if coeffs.ndim != 2 or coeffs.shape[1:] != self.grid.shape:
            raise GridError("coefficients must be shaped (N_v, N_x)", got=coeffs.shape, grid=self.grid.shape)
        if coeffs.shape[0] < 2:
            raise GridError("at least two Hermite modes are required")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n_modes(self) -> int:
        return self.coeffs.shape[0]

    @property
    def basis(self) -> HermiteBasis:
        return HermiteBasis(self.n_modes)

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    def with_coeffs(self, coeffs: np.ndarray, time: float = None) -> "PhaseSpaceState":
        return replace(self, coeffs=coeffs, time=self.time if time is None else float(time))

    @property
    def mass(self) -> float:
        return self.grid.integrate(self.coeffs[0])

    @classmethod
    def maxwellian(cls, rho: DensityField, n_modes: int, mean_velocity: float = 0.0) -> "PhaseSpaceState":
        """rho(x) M(v - u): coefficients u^n / sqrt(n!) in every column."""
        coeffs = np.zeros((n_modes, rho.grid.size))
        coeffs[0] = 1.0
        for n in range(1, n_modes):
            coeffs[n] = coeffs[n - 1] * mean_velocity / np.sqrt(n)
        return cls(coeffs * rho.values[None, :], rho.grid)


def _ladder(state: PhaseSpaceState, matrix: np.ndarray) -> PhaseSpaceState:
    return state.with_coeffs(matrix @ state.coeffs)


def apply_v_multiplication(state: PhaseSpaceState) -> PhaseSpaceState:
    return _ladder(state, state.basis.v_matrix)


def apply_dv(state: PhaseSpaceState) -> PhaseSpaceState:
    return _ladder(state, state.basis.annihilation)


def apply_dv_star(state: PhaseSpaceState) -> PhaseSpaceState:
    return _ladder(state, state.basis.creation)


def fokker_planck_decay(state: PhaseSpaceState, nu: float, dt: float) -> PhaseSpaceState:
    """Exact integration of the diagonal Fokker-Planck operator: row n times e^{-nu n dt}."""
    factors = np.exp(-nu * dt * state.basis.mode_index)
    return state.with_coeffs(state.coeffs * factors[:, None])


def spectral_filter(state: PhaseSpaceState) -> PhaseSpaceState:
    return state.with_coeffs(state.coeffs * state.basis.filter_factors[:, None])


def moments(state: PhaseSpaceState) -> Tuple[DensityField, np.ndarray, np.ndarray]:
    """Density C_0, current C_1 and kinetic energy density (C_0 + sqrt(2) C_2)/2."""
    coeffs = state.coeffs
    energy = 0.5 * coeffs[0]
    if state.n_modes >= 3:
        energy = energy + np.sqrt(0.5) * coeffs[2]
    return signed_field(coeffs[0], state.grid), coeffs[1].copy(), energy


def maxwellian(v: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * np.asarray(v) ** 2) / np.sqrt(2.0 * np.pi)


def hermite_polynomials(n_modes: int, v: np.ndarray) -> np.ndarray:
    """Orthonormal H_n(v), shape (n_modes, len(v)), by the three-term recurrence."""
    v = np.asarray(v, dtype=float)
    values = np.zeros((n_modes,) + v.shape)
    values[0] = 1.0
    if n_modes > 1:
        values[1] = v
    for n in range(1, n_modes - 1):
        values[n + 1] = (v * values[n] - np.sqrt(n) * values[n - 1]) / np.sqrt(n + 1)
    return values


def evaluate_on_velocity_grid(state: PhaseSpaceState, v: np.ndarray, floor: bool = False) -> np.ndarray:
    """F(x_i, v_j), shape (N_x, len(v)); with floor=True values are clipped at 1e-300 for logarithms."""
    basis = hermite_polynomials(state.n_modes, v) * maxwellian(v)[None, :]
    values = state.coeffs.T @ basis
    if floor:
        values = np.maximum(values, DENSITY_FLOOR)
    return values


def velocity_grid(n_modes: int, points: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Uniform velocity grid covering the Hermite support, with trapezoid weights."""
    bound = max(8.0, 1.2 * HermiteBasis(n_modes).max_speed)
    points = points or max(401, 16 * n_modes + 1)
    v = np.linspace(-bound, bound, points)
    weights = np.full(points, v[1] - v[0])
    weights[0] = weights[-1] = 0.5 * (v[1] - v[0])
    return v, weights
