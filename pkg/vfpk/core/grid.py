"""
Spatial grids and macroscopic densities.

Grids are uniform tensor grids on a truncated box [c - L, c + L]^d that include
both endpoints. Quadrature is the trapezoid rule; the fields integrated here
carry e^{-V} or Maxwellian weights, so the endpoint treatment is immaterial
once the box is large enough.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Tuple

import numpy as np

from vfpk.core.errors import GridError, KernelError


@dataclass(frozen=True)
class SpatialGrid:
    dim: int
    half_widths: Tuple[float, ...]
    nodes: Tuple[int, ...]
    center: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "half_widths", tuple(float(L) for L in self.half_widths))
        object.__setattr__(self, "nodes", tuple(int(n) for n in self.nodes))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.dim < 1 or self.dim > 3:
            raise GridError("grid dimension must be 1, 2 or 3", dim=self.dim)
        if len(self.half_widths) != self.dim or len(self.nodes) != self.dim:
            raise GridError("half_widths and nodes must match the dimension", dim=self.dim)
        if any(n < 3 for n in self.nodes):
            raise GridError("at least 3 nodes per axis are required", nodes=self.nodes)
        if any(L <= 0 for L in self.half_widths):
            raise GridError("half widths must be positive", half_widths=self.half_widths)
        if not self.center:
            object.__setattr__(self, "center", (0.0,) * self.dim)
        elif len(self.center) != self.dim:
            raise GridError("center must match the dimension", center=self.center)

    @classmethod
    def uniform(cls, dim: int, half_width: float, nodes: int, center: float = 0.0) -> "SpatialGrid":
        return cls(dim, (float(half_width),) * dim, (int(nodes),) * dim, (float(center),) * dim)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.nodes)

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(2.0 * L / (n - 1) for L, n in zip(self.half_widths, self.nodes))

    @property
    def h(self) -> float:
        """Spacing of a 1D grid (first axis otherwise)."""
        return self.spacing[0]

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @property
    def is_symmetric(self) -> bool:
        return all(c == 0.0 for c in self.center)

    @property
    def padded_shape(self) -> Tuple[int, ...]:
        """Doubled box used to emulate free-space convolution."""
        return tuple(2 * n for n in self.nodes)

    def axes(self) -> Tuple[np.ndarray, ...]:
        return tuple(
            np.linspace(c - L, c + L, n)
            for c, L, n in zip(self.center, self.half_widths, self.nodes)
        )

    def axis(self) -> np.ndarray:
        return self.axes()[0]

    def mesh(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def points(self) -> np.ndarray:
        """Node coordinates, shape (*nodes, dim)."""
        return np.stack(self.mesh(), axis=-1)

    def radii(self) -> np.ndarray:
        return np.sqrt(sum(m**2 for m in self.mesh()))

    def weights(self) -> np.ndarray:
        w = np.ones(self.shape)
        for axis, (n, h) in enumerate(zip(self.nodes, self.spacing)):
            wa = np.full(n, h)
            wa[0] = wa[-1] = 0.5 * h
            shape = [1] * self.dim
            shape[axis] = n
            w = w * wa.reshape(shape)
        return w

    def integrate(self, values: np.ndarray) -> float:
        values = np.asarray(values)
        if values.shape != self.shape:
            raise GridError("field shape does not match grid", expected=self.shape, got=values.shape)
        return float(np.sum(self.weights() * values))

    def boundary_max(self, values: np.ndarray) -> float:
        """Largest |value| over the faces of the box."""
        values = np.abs(np.asarray(values))
        best = 0.0
        for axis in range(self.dim):
            best = max(best, float(np.take(values, 0, axis=axis).max()))
            best = max(best, float(np.take(values, -1, axis=axis).max()))
        return best

    def offsets(self) -> Tuple[np.ndarray, ...]:
        """Node-difference coordinates on the doubled box in FFT (wrap-around) order."""
        result = []
        for n, h in zip(self.nodes, self.spacing):
            m = np.arange(2 * n)
            m = np.where(m < n, m, m - 2 * n)
            result.append(m * h)
        return tuple(result)

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "half_widths": list(self.half_widths),
            "nodes": list(self.nodes),
            "center": list(self.center),
        }


@dataclass(frozen=True, eq=False)
class DensityField:
    """Nonnegative macroscopic density samples on a grid."""

    values: np.ndarray
    grid: SpatialGrid
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise GridError("density shape does not match grid", expected=self.grid.shape, got=values.shape)
        if self.check:
            if not np.all(np.isfinite(values)):
                raise KernelError("density contains non-finite values")
            if np.any(values < 0.0):
                raise GridError("density must be nonnegative", min=float(values.min()))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @cached_property
    def mass(self) -> float:
        return self.grid.integrate(self.values)

    def l1_distance(self, other: "DensityField") -> float:
        return self.grid.integrate(np.abs(self.values - other.values))

    def normalized(self) -> "DensityField":
        return DensityField(self.values / self.mass, self.grid)


def signed_field(values: np.ndarray, grid: SpatialGrid) -> DensityField:
    """Wrap a signed macroscopic field (perturbations, mean-zero tests) without the sign check."""
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise KernelError("density contains non-finite values")
    return DensityField(values, grid, check=False)
