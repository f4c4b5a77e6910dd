"""
Interaction kernels and their grid convolutions.

Convolutions run through scipy.fft on the zero-padded doubled box, so the
result matches free-space convolution with the trapezoid-weighted density.
Kernel samples live in wrap-around order on that box; the sample at the
origin of a singular kernel is replaced by its cell average.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Literal, Optional, Tuple, Union

import numpy as np
import scipy.fft as sp_fft
from scipy.integrate import nquad

from vfpk.config_loader import thread_count
from vfpk.core.errors import KernelError
from vfpk.core.grid import DensityField, SpatialGrid, signed_field
from vfpk.core.logging import get_logger, log_fields

logger = get_logger(__name__)

KernelFamily = Literal["zero", "coulomb", "newton", "riesz", "synchrotron", "lipschitz_table"]

POSITIVITY_TOLERANCE = 1e-10


@dataclass(frozen=True)
class InteractionKernel:
    family: KernelFamily
    dim: int = 1
    strength: float = 0.0
    alpha: float = 0.0
    # radial (or 1D signed) profile for lipschitz_table, kept as tuples so kernels hash
    table_x: Tuple[float, ...] = ()
    table_k: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "table_x", tuple(float(x) for x in self.table_x))
        object.__setattr__(self, "table_k", tuple(float(k) for k in self.table_k))
        if self.dim < 1 or self.dim > 3:
            raise KernelError("kernel dimension must be 1, 2 or 3", dim=self.dim)
        if self.strength < 0:
            raise KernelError("kernel strength must be nonnegative", strength=self.strength)
        if self.family in ("coulomb", "newton") and self.dim < 3:
            raise KernelError(f"{self.family} kernel needs d >= 3", dim=self.dim)
        if self.family == "riesz":
            if self.dim < 2:
                raise KernelError("riesz kernel needs d >= 2", dim=self.dim)
            if not 0.5 * self.dim < self.alpha <= self.dim:
                raise KernelError("riesz exponent must lie in (d/2, d]", alpha=self.alpha)
        if self.family == "synchrotron" and self.dim != 1:
            raise KernelError("synchrotron kernel is one-dimensional", dim=self.dim)
        if self.family == "lipschitz_table":
            if len(self.table_x) < 2 or len(self.table_x) != len(self.table_k):
                raise KernelError("kernel table needs at least two (x, k) samples")
            if np.any(np.diff(self.table_x) <= 0):
                raise KernelError("kernel table abscissae must increase")
            if not np.all(np.isfinite(self.table_k)):
                raise KernelError("kernel table must be finite")

    @classmethod
    def zero(cls, dim: int = 1) -> "InteractionKernel":
        return cls("zero", dim=dim)

    @classmethod
    def coulomb(cls, strength: float, dim: int = 3) -> "InteractionKernel":
        return cls("coulomb", dim=dim, strength=strength)

    @classmethod
    def newton(cls, strength: float, dim: int = 3) -> "InteractionKernel":
        return cls("newton", dim=dim, strength=strength)

    @classmethod
    def riesz(cls, strength: float, alpha: float, dim: int) -> "InteractionKernel":
        return cls("riesz", dim=dim, strength=strength, alpha=alpha)

    @classmethod
    def synchrotron(cls, strength: float) -> "InteractionKernel":
        return cls("synchrotron", dim=1, strength=strength)

    @classmethod
    def table(cls, x, k, dim: int = 1) -> "InteractionKernel":
        return cls("lipschitz_table", dim=dim, table_x=tuple(x), table_k=tuple(k))

    @classmethod
    def constant(cls, value: float, dim: int = 1) -> "InteractionKernel":
        lo = -1.0 if dim == 1 else 0.0
        return cls.table((lo, 1.0), (value, value), dim=dim)

    @property
    def singular_exponent(self) -> float:
        """beta in |x|^{-beta} for the homogeneous families, 0 when bounded at the origin."""
        if self.family in ("coulomb", "newton"):
            return float(self.dim - 2)
        if self.family == "riesz":
            return float(self.dim - self.alpha)
        return 0.0

    @property
    def is_singular(self) -> bool:
        return self.singular_exponent > 0.0 and self.strength > 0.0

    @property
    def signed_strength(self) -> float:
        return -self.strength if self.family == "newton" else self.strength

    @property
    def fourier_nonnegative(self) -> bool:
        """Families whose transform is known to be nonnegative."""
        if self.family in ("zero", "coulomb", "riesz"):
            return True
        return self.family in ("newton", "synchrotron") and self.strength == 0.0

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Kernel values at an (M, d) array of points; raises at the singularity."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dim:
            raise KernelError("point dimension does not match kernel", dim=self.dim)
        r = np.sqrt(np.sum(points**2, axis=1))
        if self.family == "zero":
            return np.zeros(r.shape)
        if self.family in ("coulomb", "newton", "riesz"):
            beta = self.singular_exponent
            if beta == 0.0:
                return np.full(r.shape, self.signed_strength)
            if np.any(r == 0.0):
                raise KernelError(f"{self.family} kernel evaluated at its singularity")
            return self.signed_strength / r**beta
        if self.family == "synchrotron":
            return self.strength * synchrotron_profile(points[:, 0])
        coordinate = points[:, 0] if self.dim == 1 else r
        return np.interp(coordinate, self.table_x, self.table_k)

    def describe(self) -> dict:
        p, q, applicable = lebesgue_exponents(self)
        return {
            "family": self.family,
            "dim": self.dim,
            "strength": self.strength,
            "alpha": self.alpha,
            "p": p,
            "q": q,
            "theorem_applicable": applicable,
        }


def synchrotron_profile(x: np.ndarray) -> np.ndarray:
    """2[cosh(5a/3) - cosh(a)] / sinh(2a) with a = asinh(x) for x > 0, else 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    positive = x > 0
    a = np.arcsinh(x[positive])
    out[positive] = 2.0 * (np.cosh(5.0 * a / 3.0) - np.cosh(a)) / np.sinh(2.0 * a)
    return out


def eval_kernel(k: InteractionKernel, x) -> float:
    point = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    return float(k.sample(point)[0])


def lebesgue_exponents(k: InteractionKernel) -> Tuple[float, float, bool]:
    """Hardy-Littlewood-Sobolev exponents (p, q) of k and grad k; theorem_applicable iff q > d."""
    if k.family in ("coulomb", "newton", "riesz"):
        alpha = 2.0 if k.family != "riesz" else k.alpha
        inv_p = 0.5 - alpha / k.dim
        inv_q = 0.5 - (alpha - 1.0) / k.dim
        p = 1.0 / inv_p if inv_p > 0 else np.inf
        q = 1.0 / inv_q if inv_q > 0 else np.inf
    else:
        p = q = np.inf
    return float(p), float(q), bool(q > k.dim)


@lru_cache(maxsize=32)
def _face_integral(dim: int, beta: float) -> float:
    """J = integral over [0,1]^{d-1} of (1 + |u|^2)^{-beta/2}."""
    if dim == 1:
        return 1.0
    value, _ = nquad(lambda *u: (1.0 + sum(c * c for c in u)) ** (-0.5 * beta), [[0.0, 1.0]] * (dim - 1))
    return float(value)


def singular_cell_average(dim: int, beta: float, h: float) -> float:
    """Mean of |x|^{-beta} over the cube [-h/2, h/2]^d, by pyramid decomposition."""
    if beta >= dim:
        raise KernelError("kernel is not locally integrable", beta=beta, dim=dim)
    a = 0.5 * h
    return dim * a ** (-beta) * _face_integral(dim, beta) / (dim - beta)


@dataclass(frozen=True, eq=False)
class TabulatedKernel:
    """Kernel given by its samples on the doubled box of `grid`, wrap-around order."""

    samples: np.ndarray
    grid: SpatialGrid
    label: str = "tabulated"

    def __post_init__(self) -> None:
        samples = np.array(self.samples, dtype=float)
        if samples.shape != self.grid.padded_shape:
            raise KernelError("tabulated kernel does not match the padded grid")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True, eq=False)
class KernelSplit:
    even: TabulatedKernel
    odd: TabulatedKernel
    source: InteractionKernel


KernelLike = Union[InteractionKernel, TabulatedKernel]

_cache_lock = threading.Lock()
_sample_cache: Dict[tuple, np.ndarray] = {}
_spectrum_cache: Dict[tuple, np.ndarray] = {}


def _reflect(samples: np.ndarray) -> np.ndarray:
    """k(-x) in wrap-around order: index m maps to -m mod 2n."""
    axes = tuple(range(samples.ndim))
    return np.roll(np.flip(samples, axis=axes), 1, axis=axes)


def _nyquist_mask(grid: SpatialGrid) -> np.ndarray:
    # offset n*h never separates two nodes; zeroing it keeps the reflection exact
    mask = np.zeros(grid.padded_shape, dtype=bool)
    for axis, n in enumerate(grid.nodes):
        index = [slice(None)] * grid.dim
        index[axis] = n
        mask[tuple(index)] = True
    return mask


def kernel_samples(k: KernelLike, grid: SpatialGrid) -> np.ndarray:
    """Samples of k at the node offsets of the doubled box, cell-averaged at a singular origin."""
    if isinstance(k, TabulatedKernel):
        if k.grid != grid:
            raise KernelError("tabulated kernel belongs to another grid")
        return k.samples
    if k.dim != grid.dim:
        raise KernelError("kernel and grid dimensions differ", kernel_dim=k.dim, grid_dim=grid.dim)
    key = (k, grid)
    with _cache_lock:
        cached = _sample_cache.get(key)
    if cached is not None:
        return cached

    offsets = np.stack(np.meshgrid(*grid.offsets(), indexing="ij"), axis=-1).reshape(-1, grid.dim)
    origin = np.all(offsets == 0.0, axis=1)
    values = np.zeros(offsets.shape[0])
    values[~origin] = k.sample(offsets[~origin])
    if k.is_singular:
        if len(set(grid.spacing)) != 1:
            raise KernelError("singular kernels need equal spacing on every axis", spacing=grid.spacing)
        values[origin] = k.signed_strength * singular_cell_average(grid.dim, k.singular_exponent, grid.h)
    else:
        values[origin] = k.sample(np.zeros((1, grid.dim)))[0]
    samples = values.reshape(grid.padded_shape)
    samples[_nyquist_mask(grid)] = 0.0
    samples.setflags(write=False)
    with _cache_lock:
        _sample_cache[key] = samples
    return samples


def _spectrum(k: KernelLike, grid: SpatialGrid, adjoint: bool) -> np.ndarray:
    key = (k, grid, adjoint)
    if isinstance(k, InteractionKernel):
        with _cache_lock:
            cached = _spectrum_cache.get(key)
        if cached is not None:
            return cached
    samples = kernel_samples(k, grid)
    if adjoint:
        samples = _reflect(samples)
    spectrum = sp_fft.rfftn(samples, workers=thread_count())
    if isinstance(k, InteractionKernel):
        with _cache_lock:
            _spectrum_cache[key] = spectrum
    return spectrum


def clear_cache() -> None:
    with _cache_lock:
        _sample_cache.clear()
        _spectrum_cache.clear()


def convolve_values(k: KernelLike, values: np.ndarray, grid: SpatialGrid, adjoint: bool = False) -> np.ndarray:
    """k * rho at every node for a raw (possibly signed) array of samples."""
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise KernelError("density does not match grid", expected=grid.shape, got=values.shape)
    if not np.all(np.isfinite(values)):
        raise KernelError("density contains non-finite values")
    if isinstance(k, InteractionKernel) and k.family == "zero":
        return np.zeros(grid.shape)
    padded = grid.padded_shape
    weighted = sp_fft.rfftn(values * grid.weights(), s=padded, workers=thread_count())
    full = sp_fft.irfftn(weighted * _spectrum(k, grid, adjoint), s=padded, workers=thread_count())
    return full[tuple(slice(0, n) for n in grid.nodes)]


def convolve(k: KernelLike, rho: DensityField, adjoint: bool = False) -> DensityField:
    """psi = k * rho (or the adjoint convolution with k(-x)) on the nodes of rho's grid."""
    return signed_field(convolve_values(k, rho.values, rho.grid, adjoint=adjoint), rho.grid)


def grad_convolve(k: KernelLike, rho: DensityField, adjoint: bool = False) -> np.ndarray:
    """grad(k * rho), shape (*nodes, d), by second-order differences of the convolution."""
    psi = convolve_values(k, rho.values, rho.grid, adjoint=adjoint)
    grads = np.gradient(psi, *rho.grid.spacing, edge_order=2)
    if rho.grid.dim == 1:
        grads = [grads]
    return np.stack(grads, axis=-1)


def even_odd_split(k: InteractionKernel, grid: SpatialGrid) -> KernelSplit:
    if not grid.is_symmetric:
        raise KernelError("even/odd split needs a grid symmetric about the origin", center=grid.center)
    samples = kernel_samples(k, grid)
    reflected = _reflect(samples)
    return KernelSplit(
        even=TabulatedKernel(0.5 * (samples + reflected), grid, label=f"{k.family}:even"),
        odd=TabulatedKernel(0.5 * (samples - reflected), grid, label=f"{k.family}:odd"),
        source=k,
    )


def kernel_transform(k: KernelLike, grid: SpatialGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Discrete Fourier transform h^d * FFT of the samples, with |xi| on the same frequency grid."""
    transform = sp_fft.fftn(kernel_samples(k, grid), workers=thread_count()) * grid.cell_volume
    freqs = np.meshgrid(
        *[2.0 * np.pi * sp_fft.fftfreq(2 * n, d=h) for n, h in zip(grid.nodes, grid.spacing)],
        indexing="ij",
    )
    return transform, np.sqrt(sum(f**2 for f in freqs))


@dataclass(frozen=True)
class CoercivityEstimate:
    theta: float
    kappa_lower_even: float
    kappa_upper_even: float
    kappa_upper_odd: float

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "kappa_lower_even": self.kappa_lower_even,
            "kappa_upper_even": self.kappa_upper_even,
            "kappa_upper_odd": self.kappa_upper_odd,
        }


def coercivity_constant(theta: float) -> float:
    """C_theta = theta^-theta (1-theta)^-(1-theta), with 0^0 = 1."""
    first = theta**-theta if theta > 0 else 1.0
    second = (1.0 - theta) ** -(1.0 - theta) if theta < 1 else 1.0
    return first * second


def coercivity_estimate(k: InteractionKernel, grid: SpatialGrid, theta: float) -> CoercivityEstimate:
    if not 0.0 <= theta <= 1.0:
        raise KernelError("theta must lie in [0, 1]", theta=theta)
    split = even_odd_split(k, grid)
    even_hat, xi = kernel_transform(split.even, grid)
    odd_hat, _ = kernel_transform(split.odd, grid)
    even_hat = even_hat.real
    odd_hat = odd_hat.imag

    lower = 0.0
    if not k.fourier_nonnegative:
        negative = np.maximum(-even_hat, 0.0)
        if theta >= 1.0:
            norm = float(negative.max())
        else:
            r = 1.0 / (1.0 - theta)
            measure = np.prod([2.0 * np.pi / (2 * n * h) for n, h in zip(grid.nodes, grid.spacing)])
            measure /= (2.0 * np.pi) ** grid.dim
            norm = float(np.sum(negative**r) * measure) ** (1.0 / r)
        lower = coercivity_constant(theta) * norm

    def surrogate(values: np.ndarray) -> float:
        magnitude = np.abs(values)
        return float(max(magnitude.max(), (xi * magnitude).max()))

    estimate = CoercivityEstimate(
        theta=float(theta),
        kappa_lower_even=lower,
        kappa_upper_even=surrogate(even_hat),
        kappa_upper_odd=surrogate(odd_hat),
    )
    logger.debug("coercivity estimate", extra=log_fields(family=k.family, **estimate.to_dict()))
    return estimate


@dataclass(frozen=True)
class PositivityReport:
    passed: bool
    min_value: float
    shift_constant: float
    trials: int

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "min_value": self.min_value,
            "shift_constant": self.shift_constant,
            "trials": self.trials,
        }


def random_density(grid: SpatialGrid, rng: np.random.Generator, bumps: Optional[int] = None) -> np.ndarray:
    """Sum of a few Gaussian bumps inside the central half of the box, unit mass."""
    bumps = bumps or int(rng.integers(1, 4))
    points = grid.points()
    values = np.zeros(grid.shape)
    for _ in range(bumps):
        center = np.array([c + 0.5 * L * rng.uniform(-1, 1) for c, L in zip(grid.center, grid.half_widths)])
        width = rng.uniform(0.15, 0.4) * min(grid.half_widths)
        values += rng.uniform(0.2, 1.0) * np.exp(-np.sum((points - center) ** 2, axis=-1) / (2.0 * width**2))
    return values / grid.integrate(values)


def verify_positivity(
    k: InteractionKernel,
    grid: SpatialGrid,
    trials: int = 8,
    rng: Optional[np.random.Generator] = None,
) -> PositivityReport:
    """Randomized check of rho >= 0 => K rho >= 0, plus the constant-shift alternative."""
    rng = rng or np.random.default_rng(0)
    worst = np.inf
    passed = True
    for _ in range(trials):
        rho = random_density(grid, rng)
        psi = convolve_values(k, rho, grid)
        worst = min(worst, float(psi.min()))
        if psi.min() < -POSITIVITY_TOLERANCE * grid.integrate(np.abs(rho)):
            passed = False

    samples = kernel_samples(k, grid)
    lowest = float(samples.min())
    if lowest >= 0.0:
        shift = 0.0
    elif k.is_singular:
        shift = np.inf
    else:
        shift = -lowest
    report = PositivityReport(passed=passed, min_value=worst, shift_constant=shift, trials=trials)
    logger.info("kernel positivity", extra=log_fields(family=k.family, **report.to_dict()))
    return report
