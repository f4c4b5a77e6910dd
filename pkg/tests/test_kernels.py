import numpy as np
import pytest
from scipy.special import erf

from vfpk.core.errors import KernelError
from vfpk.core.grid import DensityField, SpatialGrid
from vfpk.models import kernels
from vfpk.models.kernels import InteractionKernel


def _gaussian(grid: SpatialGrid, center: float = 0.0, width: float = 1.0) -> np.ndarray:
    values = np.exp(-0.5 * np.sum((grid.points() - center) ** 2, axis=-1) / width**2)
    return values / grid.integrate(values)


def test_zero_kernel_convolves_to_zero():
    grid = SpatialGrid.uniform(1, 5.0, 65)
    psi = kernels.convolve_values(InteractionKernel.zero(), _gaussian(grid), grid)
    assert np.all(psi == 0.0)


def test_constant_kernel_returns_the_mass():
    grid = SpatialGrid.uniform(1, 5.0, 65)
    rho = 3.0 * _gaussian(grid)
    psi = kernels.convolve_values(InteractionKernel.constant(2.0), rho, grid)
    assert np.allclose(psi, 6.0, atol=1e-12)


def test_synchrotron_convolution_matches_direct_sum():
    grid = SpatialGrid.uniform(1, 4.0, 41)
    k = InteractionKernel.synchrotron(0.3)
    x = grid.axis()
    w = grid.weights()
    rho = _gaussian(grid, center=0.5, width=0.8)
    direct = np.array([np.sum(w * k.sample((xi - x)[:, None]) * rho) for xi in x])
    assert np.allclose(kernels.convolve_values(k, rho, grid), direct, atol=1e-13)


def test_adjoint_convolution_is_the_transpose():
    grid = SpatialGrid.uniform(1, 4.0, 57)
    k = InteractionKernel.synchrotron(1.0)
    rng = np.random.default_rng(3)
    rho, sigma = rng.standard_normal(grid.size), rng.standard_normal(grid.size)
    left = grid.integrate(kernels.convolve_values(k, rho, grid) * sigma)
    right = grid.integrate(rho * kernels.convolve_values(k, sigma, grid, adjoint=True))
    assert left == pytest.approx(right, rel=1e-11, abs=1e-13)


def test_even_odd_split_recombines_and_even_part_is_symmetric():
    grid = SpatialGrid.uniform(1, 4.0, 49)
    k = InteractionKernel.synchrotron(0.7)
    split = kernels.even_odd_split(k, grid)
    rng = np.random.default_rng(5)
    rho, sigma = rng.standard_normal(grid.size), rng.standard_normal(grid.size)

    full = kernels.convolve_values(k, rho, grid)
    parts = kernels.convolve_values(split.even, rho, grid) + kernels.convolve_values(split.odd, rho, grid)
    assert np.allclose(full, parts, atol=1e-13)

    left = grid.integrate(kernels.convolve_values(split.even, rho, grid) * sigma)
    right = grid.integrate(rho * kernels.convolve_values(split.even, sigma, grid))
    assert left == pytest.approx(right, rel=1e-11, abs=1e-13)


def test_split_needs_a_symmetric_grid():
    grid = SpatialGrid.uniform(1, 4.0, 33, center=0.5)
    with pytest.raises(KernelError):
        kernels.even_odd_split(InteractionKernel.synchrotron(1.0), grid)


def test_coulomb_potential_of_a_gaussian():
    grid = SpatialGrid.uniform(3, 6.0, 49)
    rho = DensityField(_gaussian(grid), grid)
    psi = kernels.convolve(InteractionKernel.coulomb(1.0), rho).values
    center = 24
    # 1/|x| * N(0, I) = erf(r / sqrt 2) / r, and sqrt(2/pi) at the origin
    assert psi[center, center, center] == pytest.approx(np.sqrt(2.0 / np.pi), rel=2e-2)
    for offset in (4, 8, 12):
        r = offset * grid.h
        expected = erf(r / np.sqrt(2.0)) / r
        assert psi[center + offset, center, center] == pytest.approx(expected, rel=2e-2)


def test_singular_cell_average_known_values():
    # mean of |x|^{-1/2} over [-a, a] is a^{-1/2} / (1 - 1/2)
    assert kernels.singular_cell_average(1, 0.5, 2.0) == pytest.approx(2.0)
    # mean of 1/|x| over the unit cube
    expected = 3.0 * np.log(2.0 + np.sqrt(3.0)) - 0.5 * np.pi
    assert kernels.singular_cell_average(3, 1.0, 1.0) == pytest.approx(expected, rel=1e-6)


def test_singular_kernel_rejects_its_origin_and_uneven_spacing():
    k = InteractionKernel.coulomb(1.0)
    with pytest.raises(KernelError):
        k.sample(np.zeros((1, 3)))
    grid = SpatialGrid(3, (4.0, 4.0, 2.0), (17, 17, 17))
    with pytest.raises(KernelError):
        kernels.kernel_samples(k, grid)


def test_family_validation():
    with pytest.raises(KernelError):
        InteractionKernel.coulomb(1.0, dim=2)
    with pytest.raises(KernelError):
        InteractionKernel.riesz(1.0, alpha=3.0, dim=2)
    with pytest.raises(KernelError):
        InteractionKernel.synchrotron(-1.0)
    with pytest.raises(KernelError):
        InteractionKernel.table([0.0, 0.0], [1.0, 2.0])


@pytest.mark.parametrize("dim, alpha", [(2, 1.0), (2, 0.5), (3, 1.5)])
def test_riesz_exponent_at_or_below_half_the_dimension_is_rejected(dim, alpha):
    with pytest.raises(KernelError) as info:
        InteractionKernel.riesz(1.0, alpha=alpha, dim=dim)
    assert "d/2" in info.value.message
    assert info.value.fields["alpha"] == alpha


@pytest.mark.parametrize("dim, alpha", [(2, 1.01), (2, 2.0), (3, 1.6), (3, 3.0)])
def test_riesz_exponent_in_range_is_accepted(dim, alpha):
    assert InteractionKernel.riesz(1.0, alpha=alpha, dim=dim).alpha == alpha


def test_signs_and_fourier_flags():
    assert InteractionKernel.newton(1.0).signed_strength == -1.0
    assert not InteractionKernel.newton(1.0).fourier_nonnegative
    assert InteractionKernel.coulomb(1.0).fourier_nonnegative
    assert not InteractionKernel.synchrotron(0.1).fourier_nonnegative
    assert InteractionKernel.synchrotron(0.0).fourier_nonnegative


def test_lebesgue_exponents():
    p, q, applicable = kernels.lebesgue_exponents(InteractionKernel.coulomb(1.0))
    assert np.isinf(p) and q == pytest.approx(6.0) and applicable
    p, q, applicable = kernels.lebesgue_exponents(InteractionKernel.riesz(1.0, alpha=1.8, dim=3))
    assert np.isinf(p) and q == pytest.approx(30.0 / 7.0) and applicable
    p, q, applicable = kernels.lebesgue_exponents(InteractionKernel.synchrotron(1.0))
    assert np.isinf(p) and np.isinf(q) and applicable


def test_positivity_and_shift_constants():
    rng = np.random.default_rng(0)
    grid = SpatialGrid.uniform(1, 6.0, 97)
    report = kernels.verify_positivity(InteractionKernel.synchrotron(0.5), grid, trials=4, rng=rng)
    assert report.passed and report.shift_constant == 0.0

    report = kernels.verify_positivity(InteractionKernel.constant(-0.5), grid, trials=4, rng=rng)
    assert not report.passed
    assert report.shift_constant == pytest.approx(0.5)

    grid3 = SpatialGrid.uniform(3, 4.0, 17)
    report = kernels.verify_positivity(InteractionKernel.newton(1.0), grid3, trials=2, rng=rng)
    assert not report.passed
    assert np.isinf(report.shift_constant)


def test_coercivity_estimate():
    assert kernels.coercivity_constant(0.5) == pytest.approx(2.0)
    assert kernels.coercivity_constant(0.0) == 1.0
    grid = SpatialGrid.uniform(1, 6.0, 65)
    estimate = kernels.coercivity_estimate(InteractionKernel.synchrotron(0.4), grid, theta=0.5)
    assert estimate.kappa_lower_even >= 0.0
    assert np.isfinite(estimate.kappa_upper_even) and estimate.kappa_upper_even > 0.0
    assert estimate.kappa_upper_odd > 0.0
    zero = kernels.coercivity_estimate(InteractionKernel.zero(), grid, theta=0.5)
    assert zero.kappa_lower_even == 0.0 and zero.kappa_upper_even == 0.0
    with pytest.raises(KernelError):
        kernels.coercivity_estimate(InteractionKernel.zero(), grid, theta=1.5)


def test_pointwise_evaluation():
    k = InteractionKernel.synchrotron(0.3)
    assert kernels.eval_kernel(k, -1.0) == 0.0
    assert kernels.eval_kernel(k, 1.0) == pytest.approx(0.3 * kernels.synchrotron_profile(np.array([1.0]))[0])
    assert kernels.eval_kernel(InteractionKernel.constant(2.0), 0.7) == pytest.approx(2.0)
    assert kernels.eval_kernel(InteractionKernel.coulomb(1.0), [0.0, 3.0, 4.0]) == pytest.approx(0.2)


def test_gradient_of_the_convolution():
    grid = SpatialGrid.uniform(1, 4.0, 81)
    k = InteractionKernel.synchrotron(0.5)
    rho = DensityField(_gaussian(grid, center=0.3, width=0.6), grid)
    x, w = grid.axis(), grid.weights()
    direct = np.array([np.sum(w * k.sample((xi - x)[:, None]) * rho.values) for xi in x])
    grads = kernels.grad_convolve(k, rho)
    assert grads.shape == (81, 1)
    assert np.allclose(grads[:, 0], np.gradient(direct, grid.h, edge_order=2), atol=1e-10)

    # a radial kernel against a centred density gives an odd gradient field
    plane = SpatialGrid.uniform(2, 4.0, 33)
    radial = InteractionKernel.table((0.0, 1.0, 3.0), (1.0, 0.5, 0.0), dim=2)
    field = kernels.grad_convolve(radial, DensityField(_gaussian(plane), plane))
    assert field.shape == (33, 33, 2)
    assert np.allclose(field[::-1, :, 0], -field[:, :, 0], atol=1e-12)
    assert np.allclose(field[:, ::-1, 1], -field[:, :, 1], atol=1e-12)


def test_clearing_the_cache_keeps_results():
    grid = SpatialGrid.uniform(1, 4.0, 41)
    k = InteractionKernel.synchrotron(0.3)
    rho = _gaussian(grid)
    before = kernels.convolve_values(k, rho, grid)
    kernels.clear_cache()
    assert np.array_equal(kernels.convolve_values(k, rho, grid), before)
