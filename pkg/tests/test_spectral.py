import numpy as np
import pytest

from vfpk.core.errors import GridError
from vfpk.core.grid import SpatialGrid
from vfpk.models.kernels import InteractionKernel
from vfpk.models.potentials import ConfinementPotential
from vfpk.services import spectral
from vfpk.services.steady import solve_fixed_point


def test_harmonic_gap_is_one():
    grid = SpatialGrid.uniform(1, 10.0, 801)
    report = spectral.witten_gap(ConfinementPotential.quadratic().field(grid), grid)
    assert report.gap == pytest.approx(1.0, rel=1e-2)
    assert report.poincare_constant == pytest.approx(1.0 / report.gap)
    assert report.ground_state_defect < 1e-8


def test_two_dimensional_gap_matches_the_line():
    line = SpatialGrid.uniform(1, 6.0, 41)
    plane = SpatialGrid.uniform(2, 6.0, 41)
    V = ConfinementPotential.quadratic()
    gap_1d = spectral.witten_gap(V.field(line), line).gap
    gap_2d = spectral.witten_gap(V.field(plane), plane).gap
    assert gap_2d == pytest.approx(gap_1d, rel=1e-6)


def test_sparse_operator_agrees_with_the_tridiagonal_form():
    grid = SpatialGrid.uniform(1, 4.0, 21)
    V = ConfinementPotential.power_growth(alpha=1.0).field(grid)
    diagonal, off = spectral.witten_tridiagonal(V, grid.h)
    dense = np.diag(diagonal) + np.diag(off, 1) + np.diag(off, -1)
    assert np.allclose(spectral.witten_operator(V, grid).toarray(), dense)


def test_steady_gap_sits_in_the_envelope():
    grid = SpatialGrid.uniform(1, 8.0, 257)
    steady = solve_fixed_point(ConfinementPotential.quadratic(), InteractionKernel.synchrotron(0.2), grid)
    report = spectral.steady_measure_gap(steady)
    assert report.within_envelope()
    assert report.weighted_constant is not None and report.weighted_constant > 0.0
    assert report.to_dict()["measure"] == "steady_state"


def test_poincare_ratios():
    grid = SpatialGrid.uniform(1, 10.0, 801)
    V = ConfinementPotential.quadratic().field(grid)
    x = grid.axis()
    # x is the first excited direction of the Gaussian measure
    assert spectral.poincare_ratio(x, V, grid) == pytest.approx(1.0, rel=1e-2)
    gap = spectral.witten_gap(V, grid)
    rng = np.random.default_rng(6)
    for _ in range(5):
        u = sum(c * np.cos((j + 1) * np.pi * x / 10.0 + j) for j, c in enumerate(rng.standard_normal(4)))
        assert spectral.poincare_ratio(u, V, grid) <= gap.poincare_constant * (1.0 + 1e-6)


def test_weighted_poincare_constant_bounds_the_ratios():
    grid = SpatialGrid.uniform(1, 8.0, 401)
    V = ConfinementPotential.quadratic().field(grid)
    constant = spectral.weighted_poincare_constant(V, grid)
    x = grid.axis()
    for u in (x, np.sin(x), x**2, np.exp(-x * x)):
        assert spectral.weighted_poincare_ratio(u, V, grid) <= constant


def test_weighted_constant_is_one_dimensional():
    grid = SpatialGrid.uniform(2, 4.0, 9)
    with pytest.raises(GridError):
        spectral.weighted_poincare_constant(np.zeros(grid.shape), grid)
