import numpy as np
import pytest

from vfpk.core.errors import PotentialError
from vfpk.core.grid import SpatialGrid
from vfpk.models.potentials import (
    ConfinementPotential,
    confinement_norm,
    eval_potential,
    normalize,
    verify_assumption_confinement,
)


def _grid(nodes: int = 801, half_width: float = 10.0) -> SpatialGrid:
    return SpatialGrid.uniform(1, half_width, nodes)


def test_quadratic_is_normalized_on_the_line():
    grid = _grid()
    V = ConfinementPotential.quadratic()
    assert abs(grid.integrate(np.exp(-V.field(grid))) - 1.0) < 1e-12


def test_quadratic_value_gradient_and_hessian():
    V = ConfinementPotential.quadratic(dim=2)
    value, grad, hess = eval_potential(V, [3.0, 4.0])
    assert value == pytest.approx(12.5 + np.log(2.0 * np.pi))
    assert np.allclose(grad, [3.0, 4.0])
    # identity Hessian in 2D
    assert hess == pytest.approx(np.sqrt(2.0))


def test_power_growth_gradient_matches_finite_difference():
    V = ConfinementPotential.power_growth(alpha=1.5)
    x, step = 1.7, 1e-6
    forward, _, _ = eval_potential(V, x + step)
    backward, _, _ = eval_potential(V, x - step)
    _, grad, _ = eval_potential(V, x)
    assert grad[0] == pytest.approx((forward - backward) / (2 * step), rel=1e-6)


def test_log_power_is_finite_at_the_origin():
    V = ConfinementPotential.log_power(alpha=2.0)
    value, grad, hess = eval_potential(V, 0.0)
    assert value == 0.0
    assert grad[0] == 0.0
    assert np.isfinite(hess)


def test_nonpositive_alpha_is_rejected():
    with pytest.raises(PotentialError):
        ConfinementPotential.power_growth(alpha=0.0)


def test_normalize_makes_unit_mass():
    grid = _grid()
    V = normalize(ConfinementPotential.power_growth(alpha=1.0), grid)
    assert abs(grid.integrate(np.exp(-V.field(grid))) - 1.0) < 1e-12


def test_normalize_rejects_a_box_that_is_too_small():
    grid = _grid(nodes=101, half_width=2.0)
    with pytest.raises(PotentialError):
        normalize(ConfinementPotential.quadratic(), grid)


def test_tabulated_matches_its_samples_and_stays_in_the_box():
    grid = _grid(nodes=201)
    samples = 0.5 * grid.axis() ** 2
    V = ConfinementPotential.tabulated(samples, grid)
    assert np.allclose(V.field(grid), samples, atol=1e-10)
    _, grad, _ = eval_potential(V, 1.25)
    assert grad[0] == pytest.approx(1.25, abs=1e-6)
    with pytest.raises(PotentialError):
        eval_potential(V, 10.5)


def test_confinement_report_for_quadratic():
    grid = _grid(nodes=1001)
    V = ConfinementPotential.quadratic()
    report = verify_assumption_confinement(V, grid, eps_list=[0.5, 1.0])
    assert report.mass_defect < 1e-12
    assert report.poincare_constant == pytest.approx(1.0, rel=2e-2)
    # |grad^2 V| = 1 everywhere, so the excess at eps is max(1 - eps |x|) = 1
    assert all(c == pytest.approx(1.0) for _, c in report.smoothness_pairs)
    assert report.smoothness_holds(1.0)
    # int (1 + x^2) e^{-V} = 2 and the peak is 1/sqrt(2 pi)
    assert report.r_v == pytest.approx(2.0, rel=1e-8)


def test_confinement_norm_takes_the_larger_norm():
    grid = _grid()
    values = np.zeros(grid.shape) + 5.0
    grads = np.zeros(grid.shape + (1,))
    norm = confinement_norm(values, grads, grid)
    assert norm == pytest.approx(max(20.0 * np.exp(-5.0), np.exp(-5.0)))
