import numpy as np
import pytest

from vfpk.core.errors import SteadyStateError
from vfpk.core.grid import DensityField, SpatialGrid
from vfpk.models.kernels import InteractionKernel
from vfpk.models.potentials import ConfinementPotential
from vfpk.services import steady


def _line(nodes: int = 257, half_width: float = 8.0) -> SpatialGrid:
    return SpatialGrid.uniform(1, half_width, nodes)


def test_zero_kernel_converges_in_one_iteration():
    grid = _line()
    V = ConfinementPotential.quadratic()
    state = steady.solve_fixed_point(V, InteractionKernel.zero(), grid)
    assert state.converged
    assert state.iterations == 1
    assert np.allclose(state.rho_star.values, np.exp(-V.field(grid)), atol=1e-12)


def test_synchrotron_steady_state_is_a_fixed_point():
    grid = _line()
    V = ConfinementPotential.quadratic()
    k = InteractionKernel.synchrotron(0.2)
    state = steady.solve_fixed_point(V, k, grid, tol=1e-12)

    assert state.converged
    assert state.rho_star.mass == pytest.approx(1.0, abs=1e-12)
    assert steady.t_map(state.rho_star, state.v_field, k).l1_distance(state.rho_star) < 1e-10
    # rho_star = e^{-V_star} with V_star = V + K rho_star + log |S|
    assert np.allclose(np.exp(-state.v_star), state.rho_star.values, atol=1e-10)
    assert state.residuals[-1] < state.residuals[0]
    assert len(state.free_energies) == state.iterations


def test_picard_residuals_contract_at_the_lipschitz_rate():
    grid = _line()
    V = ConfinementPotential.quadratic()
    k = InteractionKernel.synchrotron(0.2)
    zeta = steady.estimate_zeta(V, k, grid)
    lipschitz = 2.0 * zeta * np.exp(zeta)
    assert lipschitz <= 0.8
    state = steady.solve_fixed_point(V, k, grid, tol=1e-10)

    assert state.converged
    assert state.omega == 1.0
    assert state.contraction_factors
    assert max(state.contraction_factors) <= lipschitz + 0.05


def test_default_damping():
    assert steady.default_omega(0.1) == 1.0
    assert steady.default_omega(1.0) == 0.5


def test_bad_damping_is_rejected():
    with pytest.raises(SteadyStateError):
        steady.solve_fixed_point(ConfinementPotential.quadratic(), InteractionKernel.zero(), _line(), omega=1.5)


def test_nonpositive_kernel_needs_an_override():
    grid = _line()
    V = ConfinementPotential.quadratic()
    k = InteractionKernel.constant(-0.5)
    with pytest.raises(SteadyStateError):
        steady.solve_fixed_point(V, k, grid)
    # a constant kernel only shifts the exponent, so e^{-V} is still the answer
    state = steady.solve_fixed_point(V, k, grid, allow_nonpositive=True)
    assert state.converged
    assert np.allclose(state.rho_star.values, np.exp(-V.field(grid)), atol=1e-10)


def test_max_iter_reports_an_unconverged_state():
    state = steady.solve_fixed_point(
        ConfinementPotential.quadratic(), InteractionKernel.synchrotron(0.2), _line(), tol=1e-14, max_iter=2
    )
    assert not state.converged
    assert state.iterations == 2
    assert state.summary()["converged"] is False


def test_t_bounds_hold_for_a_positive_kernel():
    report = steady.verify_t_bounds(
        ConfinementPotential.quadratic(), InteractionKernel.synchrotron(0.2), _line(), trials=5
    )
    assert report.passed, report.to_dict()
    assert report.zeta > 0.0
    assert set(report.worst_ratios) >= {"mass", "sup", "lipschitz_l1", "holder_l2"}


def test_random_starts_reach_the_same_steady_state():
    report = steady.check_uniqueness(
        ConfinementPotential.quadratic(),
        InteractionKernel.synchrotron(0.2),
        _line(),
        starts=3,
        rng=np.random.default_rng(11),
        tol=1e-12,
    )
    assert report.converged == 3
    assert report.coincide


def test_kinetic_residual_is_second_order():
    V = ConfinementPotential.quadratic()
    residuals = []
    for nodes in (201, 401):
        grid = _line(nodes=nodes, half_width=10.0)
        state = steady.solve_fixed_point(V, InteractionKernel.zero(), grid)
        residuals.append(steady.verify_steady_kinetic(state, n_modes=8, limiter="none").relative_residual)
    assert residuals[1] < 1e-2
    assert residuals[0] / residuals[1] > 3.0


def test_free_energy_needs_a_positive_density():
    grid = _line(nodes=33)
    rho = DensityField(np.exp(-0.5 * grid.axis() ** 2), grid)
    assert np.isfinite(steady.macro_free_energy(rho, ConfinementPotential.quadratic(), None))
    values = np.array(rho.values)
    values[0] = 0.0
    with pytest.raises(SteadyStateError):
        steady.macro_free_energy(DensityField(values, grid), ConfinementPotential.quadratic(), None)


def test_s_map_and_zeta():
    grid = _line()
    V = ConfinementPotential.quadratic()
    rho = DensityField(np.exp(-V.field(grid)), grid)
    assert np.allclose(steady.s_map(rho, V, InteractionKernel.zero()).values, rho.values)
    shifted = steady.s_map(rho, V, InteractionKernel.constant(0.5)).values
    assert np.allclose(shifted, np.exp(-0.5) * rho.values, rtol=1e-10)
    assert steady.estimate_zeta(V, InteractionKernel.zero(), grid) == 0.0
    assert steady.estimate_zeta(V, InteractionKernel.constant(0.5), grid) == pytest.approx(0.5, rel=1e-10)


def test_s_map_guards_against_overflow():
    grid = _line()
    rho = DensityField(np.full(grid.shape, 1.0 / 16.0), grid)
    with pytest.raises(SteadyStateError):
        steady.s_map(rho, np.full(grid.shape, -800.0), InteractionKernel.zero())
