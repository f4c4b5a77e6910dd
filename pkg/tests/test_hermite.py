import numpy as np
import pytest
from numpy.polynomial.hermite_e import hermegauss

from vfpk.core.errors import GridError
from vfpk.core.grid import DensityField, SpatialGrid
from vfpk.services import hermite
from vfpk.services.hermite import HermiteBasis, PhaseSpaceState


def _gaussian_state(n_modes: int = 8, mean_velocity: float = 0.0) -> PhaseSpaceState:
    grid = SpatialGrid.uniform(1, 6.0, 65)
    rho = np.exp(-0.5 * grid.axis() ** 2) / np.sqrt(2.0 * np.pi)
    return PhaseSpaceState.maxwellian(DensityField(rho, grid), n_modes, mean_velocity)


def test_ladder_matrices():
    basis = HermiteBasis(5)
    G = basis.creation
    assert G[3, 2] == pytest.approx(np.sqrt(3.0))
    assert np.all(np.triu(G) == 0.0)
    assert np.allclose(basis.v_matrix, G + G.T)
    # d_v^* d_v is the number operator
    assert np.allclose(np.diag(G @ basis.annihilation), basis.mode_index)


def test_characteristic_speeds_are_gauss_hermite_nodes():
    speeds, vectors = HermiteBasis(12).characteristics
    nodes, _ = hermegauss(12)
    assert np.allclose(np.sort(speeds), np.sort(nodes), atol=1e-10)
    assert np.allclose(vectors.T @ vectors, np.eye(12), atol=1e-12)
    assert np.abs(speeds).max() == pytest.approx(HermiteBasis(12).max_speed)
    assert HermiteBasis(64).max_speed == pytest.approx(14.89, abs=0.01)


def test_hermite_polynomials_are_orthonormal():
    v = np.linspace(-20.0, 20.0, 2001)
    weights = np.full(v.size, v[1] - v[0])
    weights[[0, -1]] *= 0.5
    H = hermite.hermite_polynomials(10, v)
    gram = (H * hermite.maxwellian(v)[None, :] * weights[None, :]) @ H.T
    assert np.allclose(gram, np.eye(10), atol=1e-10)


def test_shifted_maxwellian_coefficients():
    state = _gaussian_state(n_modes=24, mean_velocity=0.5)
    v = np.linspace(-6.0, 6.0, 121)
    values = hermite.evaluate_on_velocity_grid(state, v)
    rho = state.coeffs[0]
    expected = rho[:, None] * hermite.maxwellian(v - 0.5)[None, :]
    assert np.allclose(values, expected, atol=1e-12)


def test_moments_of_a_shifted_maxwellian():
    state = _gaussian_state(mean_velocity=0.3)
    rho, current, energy = hermite.moments(state)
    assert np.allclose(current, 0.3 * rho.values)
    assert np.allclose(energy, 0.5 * (1.0 + 0.09) * rho.values)


def test_fokker_planck_decay_damps_row_n_at_rate_n():
    state = _gaussian_state(mean_velocity=1.0)
    decayed = hermite.fokker_planck_decay(state, nu=2.0, dt=0.1)
    for n in range(state.n_modes):
        assert np.allclose(decayed.coeffs[n], np.exp(-0.2 * n) * state.coeffs[n])


def test_filter_keeps_low_modes_and_kills_the_top():
    basis = HermiteBasis(32)
    factors = basis.filter_factors
    assert factors[0] == 1.0
    assert factors[4] == pytest.approx(1.0, abs=1e-12)
    assert factors[-1] == pytest.approx(np.exp(-36.0 * (31.0 / 32.0) ** 36))
    assert np.all(np.diff(factors) <= 0.0)


def test_state_validation():
    grid = SpatialGrid.uniform(1, 1.0, 5)
    with pytest.raises(GridError):
        PhaseSpaceState(np.zeros((3, 4)), grid)
    with pytest.raises(GridError):
        HermiteBasis(1)
    state = PhaseSpaceState(np.zeros((3, 5)), grid)
    with pytest.raises(ValueError):
        state.coeffs[0, 0] = 1.0


def test_ladder_actions_on_a_drifting_maxwellian():
    u = 0.4
    state = _gaussian_state(12, mean_velocity=u)
    lowered = hermite.apply_dv(state).coeffs
    # d_v of the shifted Maxwellian ratio is u times itself, up to the top row
    assert np.allclose(lowered[:-1], u * state.coeffs[:-1], atol=1e-12)
    raised = hermite.apply_dv_star(state).coeffs
    assert np.all(raised[0] == 0.0)
    assert np.allclose(raised[1], state.coeffs[0])
    assert np.allclose(hermite.apply_v_multiplication(state).coeffs, lowered + raised)
