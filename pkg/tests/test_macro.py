import numpy as np
import pytest

from vfpk.core.errors import ConvergenceError
from vfpk.core.grid import SpatialGrid
from vfpk.models import kernels
from vfpk.models.kernels import InteractionKernel
from vfpk.models.potentials import ConfinementPotential
from vfpk.services import macro
from vfpk.services.steady import solve_fixed_point


def _geometry(kernel: InteractionKernel = InteractionKernel.zero(), nodes: int = 65) -> macro.MacroGeometry:
    grid = SpatialGrid.uniform(1, 6.0, nodes)
    steady = solve_fixed_point(ConfinementPotential.quadratic(), kernel, grid, tol=1e-12)
    return macro.MacroGeometry.from_steady(steady, kernels.even_odd_split(kernel, grid))


def test_staggered_operators_are_adjoint_pairs():
    geometry = _geometry()
    rng = np.random.default_rng(2)
    z = rng.standard_normal(geometry.size)
    u = rng.standard_normal(geometry.size - 1)
    assert geometry.mid_inner(geometry.d(z), u) == pytest.approx(geometry.node_inner(z, geometry.d_star(u)), rel=1e-10)
    assert geometry.node_inner(geometry.e_star(u), z) == pytest.approx(geometry.mid_inner(u, geometry.e(z)), rel=1e-10)


def test_d_star_output_has_zero_mean():
    geometry = _geometry()
    u = np.random.default_rng(4).standard_normal(geometry.size - 1)
    assert geometry.node_inner(geometry.d_star(u), np.ones(geometry.size)) == pytest.approx(0.0, abs=1e-10)


def test_elliptic_solve_with_an_interaction():
    geometry = _geometry(InteractionKernel.synchrotron(0.2))
    f = np.cos(geometry.grid.axis())
    z = macro.solve_dms_elliptic(f, geometry, tol=1e-12)
    residual = geometry.elliptic_operator(z) - f
    assert np.sqrt(geometry.node_inner(residual, residual)) < 1e-9 * np.sqrt(geometry.node_inner(f, f))


def test_midpoint_current_never_grows():
    geometry = _geometry()
    g1 = np.random.default_rng(9).standard_normal(geometry.size)
    w1 = macro.current_at_midpoints(g1, geometry)
    assert geometry.mid_inner(w1, w1) <= float(np.sum(geometry.weights * g1**2)) + 1e-12


def test_auxiliary_vanishes_without_current():
    geometry = _geometry()
    g = np.zeros((4, geometry.size))
    g[0] = np.sqrt(geometry.rho) * np.sin(geometry.grid.axis())
    pairing, z = macro.auxiliary_pairing(g, geometry)
    assert pairing == 0.0
    assert np.all(z == 0.0)


def test_conjugate_gradient_solves_spd_systems():
    rng = np.random.default_rng(1)
    B = rng.standard_normal((12, 12))
    matrix = B @ B.T + 12.0 * np.eye(12)
    b = rng.standard_normal(12)
    cg = macro.ConjugateGradient(lambda x: matrix @ x, lambda a, c: float(a @ c), 12)
    assert np.allclose(matrix @ cg.solve(b, tol=1e-13), b, atol=1e-10)
    assert 0 < cg.iterations <= 12 * 10


def test_conjugate_gradient_detects_indefinite_operators():
    cg = macro.ConjugateGradient(lambda x: -x, lambda a, c: float(a @ c), 3)
    with pytest.raises(ConvergenceError):
        cg.solve(np.ones(3))
