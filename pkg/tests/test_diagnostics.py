import numpy as np
import pytest

from vfpk.core.errors import ConfigError, FitError
from vfpk.core.grid import SpatialGrid
from vfpk.models.kernels import InteractionKernel
from vfpk.models.potentials import ConfinementPotential
from vfpk.services import diagnostics
from vfpk.services.diagnostics import DiagnosticSeries, NormRecord
from vfpk.services.hermite import PhaseSpaceState
from vfpk.services.steady import solve_fixed_point


def _steady(nodes: int = 161, half_width: float = 8.0):
    grid = SpatialGrid.uniform(1, half_width, nodes)
    return solve_fixed_point(ConfinementPotential.quadratic(), InteractionKernel.zero(), grid)


def _perturbation(steady, rows: dict, n_modes: int = 6) -> PhaseSpaceState:
    a = np.zeros((n_modes, steady.grid.size))
    for n, values in rows.items():
        a[n] = values
    return diagnostics.perturbation_state(a, steady)


def test_critical_smoothness():
    assert diagnostics.critical_smoothness(3, 6.0) == pytest.approx(0.25)
    assert diagnostics.critical_smoothness(2, 2.0) == pytest.approx(1.0)
    assert diagnostics.critical_smoothness(3, 9.0) == 0.0
    assert diagnostics.critical_smoothness(1, np.inf) == 0.0


def test_norms_of_simple_perturbations():
    steady = _steady()
    constant_density = _perturbation(steady, {0: 1.0})
    assert diagnostics.l2_norm(constant_density) == pytest.approx(1.0, rel=1e-10)
    # a constant a_0 has no x-gradient, up to the difference stencil
    assert diagnostics.h1x_norm(constant_density, steady) == pytest.approx(1.0, rel=1e-3)
    assert diagnostics.gradv_squared(constant_density) == 0.0
    assert diagnostics.hs_norm(constant_density, 0.0) == pytest.approx(1.0, rel=1e-8)
    assert diagnostics.hs_norm(constant_density, 1.0) > diagnostics.hs_norm(constant_density, 0.5)

    current = _perturbation(steady, {1: 1.0, 2: 1.0})
    assert diagnostics.gradv_squared(current) == pytest.approx(3.0, rel=1e-10)


def test_e0_without_current_is_half_the_squared_norm():
    steady = _steady()
    state = _perturbation(steady, {0: np.sin(steady.grid.axis())})
    e0 = diagnostics.e0_functional(state, steady, None, eps=0.25)
    assert e0 == pytest.approx(0.5 * diagnostics.l2_norm(state) ** 2, rel=1e-12)


def test_e0_sits_between_quarter_and_three_quarter_norms():
    steady = _steady()
    x = steady.grid.axis()
    state = _perturbation(steady, {0: np.cos(x), 1: np.sin(0.5 * x), 2: 0.3 * x})
    e0 = diagnostics.e0_functional(state, steady, None, eps=0.5)
    squared = diagnostics.l2_norm(state) ** 2
    assert 0.25 * squared - 1e-10 <= e0 <= 0.75 * squared + 1e-10


def test_functional_parameters_are_validated():
    steady = _steady(nodes=33)
    state = _perturbation(steady, {0: 1.0})
    with pytest.raises(ConfigError):
        diagnostics.e0_functional(state, steady, None, eps=0.75)
    with pytest.raises(ConfigError):
        diagnostics.e11_functional(state, steady, None, a=1.0, b=2.0, c=1.0)


def test_g_functional_starts_at_e0():
    steady = _steady()
    x = steady.grid.axis()
    state = _perturbation(steady, {0: np.cos(x), 1: np.sin(x)})
    e0 = diagnostics.e0_functional(state, steady, None)
    assert diagnostics.g_functional(state, steady, None, t=0.0) == pytest.approx(e0)
    assert diagnostics.g_functional(state, steady, None, t=5.0) == pytest.approx(
        diagnostics.e11_functional(state, steady, None)
    )


def test_free_energy_and_dissipation_vanish_at_equilibrium_level():
    steady = _steady(nodes=201, half_width=10.0)
    state = PhaseSpaceState.maxwellian(steady.rho_star, 8)
    energy = diagnostics.kinetic_free_energy(state, steady.v_field, None)
    assert energy == pytest.approx(-0.5 * np.log(2.0 * np.pi), abs=1e-8)
    terms = diagnostics.dissipation_terms(state, None, nu=1.0)
    assert terms["dissipation"] == pytest.approx(0.0, abs=1e-12)
    assert terms["odd_work"] == 0.0


def test_moment_columns_of_a_drifting_state():
    steady = _steady()
    state = PhaseSpaceState.maxwellian(steady.rho_star, 6, mean_velocity=0.4)
    moments = diagnostics.moment_columns(state)
    assert moments["mean_x"] == pytest.approx(0.0, abs=1e-12)
    assert moments["mean_v"] == pytest.approx(0.4)
    assert moments["m_xx"] == pytest.approx(1.0, rel=1e-8)
    assert moments["m_vv"] == pytest.approx(1.16)


def test_context_samples_every_configured_column():
    steady = _steady()
    context = diagnostics.DiagnosticContext(
        steady=steady,
        kernel=InteractionKernel.zero(),
        v_field=steady.v_field,
        hs_orders=(0.5,),
        moments=True,
        g_functional=True,
    )
    state = PhaseSpaceState.maxwellian(steady.rho_star, 6)
    row = context.sample(state).as_row()
    assert set(context.columns) <= set(row)
    assert row["l2_fstar"] == pytest.approx(0.0, abs=1e-12)
    assert row["hs_0.5"] == pytest.approx(0.0, abs=1e-12)


def test_exponential_and_power_fits():
    t = np.linspace(0.0, 5.0, 51)
    fit = diagnostics.fit_rates(t, 3.0 * np.exp(-0.7 * t), (1.0, 5.0))
    assert fit.lambda_hat == pytest.approx(0.7)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.samples == 41

    t = np.linspace(0.01, 1.0, 100)
    fit = diagnostics.fit_rates(t, 2.0 * t**-1.5, (0.01, 1.0), kind="power")
    assert fit.exponent_hat == pytest.approx(-1.5)
    assert fit.lambda_hat == 0.0

    fit = diagnostics.fit_rates(t, t**-0.5 * np.exp(-2.0 * t), (0.01, 1.0), kind="combined")
    assert fit.lambda_hat == pytest.approx(2.0)
    assert fit.exponent_hat == pytest.approx(-0.5)


def test_fits_reject_bad_windows():
    t = np.linspace(0.0, 1.0, 20)
    with pytest.raises(FitError):
        diagnostics.fit_rates(t, np.exp(-t), (0.0, 0.2))
    with pytest.raises(FitError):
        diagnostics.fit_rates(t, np.exp(-t) - 0.5, (0.0, 1.0))
    with pytest.raises(FitError):
        diagnostics.fit_rates(t, np.exp(-t), (0.0, 1.0), kind="power")


def test_weights_and_weighted_columns():
    assert diagnostics.weight(np.array([0.25]), 1.0, 2.0)[0] == pytest.approx(np.exp(0.25) * 0.25)
    assert diagnostics.weight(np.array([4.0]), 0.0, 3.0)[0] == pytest.approx(1.0)
    series = DiagnosticSeries()
    for t in (0.5, 1.0, 2.0):
        series.append(NormRecord(t=t, mass=1.0, l2=np.exp(-t)))
    diagnostics.weighted_columns(series, 1.0, {"l2_fstar": 0.0})
    assert np.allclose(series.column("w0_l2_fstar"), 1.0)


def test_series_columns():
    series = DiagnosticSeries()
    series.append(NormRecord(t=0.0, mass=1.0))
    with pytest.raises(FitError):
        series.column("nope")
    series.add_column("extra", [float("inf")])
    assert series.rows[0]["extra"] is None
    assert np.isnan(series.column("l2_fstar")[0])
    with pytest.raises(FitError):
        series.add_column("extra", [1.0, 2.0])


def test_dissipation_residual_of_a_balanced_series():
    t = np.linspace(0.0, 1.0, 101)
    rows = [{"t": s, "free_energy": np.exp(-s), "dissipation": np.exp(-s), "odd_work": 0.0} for s in t]
    series = DiagnosticSeries.from_rows(["t", "free_energy", "dissipation", "odd_work"], rows)
    assert diagnostics.dissipation_residual(series) < 1e-3
    with pytest.raises(FitError):
        diagnostics.dissipation_residual(DiagnosticSeries.from_rows(series.columns, rows[:2]))


def test_twisted_norm_adds_the_even_interaction_energy():
    from vfpk.models import kernels

    steady = _steady()
    state = _perturbation(steady, {0: 1.0})
    assert diagnostics.twisted_norm(state, steady, None) == pytest.approx(1.0, rel=1e-10)
    split = kernels.even_odd_split(InteractionKernel.constant(0.5), steady.grid)
    # rho_f = rho_star has unit mass, so the interaction term is 0.5
    assert diagnostics.twisted_norm(state, steady, split) == pytest.approx(np.sqrt(1.5), rel=1e-10)
