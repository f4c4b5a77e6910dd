"""Shared plumbing for the command runners: run directories, steady states, initial data."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from vfpk.core.errors import ConfigError
from vfpk.core.grid import DensityField, SpatialGrid
from vfpk.core.logging import bind_run, get_logger, log_fields
from vfpk.core.persistence import generate_run_id, read_density_snapshot, write_csv, write_json
from vfpk.core.schema import RunConfig, build_grid, build_kernel, build_potential, config_dict, dump_config
from vfpk.models.kernels import InteractionKernel
from vfpk.models.potentials import ConfinementPotential
from vfpk.services import diagnostics, solver, spectral, steady as steady_service
from vfpk.services.diagnostics import DiagnosticContext, DiagnosticSeries
from vfpk.services.hermite import PhaseSpaceState
from vfpk.services.steady import SteadyState

logger = get_logger(__name__)


@dataclass
class RunContext:
    cfg: RunConfig
    out_dir: Path
    base_dir: Optional[Path]
    run_id: str

    @property
    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.cfg.run.seed)

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def write_report(self, name: str, payload: Dict) -> Path:
        payload = dict(payload, run_id=self.run_id)
        return write_json(self.path(name), payload)


def prepare_run(cfg: RunConfig, out_dir: Optional[Path] = None, base_dir: Optional[Path] = None) -> RunContext:
    """Create the run directory and record the config and its run id."""
    out_dir = Path(out_dir) if out_dir is not None else Path(cfg.run.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_id = generate_run_id(config_dict(cfg), cfg.run.seed)
    (out_dir / "config.ini").write_text(dump_config(cfg))
    (out_dir / "run_id").write_text(run_id + "\n")
    bind_run(run_id)
    logger.info("run prepared", extra=log_fields(out_dir=str(out_dir), run_id=run_id))
    return RunContext(cfg=cfg, out_dir=out_dir, base_dir=base_dir, run_id=run_id)


def require_one_dimensional(cfg: RunConfig, command: str) -> None:
    if cfg.grid.dim != 1:
        raise ConfigError("grid.dim", f"{command} runs on one-dimensional grids only")


def model_inputs(ctx: RunContext) -> Tuple[SpatialGrid, ConfinementPotential, InteractionKernel]:
    grid = build_grid(ctx.cfg)
    potential = build_potential(ctx.cfg, grid, ctx.base_dir)
    kernel = build_kernel(ctx.cfg, grid.dim, ctx.base_dir)
    return grid, potential, kernel


def _steady_from_snapshot(ctx: RunContext, potential: ConfinementPotential, kernel: InteractionKernel) -> SteadyState:
    path = Path(ctx.cfg.steady.snapshot)
    if not path.is_absolute() and ctx.base_dir is not None:
        path = ctx.base_dir / path
    grid, rho, v_star = read_density_snapshot(path)
    if grid.shape != build_grid(ctx.cfg).shape:
        raise ConfigError("steady.snapshot", "snapshot grid does not match the configured grid")
    v_field = potential.field(grid)
    logger.info("steady state loaded", extra=log_fields(path=str(path)))
    return SteadyState(
        rho_star=DensityField(rho, grid),
        v_star=v_star,
        v_field=v_field,
        zeta=steady_service.estimate_zeta(v_field, kernel, grid),
        residuals=[],
        converged=True,
        kernel=kernel,
    )


def obtain_steady(ctx: RunContext, potential: ConfinementPotential, kernel: InteractionKernel, grid: SpatialGrid) -> SteadyState:
    if ctx.cfg.steady.snapshot:
        return _steady_from_snapshot(ctx, potential, kernel)
    block = ctx.cfg.steady
    return steady_service.solve_fixed_point(
        potential,
        kernel,
        grid,
        omega=block.omega,
        tol=block.tol,
        max_iter=block.max_iter,
        allow_nonpositive=block.allow_nonpositive,
    )


def _profile(cfg: RunConfig, grid: SpatialGrid, rng: np.random.Generator) -> np.ndarray:
    exp = cfg.experiment
    x = grid.axis()
    if exp.perturbation == "bump":
        return np.exp(-0.5 * ((x - exp.center) / exp.width) ** 2)
    if exp.perturbation == "rough":
        return rng.standard_normal(grid.size)
    return np.zeros(grid.size)


def _mean_free(profile: np.ndarray, steady: SteadyState) -> np.ndarray:
    rho = steady.rho_star.values
    grid = steady.grid
    return profile - grid.integrate(rho * profile) / grid.integrate(rho)


def initial_state(ctx: RunContext, steady: SteadyState, linear: bool) -> PhaseSpaceState:
    """
    Initial data for evolve/linear runs.

    bump and rough perturb the density by amplitude * rho_star * profile with
    the profile made mean-free, so the perturbation carries no mass.
    shifted_gaussian ignores the steady state: a Gaussian blob centred at
    `center` with standard deviation `width`, drifting at `mean_velocity`.
    """
    cfg = ctx.cfg
    exp = cfg.experiment
    n_modes = cfg.velocity.n_modes
    grid = steady.grid
    if exp.perturbation == "shifted_gaussian":
        if linear:
            raise ConfigError("experiment.perturbation", "shifted_gaussian data is for nonlinear runs")
        x = grid.axis()
        rho = np.exp(-0.5 * ((x - exp.center) / exp.width) ** 2) / (np.sqrt(2.0 * np.pi) * exp.width)
        return PhaseSpaceState.maxwellian(DensityField(rho, grid), n_modes, exp.mean_velocity)

    a0 = exp.amplitude * _mean_free(_profile(cfg, grid, ctx.rng), steady)
    if linear:
        a = np.zeros((n_modes, grid.size))
        a[0] = a0
        if n_modes > 1:
            a[1] = exp.mean_velocity
        return diagnostics.perturbation_state(a, steady)
    rho = steady.rho_star.values * (1.0 + a0)
    if np.any(rho < 0):
        raise ConfigError("experiment.amplitude", "perturbed density is negative")
    return PhaseSpaceState.maxwellian(DensityField(rho, grid), n_modes, exp.mean_velocity)


def shifted_gaussian_moments(cfg: RunConfig) -> Tuple[float, float, float, float, float]:
    exp = cfg.experiment
    x0, u0, w = exp.center, exp.mean_velocity, exp.width
    return (x0, u0, x0 * x0 + w * w, x0 * u0, 1.0 + u0 * u0)


def evolve_config(cfg: RunConfig, mode: str, source: Optional[solver.SourceTerm] = None) -> solver.EvolveConfig:
    block = cfg.evolve
    return solver.EvolveConfig(
        nu=cfg.velocity.nu,
        dt=block.dt,
        t_end=block.t_end,
        cfl_guard=block.cfl_guard,
        filter_on=block.filter_on,
        mode=mode,
        output_stride=block.output_stride,
        limiter=block.limiter,
        source=source,
    )


def diagnostic_context(cfg: RunConfig, steady: SteadyState, kernel: InteractionKernel, mode: str) -> DiagnosticContext:
    block = cfg.diagnostics
    return DiagnosticContext(
        steady=steady,
        kernel=kernel,
        v_field=steady.v_field,
        mode=mode,
        nu=cfg.velocity.nu,
        eps=block.eps,
        a=block.a,
        b=block.b,
        c=block.c,
        hs_orders=tuple(block.hs_orders),
        moments=block.moments,
        g_functional=block.g_functional,
        dissipation=block.dissipation,
    )


def postprocess_series(cfg: RunConfig, series: DiagnosticSeries) -> Dict:
    """
    Fit every configured column on the window and add the weighted columns.

    The summary's "fit" is the first column's fit, which also supplies the weight rate
    when diagnostics.lambda_hat is unset; "fits" holds all of them by column.
    """
    block = cfg.diagnostics
    summary: Dict = {}
    lambda_hat = block.lambda_hat
    if block.fit_window is not None:
        fits = {}
        for column in block.fit_columns:
            if column not in series.columns:
                raise ConfigError("diagnostics.fit_columns", f"no such diagnostic column '{column}'")
            fit = diagnostics.fit_series(series, column, tuple(block.fit_window), block.fit_kind)
            fits[column] = dict(fit.to_dict(), column=column, kind=block.fit_kind)
        summary["fit"] = fits[block.fit_columns[0]]
        summary["fits"] = fits
        if lambda_hat is None:
            lambda_hat = summary["fit"]["lambda_hat"]
    if block.weights:
        for column in block.weights:
            if column not in series.columns:
                raise ConfigError(f"diagnostics.weights.{column}", "no such diagnostic column")
        diagnostics.weighted_columns(series, lambda_hat or 0.0, dict(block.weights))
        summary["weight_lambda"] = lambda_hat or 0.0
    return summary


def write_series(ctx: RunContext, name: str, series: DiagnosticSeries) -> Path:
    return write_csv(ctx.path(name), series.columns, series.rows)


def steady_report(steady: SteadyState, with_gap: bool = True) -> Dict:
    """Steady-state summary, with the steady-measure Poincare gap on 1D grids."""
    report = dict(steady.summary(), kernel=steady.kernel.describe(), grid=steady.grid.describe())
    if with_gap and steady.grid.dim == 1:
        report["gap"] = spectral.steady_measure_gap(steady).to_dict()
    return report
