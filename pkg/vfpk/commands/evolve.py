from __future__ import annotations

from typing import Dict, Optional

import numpy as np

from vfpk.commands.common import (
    RunContext,
    diagnostic_context,
    evolve_config,
    initial_state,
    model_inputs,
    obtain_steady,
    postprocess_series,
    require_one_dimensional,
    shifted_gaussian_moments,
    steady_report,
    write_series,
)
from vfpk.core.errors import ConvergenceError, NonFiniteStateError
from vfpk.core.logging import get_logger, log_fields
from vfpk.core.persistence import write_state_snapshot
from vfpk.services import diagnostics, solver
from vfpk.services.diagnostics import MOMENT_COLUMNS, DiagnosticSeries
from vfpk.services.hermite import PhaseSpaceState

logger = get_logger(__name__)


def _snapshot(ctx: RunContext, name: str, state: PhaseSpaceState) -> None:
    write_state_snapshot(ctx.path(name), state.coeffs, state.grid.half_widths[0], state.time, ctx.cfg.velocity.nu)


def _oracle_columns(ctx: RunContext, series: DiagnosticSeries) -> Optional[float]:
    """Kinetic OU reference moments next to the measured ones; returns the worst deviation."""
    cfg = ctx.cfg
    applicable = (
        cfg.experiment.perturbation == "shifted_gaussian"
        and cfg.kernel.family == "zero"
        and cfg.potential.family == "quadratic"
        and cfg.diagnostics.moments
    )
    if not applicable or len(series) == 0:
        return None
    t = series.column("t")
    reference = solver.ou_moment_oracle(t, shifted_gaussian_moments(cfg), cfg.velocity.nu)
    worst = 0.0
    for j, name in enumerate(MOMENT_COLUMNS):
        series.add_column(f"oracle_{name}", list(reference[:, j]))
        worst = max(worst, float(np.nanmax(np.abs(series.column(name) - reference[:, j]))))
    logger.info("OU oracle comparison", extra=log_fields(max_deviation=worst))
    return worst


def execute_evolution(ctx: RunContext, mode: str, source: Optional[solver.SourceTerm] = None) -> Dict:
    """Steady state, initial data, time stepping and every output file of one run."""
    cfg = ctx.cfg
    require_one_dimensional(cfg, "evolve" if mode == "nonlinear" else "linear")
    grid, potential, kernel = model_inputs(ctx)
    steady = obtain_steady(ctx, potential, kernel, grid)
    if not steady.converged:
        raise ConvergenceError("steady state did not converge", iterations=steady.iterations)

    linear = mode == "linearized"
    initial = initial_state(ctx, steady, linear)
    context = diagnostic_context(cfg, steady, kernel, mode)
    try:
        series, final = solver.evolve(initial, steady, kernel, evolve_config(cfg, mode, source), context)
    except NonFiniteStateError as e:
        if e.last_good is not None:
            _snapshot(ctx, "last_good.pss", e.last_good)
        raise

    if cfg.experiment.perturbation == "rough" and len(series):
        # x-derivatives of white-noise data are not meaningful numbers
        series.rows[0]["h1x_fstar"] = None
        series.rows[0]["gradx_fstar"] = None
    report: Dict = {"mode": mode, "steady": steady_report(steady)}
    report.update(postprocess_series(cfg, series))
    deviation = _oracle_columns(ctx, series)
    if deviation is not None:
        report["oracle_max_deviation"] = deviation
    if "dissipation" in series.columns and len(series) >= 3:
        report["dissipation_residual"] = diagnostics.dissipation_residual(series)

    masses = series.column("mass")
    report["mass_change"] = float(abs(masses[-1] - masses[0]))
    report["samples"] = len(series)
    report["final_time"] = final.time

    write_series(ctx, "series.csv", series)
    _snapshot(ctx, "final.pss", final)
    if source is not None:
        report["source"] = source.label
    return report


def run_evolve(ctx: RunContext) -> int:
    report = execute_evolution(ctx, "nonlinear")
    ctx.write_report("evolve_report.json", report)
    return 0
