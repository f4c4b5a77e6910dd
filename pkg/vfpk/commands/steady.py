from __future__ import annotations

from vfpk.commands.common import RunContext, model_inputs, obtain_steady, steady_report
from vfpk.core.errors import ConvergenceError
from vfpk.core.logging import get_logger, log_fields
from vfpk.core.persistence import write_csv, write_density_snapshot
from vfpk.services import steady as steady_service

logger = get_logger(__name__)

CONVERGENCE_COLUMNS = ("iteration", "residual", "contraction_factor", "zeta", "free_energy")


def run_steady(ctx: RunContext) -> int:
    """Solve rho = T(rho); write the snapshot, the convergence history and a report."""
    cfg = ctx.cfg
    grid, potential, kernel = model_inputs(ctx)
    steady = obtain_steady(ctx, potential, kernel, grid)

    rows = []
    for index, residual in enumerate(steady.residuals):
        rows.append({
            "iteration": index + 1,
            "residual": residual,
            # factor i compares residual i+1 with residual i
            "contraction_factor": steady.contraction_factors[index - 1] if 0 < index <= len(steady.contraction_factors) else None,
            "zeta": steady.zeta,
            "free_energy": steady.free_energies[index] if index < len(steady.free_energies) else None,
        })
    write_csv(ctx.path("convergence.csv"), CONVERGENCE_COLUMNS, rows)
    write_density_snapshot(ctx.path("steady.rho"), grid, steady.rho_star.values, steady.v_star)

    report = steady_report(steady)
    if cfg.experiment.uniqueness_starts > 0:
        uniqueness = steady_service.check_uniqueness(
            potential,
            kernel,
            grid,
            starts=cfg.experiment.uniqueness_starts,
            rng=ctx.rng,
            tol=cfg.steady.tol,
            omega=cfg.steady.omega,
            max_iter=cfg.steady.max_iter,
            allow_nonpositive=cfg.steady.allow_nonpositive,
        )
        report["uniqueness"] = uniqueness.to_dict()
    ctx.write_report("steady_report.json", report)

    if not steady.converged:
        logger.error("steady state did not converge", extra=log_fields(iterations=steady.iterations))
        return ConvergenceError.exit_code
    return 0
