from __future__ import annotations

import numpy as np

from vfpk.commands.common import RunContext, model_inputs, obtain_steady
from vfpk.core.logging import get_logger, log_fields
from vfpk.core.schema import build_grid
from vfpk.services import spectral

logger = get_logger(__name__)

# round-off allowance between the discrete gap and the discrete ratios
RATIO_SLACK = 1e-6


def run_poincare(ctx: RunContext) -> int:
    """
    Witten gaps of e^{-V} and of rho_star, plus randomized Poincare ratios in 1D.

    With an interaction (or a loaded snapshot) the ratios are taken in L^2(rho_star),
    i.e. against V_star; otherwise against V.
    """
    cfg = ctx.cfg
    grid, potential, kernel = model_inputs(ctx)
    gap_grid = build_grid(cfg, cfg.experiment.poincare_nodes) if cfg.experiment.poincare_nodes else grid
    bare = spectral.witten_gap(potential.field(gap_grid), gap_grid)
    report = {"bare": bare.to_dict(), "nodes": gap_grid.nodes[0]}

    measure = None
    if kernel.family != "zero" or cfg.steady.snapshot:
        steady = obtain_steady(ctx, potential, kernel, grid)
        measure = spectral.steady_measure_gap(steady)
        report["steady"] = dict(measure.to_dict(), within_envelope=measure.within_envelope())

    if grid.dim == 1:
        if measure is not None:
            v_field, local, constant = steady.v_star, measure, measure.weighted_constant
        else:
            v_field = potential.field(grid)
            local = bare if gap_grid is grid else spectral.witten_gap(v_field, grid)
            constant = spectral.weighted_poincare_constant(v_field, grid)
        rng = ctx.rng
        x = grid.axis()
        ratios, weighted = [], []
        for _ in range(cfg.experiment.trials):
            # smooth random test functions: a few low Fourier modes
            coefficients = rng.standard_normal(4)
            u = sum(c * np.cos((j + 1) * np.pi * x / grid.half_widths[0] + j) for j, c in enumerate(coefficients))
            ratios.append(spectral.poincare_ratio(u, v_field, grid))
            weighted.append(spectral.weighted_poincare_ratio(u, v_field, grid))
        report["randomized"] = {
            "trials": cfg.experiment.trials,
            "measure": local.measure,
            "max_poincare_ratio": float(max(ratios)),
            "poincare_constant": local.poincare_constant,
            "poincare_violations": int(sum(r > local.poincare_constant * (1.0 + RATIO_SLACK) for r in ratios)),
            "max_weighted_ratio": float(max(weighted)),
            "weighted_constant": constant,
            "weighted_violations": int(sum(r > constant * (1.0 + RATIO_SLACK) for r in weighted)),
        }
    logger.info("poincare", extra=log_fields(gap=bare.gap, nodes=gap_grid.nodes[0]))
    ctx.write_report("poincare_report.json", report)
    return 0
