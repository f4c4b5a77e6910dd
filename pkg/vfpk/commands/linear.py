from __future__ import annotations

from typing import Optional

import numpy as np

from vfpk.commands.common import RunContext
from vfpk.commands.evolve import execute_evolution
from vfpk.core.schema import RunConfig
from vfpk.services import solver


def _source(cfg: RunConfig) -> Optional[solver.SourceTerm]:
    exp = cfg.experiment
    if exp.source == "none":
        return None

    def profile(x: np.ndarray) -> np.ndarray:
        return np.exp(-0.5 * ((x - exp.center) / exp.width) ** 2)

    return solver.manufactured_source(profile, exp.source_amplitude, exp.source_omega, exp.source_mode)


def run_linear(ctx: RunContext) -> int:
    """Evolution of the linearization around the steady state, with an optional manufactured source."""
    report = execute_evolution(ctx, "linearized", _source(ctx.cfg))
    ctx.write_report("linear_report.json", report)
    return 0
