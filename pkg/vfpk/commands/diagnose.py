"""
Operator-bundle verification around a steady state.

Checks the algebraic identities of the dense linearized operators, the
randomized bounds on the auxiliary operator A, the E_0 sandwich, and the
fixed-point, kernel and kinetic-residual checks for the configured model.
"""

from __future__ import annotations

from typing import Dict

import numpy as np

from vfpk.commands.common import RunContext, model_inputs, obtain_steady, require_one_dimensional, steady_report
from vfpk.config_loader import RUNTIME_CONFIG
from vfpk.core.errors import ConvergenceError
from vfpk.core.logging import get_logger, log_fields
from vfpk.models import kernels
from vfpk.services import bundle as bundle_service, steady as steady_service

logger = get_logger(__name__)

IDENTITY_TOLERANCE = 1e-8
BOUND_SLACK = 1e-10


def _random_bounds(ops: bundle_service.OperatorBundle, trials: int, eps: float, rng: np.random.Generator) -> Dict:
    """A-bounds and the E_0 sandwich on random coefficient vectors."""
    limits = {"A": 0.5, "AL": 0.5 * ops.nu, "TA": 1.0}
    products = {"A": ops.A, "AL": ops.A @ ops.L, "TA": ops.T @ ops.A}
    violations = {name: 0 for name in limits}
    worst = {name: 0.0 for name in limits}
    sandwich_violations = 0
    sandwich_range = [np.inf, -np.inf]
    for _ in range(trials):
        f = rng.standard_normal(ops.size)
        norm = ops.norm(f)
        for name, product in products.items():
            ratio = ops.norm(product @ f) / norm
            worst[name] = max(worst[name], ratio / limits[name] if limits[name] > 0 else ratio)
            if ratio > limits[name] * (1.0 + BOUND_SLACK) + BOUND_SLACK:
                violations[name] += 1
        e0 = 0.5 * norm**2 + eps * float(f @ ops.gram @ (ops.A @ f))
        scaled = e0 / norm**2
        sandwich_range = [min(sandwich_range[0], scaled), max(sandwich_range[1], scaled)]
        if not 0.25 - 1e-12 <= scaled <= 0.75 + 1e-12:
            sandwich_violations += 1
    return {
        "trials": trials,
        "violations": violations,
        "worst_ratio_to_limit": worst,
        "e0_sandwich": {"eps": eps, "violations": sandwich_violations, "range": sandwich_range},
    }


def run_diagnose(ctx: RunContext) -> int:
    cfg = ctx.cfg
    require_one_dimensional(cfg, "diagnose")
    grid, potential, kernel = model_inputs(ctx)
    steady = obtain_steady(ctx, potential, kernel, grid)
    if not steady.converged:
        raise ConvergenceError("steady state did not converge", iterations=steady.iterations)
    rng = ctx.rng
    trials = cfg.experiment.trials

    split = kernels.even_odd_split(kernel, grid) if grid.is_symmetric else None
    ops = bundle_service.assemble_discrete_operators(steady, split, cfg.velocity.n_modes, cfg.velocity.nu)
    identities = ops.identity_report()
    identity_failures = [
        name for name in ("skew_T", "symmetric_L", "pi_t_pi", "pi_self_adjoint", "dissipation_lambda")
        if identities[name] > IDENTITY_TOLERANCE
    ]
    bounds = _random_bounds(ops, trials, cfg.diagnostics.eps, rng)
    lambda_m = bundle_service.macroscopic_coercivity_constant(ops)

    t_bounds = steady_service.verify_t_bounds(potential, kernel, grid, trials=trials, rng=rng)
    positivity = kernels.verify_positivity(kernel, grid, rng=rng)
    p, q, applicable = kernels.lebesgue_exponents(kernel)
    kinetic = steady_service.verify_steady_kinetic(
        steady, n_modes=cfg.velocity.n_modes, nu=cfg.velocity.nu, limiter=cfg.evolve.limiter
    )

    passed = (
        not identity_failures
        and not any(bounds["violations"].values())
        and bounds["e0_sandwich"]["violations"] == 0
        and t_bounds.passed
    )
    report = {
        "passed": passed,
        "identity_failures": identity_failures,
        "bounds": bounds,
        "lambda_m": lambda_m,
        "t_bounds": t_bounds.to_dict(),
        "positivity": positivity.to_dict(),
        "lebesgue": {"p": p, "q": q, "theorem_applicable": applicable},
        "coercivity": kernels.coercivity_estimate(kernel, grid, cfg.experiment.theta).to_dict() if grid.is_symmetric else None,
        "kinetic_residual": kinetic.to_dict(),
        "steady": steady_report(steady),
    }
    ctx.write_report("diagnose_report.json", report)
    if identity_failures or RUNTIME_CONFIG["verbose_reports"]:
        ctx.write_report("bundle_report.json", {"identities": identities, "tolerance": IDENTITY_TOLERANCE})
    if not passed:
        logger.warning("operator checks reported violations", extra=log_fields(identity_failures=identity_failures))
    return 0
