"""
Cartesian parameter sweeps.

Each point is a full run of `sweep.command` in its own subdirectory. Points run
in parallel through joblib and never share mutable state; the manifest lists
every point, including the ones that failed.
"""

from __future__ import annotations

import itertools
import logging
import json
import traceback
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from joblib import Parallel, delayed

from vfpk.commands.common import RunContext, prepare_run
from vfpk.config_loader import thread_count
from vfpk.core.errors import ConfigError, SweepPartialFailure, VFPKError
from vfpk.core.logging import bind_run, get_logger, log_fields, setup_logging
from vfpk.core.persistence import write_csv
from vfpk.core.schema import RunConfig, with_overrides

logger = get_logger(__name__)

MANIFEST_BASE = ("index", "status", "exit_code", "converged", "lambda_hat", "gap", "run_id", "error")


def _unique(values: List[Any], path: str) -> List[Any]:
    seen: List[str] = []
    kept: List[Any] = []
    for value in values:
        key = json.dumps(value, sort_keys=True)
        if key in seen:
            continue
        seen.append(key)
        kept.append(value)
    if len(kept) < len(values):
        logger.warning("duplicate sweep values dropped", extra=log_fields(path=path, given=len(values), kept=len(kept)))
    return kept


def sweep_points(cfg: RunConfig) -> List[Dict[str, Any]]:
    """All parameter combinations, keys in sorted order; no parameters gives one empty point."""
    parameters = cfg.sweep.parameters
    paths = sorted(parameters)
    axes = [_unique(list(parameters[path]), path) for path in paths]
    for path, values in zip(paths, axes):
        if not values:
            raise ConfigError(f"sweep.{path}", "empty value list")
    count = 1
    for values in axes:
        count *= len(values)
    if count > cfg.sweep.max_points:
        raise ConfigError("sweep.max_points", f"sweep has {count} points, more than {cfg.sweep.max_points}")
    return [dict(zip(paths, combo)) for combo in itertools.product(*axes)]


def _runner(command: str):
    from vfpk.commands import evolve, linear, steady

    return {"steady": steady.run_steady, "evolve": evolve.run_evolve, "linear": linear.run_linear}[command]


def _report_name(command: str) -> str:
    return f"{command}_report.json"


def _outcome(out_dir: Path, command: str) -> Tuple[Optional[bool], Optional[float], Optional[float]]:
    path = out_dir / _report_name(command)
    if not path.exists():
        return None, None, None
    report = json.loads(path.read_text())
    steady = report.get("steady", report)
    converged = steady.get("converged")
    gap = (steady.get("gap") or {}).get("gap")
    lambda_hat = (report.get("fit") or {}).get("lambda_hat")
    return converged, lambda_hat, gap


def run_point(
    index: int,
    base: RunConfig,
    point: Dict[str, Any],
    out_dir: Path,
    base_dir: Optional[Path],
    command: str,
) -> Dict[str, Any]:
    """Run one sweep point; failures become manifest rows rather than exceptions."""
    if not logging.getLogger().handlers:
        setup_logging()
    row: Dict[str, Any] = dict(point, index=index, error=None)
    try:
        cfg = with_overrides(base, dict(point, **{"sweep.parameters": {}}))
        ctx = prepare_run(cfg, out_dir, base_dir)
        row["run_id"] = ctx.run_id
        code = _runner(command)(ctx)
        row["status"] = "ok" if code == 0 else "not_converged"
        row["exit_code"] = code
    except VFPKError as e:
        row.update(status="failed", exit_code=e.exit_code, error=e.message)
        logger.error("sweep point failed", extra=log_fields(index=index, error=e.message, **e.fields))
    except Exception as e:  # noqa: BLE001
        row.update(status="crashed", exit_code=1, error=f"{type(e).__name__}: {e}")
        logger.error("sweep point crashed", extra=log_fields(index=index, traceback=traceback.format_exc()))
    converged, lambda_hat, gap = _outcome(out_dir, command)
    row.update(converged=converged, lambda_hat=lambda_hat, gap=gap)
    return row


def run_sweep(ctx: RunContext) -> int:
    cfg = ctx.cfg
    command = cfg.sweep.command
    points = sweep_points(cfg)
    logger.info("sweep started", extra=log_fields(points=len(points), command=command, jobs=thread_count()))

    rows = Parallel(n_jobs=min(thread_count(), len(points)), backend="loky")(
        delayed(run_point)(index, cfg, point, ctx.path(f"point_{index:04d}"), ctx.base_dir, command)
        for index, point in enumerate(points)
    )
    bind_run(ctx.run_id)

    columns = list(MANIFEST_BASE) + sorted(cfg.sweep.parameters)
    write_csv(ctx.path("manifest.csv"), columns, rows)
    failed = [row["index"] for row in rows if row["status"] in ("failed", "crashed")]
    ctx.write_report("sweep_report.json", {
        "command": command,
        "points": len(rows),
        "failed": failed,
        "not_converged": [row["index"] for row in rows if row["status"] == "not_converged"],
    })
    if failed:
        raise SweepPartialFailure("some sweep points failed", failed=failed, points=len(rows))
    return 0
