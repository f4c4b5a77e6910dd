"""
Minimal runtime config loader for the vfpk laboratory.

Numerical modules import `RUNTIME_CONFIG` directly. Only switches that must never
change a computed result live here: thread counts and logging destinations.
Everything that shapes a result belongs in the run config (see vfpk.core.schema).
"""

from __future__ import annotations

import os

from dotenv import load_dotenv

load_dotenv()


def _env_bool(name: str, default: bool = False) -> bool:
    raw = os.getenv(name)
    if raw is None:
        return default
    return raw.strip().lower() in {"1", "true", "yes", "on"}


def _env_int(name: str, default: int, minimum: int = 1) -> int:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return max(minimum, default)
    try:
        return max(minimum, int(raw.strip()))
    except ValueError:
        return max(minimum, default)


RUNTIME_CONFIG = {
    # Worker count for scipy.fft and sweep points; never affects results.
    "threads": _env_int("VFPK_THREADS", os.cpu_count() or 1),
    "log_level": os.getenv("LOG_LEVEL", "INFO").upper(),
    "log_file": os.getenv("LOG_FILE"),
    # Emit the dense-bundle residual report even when every identity passes.
    "verbose_reports": _env_bool("VFPK_VERBOSE_REPORTS", False),
}


def thread_count() -> int:
    """Re-read VFPK_THREADS so tests and sweeps can adjust it at runtime."""
    return _env_int("VFPK_THREADS", RUNTIME_CONFIG["threads"])
