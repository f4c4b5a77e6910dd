"""
Exception hierarchy for the laboratory.

Every error carries the exit code the CLI returns for it, so command runners
never translate exceptions by hand.
"""

from __future__ import annotations

from typing import Any, Dict, Optional


class VFPKError(Exception):
    exit_code = 1

    def __init__(self, message: str, **fields: Any):
        super().__init__(message)
        self.message = message
        self.fields: Dict[str, Any] = fields


class ConfigError(VFPKError):
    exit_code = 2

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}", path=path)
        self.path = path


class ConvergenceError(VFPKError):
    exit_code = 3


class CFLViolation(VFPKError):
    exit_code = 4


class SweepPartialFailure(VFPKError):
    exit_code = 5


class GridError(VFPKError):
    pass


class PotentialError(VFPKError):
    pass


class KernelError(VFPKError):
    pass


class SteadyStateError(VFPKError):
    pass


class GramError(VFPKError):
    pass


class FitError(VFPKError):
    pass


class SnapshotError(VFPKError):
    pass


class NonFiniteStateError(VFPKError):
    def __init__(self, message: str, last_good: Optional[Any] = None, **fields: Any):
        super().__init__(message, **fields)
        self.last_good = last_good
