import os
import json
import logging
from datetime import datetime, timezone
from typing import Dict, Any, Optional

from vfpk.config_loader import RUNTIME_CONFIG


class JSONFormatter(logging.Formatter):
    """Custom JSON formatter for structured logging"""

    def format(self, record: logging.LogRecord) -> str:
        log_entry: Dict[str, Any] = {
            "timestamp": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }

        # Add exception info if present
        if record.exc_info:
            log_entry["exception"] = self.formatException(record.exc_info)

        # Add extra fields from record (iteration, residual, step, t, ...)
        if hasattr(record, "extra_fields"):
            log_entry.update(record.extra_fields)

        # Run context, set by the command runners
        if hasattr(record, "run_id"):
            log_entry["run_id"] = record.run_id
        if hasattr(record, "command"):
            log_entry["command"] = record.command

        return json.dumps(log_entry, default=_json_default)


def _json_default(value: Any) -> Any:
    # numpy scalars and paths end up in extra_fields
    if hasattr(value, "item"):
        return value.item()
    return str(value)


class RunContextFilter(logging.Filter):
    """Stamps the active run id and command onto records that do not carry their own."""

    def __init__(self) -> None:
        super().__init__()
        self.run_id: Optional[str] = None
        self.command: Optional[str] = None

    def filter(self, record: logging.LogRecord) -> bool:
        if self.run_id and not hasattr(record, "run_id"):
            record.run_id = self.run_id
        if self.command and not hasattr(record, "command"):
            record.command = self.command
        return True


run_context = RunContextFilter()


def bind_run(run_id: Optional[str] = None, command: Optional[str] = None) -> None:
    """Set the run stamped on subsequent log records; None leaves a field unchanged."""
    if run_id is not None:
        run_context.run_id = run_id
    if command is not None:
        run_context.command = command


def setup_logging(level: Optional[str] = None, quiet: bool = False) -> None:
    """Setup structured JSON logging for the laboratory"""

    # Get log level from argument, then environment
    log_level_str = (level or RUNTIME_CONFIG["log_level"] or "INFO").upper()
    log_level = getattr(logging, log_level_str, logging.INFO)
    if quiet:
        log_level = max(log_level, logging.WARNING)

    # Configure root logger
    logger = logging.getLogger()
    logger.setLevel(log_level)

    # Remove existing handlers
    for handler in logger.handlers[:]:
        logger.removeHandler(handler)

    # Create console handler with JSON formatter
    console_handler = logging.StreamHandler()
    console_handler.setLevel(log_level)
    json_formatter = JSONFormatter()
    console_handler.setFormatter(json_formatter)
    console_handler.addFilter(run_context)
    logger.addHandler(console_handler)

    # Create file handler if LOG_FILE is set
    log_file = os.getenv("LOG_FILE") or RUNTIME_CONFIG["log_file"]
    if log_file:
        try:
            directory = os.path.dirname(log_file)
            if directory:
                os.makedirs(directory, exist_ok=True)
            file_handler = logging.FileHandler(log_file)
            file_handler.setLevel(log_level)
            file_handler.setFormatter(json_formatter)
            file_handler.addFilter(run_context)
            logger.addHandler(file_handler)
        except OSError as e:
            logger.warning(f"Failed to setup file logging: {e}")

    # scipy/joblib chatter stays at warning
    logging.getLogger("joblib").setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """Get a logger instance with the given name"""
    return logging.getLogger(name)


def log_fields(**fields: Any) -> Dict[str, Any]:
    """Build the `extra` mapping understood by JSONFormatter."""
    return {"extra_fields": fields}
