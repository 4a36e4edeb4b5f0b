"""Structured JSON logging for experiment runs.

Records go to stdout as JSON lines, with an optional file copy when
MASKCONS_LOG_FILE is set. Each line carries the run id of the command that
produced it and the process id, so output from parallel cells interleaved in
one stream can be split again by worker.
"""

import json
import logging
import sys
import time
import uuid
from contextvars import ContextVar
from datetime import datetime, timezone

from src.config.settings import get_settings

ROOT_LOGGER = "maskcons"

run_id_var: ContextVar[str] = ContextVar("run_id", default="")


class JSONFormatter(logging.Formatter):
    """One JSON object per record; `extra={"run_data": {...}}` is merged in."""

    def format(self, record: logging.LogRecord) -> str:
        entry = {
            "timestamp": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "run_id": run_id_var.get(""),
            "pid": record.process,
        }
        run_data = getattr(record, "run_data", None)
        if run_data:
            entry.update(run_data)
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry, default=str)


def setup_logging() -> None:
    """(Re)configure the maskcons logger tree from the current settings."""
    settings = get_settings()
    root = logging.getLogger(ROOT_LOGGER)
    root.setLevel(getattr(logging, settings.log_level.upper(), logging.INFO))
    for handler in list(root.handlers):
        root.removeHandler(handler)
        if isinstance(handler, logging.FileHandler):
            handler.close()

    formatter = JSONFormatter()
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    if settings.log_file:
        handlers.append(logging.FileHandler(settings.log_file))
    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)
    root.propagate = False


def init_worker(run_id: str) -> None:
    """ProcessPoolExecutor initializer: carry the parent's run id and log setup into a worker."""
    run_id_var.set(run_id)
    setup_logging()


def get_run_logger(name: str = "") -> logging.Logger:
    """Logger under the maskcons namespace, e.g. get_run_logger("nn")."""
    return logging.getLogger(f"{ROOT_LOGGER}.{name}" if name else ROOT_LOGGER)


def generate_run_id() -> str:
    return uuid.uuid4().hex[:12]


class RunTimer:
    """Wall-clock seconds spent inside the with-block."""

    def __init__(self):
        self.start_time: float = 0.0
        self.elapsed_s: float = 0.0

    def __enter__(self):
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, *args):
        self.elapsed_s = round(time.perf_counter() - self.start_time, 3)
