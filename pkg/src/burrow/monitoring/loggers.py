"""
Structured logging for burrow.

Every module logs through :func:`get_logger`. Console output goes to stderr so
that CLI commands can print tables and paths on stdout. File output is opt-in
(``BURROW_LOG_FILE_OUTPUT``) and rotates at 5 MB.

Fields bound with :func:`log_context` (robot id, batch sequence, experiment
cell) are attached to every record emitted inside the scope, so station and
experiment logs can be filtered per robot or per cell without threading the
ids through every call.
"""

import datetime
import json
import logging
import socket
import sys
import threading
from collections.abc import Iterator, Mapping
from contextlib import contextmanager
from contextvars import ContextVar
from logging.handlers import RotatingFileHandler
from pathlib import Path
from types import MappingProxyType
from typing import Any

import numpy as np

from burrow.monitoring.validation import sanitize_log_filename

_EMPTY: Mapping[str, Any] = MappingProxyType({})
_bound_fields: ContextVar[Mapping[str, Any]] = ContextVar(
    "burrow_log_fields", default=_EMPTY
)

_handlers_lock = threading.Lock()

LOG_FILE_MAX_BYTES = 5 * 1024 * 1024
LOG_FILE_BACKUPS = 3
CONSOLE_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"
TEXT_FILE_FORMAT = (
    "%(asctime)s %(levelname)s %(name)s %(filename)s:%(lineno)d %(message)s"
)


def set_log_context(context: Mapping[str, Any], *, merge: bool = False) -> None:
    """
    Bind fields for the current thread or task.

    Args:
        context: fields to attach to subsequent records.
        merge: keep already bound fields and override only the given keys.
    """
    base = dict(_bound_fields.get()) if merge else {}
    base.update(context)
    _bound_fields.set(MappingProxyType(base))


def get_log_context() -> dict[str, Any]:
    return dict(_bound_fields.get())


def clear_log_context() -> None:
    _bound_fields.set(_EMPTY)


@contextmanager
def log_context(**fields: Any) -> Iterator[None]:
    """
    Bind fields for the duration of a block. Scopes nest; leaving a scope
    restores what was bound before it, also when the block raises.

    Example:
        with log_context(preset="tunnel", seed=0, cell="sample-consensus/gnc"):
            run_cell(...)
    """
    token = _bound_fields.set(MappingProxyType({**_bound_fields.get(), **fields}))
    try:
        yield
    finally:
        _bound_fields.reset(token)


# attributes every LogRecord carries; anything else on a record came from
# ``extra`` or the bound context
_STANDARD_ATTRS = frozenset(
    vars(logging.LogRecord("", logging.INFO, "", 0, "", (), None))
) | {"message", "asctime", "taskName"}


class BoundFieldsFilter(logging.Filter):
    """
    Copies the bound log context onto records. Explicit ``extra`` wins and
    names of standard record attributes are never bound.
    """

    def filter(self, record: logging.LogRecord) -> bool:
        for key, value in _bound_fields.get().items():
            if key not in _STANDARD_ATTRS and not hasattr(record, key):
                setattr(record, key, value)
        return True


def _to_json(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    return repr(value)


class JsonFormatter(logging.Formatter):
    """One JSON object per line with UTC timestamps and a ``context`` object."""

    def __init__(self) -> None:
        super().__init__()
        self.hostname = socket.gethostname()

    def format(self, record: logging.LogRecord) -> str:
        payload: dict[str, Any] = {
            "timestamp": datetime.datetime.fromtimestamp(
                record.created, tz=datetime.UTC
            ).isoformat(),
            "name": record.name,
            "level": record.levelname,
            "message": record.getMessage(),
            "module": record.module,
            "line": record.lineno,
            "process_id": record.process,
            "thread_name": record.threadName,
            "hostname": self.hostname,
            "context": {
                k: v for k, v in vars(record).items() if k not in _STANDARD_ATTRS
            },
        }
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload, default=_to_json)


class Logger:
    """
    Builds a named logger with a stderr console handler and, optionally, a
    rotating file handler under ``log_dir``.

    Args:
        logger_name: usually the module path; also the log file stem.
        log_dir: directory for the log file.
        level: threshold for the logger and its handlers.
        file_output: add the rotating file handler.
        json_serialize: write the file as JSON lines instead of text.
    """

    def __init__(
        self,
        logger_name: str,
        log_dir: Path = Path("./logs"),
        level: int = logging.DEBUG,
        file_output: bool = False,
        json_serialize: bool = True,
    ):
        self.logger_name = logger_name
        self.log_dir = log_dir
        self.level = level
        self.file_output = file_output
        self.json_serialize = json_serialize
        self.logger = logging.getLogger(logger_name)
        self.logger.setLevel(level)

    def setup(self) -> logging.Logger:
        """Attach missing handlers. Calling it again adds nothing."""
        with _handlers_lock:
            kinds = {type(h) for h in self.logger.handlers}
            if logging.StreamHandler not in kinds:
                self._attach(self._console_handler())
            if self.file_output and RotatingFileHandler not in kinds:
                handler = self._file_handler()
                if handler is not None:
                    self._attach(handler)
            self.logger.propagate = False
        return self.logger

    def _attach(self, handler: logging.Handler) -> None:
        handler.setLevel(self.level)
        handler.addFilter(BoundFieldsFilter())
        self.logger.addHandler(handler)

    def _console_handler(self) -> logging.Handler:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(CONSOLE_FORMAT, datefmt="%H:%M:%S"))
        return handler

    def _file_handler(self) -> logging.Handler | None:
        """None, with a note on stderr, when the log directory is not writable."""
        name = self.logger_name
        try:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            handler = RotatingFileHandler(
                self.log_dir / f"{sanitize_log_filename(name)}.log",
                maxBytes=LOG_FILE_MAX_BYTES,
                backupCount=LOG_FILE_BACKUPS,
            )
        except PermissionError:
            sys.stderr.write(f"burrow: Permission denied writing logs for {name!r}\n")
            return None
        except OSError as exc:
            sys.stderr.write(
                f"burrow: Failed to create file handler for {name!r} ({exc})\n"
            )
            return None
        handler.setFormatter(
            JsonFormatter()
            if self.json_serialize
            else logging.Formatter(TEXT_FILE_FORMAT)
        )
        return handler


def get_logger(name: str, level: int = logging.INFO) -> logging.Logger:
    """Logger configured from the ``BURROW_LOG_*`` settings."""
    from burrow.config import Config

    settings = Config()
    return Logger(
        name,
        log_dir=settings.LOG_DIR,
        level=level,
        file_output=settings.LOG_FILE_OUTPUT,
        json_serialize=settings.LOG_JSON,
    ).setup()
