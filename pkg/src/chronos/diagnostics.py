"""Structured logging and layered error handling shared by every integrator module."""

from __future__ import annotations

import os
import sys
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "ErrCode",
    "ChronosError",
    "ErrorContext",
    "LogRecord",
    "Logger",
    "log",
    "logger_from_environment",
    "push_error_handler",
    "pop_error_handler",
    "get_last_error",
    "clear_last_error",
    "default_context",
    "set_check_level",
    "check_level",
]

# Error codes. 0 is success; negative values are failures.
SUCCESS = 0
ERR_DIMENSION_MISMATCH = -101
ERR_INVALID_ARGUMENT = -102
ERR_NOT_FINITE = -103
ERR_STEP_TOO_SMALL = -104
ERR_MAX_ITERS = -105
ERR_CALLBACK_FAILURE = -106
ERR_UNSUPPORTED = -107
ERR_BLOWUP = -108
ERR_IO = -109
ERR_HANDLER_STACK = -110
ERR_MAX_STEPS = -111


@dataclass(frozen=True)
class ErrCode:
    """Integer error code plus message and origin (function, module).

    Code 0 means success and carries an empty message.
    """

    code: int = SUCCESS
    message: str = ""
    function: str = ""
    module: str = ""

    def __bool__(self) -> bool:
        return self.code != 0

    def __post_init__(self):
        if self.code == SUCCESS and self.message:
            raise ValueError("success code must carry an empty message")


OK = ErrCode()


class ChronosError(Exception):
    """Exception wrapper around an :class:`ErrCode`."""

    def __init__(self, err: ErrCode):
        super().__init__(f"[{err.code}] {err.function}: {err.message}")
        self.err = err


# ---------------------------------------------------------------------------
# Logging
# ---------------------------------------------------------------------------

_LEVELS = ("ERROR", "WARNING", "INFO", "DEBUG")
_LEVEL_RANK = {name: i for i, name in enumerate(_LEVELS)}


@dataclass
class LogRecord:
    """One structured record: level, scope (function name), label, payload.

    The payload is an ordered mapping of keys to scalars or vectors; its
    rendering is deterministic.
    """

    level: str
    scope: str
    label: str
    payload: dict = field(default_factory=dict)


def _format_scalar(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(value)
    v = float(value)
    # Shortest decimal that round-trips, capped at 15 significant digits.
    for digits in range(1, 16):
        s = f"{v:.{digits}g}"
        if float(s) == v:
            return s
    return f"{v:.15g}"


def _is_vector(value) -> bool:
    if isinstance(value, (str, bytes)):
        return False
    if hasattr(value, "ndim"):
        return value.ndim > 0
    return isinstance(value, (list, tuple))


def render_record(record: LogRecord, rank: int = 0) -> str:
    """Render a record to its exact text form (may be multi-line for vectors).

    Scalars render on the head line as ``k1 = v1, k2 = v2``.  A vector payload
    renders as ``name(:) =`` followed by one indented scientific-notation entry
    per line; the first vector marker shares the head line when no scalars
    precede it.
    """
    head = f"[{record.level}][rank {rank}][{record.scope}][{record.label}]"
    scalars = []
    vectors = []
    for key, value in record.payload.items():
        if _is_vector(value):
            vectors.append((key, value))
        else:
            scalars.append(f"{key} = {_format_scalar(value)}")
    lines = []
    if scalars:
        lines.append(head + " " + ", ".join(scalars))
    for key, value in vectors:
        marker = f"{key}(:) ="
        if not lines:
            lines.append(f"{head} {marker}")
        else:
            lines.append(marker)
        lines.extend(f" {float(x):.15e}" for x in value)
    if not lines:
        lines.append(head)
    return "\n".join(lines)


class Logger:
    """Per-level sinks with an enabled max level; emission is line-atomic.

    Each record goes to exactly the sink configured for its level.  Sinks are
    file paths or the strings ``"stdout"``/``"stderr"``.
    """

    def __init__(self, max_level: str = "ERROR", sinks: dict | None = None, rank: int = 0):
        if max_level not in _LEVEL_RANK:
            raise ChronosError(
                ErrCode(ERR_INVALID_ARGUMENT, f"unknown log level {max_level!r}",
                        "Logger", "diagnostics"))
        self.rank = rank
        self.max_level = max_level
        self._lock = threading.Lock()
        self._streams: dict[str, object] = {}
        sinks = sinks or {"ERROR": "stderr"}
        for level, sink in sinks.items():
            if level not in _LEVEL_RANK:
                raise ChronosError(
                    ErrCode(ERR_INVALID_ARGUMENT, f"unknown log level {level!r}",
                            "Logger", "diagnostics"))
            self._streams[level] = self._open_sink(sink)

    @staticmethod
    def _open_sink(sink):
        if sink == "stdout":
            return sys.stdout
        if sink == "stderr":
            return sys.stderr
        try:
            return open(sink, "a", buffering=1)
        except OSError:
            sys.stderr.write(f"warning: cannot open log sink {sink!r}, using stderr\n")
            return sys.stderr

    def enabled(self, level: str) -> bool:
        return _LEVEL_RANK[level] <= _LEVEL_RANK[self.max_level]

    def log(self, record: LogRecord) -> ErrCode:
        if record.level not in _LEVEL_RANK:
            return ErrCode(ERR_INVALID_ARGUMENT, f"unknown log level {record.level!r}",
                           "log", "diagnostics")
        if not self.enabled(record.level):
            return OK
        stream = self._streams.get(record.level)
        if stream is None:
            return OK
        text = render_record(record, self.rank)
        try:
            with self._lock:
                stream.write(text + "\n")
        except OSError as exc:
            return ErrCode(ERR_IO, str(exc), "log", "diagnostics")
        return OK

    # Convenience emitters used by the integrators.
    def _emit(self, level, scope, label, payload):
        if self.enabled(level):
            self.log(LogRecord(level, scope, label, payload))

    def error(self, scope, label, **payload):
        self._emit("ERROR", scope, label, payload)

    def warning(self, scope, label, **payload):
        self._emit("WARNING", scope, label, payload)

    def info(self, scope, label, **payload):
        self._emit("INFO", scope, label, payload)

    def debug(self, scope, label, **payload):
        self._emit("DEBUG", scope, label, payload)


def log(logger: Logger, record: LogRecord) -> ErrCode:
    return logger.log(record)


_ENV_PREFIX = "CHRONOS_LOG_"


def logger_from_environment() -> Logger:
    """Build a logger from CHRONOS_LOG_{ERROR,WARNING,INFO,DEBUG} and CHRONOS_LOG_LEVEL.

    With nothing set, ERROR records go to standard error and nothing else is
    emitted.  An invalid level string records an error and falls back to the
    default logger.
    """
    sinks = {"ERROR": "stderr"}
    configured_levels = []
    for level in _LEVELS:
        sink = os.environ.get(_ENV_PREFIX + level)
        if sink:
            sinks[level] = sink
            configured_levels.append(level)
    max_level = os.environ.get(_ENV_PREFIX + "LEVEL")
    if max_level is None:
        max_level = max(configured_levels, key=lambda lv: _LEVEL_RANK[lv], default="ERROR")
    if max_level not in _LEVEL_RANK:
        default_context().record(
            ErrCode(ERR_INVALID_ARGUMENT, f"invalid CHRONOS_LOG_LEVEL {max_level!r}",
                    "logger_from_environment", "diagnostics"))
        return Logger()
    return Logger(max_level=max_level, sinks=sinks)


# ---------------------------------------------------------------------------
# Error contexts
# ---------------------------------------------------------------------------

ErrorHandler = Callable[[ErrCode], None]


class ErrorContext:
    """Stack of error handlers plus a read-clears "last error" slot.

    The bottom handler logs the error and cannot be popped.  Handlers pushed
    later run first.
    """

    def __init__(self, logger: Logger | None = None):
        self._logger = logger or Logger()
        self._handlers: list[ErrorHandler] = [self._default_handler]
        self._last_error: ErrCode = OK

    def _default_handler(self, err: ErrCode) -> None:
        self._logger.error(err.function or "unknown", "error",
                           code=err.code, message=err.message)

    def push_handler(self, handler: ErrorHandler) -> ErrCode:
        self._handlers.append(handler)
        return OK

    def pop_handler(self) -> ErrCode:
        if len(self._handlers) <= 1:
            err = ErrCode(ERR_HANDLER_STACK, "cannot pop the default error handler",
                          "pop_error_handler", "diagnostics")
            self.record(err)
            return err
        self._handlers.pop()
        return OK

    def record(self, err: ErrCode) -> ErrCode:
        """Record an error: run handlers newest-first, remember it as last error."""
        if err.code == SUCCESS:
            return OK
        for handler in reversed(self._handlers):
            handler(err)
        self._last_error = err
        return err

    def get_last_error(self) -> ErrCode:
        err = self._last_error
        self._last_error = OK
        return err

    def clear_last_error(self) -> None:
        self._last_error = OK

    def fail(self, code: int, message: str, function: str, module: str) -> "ChronosError":
        """Record an error and return the exception to raise."""
        err = ErrCode(code, message, function, module)
        self.record(err)
        return ChronosError(err)


_default_ctx = ErrorContext()


def default_context() -> ErrorContext:
    return _default_ctx


def push_error_handler(ctx: ErrorContext, handler: ErrorHandler) -> ErrCode:
    return ctx.push_handler(handler)


def pop_error_handler(ctx: ErrorContext) -> ErrCode:
    return ctx.pop_handler()


def get_last_error(ctx: ErrorContext) -> ErrCode:
    return ctx.get_last_error()


def clear_last_error(ctx: ErrorContext) -> None:
    ctx.clear_last_error()


# Error-check density: "full" keeps interior finiteness checks, "minimal" keeps
# only precondition checks on public entry points.
_CHECK_LEVEL = "full"


def set_check_level(level: str) -> None:
    global _CHECK_LEVEL
    if level not in ("full", "minimal"):
        raise ChronosError(ErrCode(ERR_INVALID_ARGUMENT, f"unknown check level {level!r}",
                                   "set_check_level", "diagnostics"))
    _CHECK_LEVEL = level


def check_level() -> str:
    return _CHECK_LEVEL
