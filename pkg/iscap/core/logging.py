"""Structured logging configuration."""

import logging
import sys
from collections.abc import MutableMapping
from typing import Any

import numpy as np
import structlog

from iscap.core.config import settings

# Arrays larger than this are logged by shape only.
MAX_LOGGED_ELEMENTS = 16


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        if value.size > MAX_LOGGED_ELEMENTS:
            return f"ndarray{value.shape}"
        value = value.tolist()
    elif isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, complex):
        return f"{value.real:.6g}{value.imag:+.6g}j"
    if isinstance(value, list | tuple):
        return [_plain(v) for v in value]
    return value


def plain_numbers(
    logger: Any, method_name: str, event_dict: MutableMapping[str, Any]
) -> MutableMapping[str, Any]:
    """Turn numpy scalars and small arrays into JSON-safe values."""
    for key, value in event_dict.items():
        event_dict[key] = _plain(value)
    return event_dict


def setup_logging() -> None:
    """Configure structlog for structured JSON (or console) logging on stderr."""
    renderer: structlog.types.Processor = (
        structlog.processors.JSONRenderer()
        if settings.log_json
        else structlog.dev.ConsoleRenderer()
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            plain_numbers,
            renderer,
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )

    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, settings.log_level.upper()),
    )
    # cvxpy logs every compilation at INFO.
    logging.getLogger("__cvxpy__").setLevel(logging.WARNING)


logger = structlog.get_logger()
