"""
Logging Setup
Root logger configuration (text or JSON) with structlog layered on stdlib logging
"""

import logging
import sys
from pathlib import Path
from typing import IO, Optional

import structlog
from pythonjsonlogger import jsonlogger

from .config import RuntimeSettings

TEXT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
JSON_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"


def configure_logging(settings: Optional[RuntimeSettings] = None) -> None:
    """
    Configure stdlib logging and structlog once per process.

    Args:
        settings: Runtime settings; read from the environment when omitted
    """
    settings = settings or RuntimeSettings()
    formatter: logging.Formatter
    if settings.json_logs:
        formatter = jsonlogger.JsonFormatter(JSON_FORMAT)
    else:
        formatter = logging.Formatter(TEXT_FORMAT)

    handlers: list = [logging.StreamHandler(sys.stderr)]
    if settings.log_dir:
        log_dir = Path(settings.log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_dir / "asd.log", mode="a"))
    for handler in handlers:
        handler.setFormatter(formatter)

    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        handlers=handlers,
        force=True,
    )

    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.KeyValueRenderer(key_order=["event"]),
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


def epoch_log_writer(stream: IO[str]) -> structlog.BoundLogger:
    """Logger writing one JSON object per line to ``stream`` (training log file)"""
    return structlog.wrap_logger(
        structlog.PrintLogger(file=stream),
        processors=[structlog.processors.JSONRenderer()],
        wrapper_class=structlog.BoundLogger,
    )
