"""Centralized logging configuration for the mogeo pipeline.

Usage:
    from pipeline.logging_config import setup_logging

    setup_logging()                                   # console only
    setup_logging(log_level="DEBUG", log_file="runs/a/mogeo.log")
"""

import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def setup_logging(
    log_level: str = "INFO",
    log_file: str | Path | None = None,
    console: bool = True,
    max_bytes: int = 10 * 1024 * 1024,  # 10MB
    backup_count: int = 5,
) -> None:
    """
    Configure the root logger once per process.

    The file handler (when given) records DEBUG and above; the console
    handler follows log_level.

    Args:
        log_level: DEBUG/INFO/WARNING/ERROR/CRITICAL
        log_file: Rotating log file, None disables file logging
        console: Log to stdout
        max_bytes: Rotation size
        backup_count: Rotated files kept

    Raises:
        ValueError: Unknown log level
    """
    level_name = log_level.upper()
    if level_name not in LOG_LEVELS:
        raise ValueError(f"Unknown log level {log_level!r}, expected one of {LOG_LEVELS}")
    level = getattr(logging, level_name)

    root_logger = logging.getLogger()
    root_logger.handlers.clear()
    root_logger.setLevel(logging.DEBUG if log_file else level)

    formatter = logging.Formatter(fmt=LOG_FORMAT, datefmt="%Y-%m-%d %H:%M:%S")

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            log_path, maxBytes=max_bytes, backupCount=backup_count, encoding="utf-8"
        )
        file_handler.setFormatter(formatter)
        file_handler.setLevel(logging.DEBUG)
        root_logger.addHandler(file_handler)

    if console:
        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setFormatter(formatter)
        console_handler.setLevel(level)
        root_logger.addHandler(console_handler)

    # Third-party chatter
    logging.getLogger("PIL").setLevel(logging.WARNING)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("filelock").setLevel(logging.WARNING)
