"""
Logging configuration for impulsegame.

This module provides the centralized logging setup for the solver, the
simulator and the command-line tool: colored console output through colorlog
and an optional size-rotated log file.
"""

import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Dict, Optional, Union

import colorlog

# Log format for console output (colored)
CONSOLE_LOG_FORMAT = "%(log_color)s%(asctime)s [%(levelname)s] %(name)s: %(message)s"

# Log format for file output (more detailed)
FILE_LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s (%(filename)s:%(lineno)d): %(message)s"

LOG_COLORS = {
    "DEBUG": "cyan",
    "INFO": "green",
    "WARNING": "yellow",
    "ERROR": "red",
    "CRITICAL": "bold_red",
}


def _as_level(level: Union[int, str]) -> int:
    if isinstance(level, str):
        value = logging.getLevelName(level.upper())
        if not isinstance(value, int):
            raise ValueError(f"unknown log level '{level}'")
        return value
    return level


def configure_logging(
    log_level: Union[int, str] = logging.INFO,
    console: bool = True,
    log_file: Optional[str] = None,
    component_levels: Optional[Dict[str, Union[int, str]]] = None,
    max_bytes: int = 10485760,  # 10 MB
    backup_count: int = 3,
) -> None:
    """
    Configure the logging system for impulsegame.

    Args:
        log_level: Base log level for all components
        console: Whether to log to the console (stderr, so CLI stdout stays clean)
        log_file: Path to a log file (if None, file logging is disabled)
        component_levels: Dictionary of component-specific log levels
        max_bytes: Size at which the log file is rotated
        backup_count: Number of rotated log files to keep
    """
    log_level = _as_level(log_level)

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    if console:
        console_handler = colorlog.StreamHandler(stream=sys.stderr)
        console_handler.setLevel(log_level)
        console_handler.setFormatter(
            colorlog.ColoredFormatter(
                CONSOLE_LOG_FORMAT,
                datefmt="%Y-%m-%d %H:%M:%S",
                log_colors=LOG_COLORS,
            )
        )
        root_logger.addHandler(console_handler)

    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(log_file, maxBytes=max_bytes, backupCount=backup_count)
        file_handler.setLevel(log_level)
        file_handler.setFormatter(logging.Formatter(FILE_LOG_FORMAT, datefmt="%Y-%m-%d %H:%M:%S"))
        root_logger.addHandler(file_handler)

    if component_levels:
        for logger_name, level in component_levels.items():
            logging.getLogger(logger_name).setLevel(_as_level(level))

    logging.getLogger("impulsegame").debug(
        f"Logging configured at level {logging.getLevelName(log_level)}"
        + (f", log file: {log_file}" if log_file else "")
    )


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger for a specific component.

    Names outside the package namespace are prefixed with ``impulsegame.`` so
    that every logger inherits the configured component levels.

    Args:
        name: Name of the logger, typically __name__

    Returns:
        logging.Logger: Configured logger
    """
    if not name.startswith("impulsegame") and not name.startswith("__main__"):
        name = f"impulsegame.{name}"

    return logging.getLogger(name)
