#!/usr/bin/python3
"""
Logging configuration for the SuspicionToolbox package.

All package loggers hang below ``SuspicionToolbox`` so one call to
setup_logging controls console and file output for every module.
"""

import logging
import sys
from datetime import datetime
from pathlib import Path

ROOT_LOGGER = 'SuspicionToolbox'
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

# Per-frame and per-event detail
TRACE = 5
logging.addLevelName(TRACE, 'TRACE')

LOG_LEVELS: dict[str, int] = {
    'trace': TRACE,
    'debug': logging.DEBUG,
    'info': logging.INFO,
    'warning': logging.WARNING,
    'error': logging.ERROR,
    'critical': logging.CRITICAL,
    'silent': logging.CRITICAL + 10,
}


def trace(self: logging.Logger, message: str, *args, **kwargs) -> None:
    """Log a message with TRACE level (more detailed than DEBUG)"""
    if self.isEnabledFor(TRACE):
        self.log(TRACE, message, *args, **kwargs)


logging.Logger.trace = trace


def get_log_file_path() -> Path:
    """
    Path of a new timestamped log file under ~/.suspiciontoolbox/logs.

    Returns:
        Path: Path to the log file
    """
    log_dir = Path.home() / '.suspiciontoolbox' / 'logs'
    log_dir.mkdir(parents=True, exist_ok=True)
    return log_dir / f"suspiciontoolbox_{datetime.now():%Y%m%d_%H%M%S}.log"


def level_from_name(name: str) -> int:
    """
    Translate a config log level name into a logging level.

    Args:
        name (str): One of trace, debug, info, warning, error, critical, silent

    Returns:
        int: Logging level
    """
    level = LOG_LEVELS.get(name.lower())
    if level is None:
        raise ValueError(f"Unknown log level '{name}', expected one of {', '.join(LOG_LEVELS)}")
    return level


def _attach(root: logging.Logger, handler: logging.Handler, level: int) -> None:
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATE_FORMAT))
    handler.setLevel(level)
    root.addHandler(handler)


def setup_logging(level: int = logging.INFO, log_to_file: bool = False) -> logging.Logger:
    """
    Configure the package root logger, replacing handlers of an earlier call.

    Records go to stderr; stdout carries command output such as JSON summaries.

    Args:
        level (int): Logging level (default: logging.INFO)
        log_to_file (bool): Also write to a timestamped log file (default: False)
    Returns:
        logging.Logger: Package root logger
    """
    root = logging.getLogger(ROOT_LOGGER)
    root.setLevel(level)
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    _attach(root, logging.StreamHandler(sys.stderr), level)

    if log_to_file:
        try:
            log_file = get_log_file_path()
            _attach(root, logging.FileHandler(log_file, encoding='utf-8'), level)
            root.info("Logging to %s", log_file)
        except OSError as e:
            root.error("Cannot open log file: %s", e)
    return root


def get_logger(name: str) -> logging.Logger:
    """Logger for ``name`` below the package root logger."""
    if name == ROOT_LOGGER or name.startswith(ROOT_LOGGER + '.'):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT_LOGGER}.{name}")


def set_log_level(level: int) -> None:
    """Change the level of the package root logger and its handlers after setup."""
    root = logging.getLogger(ROOT_LOGGER)
    root.setLevel(level)
    for handler in root.handlers:
        handler.setLevel(level)
