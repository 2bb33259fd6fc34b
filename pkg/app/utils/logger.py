"""
Logging configuration for CLI runs.

Console output is terse; log files keep DEBUG detail. A run additionally
appends to ``run.log`` inside its run directory.
"""

import logging
import os
import platform
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional, Union

LOG_DIR = Path("logs")
RUN_LOG_NAME = "run.log"

CONSOLE_FORMAT = '%(levelname)s: %(message)s'
FILE_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def _file_handler(path: Union[str, Path], mode: str = 'w') -> logging.FileHandler:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, mode=mode, encoding='utf-8')
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt=DATE_FORMAT))
    return handler


def default_log_file() -> Path:
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    return LOG_DIR / f"ensemble_{timestamp}.log"


def setup_logger(
    name: Optional[str] = None,
    level: int = logging.INFO,
    log_file: Optional[str] = None,
    console: bool = True
) -> logging.Logger:
    """
    Setup logger with file and console handlers.

    Handlers from a previous call are closed first, so repeated setup (one
    per CLI invocation in the same process) never duplicates output.

    Args:
        name: Logger name (default: root logger)
        level: Console level (the file handler always logs DEBUG)
        log_file: Path to log file (default: logs/ensemble_{timestamp}.log,
            empty string disables the file handler)
        console: Enable console output (default: True)

    Returns:
        Configured logger instance

    Example:
        >>> logger = setup_logger('app', level=logging.DEBUG)
        >>> logger.info("Ensemble started")
    """
    logger = logging.getLogger(name) if name else logging.getLogger()
    logger.setLevel(logging.DEBUG)

    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)

    if console:
        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setLevel(level)
        console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))
        logger.addHandler(console_handler)

    if log_file is None:
        log_file = default_log_file()
    if log_file:
        logger.addHandler(_file_handler(log_file))

    logger.debug(f"Logger initialized: {name or 'root'}")
    return logger


def setup_run_logger(verbose: bool = False, log_file: Optional[str] = None) -> logging.Logger:
    """
    Setup logging for a CLI run.

    Configures the ``app`` package logger so every module's
    ``logging.getLogger(__name__)`` reports through it.

    Args:
        verbose: Enable DEBUG level console output
        log_file: Log file path (default: logs/ensemble_{timestamp}.log)

    Returns:
        Configured ``app`` logger
    """
    level = logging.DEBUG if verbose else logging.INFO
    return setup_logger(name='app', level=level, log_file=log_file, console=True)


def attach_run_log(logger: logging.Logger, run_dir: Union[str, Path]) -> Path:
    """
    Append DEBUG output of ``logger`` to ``<run_dir>/run.log``.

    A resumed run appends to the same file.

    Returns:
        Path of the run log
    """
    path = Path(run_dir) / RUN_LOG_NAME
    for handler in logger.handlers:
        if isinstance(handler, logging.FileHandler) and handler.baseFilename == os.path.abspath(path):
            return path
    logger.addHandler(_file_handler(path, mode='a'))
    return path


def log_versions(logger: logging.Logger):
    """Log interpreter and numerics library versions."""
    import numpy
    import scipy

    logger.info(
        f"python {platform.python_version()}, numpy {numpy.__version__}, scipy {scipy.__version__}, "
        f"{platform.system()} {platform.machine()}"
    )
