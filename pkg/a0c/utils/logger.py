"""
Logging utilities
Console and file sinks shared by the CLI and the repetition worker processes.
Every line carries the repetition it came from (``-`` outside a repetition).
"""

import sys
from typing import Optional

from loguru import logger

from a0c.config import settings

CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<magenta>rep {extra[rep]}</magenta> | <cyan>{name}</cyan>:<cyan>{function}</cyan> - <level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | rep {extra[rep]} | {name}:{function} - {message}"


def setup_logger(level: str = settings.log_level, log_file: Optional[str] = settings.log_file):
    """
    Configure the console sink and, if ``log_file`` is set, a rotating file sink.

    The file sink is enqueued so that repetitions running in worker processes
    can share it.
    """
    logger.remove()
    logger.configure(extra={"rep": "-"})

    logger.add(sys.stdout, colorize=True, format=CONSOLE_FORMAT, level=level)

    if log_file:
        logger.add(
            log_file,
            rotation="500 MB",
            retention="10 days",
            compression="zip",
            format=FILE_FORMAT,
            level=level,
            enqueue=True,
        )

    return logger


def repetition_logger(rep: int):
    """Logger bound to one repetition index"""
    return logger.bind(rep=rep)


log = setup_logger()
