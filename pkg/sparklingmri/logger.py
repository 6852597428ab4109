"""SPARKLING MRI: Logger"""
from __future__ import annotations

import logging
from typing import Optional

from colorlog import ColoredFormatter

FORMAT_DATE = "%Y-%m-%d %H:%M:%S"
FORMAT_LOG = "%(asctime)s %(levelname)s (%(threadName)s) [%(name)s] %(message)s"
FORMAT_LOG_COLOR = f"%(log_color)s{FORMAT_LOG}%(reset)s"


def setup_logger(
    log_level: str,
    name: str,
    log_file: Optional[str] = None,
) -> logging.Logger:
    """Setup logger"""
    level = logging.getLevelName(log_level.upper())
    if not isinstance(level, int):
        level = logging.INFO

    root = logging.getLogger()
    root.setLevel(level)
    for handler in list(root.handlers):
        root.removeHandler(handler)

    stream_handler = logging.StreamHandler()
    stream_handler.setFormatter(
        ColoredFormatter(
            FORMAT_LOG_COLOR,
            datefmt=FORMAT_DATE,
            reset=True,
            log_colors={
                "DEBUG": "cyan",
                "INFO": "green",
                "WARNING": "yellow",
                "ERROR": "red",
                "CRITICAL": "red",
            },
        )
    )
    root.addHandler(stream_handler)

    if log_file is not None:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(logging.Formatter(FORMAT_LOG, datefmt=FORMAT_DATE))
        root.addHandler(file_handler)

    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("PIL").setLevel(logging.WARNING)

    return logging.getLogger(name)
