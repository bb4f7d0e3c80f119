import logging
import sys
from typing import TextIO


LOG_FORMAT = r"[%(asctime)s | %(levelname)s | %(filename)s::%(funcName)s::%(lineno)d] %(message)s"

logger = logging.getLogger("softcap")


def configure_logger(log_level: str = "INFO", stream: TextIO | None = None) -> None:
    """
    Configures the 'softcap' logger and its single handler.

    The CLI calls this twice: once with the default level so that command-line
    parse errors are reported, then with the level from the settings. Each call
    replaces the previous handler. Logs go to stderr by default because stdout
    carries the run, sweep and ablation tables.

    Args:
        log_level (str): The minimum log level to capture (e.g., "DEBUG", "INFO").
            Unknown names fall back to INFO.
        stream (TextIO | None): Where records are written. Defaults to stderr.
    """
    level = logging.getLevelNamesMapping().get(log_level.upper(), logging.INFO)

    logger.setLevel(level)
    logger.propagate = False

    if logger.hasHandlers():
        logger.handlers.clear()

    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))

    logger.addHandler(handler)
